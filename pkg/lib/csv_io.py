# lib/csv_io.py
# ============================================================
# 出力ファイル
# - CSV: 先頭に "# " で始まるコメント行（解決済み設定のエコー）、1 行ヘッダ、
#        浮動小数は "%.17g"（同じ seed なら本文はバイト一致）
# - manifest.toml: 解決済み設定 + seed + バージョン + 作成時刻
# - ladder.csv: k, beta, log_n（cmd_run の log_n="file" で読める）
# 書き込みはすべて tmp に書いてから置換する。
# ============================================================
from __future__ import annotations

import io
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import pandas as pd
import toml

from lib.tempering import TemperatureLadder

FLOAT_FORMAT = "%.17g"


def atomic_write(path: Path, data: str) -> None:
    """原子書き込み（tmpに書いてから置換）"""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    tmp.replace(path)


def comment_lines(config: Optional[Mapping[str, Any]]) -> list[str]:
    """入れ子 dict を "# section.key = value" の行に平坦化する。"""
    if not config:
        return []
    out: list[str] = []

    def walk(prefix: str, node: Mapping[str, Any]) -> None:
        for k, v in node.items():
            key = f"{prefix}.{k}" if prefix else str(k)
            if isinstance(v, Mapping):
                walk(key, v)
            else:
                out.append(f"# {key} = {v!r}")

    walk("", config)
    return out


def write_csv(path: Path, df: pd.DataFrame, *, config: Optional[Mapping[str, Any]] = None) -> Path:
    buf = io.StringIO()
    for line in comment_lines(config):
        buf.write(line + "\n")
    df.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    atomic_write(path, buf.getvalue())
    return path


def write_rows(path: Path, rows: Iterable[Mapping[str, Any]], *, config: Optional[Mapping[str, Any]] = None) -> Path:
    return write_csv(path, pd.DataFrame(list(rows)), config=config)


def read_csv(path: Path | str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def csv_body(path: Path | str) -> str:
    """コメント行を除いた本文（決定性の比較用）。"""
    text = Path(path).read_text(encoding="utf-8")
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def write_manifest(path: Path, resolved: Mapping[str, Any], **extra: Any) -> Path:
    doc = {
        "created_at": datetime.now().isoformat(timespec="seconds"),
        **extra,
        "config": dict(resolved),
    }
    atomic_write(path, toml.dumps(doc))
    return path


def write_ladder(path: Path, ladder: TemperatureLadder, *, config: Optional[Mapping[str, Any]] = None) -> Path:
    df = pd.DataFrame({"k": range(ladder.size), "beta": ladder.betas, "log_n": ladder.log_n})
    return write_csv(path, df, config=config)


def read_ladder(path: Path | str) -> TemperatureLadder:
    df = read_csv(path)
    missing = {"k", "beta", "log_n"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: ladder ファイルに列 {sorted(missing)} がありません")
    df = df.sort_values("k")
    return TemperatureLadder(df["beta"].to_numpy(dtype=float), df["log_n"].to_numpy(dtype=float))

# lib/cmd_utils.py
# ============================================================
# コンソール（pages/）から CLI を起動するための安全な実行器
# - shell=False、先頭トークンは ALLOWLIST のみ
# - run_cli はサブコマンドと引数を組み立てて tools/tempering_cli.py を呼ぶ
# ============================================================
from __future__ import annotations
import shlex
import subprocess
import sys
from pathlib import Path
from typing import List, Tuple, Optional

__all__ = [
    "run_safe",
    "build_cli_args",
    "run_cli",
]

APP_ROOT = Path(__file__).resolve().parents[1]
CLI_PATH = APP_ROOT / "tools" / "tempering_cli.py"

# 許可コマンド（先頭トークン）
ALLOWLIST = {"python", "python3", sys.executable}

# tempering_cli.py のサブコマンド
SUBCOMMANDS = ("run", "adapt", "ldp", "reference")


def run_safe(tokens: List[str] | str, *, cwd: Optional[str] = None, timeout: Optional[float] = None) -> Tuple[int, str, str]:
    """ALLOWLIST を満たす単一コマンドを shell=False で安全実行。"""
    if isinstance(tokens, str):
        if not tokens.strip():
            return 1, "", "⚠️ コマンドが空です。"
        tokens = shlex.split(tokens)
    if not tokens:
        return 1, "", "⚠️ コマンドが空です。"
    head = tokens[0]
    if head not in ALLOWLIST:
        return (1, "", f"🚫 許可されていないコマンド: `{head}`")
    try:
        p = subprocess.run(tokens, capture_output=True, text=True, check=False, cwd=cwd, timeout=timeout)
        return p.returncode, p.stdout.strip(), p.stderr.strip()
    except subprocess.TimeoutExpired:
        return 1, "", f"⏱️ タイムアウトしました（{timeout} 秒）"
    except Exception as e:
        return 1, "", f"💥 実行エラー: {e}"


def build_cli_args(
    command: str,
    config: Path | str,
    *,
    seed: Optional[int] = None,
    out: Optional[Path | str] = None,
    replicas: int = 1,
    log_level: str = "INFO",
) -> List[str]:
    if command not in SUBCOMMANDS:
        raise ValueError(f"未知のサブコマンド: {command}（{SUBCOMMANDS}）")
    args = [sys.executable, str(CLI_PATH), command, "--config", str(config), "--log-level", log_level]
    if seed is not None:
        args += ["--seed", str(int(seed))]
    if out is not None:
        args += ["--out", str(out)]
    if replicas > 1:
        args += ["--replicas", str(int(replicas))]
    return args


def run_cli(command: str, config: Path | str, **kwargs) -> Tuple[int, str, str]:
    """tempering_cli を子プロセスで実行し (終了コード, stdout, stderr) を返す。"""
    timeout = kwargs.pop("timeout", None)
    return run_safe(build_cli_args(command, config, **kwargs), cwd=str(APP_ROOT), timeout=timeout)

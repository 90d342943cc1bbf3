# config/path_config.py
from __future__ import annotations
from pathlib import Path
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Optional, Dict, Any

from lib.errors import ConfigurationError

# このファイルの位置 … <app_root>/config/path_config.py
APP_ROOT = Path(__file__).resolve().parents[1]

# 同梱プリセット（presets/*.toml）
PRESETS_DIR = APP_ROOT / "presets"

# 出力先の既定
DEFAULT_OUTPUTS_ROOT = APP_ROOT / "outputs"

OUTPUTS_ENV = "TEMPERING_STATION_OUTPUTS"


# ------------------------------------------------------------
# 内部ユーティリティ
# ------------------------------------------------------------
def _candidate_paths() -> list[Path]:
    """settings.toml を探す候補パスを優先順で返す。"""
    paths: list[Path] = []

    # 1) 環境変数で明示指定（最優先）
    env_path = os.getenv("APP_SETTINGS_FILE")
    if env_path:
        paths.append(Path(env_path).expanduser())

    # 2) プロジェクト直下
    paths.append(APP_ROOT / "settings.toml")

    # 3) .streamlit/ 配下
    paths.append(APP_ROOT / ".streamlit" / "settings.toml")

    # 4) config/ 配下
    paths.append(APP_ROOT / "config" / "settings.toml")

    return paths


def _load_toml(path: Path) -> Dict[str, Any]:
    with open(path, "rb") as f:
        return tomllib.load(f)


def _read_location_from_secrets() -> Optional[str]:
    """
    .streamlit/secrets.toml の [env].location を読み取って返す。
    - Streamlit 実行外 / secrets 未設定でも例外を外に投げない。
    """
    try:
        import streamlit as st  # 遅延インポート（CLI からは streamlit を読まない）
        loc = dict(st.secrets.get("env", {})).get("location")  # type: ignore[arg-type]
        if isinstance(loc, str) and loc.strip():
            return loc.strip()
        return None
    except Exception:
        return None


# ------------------------------------------------------------
# 公開関数
# ------------------------------------------------------------
def find_settings_file() -> Optional[Path]:
    for p in _candidate_paths():
        if p.exists():
            return p
    return None


def load_settings() -> dict:
    """
    settings.toml を候補パスから読み込む。settings.toml は任意（無ければ空 dict）。
    APP_SETTINGS_FILE が指定されていて存在しない場合だけは誤設定として FileNotFoundError。
    """
    env_path = os.getenv("APP_SETTINGS_FILE")
    if env_path and not Path(env_path).expanduser().exists():
        raise FileNotFoundError(
            f"APP_SETTINGS_FILE が指すファイルがありません: {env_path}\n"
            "対処: パスを直すか、環境変数 APP_SETTINGS_FILE を外してください。"
        )
    p = find_settings_file()
    return _load_toml(p) if p else {}


def current_location(settings: Optional[dict] = None) -> Optional[str]:
    """
    location を以下の優先順で決定する（未設定なら None）。
      1) .streamlit/secrets.toml の [env].location
      2) 環境変数 APP_LOCATION_PRESET
      3) settings.toml の [env].location
    """
    s = load_settings() if settings is None else settings
    candidates = (
        _read_location_from_secrets(),
        os.getenv("APP_LOCATION_PRESET"),
        (s.get("env") or {}).get("location"),
    )
    return next((str(x).strip() for x in candidates if x and str(x).strip()), None)


def get_outputs_root() -> Path:
    """
    出力ルートを決定する。
      1) 環境変数 TEMPERING_STATION_OUTPUTS
      2) settings.toml の [locations.<location>].outputs_root
      3) <app_root>/outputs
    """
    env = os.getenv(OUTPUTS_ENV)
    if env and env.strip():
        return Path(env).expanduser().resolve()

    s = load_settings()
    loc = current_location(s)
    if loc:
        locs = s.get("locations") or {}
        if loc not in locs:
            raise ConfigurationError(f"未知の location: {loc}（候補: {list(locs.keys())}）", field="locations")
        root_str = locs[loc].get("outputs_root")
        if root_str:
            return Path(str(root_str)).expanduser().resolve()

    return DEFAULT_OUTPUTS_ROOT


def list_presets() -> list[Path]:
    return sorted(PRESETS_DIR.glob("*.toml"))

# pages/10_実験実行.py
from __future__ import annotations

# ============================================================
# imports
# ============================================================
from pathlib import Path

import streamlit as st

from config.experiment_config import load_config
from config.path_config import get_outputs_root, list_presets
from lib.cmd_utils import SUBCOMMANDS, build_cli_args, run_cli
from lib.errors import ConfigurationError


# ============================================================
# Page
# ============================================================
st.set_page_config(page_title="▶️ 実験実行", page_icon="▶️", layout="wide")
st.title("▶️ 実験実行")
st.caption("プリセットとサブコマンドを選び、tools/tempering_cli.py を子プロセスで実行します。")

presets = list_presets()
if not presets:
    st.error("presets/ に *.toml がありません。")
    st.stop()

# ============================================================
# 入力
# ============================================================
c1, c2 = st.columns([2, 1])
with c1:
    preset: Path = st.selectbox("プリセット", presets, format_func=lambda p: p.name)
with c2:
    command = st.radio("サブコマンド", SUBCOMMANDS, horizontal=True)

c3, c4, c5 = st.columns(3)
with c3:
    use_seed = st.checkbox("seed を上書き", value=False)
    seed = st.number_input("seed", min_value=0, value=0, step=1, disabled=not use_seed)
with c4:
    replicas = st.number_input("replicas", min_value=1, max_value=64, value=1, step=1)
with c5:
    log_level = st.selectbox("log level", ["INFO", "DEBUG", "WARNING", "ERROR"])

out_default = get_outputs_root() / preset.stem / command
out_dir = st.text_input("出力ディレクトリ", value=str(out_default))

# ============================================================
# 設定の確認
# ============================================================
with st.expander("解決済み設定（既定値込み）", expanded=False):
    try:
        st.json(load_config(preset).resolved())
    except ConfigurationError as e:
        st.error(f"設定エラー: {e}")

args = build_cli_args(
    command, preset, seed=int(seed) if use_seed else None, out=out_dir, replicas=int(replicas), log_level=log_level
)
st.code(" ".join(args), language="bash")

# ============================================================
# 実行
# ============================================================
if st.button("実行", type="primary"):
    with st.spinner("実行中…（長い軌道は CLI から直接回すことを推奨）"):
        code, out, err = run_cli(
            command, preset,
            seed=int(seed) if use_seed else None, out=out_dir, replicas=int(replicas), log_level=log_level,
        )
    if code == 0:
        st.success("完了")
    else:
        st.error(f"終了コード {code}")
    if out:
        st.text_area("stdout", out, height=200)
    if err:
        st.text_area("stderr / ログ", err, height=300)

# pages/20_結果閲覧.py
from __future__ import annotations

# ============================================================
# imports
# ============================================================
from pathlib import Path

import pandas as pd
import streamlit as st

from config.path_config import get_outputs_root
from lib.csv_io import read_csv


# ============================================================
# Page
# ============================================================
st.set_page_config(page_title="📊 結果閲覧", page_icon="📊", layout="wide")
st.title("📊 結果閲覧")
st.caption("出力ディレクトリの CSV と manifest.toml を表で確認します（描画は行いません）。")

root = Path(st.text_input("出力ルート", value=str(get_outputs_root()))).expanduser()
if not root.exists():
    st.warning(f"出力ルートがありません: {root}")
    st.stop()

# manifest.toml を持つディレクトリ = 1 回分の出力
runs = sorted({p.parent for p in root.rglob("manifest.toml")}, key=lambda p: p.stat().st_mtime, reverse=True)
if not runs:
    st.info("まだ出力がありません。")
    st.stop()

run_dir: Path = st.selectbox("出力", runs, format_func=lambda p: str(p.relative_to(root)))

with st.expander("manifest.toml", expanded=False):
    st.code((run_dir / "manifest.toml").read_text(encoding="utf-8"), language="toml")

csvs = sorted(run_dir.glob("*.csv"))
if not csvs:
    st.info("CSV がありません。")
    st.stop()

tabs = st.tabs([p.name for p in csvs])
for tab, path in zip(tabs, csvs):
    with tab:
        df: pd.DataFrame = read_csv(path)
        st.caption(f"{len(df):,} 行 × {len(df.columns)} 列")
        if len(df) > 5000:
            st.dataframe(df.head(5000), use_container_width=True)
            st.caption("先頭 5000 行のみ表示")
        else:
            st.dataframe(df, use_container_width=True)
        st.download_button("CSV をダウンロード", path.read_bytes(), file_name=path.name, key=str(path))

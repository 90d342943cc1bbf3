# app.py
import streamlit as st

from config.path_config import PRESETS_DIR, get_outputs_root

st.set_page_config(page_title="🌡️ Tempering Station", page_icon="🌡️", layout="wide")

st.title("🌡️ Tempering Station")
st.markdown("""
simulated tempering（有限 ν の STMD）と無限スイッチ極限（ITS）の実験を、
プリセットから起動して CSV の結果を確認するためのコンソールです。

---

### 🔧 利用できるページ
- **実験実行**：プリセット（`presets/*.toml`）とサブコマンドを選んで CLI を起動
- **結果閲覧**：出力ディレクトリの CSV / manifest.toml を表で確認

---

💡 計算本体は `lib/`、CLI は `tools/tempering_cli.py` です。
コンソールからの起動は `lib/cmd_utils.run_cli` を通します（shell は使いません）。

---

使用方法（コマンドラインから）
---

```
python tools/tempering_cli.py run --config presets/doublewell-6T.toml --seed 1
python tools/tempering_cli.py adapt --config presets/adapt-doublewell.toml
python tools/tempering_cli.py ldp --config presets/ldp-doublewell.toml
python tools/tempering_cli.py reference --config presets/reference-doublewell.toml
```

設定は環境変数で上書きできます（例: `TEMPERING_STATION__DYNAMICS__NU=1.0`）。
""")

st.info(f"プリセット: `{PRESETS_DIR}`　／　出力ルート: `{get_outputs_root()}`")

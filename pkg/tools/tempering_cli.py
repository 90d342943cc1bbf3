# tools/tempering_cli.py
#!/usr/bin/env python3
"""
tempering-station のコマンドライン入口

サブコマンド:
  run        … STMD / ITS の軌道を回して trajectory.csv, summary.csv, av.csv などを書く
  adapt      … 重み因子 n_k = 1/Z_k を反復推定して adapt_history.csv, ladder.csv を書く
  ldp        … 大偏差レート汎関数 J0, J1, I^ν を ldp.csv に書く
  reference  … 求積オラクル（Z_β, ⟨V⟩_β, ϱ）を reference.csv に書く

例:
  python tools/tempering_cli.py run --config presets/doublewell-6T.toml --seed 7
  TEMPERING_STATION__DYNAMICS__NU=1.0 python tools/tempering_cli.py run --config presets/doublewell-6T.toml

終了コード:
  0 正常 / 1 その他 / 2 設定エラー / 3 積分の破綻 / 4 割合の退化 / 5 未対応モデル
"""

from __future__ import annotations
from pathlib import Path
import argparse
import logging
import sys

# 本スクリプトの1つ上がアプリルート
APP_ROOT = Path(__file__).resolve().parents[1]
if str(APP_ROOT) not in sys.path:
    sys.path.insert(0, str(APP_ROOT))

from lib import __version__  # noqa: E402
from lib.errors import (  # noqa: E402
    ConfigurationError,
    DegenerateProportionError,
    IntegrationError,
    SingularityError,
    TemperingError,
    UnsupportedModelError,
)
from lib.experiment import COMMANDS, Overrides, run_command  # noqa: E402

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_DEGENERATE = 4
EXIT_UNSUPPORTED = 5


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed は 64bit 符号なし整数: {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"1 以上の整数: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tempering_cli",
        description="Simulated tempering / infinite-switching experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS, help="run | adapt | ldp | reference")
    parser.add_argument("--config", required=True, type=Path, help="実験設定（TOML）")
    parser.add_argument("--seed", type=_seed, default=None, help="乱数シード（設定より優先）")
    parser.add_argument("--out", type=Path, default=None, help="出力ディレクトリ（設定より優先）")
    parser.add_argument("--replicas", type=_positive, default=1, help="独立レプリカ数（run / adapt）")
    parser.add_argument("--progress", action="store_true", help="tqdm の進捗バーを出す")
    parser.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="ログレベル"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    overrides = Overrides(seed=args.seed, out=args.out, replicas=args.replicas, progress=args.progress)

    try:
        art = run_command(args.command, args.config, overrides)
    except ConfigurationError as e:
        print(f"ERROR(設定): {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, SingularityError) as e:
        step = getattr(e, "step", None)
        where = f" step={step}" if step is not None else ""
        print(f"ERROR(積分){where}: {e}", file=sys.stderr)
        return EXIT_INTEGRATION
    except DegenerateProportionError as e:
        print(f"ERROR(割合が退化): {e}", file=sys.stderr)
        print("対処: [adapt].steps_per_iter を増やしてください。", file=sys.stderr)
        return EXIT_DEGENERATE
    except UnsupportedModelError as e:
        print(f"ERROR(未対応モデル): {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (TemperingError, OSError, ValueError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_OTHER

    for path in art.files:
        print(f"書き出し完了: {path}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

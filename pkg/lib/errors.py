# lib/errors.py
# ============================================================
# 例外階層
# - CLI はこの型で終了コードを振り分ける（tools/tempering_cli.py）
# ============================================================
from __future__ import annotations

from typing import Any, Optional


class TemperingError(Exception):
    """tempering-station の全例外の基底。"""


class ConfigurationError(TemperingError, ValueError):
    """設定値の検証エラー（field はドット区切りのキーパス）。"""

    def __init__(self, message: str, *, field: Optional[str] = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DimensionMismatchError(TemperingError, ValueError):
    pass


class SingularityError(TemperingError, FloatingPointError):
    """粒子対の距離がほぼ 0（WCA の発散）。"""


class LadderIndexError(TemperingError, IndexError):
    pass


class IntegrationError(TemperingError, RuntimeError):
    """力が非有限になった等。state と step（判明していれば）を保持する。"""

    def __init__(self, message: str, *, state: Any = None, step: Optional[int] = None) -> None:
        self.state = state
        self.step = step
        super().__init__(f"{message} (step={step})" if step is not None else message)


class DegenerateProportionError(TemperingError, ValueError):
    """ある温度の割合 w_k が 0 で log が取れない。軌道を長くすること。"""

    def __init__(self, message: str, *, iteration: Optional[int] = None) -> None:
        self.iteration = iteration
        super().__init__(f"{message} (iteration={iteration})" if iteration is not None else message)


class DegenerateWeightError(TemperingError, ValueError):
    """Σ ω_0 = 0 で比推定量が定義できない。"""


class EmptyHistogramError(TemperingError, ValueError):
    pass


class UnsupportedModelError(TemperingError, TypeError):
    pass


class ZeroDensityError(TemperingError, ValueError):
    """平衡密度が正の点で μ = 0（θ で割れない）。"""

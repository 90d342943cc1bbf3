# lib/tempering.py
# ============================================================
# 温度ラダーと混合重み（STMD / ITS 共通の数式）
#
# 規約:
#   - 物理温度は常に index 0（β_0 = β_phys）。β は厳密に減少。
#   - 重み因子 n_k は ln n_k（log_n）で保持する。Z の初期推定が
#     8 桁以上にわたるため、線形のままだと下流で溢れる。
#   - すべて a_k = ln n_k - β_k V を経由し logsumexp で評価する。
#
# V はスカラーでも配列でもよい（配列なら末尾に温度軸が付く）。
# ============================================================
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from lib.errors import ConfigurationError, LadderIndexError

__all__ = [
    "TemperatureLadder",
    "geometric_ladder",
    "log_terms",
    "weights",
    "acceptance_probability",
    "effective_potential",
    "force_scale",
    "mobility",
]


@dataclass(frozen=True, eq=False)
class TemperatureLadder:
    """逆温度 betas（減少順）と log 重み因子 log_n。"""

    betas: np.ndarray
    log_n: np.ndarray

    def __post_init__(self) -> None:
        betas = np.array(self.betas, dtype=float).reshape(-1)
        log_n = np.array(self.log_n, dtype=float).reshape(-1)
        if betas.size < 1:
            raise ConfigurationError("温度が 1 つもありません", field="ladder.betas")
        if log_n.shape != betas.shape:
            raise ConfigurationError(
                f"log_n の長さ {log_n.size} が betas の長さ {betas.size} と一致しません",
                field="ladder.log_n",
            )
        if np.any(betas <= 0) or not np.all(np.isfinite(betas)):
            raise ConfigurationError(f"betas は正の有限値: {betas.tolist()}", field="ladder.betas")
        if np.any(np.diff(betas) >= 0):
            raise ConfigurationError(
                f"betas は厳密に減少（index 0 が物理温度）: {betas.tolist()}", field="ladder.betas"
            )
        if not np.all(np.isfinite(log_n)):
            raise ConfigurationError(f"log_n は有限値: {log_n.tolist()}", field="ladder.log_n")
        betas.setflags(write=False)
        log_n.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "log_n", log_n)

    @property
    def size(self) -> int:
        return int(self.betas.size)

    @property
    def beta_phys(self) -> float:
        return float(self.betas[0])

    @classmethod
    def uniform(cls, betas: Sequence[float]) -> "TemperatureLadder":
        """n_k = 1"""
        return cls(np.asarray(betas, dtype=float), np.zeros(len(betas)))

    @classmethod
    def from_log_partition(cls, betas: Sequence[float], log_Z: Sequence[float]) -> "TemperatureLadder":
        """n_k = 1/Z_k"""
        return cls(np.asarray(betas, dtype=float), -np.asarray(log_Z, dtype=float))

    def with_log_n(self, log_n: Sequence[float]) -> "TemperatureLadder":
        return TemperatureLadder(self.betas, np.asarray(log_n, dtype=float))

    def check_index(self, k: int) -> int:
        if not 0 <= int(k) < self.size:
            raise LadderIndexError(f"温度 index {k} が範囲外です（0..{self.size - 1}）")
        return int(k)

    def as_dict(self) -> dict:
        return {"betas": self.betas.tolist(), "log_n": self.log_n.tolist()}


def geometric_ladder(beta0: float, n_temperatures: int, ratio: float = 0.5) -> np.ndarray:
    """β_k = β0 · ratio^k（k = 0..n-1）"""
    if not 0 < ratio < 1 and n_temperatures > 1:
        raise ConfigurationError(f"ratio は (0, 1): {ratio}", field="ladder.ratio")
    return beta0 * ratio ** np.arange(n_temperatures, dtype=float)


# ============================================================
# 混合の基本量
# ============================================================

def log_terms(ladder: TemperatureLadder, V: float | np.ndarray) -> np.ndarray:
    """a_k = ln n_k - β_k V"""
    return ladder.log_n - ladder.betas * np.asarray(V, dtype=float)[..., None]


def weights(ladder: TemperatureLadder, V: float | np.ndarray) -> np.ndarray:
    """ω_k(x) = n_k e^{-β_k V} / Σ_j n_j e^{-β_j V}。任意の有限 V で溢れない。"""
    a = log_terms(ladder, V)
    return np.exp(a - logsumexp(a, axis=-1, keepdims=True))


def acceptance_probability(
    ladder: TemperatureLadder, V: float | np.ndarray, from_index: int, to_index: int
) -> float | np.ndarray:
    """g = min(n_to e^{-β_to V} / (n_from e^{-β_from V}), 1)"""
    i = ladder.check_index(from_index)
    j = ladder.check_index(to_index)
    if i == j:
        raise LadderIndexError(f"from と to が同じ index です: {i}")
    V = np.asarray(V, dtype=float)
    diff = (ladder.log_n[j] - ladder.log_n[i]) - (ladder.betas[j] - ladder.betas[i]) * V
    g = np.exp(np.minimum(diff, 0.0))
    return float(g) if g.ndim == 0 else g


def effective_potential(ladder: TemperatureLadder, V: float | np.ndarray) -> float | np.ndarray:
    """
    U(x) = -(1/β_phys) ln Σ_k n_k e^{-β_k V}

    ITS の温度バイアス付き有効ポテンシャルと同一。正規化定数
    (1/β_phys) ln Σ_j n_j Z_j は落としてある（力学には影響しない）。
    """
    u = -logsumexp(log_terms(ladder, V), axis=-1) / ladder.beta_phys
    return float(u) if np.ndim(u) == 0 else u


def force_scale(ladder: TemperatureLadder, V: float | np.ndarray) -> float | np.ndarray:
    """s(x) = (1/β_phys) Σ_k β_k ω_k(x)。s·f = -∇U、値域は [β_{N-1}/β_phys, 1]。"""
    s = weights(ladder, V) @ ladder.betas / ladder.beta_phys
    return float(s) if np.ndim(s) == 0 else s


def mobility(ladder: TemperatureLadder, V: float | np.ndarray) -> float | np.ndarray:
    """
    𝔹(x) = Σ_k (β_phys/β_k) ω_k(x) = β_phys · T_eff(x)

    N 温度への拡張（2 温度では ω_0 + (β_0/β_1) ω_1）。β_k ≤ β_phys なので 𝔹 ≥ 1。
    """
    b = weights(ladder, V) @ (ladder.beta_phys / ladder.betas)
    return float(b) if np.ndim(b) == 0 else b

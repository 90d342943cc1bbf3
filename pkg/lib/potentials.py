# lib/potentials.py
# ============================================================
# ポテンシャルモデル
# - PotentialModel: energy / force の共通インターフェース
# - DoubleWellD   : D 次元の二重井戸（x0 方向のみ非調和）
# - Harmonic      : 調和振動子（積分器・求積の検算用）
# - DimerInSolvent: 周期箱中の WCA 溶媒 + 二重井戸結合ダイマー（2 次元粒子）
# ============================================================
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from lib.errors import DimensionMismatchError, SingularityError

__all__ = [
    "PotentialModel",
    "DoubleWellD",
    "Harmonic",
    "DimerInSolvent",
    "min_image_displacement",
    "energy",
    "force",
    "MODEL_REGISTRY",
]

# r < SINGULAR_FRACTION * σ は発散扱い
SINGULAR_FRACTION = 1e-8


def min_image_displacement(xi: np.ndarray, xj: np.ndarray, l: float) -> np.ndarray:
    """
    最小像規約での変位 xi - xj。各成分は (-l/2, l/2] に入る。
    ちょうど l/2 の同点は +l/2 に寄せる。
    """
    d = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    return d - l * np.ceil(d / l - 0.5)


# ============================================================
# 共通インターフェース
# ============================================================

class PotentialModel(ABC):
    """energy(x) と force(x) = -∇V(x) を持つモデル。x は長さ dimension の 1 次元配列。"""

    dimension: int
    periodic_box: Optional[float] = None

    def check_configuration(self, x: np.ndarray) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self.dimension,):
            raise DimensionMismatchError(
                f"配置の形が不正です: shape={arr.shape}, 期待値=({self.dimension},)"
            )
        return arr

    @abstractmethod
    def energy(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def force(self, x: np.ndarray) -> np.ndarray: ...

    def energy_force(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        """積分器の 1 ステップで両方使うので、まとめて計算できるモデルは上書きする。"""
        return self.energy(x), self.force(x)

    @abstractmethod
    def initial_configuration(self) -> np.ndarray: ...


def energy(model: PotentialModel, x: np.ndarray) -> float:
    return model.energy(x)


def force(model: PotentialModel, x: np.ndarray) -> np.ndarray:
    return model.force(x)


# ============================================================
# D 次元二重井戸
# ============================================================

@dataclass(frozen=True)
class DoubleWellD(PotentialModel):
    """
    V(x) = (1 - x0²)² - x0/4 + Σ_j ½ λ_j x_j²

    stiffness を省略すると λ_j = 1。初期配置は x0 = initial_x0（既定は浅い左井戸 -1）、他は 0。
    """

    dimension: int = 1
    stiffness: Tuple[float, ...] = ()
    initial_x0: float = -1.0
    periodic_box: Optional[float] = field(default=None, init=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise DimensionMismatchError(f"dimension は 1 以上: {self.dimension}")
        lam = tuple(float(v) for v in self.stiffness) or (1.0,) * (self.dimension - 1)
        if len(lam) != self.dimension - 1:
            raise DimensionMismatchError(
                f"stiffness の長さは dimension-1 = {self.dimension - 1} が必要です（{len(lam)} 個）"
            )
        if any(v <= 0 for v in lam):
            raise ValueError(f"stiffness は正の値: {lam}")
        object.__setattr__(self, "stiffness", lam)
        object.__setattr__(self, "_lam", np.asarray(lam, dtype=float))

    # x0 方向だけの 1 次元プロファイル（求積・LDP から使う。配列可）
    @staticmethod
    def x0_energy(x0: np.ndarray | float) -> np.ndarray | float:
        return (1.0 - x0 * x0) ** 2 - 0.25 * x0

    @staticmethod
    def x0_force(x0: np.ndarray | float) -> np.ndarray | float:
        return 4.0 * x0 * (1.0 - x0 * x0) + 0.25

    def energy(self, x: np.ndarray) -> float:
        x = self.check_configuration(x)
        rest = x[1:]
        return float(self.x0_energy(x[0]) + 0.5 * np.dot(self._lam * rest, rest))

    def force(self, x: np.ndarray) -> np.ndarray:
        x = self.check_configuration(x)
        f = np.empty_like(x)
        f[0] = self.x0_force(x[0])
        f[1:] = -self._lam * x[1:]
        return f

    def energy_force(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        x = self.check_configuration(x)
        x0 = x[0]
        rest = x[1:]
        f = np.empty_like(x)
        f[0] = self.x0_force(x0)
        f[1:] = -self._lam * rest
        return float(self.x0_energy(x0) + 0.5 * np.dot(self._lam * rest, rest)), f

    def initial_configuration(self) -> np.ndarray:
        x = np.zeros(self.dimension)
        x[0] = self.initial_x0
        return x


# ============================================================
# 調和振動子
# ============================================================

@dataclass(frozen=True)
class Harmonic(PotentialModel):
    """V(x) = Σ_j ½ k_j x_j²（k 省略時は全て 1）。"""

    dimension: int = 1
    stiffness: Tuple[float, ...] = ()
    periodic_box: Optional[float] = field(default=None, init=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise DimensionMismatchError(f"dimension は 1 以上: {self.dimension}")
        k = tuple(float(v) for v in self.stiffness) or (1.0,) * self.dimension
        if len(k) != self.dimension or any(v <= 0 for v in k):
            raise ValueError(f"stiffness は長さ {self.dimension} の正の値: {k}")
        object.__setattr__(self, "stiffness", k)
        object.__setattr__(self, "_k", np.asarray(k, dtype=float))

    def energy(self, x: np.ndarray) -> float:
        x = self.check_configuration(x)
        return float(0.5 * np.dot(self._k * x, x))

    def force(self, x: np.ndarray) -> np.ndarray:
        return -self._k * self.check_configuration(x)

    def energy_force(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        x = self.check_configuration(x)
        f = -self._k * x
        return float(-0.5 * np.dot(f, x)), f

    def initial_configuration(self) -> np.ndarray:
        return np.zeros(self.dimension)


# ============================================================
# 溶媒中のダイマー（WCA + 二重井戸結合）
# ============================================================

@dataclass(frozen=True)
class DimerInSolvent(PotentialModel):
    """
    N 個の 2 次元粒子、辺長 l の周期箱。粒子 0, 1 がダイマー。

    V_WCA(r) = 4ε((σ/r)¹² - (σ/r)⁶) + ε   (r ≤ r_WCA = 2^{1/6}σ, それ以外 0)
    V_dW(r)  = h (1 - (r - r_WCA - w)² / w²)²
    距離はすべて最小像規約。
    """

    n_particles: int = 16
    box: float = 4.4
    sigma: float = 1.0
    epsilon: float = 1.0
    h: float = 1.0
    omega: float = 0.5
    spatial_dim: int = field(default=2, init=False)

    def __post_init__(self) -> None:
        if self.n_particles < 2:
            raise ValueError("n_particles は 2 以上（ダイマーが必要）")
        for name in ("box", "sigma", "epsilon", "h", "omega"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} は正の値: {getattr(self, name)}")
        i, j = np.triu_indices(self.n_particles, k=1)
        object.__setattr__(self, "_pair_i", i)
        object.__setattr__(self, "_pair_j", j)
        # 先頭の対 (0, 1) がダイマー
        object.__setattr__(self, "_is_dimer", (i == 0) & (j == 1))

    @property
    def dimension(self) -> int:  # type: ignore[override]
        return self.spatial_dim * self.n_particles

    @property
    def periodic_box(self) -> float:  # type: ignore[override]
        return self.box

    @property
    def r_wca(self) -> float:
        return 2.0 ** (1.0 / 6.0) * self.sigma

    # ---------- 対ポテンシャル（r は配列） ----------
    def wca(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(V_WCA(r), dV_WCA/dr)。カットオフ外は厳密に 0。"""
        r = np.asarray(r, dtype=float)
        # r = r_WCA ちょうどは厳密に 0（丸め誤差を残さない）
        inside = r < self.r_wca
        sr6 = np.where(inside, (self.sigma / np.where(inside, r, 1.0)) ** 6, 0.0)
        v = np.where(inside, 4.0 * self.epsilon * (sr6 * sr6 - sr6) + self.epsilon, 0.0)
        dv = np.where(inside, -24.0 * self.epsilon * (2.0 * sr6 * sr6 - sr6) / np.where(inside, r, 1.0), 0.0)
        return v, dv

    def double_well_bond(self, r: np.ndarray | float) -> Tuple[np.ndarray, np.ndarray]:
        """(V_dW(r), dV_dW/dr)。"""
        w2 = self.omega * self.omega
        s = np.asarray(r, dtype=float) - self.r_wca - self.omega
        q = 1.0 - s * s / w2
        return self.h * q * q, -4.0 * self.h * s * q / w2

    # ---------- 配置 ----------
    def positions(self, x: np.ndarray) -> np.ndarray:
        return self.check_configuration(x).reshape(self.n_particles, self.spatial_dim)

    def _pairs(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pos = self.positions(x)
        d = min_image_displacement(pos[self._pair_i], pos[self._pair_j], self.box)
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        if np.any(r < SINGULAR_FRACTION * self.sigma):
            k = int(np.argmin(r))
            raise SingularityError(
                f"粒子 {self._pair_i[k]} と {self._pair_j[k]} が重なっています (r={r[k]:.3e})"
            )
        return d, r

    def _pair_terms(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        v, dv = self.wca(r)
        vb, dvb = self.double_well_bond(r[self._is_dimer])
        v[self._is_dimer] = vb
        dv[self._is_dimer] = dvb
        return v, dv

    def energy(self, x: np.ndarray) -> float:
        _, r = self._pairs(x)
        v, _ = self._pair_terms(r)
        return float(v.sum())

    def energy_force(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        d, r = self._pairs(x)
        v, dv = self._pair_terms(r)
        # 粒子 i への力は -dV/dr · d/r（j には逆符号）
        fij = (-dv / r)[:, None] * d
        f = np.zeros((self.n_particles, self.spatial_dim))
        np.add.at(f, self._pair_i, fij)
        np.add.at(f, self._pair_j, -fij)
        return float(v.sum()), f.reshape(-1)

    def force(self, x: np.ndarray) -> np.ndarray:
        return self.energy_force(x)[1]

    def bond_distance(self, x: np.ndarray) -> float:
        pos = self.positions(x)
        d = min_image_displacement(pos[0], pos[1], self.box)
        return float(math.hypot(*d))

    def initial_configuration(self) -> np.ndarray:
        """箱を埋める正方格子。行優先に並べるので粒子 0, 1 は隣接する。"""
        side = int(math.ceil(math.sqrt(self.n_particles)))
        a = self.box / side
        k = np.arange(self.n_particles)
        pos = np.stack([(k % side) * a, (k // side) * a], axis=1) + 0.5 * a
        return pos.reshape(-1)


MODEL_REGISTRY = {
    "double_well": DoubleWellD,
    "harmonic": Harmonic,
    "dimer": DimerInSolvent,
}

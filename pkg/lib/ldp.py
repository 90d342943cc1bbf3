# lib/ldp.py
# ============================================================
# 経験測度の大偏差レート汎関数（1 次元配置 × 温度の格子上）
#
#   θ(x, β)  = μ / ϱ
#   J0       = Σ_β ∫ |∇θ|² / (4 θ² β) μ(dx, β)
#   J1       = ½ Σ_β ∫ g_{ββ'}(x) (1 - √(θ'/θ))² μ(dx, β)   （2 温度のみ）
#   I^ν      = J0 + ν J1
#
# 参照用に J0 のもう一つの形 Σ_β ∫ |∇θ|²/(8 θ β) ρ_β dx も計算する
# （n_k = 1/Z_k かつ 2 温度なら J0 と一致する）。
#
# 積分はすべて台形則。∇ は中心差分（端は 2 次の片側差分）。
# ϱ が SUPPORT_FLOOR 以下の点は台の外とみなし θ = nan。
# ============================================================
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from lib.csv_io import read_csv
from lib.errors import UnsupportedModelError, ZeroDensityError
from lib.potentials import PotentialModel
from lib.tempering import TemperatureLadder, acceptance_probability

logger = logging.getLogger(__name__)

SUPPORT_FLOOR = 1e-250
NORMALIZATION_TOL = 1e-10


# ============================================================
# 格子上の密度
# ============================================================

def _check_grid(grid: np.ndarray) -> np.ndarray:
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size < 3:
        raise ValueError("格子点は 3 点以上必要です")
    h = np.diff(g)
    if np.any(h <= 0) or not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ValueError("格子は等間隔・昇順である必要があります")
    return g


@dataclass(frozen=True, eq=False)
class GridDensity:
    """values[i, k] = μ(x_i, β_k) ≥ 0。Σ_k ∫ μ dx = 1（台形則）。"""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        g = _check_grid(self.grid)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != g.size:
            raise ValueError(f"values の行数 {v.shape[0]} が格子点数 {g.size} と一致しません")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("密度は有限かつ非負である必要があります")
        mass = float(trapezoid(v.sum(axis=1), x=g))
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"密度の総質量が 1 ではありません: {mass!r}")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, grid: Sequence[float], values: np.ndarray) -> "GridDensity":
        g = np.asarray(grid, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        mass = trapezoid(v.sum(axis=1), x=g)
        if not mass > 0:
            raise ValueError("総質量が 0 の密度は正規化できません")
        return cls(g, v / mass)

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def n_temperatures(self) -> int:
        return int(self.values.shape[1])

    def boundary_density(self) -> float:
        """端点での Σ_k μ の最大値（領域の打ち切り誤差の目安）。"""
        return float(max(self.values[0].sum(), self.values[-1].sum()))


@dataclass(frozen=True, eq=False)
class ThetaField:
    grid: np.ndarray
    values: np.ndarray  # 台の外は nan


def grid_energy(model: PotentialModel, grid: np.ndarray) -> np.ndarray:
    if model.dimension != 1:
        raise UnsupportedModelError(f"LDP 評価は 1 次元モデルのみ（dimension={model.dimension}）")
    return np.fromiter((model.energy(np.array([x])) for x in grid), dtype=float, count=len(grid))


def equilibrium_density(grid: Sequence[float], ladder: TemperatureLadder, model: PotentialModel) -> GridDensity:
    """ϱ(x, β_k) = n_k e^{-β_k V(x)} / Σ_j n_j Z_j（Z_j も同じ格子の台形則）。"""
    g = _check_grid(np.asarray(grid, dtype=float))
    a = ladder.log_n[None, :] - ladder.betas[None, :] * grid_energy(model, g)[:, None]
    return GridDensity.normalized(g, np.exp(a - a.max()))


def boltzmann_densities(grid: Sequence[float], ladder: TemperatureLadder, model: PotentialModel) -> np.ndarray:
    """ρ_{β_k}(x) = e^{-β_k V}/Z_k を温度ごとに正規化した (n_x, N) 配列。"""
    g = _check_grid(np.asarray(grid, dtype=float))
    a = -ladder.betas[None, :] * grid_energy(model, g)[:, None]
    rho = np.exp(a - a.max(axis=0, keepdims=True))
    return rho / trapezoid(rho, x=g, axis=0)


def theta_from_density(mu: GridDensity, ladder: TemperatureLadder, model: PotentialModel) -> ThetaField:
    if mu.n_temperatures != ladder.size:
        raise ValueError(f"μ の温度数 {mu.n_temperatures} がラダー {ladder.size} と一致しません")
    rho = equilibrium_density(mu.grid, ladder, model).values
    support = rho > SUPPORT_FLOOR
    if np.any(support & (mu.values <= 0)):
        i, k = np.argwhere(support & (mu.values <= 0))[0]
        raise ZeroDensityError(f"ϱ > 0 の点で μ = 0 です（x={mu.grid[i]:.4g}, 温度 index {k}）")
    theta = np.full(rho.shape, np.nan)
    theta[support] = mu.values[support] / rho[support]
    return ThetaField(mu.grid, theta)


def perturbed_density(
    rho: GridDensity, alpha: float, wave_number: float = 1.0, *, antiphase: bool = True
) -> GridDensity:
    """
    μ ∝ ϱ · (1 + α s_k sin(m x))。antiphase なら s_k = (-1)^k（温度間で θ が食い違い J1 > 0）、
    そうでなければ s_k = 1（J1 = 0）。
    """
    if not abs(alpha) < 1:
        raise ValueError(f"|alpha| < 1 が必要です: {alpha}")
    signs = (-1.0) ** np.arange(rho.n_temperatures) if antiphase else np.ones(rho.n_temperatures)
    theta = 1.0 + alpha * np.sin(wave_number * rho.grid)[:, None] * signs[None, :]
    return GridDensity.normalized(rho.grid, rho.values * theta)


# ============================================================
# レート汎関数
# ============================================================

def _gradient(values: np.ndarray, h: float) -> np.ndarray:
    """有限値の連続区間ごとの差分。nan の点は nan のまま。"""
    out = np.full(values.shape, np.nan)
    finite = np.isfinite(values)
    idx = np.flatnonzero(finite)
    if idx.size == 0:
        return out
    breaks = np.flatnonzero(np.diff(idx) > 1) + 1
    for run in np.split(idx, breaks):
        if run.size >= 3:
            out[run] = np.gradient(values[run], h, edge_order=2)
        elif run.size == 2:
            out[run] = np.gradient(values[run], h, edge_order=1)
        else:
            out[run] = 0.0
    return out


def _integrate(integrand: np.ndarray, grid: np.ndarray) -> float:
    return float(trapezoid(np.where(np.isfinite(integrand), integrand, 0.0), x=grid))


def rate_J0(theta: ThetaField, mu: GridDensity, ladder: TemperatureLadder) -> float:
    h = float(theta.grid[1] - theta.grid[0])
    total = 0.0
    for k, beta in enumerate(ladder.betas):
        th = theta.values[:, k]
        grad = _gradient(th, h)
        total += _integrate(grad * grad / (4.0 * th * th * beta) * mu.values[:, k], theta.grid)
    return max(total, 0.0)


def rate_J0_appendix(theta: ThetaField, ladder: TemperatureLadder, model: PotentialModel) -> float:
    """Σ_β ∫ |∇θ|²/(8 θ β) ρ_β dx。ρ_β は温度ごとに正規化したボルツマン密度。"""
    h = float(theta.grid[1] - theta.grid[0])
    rho = boltzmann_densities(theta.grid, ladder, model)
    total = 0.0
    for k, beta in enumerate(ladder.betas):
        th = theta.values[:, k]
        grad = _gradient(th, h)
        total += _integrate(grad * grad / (8.0 * th * beta) * rho[:, k], theta.grid)
    return max(total, 0.0)


def rate_J1(theta: ThetaField, mu: GridDensity, ladder: TemperatureLadder, model: PotentialModel) -> float:
    if ladder.size != 2:
        raise UnsupportedModelError(f"J1 は 2 温度のジャンプ過程のみ（温度数 {ladder.size}）")
    V = grid_energy(model, theta.grid)
    total = 0.0
    for k, other in ((0, 1), (1, 0)):
        g = acceptance_probability(ladder, V, k, other)
        ratio = theta.values[:, other] / theta.values[:, k]
        total += _integrate(g * (1.0 - np.sqrt(ratio)) ** 2 * mu.values[:, k], theta.grid)
    return max(0.5 * total, 0.0)


def rate_I(
    theta: ThetaField, mu: GridDensity, ladder: TemperatureLadder, model: PotentialModel, nu: float
) -> float:
    if nu < 0:
        raise ValueError(f"nu は 0 以上: {nu}")
    j0 = rate_J0(theta, mu, ladder)
    if nu == 0:
        return j0
    return j0 + nu * rate_J1(theta, mu, ladder, model)


# ============================================================
# 評価表
# ============================================================

class LdpCase(NamedTuple):
    perturbation: str
    alpha: float
    wave_number: float
    mu: GridDensity


def standard_cases(
    rho: GridDensity, alphas: Iterable[float], wave_numbers: Iterable[float], *, antiphase: bool = True
) -> List[LdpCase]:
    """平衡そのもの + θ = 1 ± α sin(m x) の族。"""
    cases = [LdpCase("equilibrium", 0.0, 0.0, rho)]
    kind = "antiphase_sin" if antiphase else "inphase_sin"
    for m in wave_numbers:
        for a in alphas:
            cases.append(LdpCase(kind, float(a), float(m), perturbed_density(rho, a, m, antiphase=antiphase)))
    return cases


def evaluate_rates(
    cases: Sequence[LdpCase], ladder: TemperatureLadder, model: PotentialModel, nus: Sequence[float]
) -> pd.DataFrame:
    rows = []
    for case in cases:
        theta = theta_from_density(case.mu, ladder, model)
        j0 = rate_J0(theta, case.mu, ladder)
        j1 = rate_J1(theta, case.mu, ladder, model)
        j0_app = rate_J0_appendix(theta, ladder, model)
        for nu in nus:
            rows.append(
                {
                    "perturbation": case.perturbation,
                    "alpha": case.alpha,
                    "wave_number": case.wave_number,
                    "nu": float(nu),
                    "J0": j0,
                    "J1": j1,
                    "I": j0 + float(nu) * j1,
                    "J0_appendix": j0_app,
                }
            )
    logger.info("LDP: %d densities × %d nu", len(cases), len(nus))
    return pd.DataFrame(rows)


def load_grid_density(path: Path | str, n_temperatures: int) -> GridDensity:
    """列 x, k, value の CSV（# 行はコメント）から μ を読む。正規化し直す。"""
    df = read_csv(path)
    missing = {"x", "k", "value"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: 列 {sorted(missing)} がありません")
    table = df.pivot(index="x", columns="k", values="value").sort_index()
    if list(table.columns) != list(range(n_temperatures)):
        raise ValueError(f"{path}: 温度 index は 0..{n_temperatures - 1} が必要です: {list(table.columns)}")
    if table.isna().any().any():
        raise ValueError(f"{path}: 欠けている (x, k) があります")
    return GridDensity.normalized(table.index.to_numpy(dtype=float), table.to_numpy(dtype=float))

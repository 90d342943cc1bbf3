# lib/estimators.py
# ============================================================
# 軌道の後処理
#   - reweighted_average      : 物理温度での期待値 Σ A ω_0 / Σ ω_0（SE はバッチ平均）
#   - batch_asymptotic_variance: 窓ごとの「和」の標本分散（+ 窓平均版）
#   - histogram / free_energy_profile
#   - quadrature_reference    : 分離可能モデルの Z_β, ⟨V⟩_β, ϱ(x0) の求積オラクル
# ============================================================
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import simpson
from scipy.special import logsumexp

from lib.dynamics import TrajectoryRecord
from lib.errors import DegenerateWeightError, EmptyHistogramError, UnsupportedModelError
from lib.potentials import DoubleWellD, Harmonic, PotentialModel
from lib.tempering import TemperatureLadder, weights

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZES: Tuple[int, ...] = (100, 1_000, 10_000, 100_000)
DEFAULT_N_BATCHES = 32


# ============================================================
# 重み付き平均
# ============================================================

class ReweightedEstimate(NamedTuple):
    estimate: float
    stderr: float
    n_samples: int


def reweighted_average(
    record: TrajectoryRecord,
    values: Sequence[float],
    *,
    ladder: Optional[TemperatureLadder] = None,
    n_batches: int = DEFAULT_N_BATCHES,
) -> ReweightedEstimate:
    """
    ⟨A⟩_{β_phys} ≈ Σ_t A_t ω_0(x_t) / Σ_t ω_0(x_t)

    ω_0 は記録済みの列を使う（ladder を渡すと V から計算し直す）。
    SE は n_batches 個の等長バッチそれぞれの比推定量から求める（端数は捨てる）。
    分母・分子を同じ軌道から取る比推定の偏りは分散に比べ小さいとして無視する。
    """
    a = np.asarray(values, dtype=float)
    if a.shape != record.energy.shape:
        raise ValueError(f"観測量の長さ {a.size} が記録長 {len(record)} と一致しません")
    w0 = weights(ladder, record.energy)[:, 0] if ladder is not None else record.omega0
    den = float(w0.sum())
    if not den > 0:
        raise DegenerateWeightError("Σ ω_0 = 0: 物理温度の重みがありません")
    est = float(np.dot(a, w0) / den)

    size = a.size // n_batches
    se = math.nan
    if size > 0:
        m = size * n_batches
        num_b = (a[:m] * w0[:m]).reshape(n_batches, size).sum(axis=1)
        den_b = w0[:m].reshape(n_batches, size).sum(axis=1)
        ok = den_b > 0
        if ok.sum() >= 2:
            ratios = num_b[ok] / den_b[ok]
            se = float(np.std(ratios, ddof=1) / math.sqrt(ratios.size))
    return ReweightedEstimate(est, se, int(a.size))


# ============================================================
# 漸近分散（窓ごとの和）
# ============================================================

class BatchSumAccumulator:
    """
    窓幅ごとに、完結した窓の和の (個数, 平均, M2) を 1 パスで持つ。
    チャンク境界をまたぐ窓は未完の部分和として繰り越す。統計量の合成は Chan の公式。
    """

    def __init__(self, window_sizes: Sequence[int]) -> None:
        self.window_sizes = tuple(int(ws) for ws in window_sizes)
        if any(ws < 1 for ws in self.window_sizes):
            raise ValueError(f"窓幅は正の整数: {self.window_sizes}")
        self._partial = {ws: 0.0 for ws in self.window_sizes}
        self._fill = {ws: 0 for ws in self.window_sizes}
        self._stats = {ws: (0, 0.0, 0.0) for ws in self.window_sizes}
        self.n_samples = 0

    def _push(self, ws: int, sums: np.ndarray) -> None:
        n_b = sums.size
        if n_b == 0:
            return
        mean_b = float(sums.mean())
        m2_b = float(((sums - mean_b) ** 2).sum())
        n_a, mean_a, m2_a = self._stats[ws]
        n = n_a + n_b
        delta = mean_b - mean_a
        self._stats[ws] = (n, mean_a + delta * n_b / n, m2_a + m2_b + delta * delta * n_a * n_b / n)

    def update(self, chunk: Sequence[float]) -> None:
        data_all = np.asarray(chunk, dtype=float).reshape(-1)
        self.n_samples += data_all.size
        for ws in self.window_sizes:
            data = data_all
            if self._fill[ws]:
                take = data[: ws - self._fill[ws]]
                self._partial[ws] += float(take.sum())
                self._fill[ws] += take.size
                data = data[take.size:]
                if self._fill[ws] < ws:
                    continue
                self._push(ws, np.array([self._partial[ws]]))
                self._partial[ws], self._fill[ws] = 0.0, 0
            n_full = data.size // ws
            if n_full:
                self._push(ws, data[: n_full * ws].reshape(n_full, ws).sum(axis=1))
            rest = data[n_full * ws:]
            self._partial[ws] = float(rest.sum())
            self._fill[ws] = rest.size

    def n_windows(self, ws: int) -> int:
        return self._stats[ws][0]

    def variance(self, ws: int) -> float:
        """完結した窓の和の標本分散（ddof=1）。窓が 2 未満なら nan。"""
        n, _, m2 = self._stats[ws]
        return m2 / (n - 1) if n >= 2 else math.nan


@dataclass(frozen=True)
class BatchAVReport:
    window_sizes: Tuple[int, ...]
    av: Tuple[float, ...]             # 窓の和の分散
    av_normalized: Tuple[float, ...]  # 窓平均の分散 × WS
    n_batches: Tuple[int, ...]
    skipped: Tuple[int, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        """省略した窓幅も skipped=True・av=nan の行として残す。"""
        n_skip = len(self.skipped)
        return pd.DataFrame(
            {
                "window_size": list(self.window_sizes) + list(self.skipped),
                "av": list(self.av) + [math.nan] * n_skip,
                "av_normalized": list(self.av_normalized) + [math.nan] * n_skip,
                "n_batches": list(self.n_batches) + [0] * n_skip,
                "skipped": [False] * len(self.window_sizes) + [True] * n_skip,
            }
        )


def batch_asymptotic_variance(
    series: Sequence[float],
    window_sizes: Sequence[int] = DEFAULT_WINDOW_SIZES,
    *,
    chunk_size: int = 1 << 20,
) -> BatchAVReport:
    arr = np.asarray(series, dtype=float).reshape(-1)
    kept = [int(ws) for ws in window_sizes if 2 * int(ws) <= arr.size]
    skipped = tuple(int(ws) for ws in window_sizes if 2 * int(ws) > arr.size)
    for ws in skipped:
        logger.warning("window size %d は系列長 %d の半分を超えるため省略", ws, arr.size)
    acc = BatchSumAccumulator(kept)
    for start in range(0, arr.size, chunk_size):
        acc.update(arr[start:start + chunk_size])
    av = tuple(acc.variance(ws) for ws in kept)
    return BatchAVReport(
        window_sizes=tuple(kept),
        av=av,
        av_normalized=tuple(v / ws for v, ws in zip(av, kept)),
        n_batches=tuple(acc.n_windows(ws) for ws in kept),
        skipped=skipped,
    )


# ============================================================
# ヒストグラム / 自由エネルギー
# ============================================================

Coordinate = Union[str, Callable[[TrajectoryRecord], np.ndarray]]


def _coordinate_values(record: TrajectoryRecord, coordinate: Coordinate) -> np.ndarray:
    if callable(coordinate):
        return np.asarray(coordinate(record), dtype=float)
    if coordinate == "V":
        return record.energy
    if coordinate not in record.observables:
        raise KeyError(f"記録に観測量 {coordinate!r} がありません（{sorted(record.observables)}）")
    return record.observables[coordinate]


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"bin_center": self.centers, "count": self.counts, "probability": self.probabilities()}
        )


def histogram(
    record: TrajectoryRecord,
    coordinate: Coordinate,
    bins: int,
    value_range: Tuple[float, float],
    *,
    weighted: bool = False,
) -> Histogram:
    """weighted=True なら ω_0 で重み付け（物理温度での周辺分布）。"""
    if bins < 2:
        raise ValueError(f"bins は 2 以上: {bins}")
    lo, hi = (float(v) for v in value_range)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"範囲が不正です: {value_range}")
    vals = _coordinate_values(record, coordinate)
    counts, edges = np.histogram(vals, bins=bins, range=(lo, hi), weights=record.omega0 if weighted else None)
    if not counts.sum() > 0:
        raise EmptyHistogramError(f"範囲 [{lo}, {hi}] に標本がありません")
    return Histogram(edges, counts.astype(float))


@dataclass(frozen=True)
class FreeEnergyProfile:
    edges: np.ndarray
    counts: np.ndarray
    F: np.ndarray  # counts == 0 のビンは nan

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_center": self.centers, "count": self.counts, "F": self.F})


def free_energy_profile(
    record: TrajectoryRecord,
    coordinate: Coordinate,
    bins: int,
    value_range: Tuple[float, float],
    beta_phys: float,
) -> FreeEnergyProfile:
    """F(r) = -(1/β_phys) ln(ω_0 重み付き度数 / ビン幅)、min F = 0 に揃える。"""
    h = histogram(record, coordinate, bins, value_range, weighted=True)
    F = np.full(h.counts.shape, np.nan)
    filled = h.counts > 0
    F[filled] = -np.log(h.counts[filled] / h.widths[filled]) / beta_phys
    F[filled] -= F[filled].min()
    return FreeEnergyProfile(h.edges, h.counts, F)


# ============================================================
# 求積オラクル
# ============================================================

def _separable_parts(model: PotentialModel) -> Tuple[Callable[[np.ndarray], np.ndarray], np.ndarray]:
    """(x0 方向のポテンシャル, 残り座標のガウス剛性)"""
    if isinstance(model, DoubleWellD):
        return DoubleWellD.x0_energy, np.asarray(model.stiffness, dtype=float)
    if isinstance(model, Harmonic):
        k0 = model.stiffness[0]
        return (lambda x: 0.5 * k0 * x * x), np.asarray(model.stiffness[1:], dtype=float)
    raise UnsupportedModelError(f"求積オラクルは分離可能モデルのみ: {type(model).__name__}")


def _log_gauss(betas: np.ndarray, stiffness: np.ndarray) -> np.ndarray:
    """ln Π_j √(2π/(β λ_j))（温度ごと）"""
    return 0.5 * np.sum(np.log(2.0 * np.pi / (betas[:, None] * stiffness[None, :])), axis=1)


@dataclass(frozen=True)
class QuadratureReference:
    betas: np.ndarray
    log_n: np.ndarray
    log_Z: np.ndarray
    mean_energy: np.ndarray
    rel_error: np.ndarray
    grid: np.ndarray
    _log_c: np.ndarray = field(repr=False)          # ln n_k + ln(ガウス因子)
    _log_norm: float = field(repr=False)             # ln Σ_j n_j Z_j
    _x0_energy: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def marginal_density(self, x0: np.ndarray) -> np.ndarray:
        """ϱ(x0) = Σ_k n_k e^{-β_k V(x)} / Σ_j n_j Z_j を残り座標で積分したもの。"""
        x0 = np.asarray(x0, dtype=float)
        a = self._log_c - self.betas * np.asarray(self._x0_energy(x0))[..., None]
        return np.exp(logsumexp(a, axis=-1) - self._log_norm)

    def bin_probabilities(self, edges: Sequence[float], points_per_bin: int = 33) -> np.ndarray:
        e = np.asarray(edges, dtype=float)
        u = np.linspace(0.0, 1.0, points_per_bin)
        xs = e[:-1, None] + np.diff(e)[:, None] * u[None, :]
        return simpson(self.marginal_density(xs), x=xs, axis=1)

    def density_frame(self, x: Optional[np.ndarray] = None) -> pd.DataFrame:
        xs = self.grid if x is None else np.asarray(x, dtype=float)
        return pd.DataFrame({"x": xs, "rho": self.marginal_density(xs)})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "beta": self.betas,
                "log_Z": self.log_Z,
                "Z": np.exp(self.log_Z),
                "mean_V": self.mean_energy,
                "rel_error": self.rel_error,
            }
        )


def quadrature_reference(
    model: PotentialModel,
    ladder: TemperatureLadder,
    *,
    half_width: float = 4.0,
    n_points: int = 20001,
) -> QuadratureReference:
    """
    x0 方向は [-L, L] の複合 Simpson（log 空間で最小値を引いてから積分）、
    残りのガウス因子は解析的。Harmonic は全座標解析的。
    rel_error は半分の解像度との差 /15 と区間外の裾の上界の和。
    """
    v0, rest = _separable_parts(model)
    betas = ladder.betas
    x = np.linspace(-half_width, half_width, n_points)
    log_g = _log_gauss(betas, rest) if rest.size else np.zeros(betas.size)
    rest_energy = 0.5 * rest.size / betas

    if isinstance(model, Harmonic):
        k0 = model.stiffness[0]
        log_z0 = 0.5 * np.log(2.0 * np.pi / (betas * k0))
        mean0 = 0.5 / betas
        rel = np.zeros(betas.size)
    else:
        v = np.asarray(v0(x))
        vmin = float(v.min())
        log_z0 = np.empty(betas.size)
        mean0 = np.empty(betas.size)
        rel = np.empty(betas.size)
        for k, beta in enumerate(betas):
            b = np.exp(-beta * (v - vmin))
            full = simpson(b, x=x)
            half = simpson(b[::2], x=x[::2])
            tail = max(b[0], b[-1]) * half_width
            log_z0[k] = math.log(full) - beta * vmin
            mean0[k] = simpson(b * v, x=x) / full
            rel[k] = abs(full - half) / (15.0 * full) + tail / full
            if rel[k] > 1e-10:
                logger.warning("β=%g の求積誤差推定 %.2e が 1e-10 を超えています", beta, rel[k])

    log_Z = log_z0 + log_g
    logger.info("quadrature reference: log_Z=%s", np.array2string(log_Z, precision=6))
    return QuadratureReference(
        betas=betas.copy(),
        log_n=ladder.log_n.copy(),
        log_Z=log_Z,
        mean_energy=mean0 + rest_energy,
        rel_error=rel,
        grid=x,
        _log_c=ladder.log_n + log_g,
        _log_norm=float(logsumexp(ladder.log_n + log_Z)),
        _x0_energy=v0,
    )


def l1_distance(hist: Histogram, reference: QuadratureReference) -> float:
    """ヒストグラムの確率と、同じビンでの ϱ の確率との L1 距離。"""
    return float(np.abs(hist.probabilities() - reference.bin_probabilities(hist.edges)).sum())


def summarize_observables(
    record: TrajectoryRecord, *, n_batches: int = DEFAULT_N_BATCHES
) -> List[Dict[str, float]]:
    """summary.csv 用: V と記録済み観測量すべての重み付き平均 ± SE。"""
    cols = {"V": record.energy, **record.observables}
    rows = []
    for name, vals in cols.items():
        r = reweighted_average(record, vals, n_batches=n_batches)
        rows.append({"observable": name, "estimate": r.estimate, "stderr": r.stderr, "n_samples": r.n_samples})
    return rows

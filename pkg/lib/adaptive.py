# lib/adaptive.py
# ============================================================
# 重み因子 n_k = 1/Z_k の反復推定
#
#   1) n_k = 1/Z_k^{(l)} で短い軌道を走らせる
#   2) 各温度の「割合」w_k = mean_t ω_k(x_t) を数える
#   3) r_k = N·w_k が区間 I に入れば ln Z_k += ln r_k、外れたら ½ ln r_k（減衰）
#   4) max_k |N·w_k - 1| < tol か l_max 回で終了
#
# すべて log 空間（初期推定 Z が 8 桁以上にわたる）。
# ============================================================
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from lib.dynamics import (
    IntegratorParams,
    Schedule,
    State,
    TrajectoryRecord,
    merge_records,
    run_replicas,
    run_trajectory,
)
from lib.errors import ConfigurationError, DegenerateProportionError
from lib.potentials import PotentialModel
from lib.tempering import TemperatureLadder, weights

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL: Tuple[float, float] = (0.35, 1.5)
DEFAULT_TOLERANCE = 0.05


@dataclass(frozen=True)
class AdaptIteration:
    iteration: int
    log_Z: Tuple[float, ...]         # この反復の軌道で使った ln Z
    proportions: Tuple[float, ...]
    log_Z_next: Tuple[float, ...]


@dataclass(frozen=True)
class AdaptState:
    log_Z: np.ndarray
    iteration: int = 0
    history: Tuple[AdaptIteration, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        log_Z = np.array(self.log_Z, dtype=float).reshape(-1)
        if not np.all(np.isfinite(log_Z)):
            raise ConfigurationError(f"log_Z は有限値: {log_Z.tolist()}", field="adapt.initial_log_Z")
        object.__setattr__(self, "log_Z", log_Z)

    @property
    def converged_proportions(self) -> Optional[np.ndarray]:
        return np.asarray(self.history[-1].proportions) if self.history else None


def iteration_seed(seed: int, iteration: int) -> int:
    """反復ごとに独立な乱数列のシード。"""
    return int(np.random.SeedSequence([int(seed), int(iteration)]).generate_state(1, np.uint64)[0])


def estimate_proportions(record: TrajectoryRecord, ladder: TemperatureLadder) -> np.ndarray:
    """w_k = 記録全体での ω_k(x_t) の平均（各行の Σ_k ω_k = 1 なので分母は標本数）。"""
    if len(record) == 0:
        raise ValueError("空の記録からは割合を推定できません")
    w = weights(ladder, record.energy).mean(axis=0)
    return w / w.sum()


def _check_interval(interval: Sequence[float]) -> Tuple[float, float]:
    lo, hi = (float(v) for v in interval)
    if not lo < 1.0 < hi:
        raise ConfigurationError(f"区間は lo < 1 < hi: [{lo}, {hi}]", field="adapt.interval")
    return lo, hi


def update_weights(
    state: AdaptState,
    w: Sequence[float],
    interval: Sequence[float] = DEFAULT_INTERVAL,
) -> AdaptState:
    lo, hi = _check_interval(interval)
    w = np.asarray(w, dtype=float)
    if w.shape != state.log_Z.shape:
        raise ValueError(f"割合の長さ {w.size} が温度数 {state.log_Z.size} と一致しません")
    if np.any(w <= 0):
        k = int(np.argmin(w))
        raise DegenerateProportionError(
            f"温度 {k} の割合が 0 です（adapt.steps_per_iter を増やしてください）",
            iteration=state.iteration,
        )
    r = w.size * w
    log_r = np.log(r)
    inside = (r >= lo) & (r <= hi)
    log_Z_next = state.log_Z + np.where(inside, log_r, 0.5 * log_r)
    entry = AdaptIteration(
        iteration=state.iteration,
        log_Z=tuple(state.log_Z.tolist()),
        proportions=tuple(w.tolist()),
        log_Z_next=tuple(log_Z_next.tolist()),
    )
    return AdaptState(log_Z_next, state.iteration + 1, state.history + (entry,))


def adapt_loop(
    initial_log_Z: Sequence[float],
    ladder_template: TemperatureLadder,
    model: PotentialModel,
    params: IntegratorParams,
    initial_state: State,
    *,
    l_max: int = 10,
    steps_per_iter: int,
    record_stride: int = 1,
    interval: Sequence[float] = DEFAULT_INTERVAL,
    tolerance: float = DEFAULT_TOLERANCE,
    replicas: int = 1,
    progress: bool = False,
) -> AdaptState:
    """
    反復 l では ladder_template の log_n を -ln Z^{(l)} に差し替えて軌道を走らせ、
    その割合で更新する。更新は常に行い、その後で収束判定する。
    反復 l のシードは SeedSequence([seed, l]) から導出する。
    軌道は前反復の最終状態から継続する。
    """
    if l_max < 1:
        raise ConfigurationError(f"l_max は 1 以上: {l_max}", field="adapt.l_max")
    _check_interval(interval)
    state = AdaptState(np.asarray(initial_log_Z, dtype=float))
    if state.log_Z.size != ladder_template.size:
        raise ConfigurationError(
            f"initial_log_Z の長さ {state.log_Z.size} が温度数 {ladder_template.size} と一致しません",
            field="adapt.initial_log_Z",
        )
    n = ladder_template.size
    schedule = Schedule(steps_per_iter, record_stride)
    current = initial_state

    for l in range(l_max):
        ladder = ladder_template.with_log_n(-state.log_Z)
        it_params = replace(params, rng_seed=iteration_seed(params.rng_seed, l))
        if replicas > 1:
            record = merge_records(run_replicas(current, ladder, model, it_params, schedule, replicas))
        else:
            record = run_trajectory(current, ladder, model, it_params, schedule, progress=progress)
        current = replace(record.final_state, t=0.0)
        w = estimate_proportions(record, ladder)
        try:
            state = update_weights(state, w, interval)
        except DegenerateProportionError as e:
            raise DegenerateProportionError(
                "割合が 0 の温度があります（adapt.steps_per_iter を増やしてください）", iteration=l
            ) from e
        dev = float(np.max(np.abs(n * w - 1.0)))
        logger.info("adapt iteration %d: w=%s max|N·w-1|=%.4f", l, np.array2string(w, precision=4), dev)
        if dev < tolerance:
            logger.info("adapt converged at iteration %d", l)
            break
    return state


def history_rows(state: AdaptState) -> List[dict]:
    """adapt_history.csv 用: iteration, logZ_k, w_k, logZ_next_k。"""
    rows = []
    for h in state.history:
        row: dict = {"iteration": h.iteration}
        row.update({f"logZ_{k}": v for k, v in enumerate(h.log_Z)})
        row.update({f"w_{k}": v for k, v in enumerate(h.proportions)})
        row.update({f"logZ_next_{k}": v for k, v in enumerate(h.log_Z_next)})
        rows.append(row)
    return rows

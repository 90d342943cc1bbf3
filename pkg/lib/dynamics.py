# lib/dynamics.py
# ============================================================
# 時間積分
#   (a) 有限 ν の STMD（過減衰・β(t) で力をスケール + 温度ジャンプ過程）
#   (b) 無限スイッチ極限（= ITS）の過減衰ダイナミクス
#   (c) 無限スイッチ極限の Langevin（BAOAB）と、その有限 ν 版
#
# 乱数: 1 本の軌道は 1 本の Generator を逐次消費する。
#       レプリカは SeedSequence(seed, spawn_key=(replica_id,)) で独立ストリーム。
# ============================================================
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from lib.errors import ConfigurationError, IntegrationError, SingularityError
from lib.observables import resolve_observables
from lib.potentials import PotentialModel
from lib.tempering import TemperatureLadder, acceptance_probability, force_scale, log_terms

logger = logging.getLogger(__name__)

__all__ = [
    "IntegratorParams",
    "OverdampedState",
    "LangevinState",
    "Schedule",
    "TrajectoryRecord",
    "make_rng",
    "draw_switch_attempts",
    "attempt_switches",
    "step_stmd_overdamped",
    "step_its_overdamped",
    "step_its_langevin",
    "step_stmd_langevin",
    "run_trajectory",
    "run_replicas",
    "merge_records",
]


# ============================================================
# データクラス
# ============================================================

@dataclass(frozen=True)
class IntegratorParams:
    """dt, ν（math.inf で無限スイッチ）, γ, m, 乱数シード。"""

    dt: float
    nu: float = math.inf
    gamma: float = 1.0
    mass: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigurationError(f"dt は正: {self.dt}", field="dynamics.dt")
        if math.isnan(self.nu) or self.nu < 0:
            raise ConfigurationError(f"nu は 0 以上または inf: {self.nu}", field="dynamics.nu")
        if self.gamma < 0:
            raise ConfigurationError(f"gamma は 0 以上: {self.gamma}", field="dynamics.gamma")
        if not self.mass > 0:
            raise ConfigurationError(f"mass は正: {self.mass}", field="dynamics.mass")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigurationError(f"seed は 64bit 符号なし整数: {self.rng_seed}", field="dynamics.seed")

    @property
    def infinite_switching(self) -> bool:
        return math.isinf(self.nu)


@dataclass(frozen=True)
class OverdampedState:
    """(x, β(t) の index, t)。energy/force は x での値のキャッシュ。"""

    x: np.ndarray
    beta_index: int = 0
    t: float = 0.0
    energy: Optional[float] = field(default=None, compare=False, repr=False)
    force: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LangevinState:
    x: np.ndarray
    p: np.ndarray
    beta_index: int = 0
    t: float = 0.0
    energy: Optional[float] = field(default=None, compare=False, repr=False)
    force: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


State = Union[OverdampedState, LangevinState]


@dataclass(frozen=True)
class Schedule:
    n_steps: int
    record_stride: int = 1
    observables: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.n_steps < 0:
            raise ConfigurationError(f"n_steps は 0 以上: {self.n_steps}", field="dynamics.n_steps")
        if self.record_stride < 1:
            raise ConfigurationError(
                f"record_stride は 1 以上: {self.record_stride}", field="dynamics.record_stride"
            )


@dataclass
class TrajectoryRecord:
    """記録列。beta_index は有限 ν のときだけ持つ。"""

    t: np.ndarray
    energy: np.ndarray
    omega0: np.ndarray
    beta_index: Optional[np.ndarray] = None
    observables: Dict[str, np.ndarray] = field(default_factory=dict)
    final_state: Optional[State] = None

    def __len__(self) -> int:
        return int(self.energy.size)

    def to_frame(self) -> pd.DataFrame:
        cols: Dict[str, np.ndarray] = {"t": self.t, "V": self.energy, "omega0": self.omega0}
        if self.beta_index is not None:
            cols["beta_index"] = self.beta_index
        cols.update(self.observables)
        return pd.DataFrame(cols)


# ============================================================
# 乱数
# ============================================================

def make_rng(seed: int, replica_id: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(replica_id),))))


# ============================================================
# 内部ユーティリティ
# ============================================================

def _cached(state: State, model: PotentialModel) -> Tuple[float, np.ndarray]:
    if state.energy is None or state.force is None:
        return model.energy_force(state.x)
    return state.energy, state.force


def _checked(model: PotentialModel, candidate: State) -> State:
    """candidate.x で力を評価してキャッシュに入れる。非有限なら candidate ごと IntegrationError に載せる。"""
    V, f = model.energy_force(candidate.x)
    new = replace(candidate, energy=V, force=f)
    if not (math.isfinite(V) and np.all(np.isfinite(f))):
        raise IntegrationError("非有限の力またはエネルギー", state=new)
    return new


def _require_finite_nu(params: IntegratorParams) -> None:
    if params.infinite_switching:
        raise ConfigurationError("有限 ν の積分器に nu=inf が渡されました", field="dynamics.nu")


# ============================================================
# 温度ジャンプ過程
# ============================================================

def draw_switch_attempts(nu: float, dt: float, rng: np.random.Generator) -> int:
    """1 ステップ中の試行回数 K ~ Poisson(ν·dt)。ν·dt > 1 でも厳密。"""
    if nu <= 0:
        return 0
    return int(rng.poisson(nu * dt))


def attempt_switches(
    state: State,
    ladder: TemperatureLadder,
    V: float,
    nu: float,
    dt: float,
    rng: np.random.Generator,
) -> State:
    """
    隣接温度への切替を K 回逐次に試みる。上下は各 ½、ラダー外の提案は何もしない
    （棄却扱い）。受理確率は acceptance_probability。x は変えない。
    """
    if ladder.size == 1:
        return state
    k = draw_switch_attempts(nu, dt, rng)
    idx = state.beta_index
    for _ in range(k):
        proposal = idx + (1 if rng.random() < 0.5 else -1)
        if not 0 <= proposal < ladder.size:
            continue
        if rng.random() < acceptance_probability(ladder, V, idx, proposal):
            idx = proposal
    return state if idx == state.beta_index else replace(state, beta_index=idx)


# ============================================================
# 過減衰
# ============================================================

def _euler_maruyama(
    state: OverdampedState,
    model: PotentialModel,
    params: IntegratorParams,
    rng: np.random.Generator,
    beta_phys: float,
    scale: Callable[[float], float],
) -> OverdampedState:
    V, f = _cached(state, model)
    if not np.all(np.isfinite(f)):
        raise IntegrationError("非有限の力", state=state)
    dt = params.dt
    noise = rng.standard_normal(state.x.shape)
    x = state.x + scale(V) * dt * f + math.sqrt(2.0 * dt / beta_phys) * noise
    return _checked(model, OverdampedState(x, state.beta_index, state.t + dt))


def step_stmd_overdamped(
    state: OverdampedState,
    ladder: TemperatureLadder,
    model: PotentialModel,
    params: IntegratorParams,
    rng: np.random.Generator,
) -> OverdampedState:
    """ẋ = (β(t)/β_phys) f(x) + √(2/β_phys) η の 1 ステップ、続いて温度ジャンプ。"""
    _require_finite_nu(params)
    ratio = ladder.betas[state.beta_index] / ladder.beta_phys
    new = _euler_maruyama(state, model, params, rng, ladder.beta_phys, lambda _: ratio)
    return attempt_switches(new, ladder, new.energy, params.nu, params.dt, rng)


def step_its_overdamped(
    state: OverdampedState,
    ladder: TemperatureLadder,
    model: PotentialModel,
    params: IntegratorParams,
    rng: np.random.Generator,
) -> OverdampedState:
    """ẋ = s(x) f(x) + √(2/β_phys) η、s = force_scale。beta_index は使わない。"""
    return _euler_maruyama(state, model, params, rng, ladder.beta_phys, lambda V: force_scale(ladder, V))


# ============================================================
# Langevin（BAOAB）
# ============================================================

def _baoab(
    state: LangevinState,
    model: PotentialModel,
    params: IntegratorParams,
    rng: np.random.Generator,
    beta_phys: float,
    scale: Callable[[float], float],
) -> LangevinState:
    V, f = _cached(state, model)
    if not np.all(np.isfinite(f)):
        raise IntegrationError("非有限の力", state=state)
    h = 0.5 * params.dt
    m = params.mass
    p = state.p + h * scale(V) * f
    x = state.x + h * p / m
    if params.gamma > 0:
        c1 = math.exp(-params.gamma * params.dt)
        p = c1 * p + math.sqrt((1.0 - c1 * c1) * m / beta_phys) * rng.standard_normal(p.shape)
    x = x + h * p / m
    new = _checked(model, LangevinState(x, p, state.beta_index, state.t + params.dt))
    return replace(new, p=p + h * scale(new.energy) * new.force)


def step_its_langevin(
    state: LangevinState,
    ladder: TemperatureLadder,
    model: PotentialModel,
    params: IntegratorParams,
    rng: np.random.Generator,
) -> LangevinState:
    """
    ẋ = p/m,  ṗ = s(x) f(x) - γp + √(2γm/β_phys) η

    ノイズ温度は物理温度。γ = 0 では有効ポテンシャル上の velocity Verlet になる。
    """
    return _baoab(state, model, params, rng, ladder.beta_phys, lambda V: force_scale(ladder, V))


def step_stmd_langevin(
    state: LangevinState,
    ladder: TemperatureLadder,
    model: PotentialModel,
    params: IntegratorParams,
    rng: np.random.Generator,
) -> LangevinState:
    """力を β(t)/β_phys 倍した BAOAB の 1 ステップ、続いて温度ジャンプ。"""
    _require_finite_nu(params)
    ratio = ladder.betas[state.beta_index] / ladder.beta_phys
    new = _baoab(state, model, params, rng, ladder.beta_phys, lambda _: ratio)
    return attempt_switches(new, ladder, new.energy, params.nu, params.dt, rng)


Stepper = Callable[[State, TemperatureLadder, PotentialModel, IntegratorParams, np.random.Generator], State]


def select_stepper(state: State, params: IntegratorParams) -> Stepper:
    if isinstance(state, LangevinState):
        return step_its_langevin if params.infinite_switching else step_stmd_langevin
    return step_its_overdamped if params.infinite_switching else step_stmd_overdamped


# ============================================================
# 軌道
# ============================================================

def run_trajectory(
    initial_state: State,
    ladder: TemperatureLadder,
    model: PotentialModel,
    params: IntegratorParams,
    schedule: Schedule,
    *,
    replica_id: int = 0,
    rng: Optional[np.random.Generator] = None,
    progress: bool = False,
) -> TrajectoryRecord:
    """
    n_steps ステップ進め、record_stride ごとに (t, V, ω_0, beta_index, 観測量) を記録する。
    初期状態も 1 行目に記録する（burn-in なし）。同じ seed なら結果は完全に一致する。
    """
    ladder.check_index(initial_state.beta_index)
    stepper = select_stepper(initial_state, params)
    finite_nu = not params.infinite_switching
    observables = resolve_observables(
        schedule.observables, model, has_momentum=isinstance(initial_state, LangevinState)
    )
    rng = rng if rng is not None else make_rng(params.rng_seed, replica_id)

    n_rec = schedule.n_steps // schedule.record_stride + 1
    t = np.empty(n_rec)
    energy = np.empty(n_rec)
    omega0 = np.empty(n_rec)
    beta_index = np.empty(n_rec, dtype=np.int64) if finite_nu else None
    obs = {name: np.empty(n_rec) for name, _ in observables}

    state: State = _checked(model, replace(initial_state, x=np.asarray(initial_state.x, dtype=float)))

    def _record(row: int, s: State) -> None:
        a = log_terms(ladder, s.energy)
        t[row] = s.t
        energy[row] = s.energy
        omega0[row] = math.exp(a[0] - np.logaddexp.reduce(a))
        if beta_index is not None:
            beta_index[row] = s.beta_index
        for name, fn in observables:
            obs[name][row] = fn(model, s, params.mass)

    _record(0, state)
    row = 1
    started = time.perf_counter()
    steps = range(1, schedule.n_steps + 1)
    if progress:
        steps = tqdm(steps, total=schedule.n_steps, desc=stepper.__name__, unit="step", mininterval=1.0)
    for step in steps:
        try:
            state = stepper(state, ladder, model, params, rng)
        except (IntegrationError, SingularityError) as e:
            raise IntegrationError(
                f"{stepper.__name__} が失敗: {e}", state=getattr(e, "state", None) or state, step=step
            ) from e
        if step % schedule.record_stride == 0:
            _record(row, state)
            row += 1

    logger.info(
        "%s: %d steps, %d records, %.1fs (seed=%d, replica=%d)",
        stepper.__name__, schedule.n_steps, n_rec, time.perf_counter() - started,
        params.rng_seed, replica_id,
    )
    return TrajectoryRecord(t, energy, omega0, beta_index, obs, state)


def merge_records(records: Sequence[TrajectoryRecord]) -> TrajectoryRecord:
    """独立レプリカの記録を連結する（標本数で重み付けした平均と同じ結果になる）。"""
    if not records:
        raise ValueError("records が空です")
    has_beta = all(r.beta_index is not None for r in records)
    names = list(records[0].observables)
    return TrajectoryRecord(
        t=np.concatenate([r.t for r in records]),
        energy=np.concatenate([r.energy for r in records]),
        omega0=np.concatenate([r.omega0 for r in records]),
        beta_index=np.concatenate([r.beta_index for r in records]) if has_beta else None,  # type: ignore[misc]
        observables={n: np.concatenate([r.observables[n] for r in records]) for n in names},
        final_state=records[-1].final_state,
    )


def _replica_job(args: tuple) -> TrajectoryRecord:
    initial_state, ladder, model, params, schedule, replica_id = args
    return run_trajectory(initial_state, ladder, model, params, schedule, replica_id=replica_id)


def run_replicas(
    initial_state: State,
    ladder: TemperatureLadder,
    model: PotentialModel,
    params: IntegratorParams,
    schedule: Schedule,
    n_replicas: int,
    *,
    max_workers: Optional[int] = None,
) -> List[TrajectoryRecord]:
    """(seed, replica_id) ごとの独立軌道。ワーカー数に依らず結果は同じ。"""
    jobs = [(initial_state, ladder, model, params, schedule, r) for r in range(n_replicas)]
    if n_replicas == 1 or max_workers == 1:
        return [_replica_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_replica_job, jobs))

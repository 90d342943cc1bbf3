# tests/test_dynamics.py
from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import FlatModel, LinearModel
from lib.dynamics import (
    IntegratorParams,
    LangevinState,
    OverdampedState,
    Schedule,
    attempt_switches,
    draw_switch_attempts,
    make_rng,
    merge_records,
    run_replicas,
    run_trajectory,
    step_its_langevin,
    step_its_overdamped,
    step_stmd_langevin,
    step_stmd_overdamped,
)
from lib.errors import ConfigurationError, IntegrationError
from lib.potentials import DoubleWellD, Harmonic
from lib.tempering import TemperatureLadder, weights


# ------------------------------------------------------------
# パラメータ
# ------------------------------------------------------------
@pytest.mark.parametrize(
    "kwargs",
    [dict(dt=0.0), dict(dt=0.1, nu=-1.0), dict(dt=0.1, nu=math.nan), dict(dt=0.1, gamma=-1.0), dict(dt=0.1, mass=0.0)],
)
def test_integrator_params_validation(kwargs):
    with pytest.raises(ConfigurationError):
        IntegratorParams(**kwargs)


def test_stmd_rejects_infinite_nu(double_well):
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    with pytest.raises(ConfigurationError):
        step_stmd_overdamped(
            OverdampedState(np.zeros(1)), ladder, double_well, IntegratorParams(dt=0.1), make_rng(0)
        )


# ------------------------------------------------------------
# 過減衰
# ------------------------------------------------------------
def test_free_diffusion_step(flat_model):
    ladder = TemperatureLadder.uniform([2.0])
    params = IntegratorParams(dt=0.01, nu=0.0)
    x0 = np.array([0.1, -0.2, 0.3])
    xi = make_rng(5).standard_normal(3)
    s = step_stmd_overdamped(OverdampedState(x0), ladder, flat_model, params, make_rng(5))
    np.testing.assert_allclose(s.x, x0 + math.sqrt(2 * 0.01 / 2.0) * xi, rtol=1e-15)
    assert s.t == pytest.approx(0.01)


def test_stmd_drift_at_hot_index(double_well):
    ladder = TemperatureLadder.uniform([25.0, 12.5])
    params = IntegratorParams(dt=0.025, nu=0.0)
    x0 = np.array([0.3])
    xi = make_rng(3).standard_normal(1)
    s = step_stmd_overdamped(OverdampedState(x0, beta_index=1), ladder, double_well, params, make_rng(3))
    drift = s.x - x0 - math.sqrt(2 * 0.025 / 25.0) * xi
    assert drift[0] == pytest.approx((12.5 / 25.0) * double_well.force(x0)[0] * 0.025, rel=1e-12)
    assert s.beta_index == 1


def test_its_single_temperature_equals_plain_overdamped(double_well):
    ladder = TemperatureLadder.uniform([4.0])
    params = IntegratorParams(dt=0.01)
    x0 = np.array([0.2])
    xi = make_rng(9).standard_normal(1)
    s = step_its_overdamped(OverdampedState(x0), ladder, double_well, params, make_rng(9))
    expected = x0 + double_well.force(x0) * 0.01 + math.sqrt(2 * 0.01 / 4.0) * xi
    np.testing.assert_allclose(s.x, expected, rtol=1e-15)


def test_its_physical_weight_gives_physical_step(double_well):
    # log_n で ω = (1, 0, …) に寄せると物理温度の過減衰ステップと同じ
    ladder = TemperatureLadder(np.array([4.0, 2.0, 1.0]), np.array([0.0, -800.0, -800.0]))
    params = IntegratorParams(dt=0.01)
    x0 = np.array([0.2])
    xi = make_rng(1).standard_normal(1)
    s = step_its_overdamped(OverdampedState(x0), ladder, double_well, params, make_rng(1))
    expected = x0 + double_well.force(x0) * 0.01 + math.sqrt(2 * 0.01 / 4.0) * xi
    np.testing.assert_allclose(s.x, expected, rtol=1e-14)


# ------------------------------------------------------------
# 温度ジャンプ
# ------------------------------------------------------------
def test_no_switches_when_nu_is_zero():
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    state = OverdampedState(np.zeros(1), beta_index=1)
    assert attempt_switches(state, ladder, 0.0, 0.0, 0.1, make_rng(0)) is state


def test_poisson_attempt_count():
    rng = make_rng(11)
    total = sum(draw_switch_attempts(1.0, 0.025, rng) for _ in range(100_000))
    assert abs(total - 2500) < 3 * math.sqrt(2500)


def test_jump_process_stationary_occupation():
    ladder = TemperatureLadder(np.array([2.0, 1.0, 0.5]), np.array([0.0, 0.3, -0.2]))
    V = 0.7
    target = weights(ladder, V)
    rng = make_rng(2)
    state = OverdampedState(np.zeros(1), beta_index=0)
    counts = np.zeros(3)
    n = 200_000
    for _ in range(n):
        state = attempt_switches(state, ladder, V, 1.0, 1.0, rng)
        counts[state.beta_index] += 1
    np.testing.assert_allclose(counts / n, target, atol=0.01)


def test_boundary_proposals_stay_on_ladder():
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    rng = make_rng(4)
    state = OverdampedState(np.zeros(1), beta_index=0)
    seen = set()
    for _ in range(2000):
        state = attempt_switches(state, ladder, 0.0, 10.0, 1.0, rng)
        seen.add(state.beta_index)
    assert seen == {0, 1}


# ------------------------------------------------------------
# Langevin
# ------------------------------------------------------------
def test_langevin_rest_state_only_advances_time(flat_model):
    ladder = TemperatureLadder.uniform([1.0])
    params = IntegratorParams(dt=0.1, gamma=0.0)
    s0 = LangevinState(np.ones(3), np.zeros(3))
    s1 = step_its_langevin(s0, ladder, flat_model, params, make_rng(0))
    np.testing.assert_array_equal(s1.x, s0.x)
    np.testing.assert_array_equal(s1.p, s0.p)
    assert s1.t == pytest.approx(0.1)


def test_baoab_energy_conservation_without_friction():
    model = Harmonic(1)
    ladder = TemperatureLadder.uniform([1.0])
    params = IntegratorParams(dt=0.001, gamma=0.0)
    state = LangevinState(np.array([1.0]), np.array([0.0]))
    rec = run_trajectory(state, ladder, model, params, Schedule(10_000, 1, ("kinetic_energy",)))
    H = rec.energy + rec.observables["kinetic_energy"]
    assert np.max(np.abs(H - H[0])) / H[0] < 1e-6


def test_langevin_equipartition():
    model = Harmonic(1)
    beta = 2.0
    ladder = TemperatureLadder.uniform([beta])
    params = IntegratorParams(dt=0.05, gamma=1.0, rng_seed=17)
    rec = run_trajectory(
        LangevinState(np.zeros(1), np.zeros(1)), ladder, model, params, Schedule(100_000, 1, ("p0",))
    )
    p2 = rec.observables["p0"][1000:] ** 2
    batches = p2[: (p2.size // 20) * 20].reshape(20, -1).mean(axis=1)
    se = batches.std(ddof=1) / math.sqrt(batches.size)
    assert abs(p2.mean() - 1.0 / beta) < 3 * se + 0.01


def test_stmd_langevin_switches_temperature(double_well):
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    params = IntegratorParams(dt=0.01, nu=50.0, rng_seed=3)
    rec = run_trajectory(
        LangevinState(np.array([-1.0]), np.zeros(1)), ladder, double_well, params, Schedule(2000, 1)
    )
    assert rec.beta_index is not None
    assert set(np.unique(rec.beta_index)) == {0, 1}


def test_stmd_langevin_scales_force(double_well):
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    params = IntegratorParams(dt=0.01, nu=0.0, gamma=0.0)
    x0, p0 = np.array([0.3]), np.array([0.0])
    s = step_stmd_langevin(LangevinState(x0, p0, beta_index=1), ladder, double_well, params, make_rng(0))
    f0 = double_well.force(x0)[0]
    # 最初の半キックと半ドリフト 2 回: x1 = x0 + dt²/2 · (β_1/β_0) f(x0)
    assert s.x[0] == pytest.approx(0.3 + 0.5 * 0.01**2 * 0.5 * f0, rel=1e-12)


# ------------------------------------------------------------
# 軌道
# ------------------------------------------------------------
def test_zero_steps_gives_initial_snapshot(double_well):
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    rec = run_trajectory(OverdampedState(np.array([-1.0])), ladder, double_well, IntegratorParams(dt=0.01), Schedule(0))
    assert len(rec) == 1
    assert rec.energy[0] == pytest.approx(0.25)
    assert rec.omega0[0] == pytest.approx(weights(ladder, 0.25)[0])
    assert rec.beta_index is None


def test_record_stride_and_columns(double_well):
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    params = IntegratorParams(dt=0.01, nu=1.0)
    rec = run_trajectory(OverdampedState(np.array([-1.0])), ladder, double_well, params, Schedule(100, 10, ("x0",)))
    assert len(rec) == 11
    np.testing.assert_allclose(rec.t, np.arange(11) * 0.1)
    assert rec.beta_index is not None
    assert list(rec.to_frame().columns) == ["t", "V", "omega0", "beta_index", "x0"]


def test_same_seed_same_trajectory(double_well):
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    sched = Schedule(500, 1, ("x0",))
    a = run_trajectory(OverdampedState(np.array([-1.0])), ladder, double_well, IntegratorParams(dt=0.01, nu=5.0, rng_seed=42), sched)
    b = run_trajectory(OverdampedState(np.array([-1.0])), ladder, double_well, IntegratorParams(dt=0.01, nu=5.0, rng_seed=42), sched)
    c = run_trajectory(OverdampedState(np.array([-1.0])), ladder, double_well, IntegratorParams(dt=0.01, nu=5.0, rng_seed=43), sched)
    np.testing.assert_array_equal(a.energy, b.energy)
    np.testing.assert_array_equal(a.beta_index, b.beta_index)
    assert not np.array_equal(a.energy, c.energy)


def test_integration_error_carries_step_and_state():
    model = LinearModel(c=1.0, cutoff=0.5)
    ladder = TemperatureLadder.uniform([1e12])
    with pytest.raises(IntegrationError) as info:
        run_trajectory(OverdampedState(np.zeros(1)), ladder, model, IntegratorParams(dt=0.1), Schedule(100))
    assert info.value.step is not None and 1 <= info.value.step <= 10
    bad = info.value.state
    # 力が nan になった x そのものを持つ
    assert abs(bad.x[0]) > model.cutoff
    assert not np.all(np.isfinite(bad.force))
    assert bad.t == pytest.approx(0.1 * info.value.step)


def test_integration_error_langevin_keeps_offending_configuration():
    model = LinearModel(c=1.0, cutoff=0.5)
    ladder = TemperatureLadder.uniform([1e12])
    start = LangevinState(np.zeros(1), np.zeros(1))
    with pytest.raises(IntegrationError) as info:
        run_trajectory(start, ladder, model, IntegratorParams(dt=0.1, gamma=0.0), Schedule(1000))
    bad = info.value.state
    assert isinstance(bad, LangevinState)
    assert abs(bad.x[0]) > model.cutoff
    assert not np.all(np.isfinite(bad.force))


def test_replicas_are_independent_and_worker_count_free(double_well):
    ladder = TemperatureLadder.uniform([2.0, 1.0])
    params = IntegratorParams(dt=0.01, rng_seed=8)
    sched = Schedule(200, 1)
    start = OverdampedState(np.array([-1.0]))
    serial = run_replicas(start, ladder, double_well, params, sched, 3, max_workers=1)
    pooled = run_replicas(start, ladder, double_well, params, sched, 3, max_workers=2)
    for a, b in zip(serial, pooled):
        np.testing.assert_array_equal(a.energy, b.energy)
    assert not np.array_equal(serial[0].energy, serial[1].energy)
    np.testing.assert_array_equal(
        serial[2].energy, run_trajectory(start, ladder, double_well, params, sched, replica_id=2).energy
    )
    merged = merge_records(serial)
    assert len(merged) == 3 * 201

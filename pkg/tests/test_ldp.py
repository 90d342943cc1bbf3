# tests/test_ldp.py
from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from scipy.integrate import trapezoid

from conftest import oracle
from lib.csv_io import write_csv
from lib.errors import UnsupportedModelError, ZeroDensityError
from lib.ldp import (
    GridDensity,
    boltzmann_densities,
    equilibrium_density,
    evaluate_rates,
    grid_energy,
    load_grid_density,
    perturbed_density,
    rate_I,
    rate_J0,
    rate_J0_appendix,
    rate_J1,
    standard_cases,
    theta_from_density,
)
from lib.potentials import DoubleWellD
from lib.tempering import TemperatureLadder

GRID = np.linspace(-3.0, 3.0, 8001)


@pytest.fixture
def rho(double_well, oracle_2t) -> GridDensity:
    return equilibrium_density(GRID, oracle_2t, double_well)


def _rates(mu, ladder, model):
    theta = theta_from_density(mu, ladder, model)
    return theta, rate_J0(theta, mu, ladder), rate_J1(theta, mu, ladder, model)


# ------------------------------------------------------------
# 平衡・定数 θ
# ------------------------------------------------------------
def test_equilibrium_has_zero_rates(rho, oracle_2t, double_well):
    theta, j0, j1 = _rates(rho, oracle_2t, double_well)
    assert j0 == pytest.approx(0.0, abs=1e-20)
    assert j1 == pytest.approx(0.0, abs=1e-20)
    assert rate_I(theta, rho, oracle_2t, double_well, 10.0) == pytest.approx(0.0, abs=1e-20)


def test_equilibrium_marks_outside_support_as_nan(rho, oracle_2t, double_well):
    theta = theta_from_density(rho, oracle_2t, double_well)
    assert np.isnan(theta.values[0, 0])
    np.testing.assert_allclose(theta.values[GRID.size // 2], 1.0, rtol=1e-12)


def test_constant_theta_per_temperature(rho, oracle_2t, double_well):
    mu = GridDensity.normalized(GRID, rho.values * np.array([1.2, 0.8]))
    theta, j0, j1 = _rates(mu, oracle_2t, double_well)
    assert j0 == pytest.approx(0.0, abs=1e-18)
    th0 = float(np.nanmax(theta.values[:, 0]))
    th1 = float(np.nanmax(theta.values[:, 1]))
    # ϱ_0 g_{0→1} = min(ϱ_0, ϱ_1) なので J1 = (√θ_0 - √θ_1)² ∫ min(ϱ_0, ϱ_1)
    overlap = trapezoid(np.minimum(rho.values[:, 0], rho.values[:, 1]), GRID)
    assert j1 == pytest.approx((np.sqrt(th0) - np.sqrt(th1)) ** 2 * overlap, rel=1e-8)


def test_inphase_perturbation_has_no_jump_cost(rho, oracle_2t, double_well):
    mu = perturbed_density(rho, 0.3, 1.0, antiphase=False)
    _, j0, j1 = _rates(mu, oracle_2t, double_well)
    assert j0 > 0
    assert j1 == pytest.approx(0.0, abs=1e-15)


# ------------------------------------------------------------
# J0
# ------------------------------------------------------------
def test_J0_matches_analytic_gradient(rho, oracle_2t, double_well):
    alpha = 0.2
    mu = perturbed_density(rho, alpha, 1.0, antiphase=False)
    theta, j0, _ = _rates(mu, oracle_2t, double_well)
    mid = GRID.size // 2  # x = 0
    c = float(theta.values[mid, 0])  # 正規化で掛かった定数
    th = c * (1 + alpha * np.sin(GRID))
    dth = c * alpha * np.cos(GRID)
    expected = sum(
        trapezoid(dth**2 / (4.0 * th * beta) * rho.values[:, k], GRID) for k, beta in enumerate(oracle_2t.betas)
    )
    assert j0 == pytest.approx(expected, rel=1e-5)


def test_J0_converges_under_refinement(double_well, oracle_2t):
    values = []
    for n in (8001, 16001):
        r = equilibrium_density(np.linspace(-3.0, 3.0, n), oracle_2t, double_well)
        mu = perturbed_density(r, 0.2, 1.0)
        values.append(_rates(mu, oracle_2t, double_well)[1])
    assert values[0] == pytest.approx(values[1], rel=1e-4)


def test_J0_appendix_agrees_at_oracle_weights(rho, oracle_2t, double_well):
    mu = perturbed_density(rho, 0.3, 2.0)
    theta, j0, _ = _rates(mu, oracle_2t, double_well)
    assert rate_J0_appendix(theta, oracle_2t, double_well) == pytest.approx(j0, rel=1e-6)


def test_rates_grow_with_amplitude(rho, oracle_2t, double_well):
    j0s, j1s = [], []
    for alpha in (0.1, 0.2, 0.3):
        _, j0, j1 = _rates(perturbed_density(rho, alpha, 1.0), oracle_2t, double_well)
        j0s.append(j0)
        j1s.append(j1)
    assert j0s == sorted(j0s) and j0s[0] > 0
    assert j1s == sorted(j1s) and j1s[0] > 0


def test_zero_density_inside_support_raises(rho, oracle_2t, double_well):
    values = rho.values.copy()
    values[np.searchsorted(GRID, -1.0), 0] = 0.0
    with pytest.raises(ZeroDensityError):
        theta_from_density(GridDensity.normalized(GRID, values), oracle_2t, double_well)


# ------------------------------------------------------------
# I(ν)
# ------------------------------------------------------------
def test_rate_I_is_affine_in_nu(rho, oracle_2t, double_well):
    mu = perturbed_density(rho, 0.2, 1.0)
    theta, j0, j1 = _rates(mu, oracle_2t, double_well)
    i1 = rate_I(theta, mu, oracle_2t, double_well, 1.0)
    i10 = rate_I(theta, mu, oracle_2t, double_well, 10.0)
    assert i10 - i1 == pytest.approx(9.0 * j1, rel=1e-12)
    assert rate_I(theta, mu, oracle_2t, double_well, 0.0) == j0
    with pytest.raises(ValueError):
        rate_I(theta, mu, oracle_2t, double_well, -1.0)


def test_J1_requires_two_temperatures(double_well):
    ladder = TemperatureLadder.uniform([25.0, 12.5, 6.25])
    mu = equilibrium_density(GRID, ladder, double_well)
    theta = theta_from_density(mu, ladder, double_well)
    assert rate_J0(theta, mu, ladder) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(UnsupportedModelError):
        rate_J1(theta, mu, ladder, double_well)


# ------------------------------------------------------------
# 格子密度
# ------------------------------------------------------------
def test_grid_density_validation():
    g = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ValueError):
        GridDensity(np.array([0.0, 0.1, 0.3, 0.4]), np.ones(4))
    with pytest.raises(ValueError):
        GridDensity(g, np.full(11, 2.0))
    with pytest.raises(ValueError):
        GridDensity.normalized(g, np.where(g > 0.5, 1.0, -1.0))
    d = GridDensity.normalized(g, np.ones(11))
    assert d.n_temperatures == 1
    assert d.spacing == pytest.approx(0.1)


def test_boltzmann_densities_are_normalized(oracle_2t, double_well):
    rho_b = boltzmann_densities(GRID, oracle_2t, double_well)
    np.testing.assert_allclose(trapezoid(rho_b, GRID, axis=0), [1.0, 1.0], rtol=1e-12)


def test_multidimensional_model_rejected():
    with pytest.raises(UnsupportedModelError):
        grid_energy(DoubleWellD(2), GRID)


def test_evaluate_rates_table(rho, oracle_2t, double_well):
    cases = standard_cases(rho, [0.1, 0.2], [1.0])
    df = evaluate_rates(cases, oracle_2t, double_well, [0.0, 5.0])
    assert len(df) == 6
    assert list(df.columns) == ["perturbation", "alpha", "wave_number", "nu", "J0", "J1", "I", "J0_appendix"]
    assert df["perturbation"].tolist()[:2] == ["equilibrium", "equilibrium"]
    np.testing.assert_allclose(df["I"], df["J0"] + df["nu"] * df["J1"])


def test_load_grid_density_roundtrip(tmp_path, rho):
    g = GRID[::100]
    values = rho.values[::100]
    rows = pd.DataFrame(
        {"x": np.repeat(g, 2), "k": np.tile([0, 1], g.size), "value": values.reshape(-1)}
    )
    path = write_csv(tmp_path / "mu.csv", rows, config={"source": "test"})
    mu = load_grid_density(path, 2)
    np.testing.assert_allclose(mu.grid, g)
    assert trapezoid(mu.values.sum(axis=1), mu.grid) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        load_grid_density(path, 3)


def test_oracle_ladder_splits_mass_evenly(double_well):
    ladder, _ = oracle(double_well, [25.0, 12.5])
    mass = trapezoid(equilibrium_density(GRID, ladder, double_well).values, GRID, axis=0)
    np.testing.assert_allclose(mass, [0.5, 0.5], atol=1e-9)


def test_rate_increases_with_switching_rate(rho, oracle_2t, double_well):
    nus = [0.1, 1.0, 10.0, 100.0]
    cases = standard_cases(rho, [0.1, 0.2, 0.3, 0.4, 0.5], [1.0, 2.0])
    df = evaluate_rates(cases, oracle_2t, double_well, nus)
    for _, group in df[df["perturbation"] != "equilibrium"].groupby(["perturbation", "alpha", "wave_number"]):
        assert np.all(group["J1"] > 0)
        assert np.all(np.diff(group.sort_values("nu")["I"].to_numpy()) > 0)
    assert np.all(df[df["perturbation"] == "equilibrium"]["I"] < 1e-10)

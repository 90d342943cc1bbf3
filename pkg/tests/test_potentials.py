# tests/test_potentials.py
from __future__ import annotations

import math

import numpy as np
import pytest

from lib.errors import DimensionMismatchError, SingularityError
from lib.potentials import DimerInSolvent, DoubleWellD, Harmonic, energy, force, min_image_displacement


def _fd_force(model, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (model.energy(x + e) - model.energy(x - e)) / (2 * h)
    return -g


# ------------------------------------------------------------
# DoubleWellD
# ------------------------------------------------------------
def test_double_well_values():
    m = DoubleWellD(1)
    assert energy(m, np.array([0.0])) == pytest.approx(1.0)
    assert energy(m, np.array([1.0])) == pytest.approx(-0.25)
    assert energy(m, np.array([-1.0])) == pytest.approx(0.25)
    assert force(m, np.array([0.0]))[0] == pytest.approx(0.25)


def test_double_well_harmonic_coordinates():
    m = DoubleWellD(3, stiffness=(2.0, 0.5))
    x = np.array([1.0, 1.0, 2.0])
    assert m.energy(x) == pytest.approx(-0.25 + 0.5 * 2.0 + 0.5 * 0.5 * 4.0)


def test_double_well_force_matches_gradient(rng):
    m = DoubleWellD(5)
    for _ in range(20):
        x = rng.uniform(-2, 2, size=5)
        np.testing.assert_allclose(m.force(x), _fd_force(m, x), rtol=1e-6, atol=1e-7)
        V, f = m.energy_force(x)
        assert V == pytest.approx(m.energy(x))
        np.testing.assert_allclose(f, m.force(x))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        DoubleWellD(2).energy(np.array([0.0]))
    with pytest.raises(DimensionMismatchError):
        DoubleWellD(3, stiffness=(1.0,))


def test_initial_configuration_is_left_well():
    x = DoubleWellD(4).initial_configuration()
    assert x.tolist() == [-1.0, 0.0, 0.0, 0.0]


def test_harmonic():
    m = Harmonic(2, stiffness=(1.0, 4.0))
    x = np.array([1.0, 0.5])
    assert m.energy(x) == pytest.approx(0.5 + 0.5)
    np.testing.assert_allclose(m.force(x), [-1.0, -2.0])


# ------------------------------------------------------------
# 最小像
# ------------------------------------------------------------
def test_min_image_wraps_into_half_box():
    assert min_image_displacement(4.0, 0.2, 4.4) == pytest.approx(-0.6)
    assert min_image_displacement(0.2, 4.0, 4.4) == pytest.approx(0.6)


def test_min_image_ties_go_positive():
    assert min_image_displacement(2.2, 0.0, 4.4) == pytest.approx(2.2)
    assert min_image_displacement(0.0, 2.2, 4.4) == pytest.approx(2.2)


# ------------------------------------------------------------
# DimerInSolvent
# ------------------------------------------------------------
def test_wca_cutoff_is_exact_zero():
    m = DimerInSolvent()
    v, dv = m.wca(np.array([m.r_wca, 1.5, 3.0]))
    assert v.tolist() == [0.0, 0.0, 0.0]
    assert dv.tolist() == [0.0, 0.0, 0.0]
    v, _ = m.wca(np.array([1.0]))
    assert v[0] == pytest.approx(1.0)


def test_bond_minima_and_barrier():
    m = DimerInSolvent()
    v, dv = m.double_well_bond(np.array([m.r_wca, m.r_wca + 2 * m.omega, m.r_wca + m.omega]))
    assert v[0] == pytest.approx(0.0, abs=1e-12)
    assert v[1] == pytest.approx(0.0, abs=1e-12)
    assert v[2] == pytest.approx(m.h)
    np.testing.assert_allclose(dv, 0.0, atol=1e-12)


def test_dimer_force_matches_gradient(rng):
    m = DimerInSolvent()
    for _ in range(100):
        x = m.initial_configuration() + 0.05 * rng.standard_normal(m.dimension)
        np.testing.assert_allclose(m.force(x), _fd_force(m, x), rtol=1e-5, atol=1e-6)


def test_dimer_forces_sum_to_zero(rng):
    m = DimerInSolvent()
    x = m.initial_configuration() + 0.05 * rng.standard_normal(m.dimension)
    f = m.force(x).reshape(m.n_particles, 2)
    np.testing.assert_allclose(f.sum(axis=0), 0.0, atol=1e-9)


def test_dimer_initial_lattice():
    m = DimerInSolvent()
    x = m.initial_configuration()
    assert x.shape == (32,)
    assert m.bond_distance(x) == pytest.approx(4.4 / 4)
    assert math.isfinite(m.energy(x))


def test_bond_distance_across_boundary():
    m = DimerInSolvent()
    x = m.initial_configuration()
    x[0:2] = [0.1, 0.1]
    x[2:4] = [4.3, 0.1]
    assert m.bond_distance(x) == pytest.approx(0.2)


def test_overlapping_particles_raise():
    m = DimerInSolvent()
    x = m.initial_configuration()
    x[2:4] = x[0:2]
    with pytest.raises(SingularityError):
        m.energy(x)


@pytest.mark.parametrize("shift", [(0.3, -1.7), (4.4, 0.0), (-10.0, 7.25)])
def test_dimer_energy_invariant_under_rigid_translation(rng, shift):
    m = DimerInSolvent()
    x = m.initial_configuration() + 0.05 * rng.standard_normal(m.dimension)
    moved = (m.positions(x) + np.asarray(shift)).reshape(-1)
    assert m.energy(moved) == pytest.approx(m.energy(x), rel=1e-10)
    # 箱に畳み直しても同じ
    wrapped = np.mod(m.positions(moved), m.box).reshape(-1)
    assert m.energy(wrapped) == pytest.approx(m.energy(x), rel=1e-10)


def _three_particles(solvent_x: float) -> tuple[DimerInSolvent, np.ndarray]:
    m = DimerInSolvent(n_particles=3)
    x = np.array([0.2, 2.2, 1.7, 2.2, solvent_x, 2.2])
    return m, x


def test_wca_pair_beyond_cutoff_through_boundary_is_zero():
    # 粒子 2 と粒子 0 は座標差 2.8、最小像では 1.6 > r_WCA
    m, x = _three_particles(3.0)
    bond, _ = m.double_well_bond(1.5)
    assert m.energy(x) == pytest.approx(float(bond), abs=1e-12)
    np.testing.assert_allclose(m.force(x)[4:], 0.0, atol=1e-12)


def test_wca_pair_inside_cutoff_through_boundary():
    # 座標差 3.4、最小像で 1.0（σ = 1 で V_WCA = ε）
    m, x = _three_particles(3.6)
    bond, _ = m.double_well_bond(1.5)
    assert m.energy(x) == pytest.approx(float(bond) + 1.0, rel=1e-12)
    # 最小像では粒子 0 が +x 側にいるので、粒子 2 は -x 方向に押される
    assert m.force(x)[4] < 0

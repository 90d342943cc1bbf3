# tests/conftest.py
from __future__ import annotations

import sys
from pathlib import Path
from typing import Tuple

import numpy as np
import pytest

APP_ROOT = Path(__file__).resolve().parents[1]
if str(APP_ROOT) not in sys.path:
    sys.path.insert(0, str(APP_ROOT))

from lib.estimators import quadrature_reference  # noqa: E402
from lib.potentials import DoubleWellD, PotentialModel  # noqa: E402
from lib.tempering import TemperatureLadder, geometric_ladder  # noqa: E402


class FlatModel(PotentialModel):
    """V ≡ 0（自由拡散の検算用）。"""

    def __init__(self, dimension: int = 1) -> None:
        self.dimension = dimension

    def energy(self, x: np.ndarray) -> float:
        self.check_configuration(x)
        return 0.0

    def force(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(self.check_configuration(x))

    def initial_configuration(self) -> np.ndarray:
        return np.zeros(self.dimension)


class LinearModel(PotentialModel):
    """V = -c·x0、|x0| > cutoff で力が nan になる（積分エラーの検算用）。"""

    dimension = 1

    def __init__(self, c: float = 1.0, cutoff: float = 0.5) -> None:
        self.c = c
        self.cutoff = cutoff

    def energy(self, x: np.ndarray) -> float:
        return float(-self.c * self.check_configuration(x)[0])

    def force(self, x: np.ndarray) -> np.ndarray:
        x = self.check_configuration(x)
        return np.array([np.nan if abs(x[0]) > self.cutoff else self.c])

    def initial_configuration(self) -> np.ndarray:
        return np.zeros(1)


@pytest.fixture
def flat_model() -> FlatModel:
    return FlatModel(3)


@pytest.fixture
def double_well() -> DoubleWellD:
    return DoubleWellD(dimension=1)


@pytest.fixture
def ladder_6t() -> TemperatureLadder:
    return TemperatureLadder.uniform(geometric_ladder(25.0, 6))


def oracle(model: PotentialModel, betas) -> Tuple[TemperatureLadder, np.ndarray]:
    ref = quadrature_reference(model, TemperatureLadder.uniform(betas))
    return TemperatureLadder.from_log_partition(betas, ref.log_Z), ref.log_Z


@pytest.fixture
def oracle_2t(double_well) -> TemperatureLadder:
    return oracle(double_well, [25.0, 12.5])[0]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)

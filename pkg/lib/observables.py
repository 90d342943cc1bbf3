# lib/observables.py
# ============================================================
# run_trajectory が記録する名前付き観測量
#   x0             : 第 1 座標（二重井戸の反応座標）
#   bond_distance  : ダイマー対の最小像距離
#   p0             : 第 1 運動量成分（Langevin のみ）
#   kinetic_energy : Σ p²/(2m)（Langevin のみ）
# ============================================================
from __future__ import annotations

from typing import Callable, Dict, List, Sequence, Tuple

from lib.errors import ConfigurationError, UnsupportedModelError
from lib.potentials import DimerInSolvent, PotentialModel

# (model, state, mass) -> float
Observable = Callable[[PotentialModel, object, float], float]


def _x0(model: PotentialModel, state: object, mass: float) -> float:
    return float(state.x[0])  # type: ignore[attr-defined]


def _bond_distance(model: PotentialModel, state: object, mass: float) -> float:
    return model.bond_distance(state.x)  # type: ignore[attr-defined]


def _p0(model: PotentialModel, state: object, mass: float) -> float:
    return float(state.p[0])  # type: ignore[attr-defined]


def _kinetic_energy(model: PotentialModel, state: object, mass: float) -> float:
    p = state.p  # type: ignore[attr-defined]
    return float(p @ p) / (2.0 * mass)


OBSERVABLES: Dict[str, Observable] = {
    "x0": _x0,
    "bond_distance": _bond_distance,
    "p0": _p0,
    "kinetic_energy": _kinetic_energy,
}

_NEEDS_MOMENTUM = {"p0", "kinetic_energy"}


def resolve_observables(
    names: Sequence[str], model: PotentialModel, *, has_momentum: bool
) -> List[Tuple[str, Observable]]:
    out: List[Tuple[str, Observable]] = []
    for name in names:
        if name not in OBSERVABLES:
            raise ConfigurationError(
                f"未知の観測量 {name!r}（候補: {sorted(OBSERVABLES)}）", field="estimators.observables"
            )
        if name == "bond_distance" and not isinstance(model, DimerInSolvent):
            raise UnsupportedModelError("bond_distance は dimer モデル専用です")
        if name in _NEEDS_MOMENTUM and not has_momentum:
            raise ConfigurationError(
                f"{name} は langevin 力学でのみ記録できます", field="estimators.observables"
            )
        out.append((name, OBSERVABLES[name]))
    return out

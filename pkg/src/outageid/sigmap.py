"""Outage signature maps ``F = S J^-1 M``.

Column ``l`` of a map is the angle response seen at the PMU buses to a unit
power transfer across line ``l`` (injection at the from bus, withdrawal at
the to bus).  The per-line transfer magnitude is left to the regression
coefficients, so no ``diag(p)`` factor is applied here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .netmodel import NetworkModel
from .powerflow import SteadyState, jacobian_at

__all__ = [
    "PmuPlacement",
    "SignatureMap",
    "SingularSensitivityError",
    "build_signature_map",
    "dc_signature_map",
    "dc_susceptance",
    "full_angle_map",
]

# reciprocal condition number below which J is treated as singular
_RCOND_MIN = 1e-13


class SingularSensitivityError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"sensitivity matrix is singular (condition estimate {cond:.3g})")
        self.cond = cond


@dataclass(frozen=True)
class PmuPlacement:
    """Buses carrying PMUs, as dense 1-based ids in ascending order."""

    buses: tuple[int, ...]

    def __post_init__(self):
        b = tuple(sorted(int(x) for x in self.buses))
        if not b:
            raise ValueError("placement is empty")
        if len(set(b)) != len(b):
            raise ValueError("placement lists a bus twice")
        if b[0] < 1:
            raise ValueError("bus ids are 1-based")
        object.__setattr__(self, "buses", b)

    @property
    def k(self) -> int:
        return len(self.buses)

    @property
    def rows(self) -> np.ndarray:
        return np.array(self.buses, dtype=int) - 1

    def selection_matrix(self, n_bus: int) -> np.ndarray:
        """The K x N 0/1 matrix ``S`` picking the PMU rows."""
        self.check(n_bus)
        S = np.zeros((self.k, n_bus))
        S[np.arange(self.k), self.rows] = 1.0
        return S

    def check(self, n_bus: int) -> None:
        if self.buses[-1] > n_bus:
            raise ValueError(f"PMU at bus {self.buses[-1]} but the model has {n_bus} buses")

    @classmethod
    def all_buses(cls, n_bus: int) -> "PmuPlacement":
        return cls(tuple(range(1, n_bus + 1)))


@dataclass(frozen=True, eq=False)
class SignatureMap:
    """K x L signature matrix plus the full N x L map it was cut from."""

    f: np.ndarray
    placement: PmuPlacement
    line_ids: tuple[int, ...]
    full: np.ndarray
    operating_point: SteadyState | None = None
    kind: str = "ac"

    @property
    def shape(self) -> tuple[int, int]:
        return self.f.shape

    def select(self, placement: PmuPlacement) -> "SignatureMap":
        """The same map observed through a different PMU placement."""
        placement.check(self.full.shape[0])
        return SignatureMap(
            f=self.full[placement.rows],
            placement=placement,
            line_ids=self.line_ids,
            full=self.full,
            operating_point=self.operating_point,
            kind=self.kind,
        )


def _solve_reduced(A: np.ndarray, model: NetworkModel, keep: np.ndarray) -> np.ndarray:
    """Solve ``A X = M_red`` and scatter back to N rows (reference row = 0)."""
    rcond = 1.0 / np.linalg.cond(A, 1) if A.size else 0.0
    if not np.isfinite(rcond) or rcond < _RCOND_MIN:
        raise SingularSensitivityError(np.inf if rcond == 0 else 1.0 / rcond)
    lu = sla.lu_factor(A)
    X = sla.lu_solve(lu, model.M[keep])
    full = np.zeros((model.n_bus, model.n_line))
    full[keep] = X
    return full


def full_angle_map(model: NetworkModel, state: SteadyState) -> np.ndarray:
    """``J^-1 M`` over all N buses; the reference row is identically zero."""
    jac = jacobian_at(model, state)
    return _solve_reduced(jac.j1, model, jac.keep)


def build_signature_map(
    model: NetworkModel,
    state: SteadyState,
    placement: PmuPlacement | Iterable[int],
) -> SignatureMap:
    """AC signature map at the operating point ``state``.

    ``J`` is factored once and solved against all L incidence columns; the
    rows at the PMU buses are then kept.  A PMU on the reference bus gives
    a zero row.
    """
    if not state.converged:
        raise ValueError("signature map needs a converged operating point")
    if not isinstance(placement, PmuPlacement):
        placement = PmuPlacement(tuple(placement))
    placement.check(model.n_bus)
    full = full_angle_map(model, state)
    return SignatureMap(
        f=full[placement.rows],
        placement=placement,
        line_ids=tuple(range(1, model.n_line + 1)),
        full=full,
        operating_point=state,
        kind="ac",
    )


def dc_susceptance(model: NetworkModel) -> np.ndarray:
    """DC power-flow matrix ``B' = M diag(1/x) M^T`` of the in-service lines."""
    on = model.in_service
    x = np.array([br.x for br in model.branches])[on]
    if np.any(x == 0):
        raise ValueError("DC map needs non-zero reactance on every in-service line")
    M = model.M[:, on]
    return (M / x) @ M.T


def dc_signature_map(
    model: NetworkModel, placement: PmuPlacement | Iterable[int]
) -> SignatureMap:
    """Signature map with the Jacobian replaced by the DC matrix ``B'``."""
    if not isinstance(placement, PmuPlacement):
        placement = PmuPlacement(tuple(placement))
    placement.check(model.n_bus)
    keep = np.flatnonzero(np.arange(model.n_bus) != model.reference - 1)
    B = dc_susceptance(model)[np.ix_(keep, keep)]
    full = _solve_reduced(B, model, keep)
    return SignatureMap(
        f=full[placement.rows],
        placement=placement,
        line_ids=tuple(range(1, model.n_line + 1)),
        full=full,
        kind="dc",
    )

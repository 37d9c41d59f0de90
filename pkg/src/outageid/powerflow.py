"""Newton-Raphson AC power flow and the angle-sensitivity Jacobian blocks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .netmodel import BusKind, NetworkModel

__all__ = [
    "PowerFlowError",
    "SingularJacobianError",
    "SteadyState",
    "JacobianBlocks",
    "solve_power_flow",
    "injections",
    "jacobian_at",
    "angle_delta",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 20


class PowerFlowError(RuntimeError):
    pass


class SingularJacobianError(PowerFlowError):
    pass


@dataclass(frozen=True, eq=False)
class SteadyState:
    """Operating point: angles in radians, magnitudes and injections in p.u."""

    theta: np.ndarray
    vmag: np.ndarray
    p: np.ndarray
    q: np.ndarray
    converged: bool
    iterations: int
    residual: float
    reference: int = 1

    @property
    def n_bus(self) -> int:
        return self.theta.size


@dataclass(frozen=True, eq=False)
class JacobianBlocks:
    """``j1 = dP/dtheta`` and ``j2 = dP/dV`` over the non-reference buses.

    ``dp_dtheta`` is the full N x N matrix before the reference row and
    column are deleted.
    """

    j1: np.ndarray
    j2: np.ndarray
    dp_dtheta: np.ndarray
    dp_dv: np.ndarray
    keep: np.ndarray
    operating_point: SteadyState


def injections(Y: np.ndarray, theta: np.ndarray, vmag: np.ndarray):
    """Real and reactive bus injections for the given voltage profile."""
    V = vmag * np.exp(1j * theta)
    S = V * np.conj(Y @ V)
    return S.real, S.imag


def _bus_classes(model: NetworkModel):
    kinds = [b.kind for b in model.buses]
    pv = np.array([i for i, k in enumerate(kinds) if k is BusKind.GENERATOR], dtype=int)
    pq = np.array([i for i, k in enumerate(kinds) if k is BusKind.LOAD], dtype=int)
    return pv, pq


def solve_power_flow(
    model: NetworkModel,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SteadyState:
    """Solve the AC power flow from a flat start by Newton-Raphson.

    Generator and reference buses hold their voltage setpoints; reactive
    limits are ignored.  ``iterations`` counts mismatch evaluations, so a
    case that is already balanced at the flat start reports 1.

    A state with ``converged=False`` is returned when the mismatch does not
    reach ``tol`` within ``max_iter`` evaluations or blows up; an exactly
    singular Newton matrix raises :class:`SingularJacobianError`.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    Y = np.asarray(model.Y)
    n = model.n_bus
    ref = model.reference - 1
    pv, pq = _bus_classes(model)
    pvpq = np.r_[pv, pq]
    npvpq, npq = pvpq.size, pq.size

    vmag = np.ones(n)
    for b in model.buses:
        if b.kind is not BusKind.LOAD:
            vmag[b.id - 1] = b.v_setpoint
    theta = np.zeros(n)
    p_spec, q_spec = model.p_spec, model.q_spec

    diag = np.diag_indices(n)
    ix_aa, ix_ab = np.ix_(pvpq, pvpq), np.ix_(pvpq, pq)
    ix_ba, ix_bb = np.ix_(pq, pvpq), np.ix_(pq, pq)
    J = np.empty((npvpq + npq, npvpq + npq))

    converged = False
    residual = np.inf
    it = 0
    while it < max_iter:
        it += 1
        V = vmag * np.exp(1j * theta)
        Ibus = Y @ V
        S = V * np.conj(Ibus)
        mis = np.r_[S.real[pvpq] - p_spec[pvpq], S.imag[pq] - q_spec[pq]]
        residual = float(np.max(np.abs(mis))) if mis.size else 0.0
        if not np.isfinite(residual) or residual > 1e10:
            break
        if residual <= tol:
            converged = True
            break
        if it == max_iter:
            break

        # W_mn = V_m conj(Y_mn V_n); both derivative matrices are W plus a diagonal
        W = V[:, None] * np.conj(Y * V[None, :])
        dS_dth = -1j * W
        dS_dth[diag] += 1j * S
        dS_dvm = W / vmag[None, :]
        dS_dvm[diag] += np.conj(Ibus) * (V / vmag)
        J[:npvpq, :npvpq] = dS_dth.real[ix_aa]
        J[:npvpq, npvpq:] = dS_dvm.real[ix_ab]
        J[npvpq:, :npvpq] = dS_dth.imag[ix_ba]
        J[npvpq:, npvpq:] = dS_dvm.imag[ix_bb]
        try:
            dx = np.linalg.solve(J, -mis)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(
                f"singular power-flow Jacobian at iteration {it}"
            ) from exc
        theta[pvpq] += dx[:npvpq]
        vmag[pq] += dx[npvpq : npvpq + npq]

    theta[ref] = 0.0
    p, q = injections(Y, theta, vmag)
    return SteadyState(
        theta=theta,
        vmag=vmag,
        p=p,
        q=q,
        converged=converged,
        iterations=it,
        residual=residual,
        reference=model.reference,
    )


def jacobian_at(model: NetworkModel, state: SteadyState) -> JacobianBlocks:
    """Evaluate ``dP/dtheta`` and ``dP/dV`` element-wise in polar form.

    Off-diagonals are ``V_m V_n |Y_mn| sin(th_m - th_n - a_mn)``; each
    diagonal is minus the sum of its row's off-diagonals, so rows of the
    full angle block sum to zero.  No PV/PQ distinction is made.
    """
    n = model.n_bus
    if state.theta.shape != (n,) or state.vmag.shape != (n,):
        raise ValueError(
            f"state has {state.theta.size} buses, model has {n}"
        )
    Y = np.asarray(model.Y)
    ymag = np.abs(Y)
    alpha = np.angle(Y)
    th, vm = state.theta, state.vmag
    arg = th[:, None] - th[None, :] - alpha
    vv = vm[:, None] * vm[None, :] * ymag

    dpth = vv * np.sin(arg)
    np.fill_diagonal(dpth, 0.0)
    np.fill_diagonal(dpth, -dpth.sum(axis=1))

    ycos = ymag * np.cos(arg)
    cosv = vm[None, :] * ycos
    # dP_m/dV_n = V_m |Y_mn| cos(.) off the diagonal
    dpv = vm[:, None] * ycos
    # dP_m/dV_m = sum_n V_n |Y_mn| cos(.) + V_m |Y_mm| cos(-a_mm)
    diag = cosv.sum(axis=1) + vm * ymag.diagonal() * np.cos(alpha.diagonal())
    np.fill_diagonal(dpv, diag)

    keep = np.flatnonzero(np.arange(n) != model.reference - 1)
    return JacobianBlocks(
        j1=dpth[np.ix_(keep, keep)],
        j2=dpv[np.ix_(keep, keep)],
        dp_dtheta=dpth,
        dp_dv=dpv,
        keep=keep,
        operating_point=state,
    )


def angle_delta(pre: SteadyState, post: SteadyState, pmu_buses: Iterable[int]) -> np.ndarray:
    """Post- minus pre-outage angles at the PMU buses (1-based, ascending)."""
    if not (pre.converged and post.converged):
        raise PowerFlowError("angle_delta needs two converged states")
    if pre.n_bus != post.n_bus:
        raise ValueError("pre and post states have different bus counts")
    idx = np.array(sorted(pmu_buses), dtype=int) - 1
    return (post.theta - pre.theta)[idx]

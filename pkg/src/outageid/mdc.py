"""Minimal diagnosable clusters (MDCs) of lines under a PMU placement.

Two lines share a cluster when their signature columns are correlated in
absolute value at or above ``rho_star``; a sign flip in the transferred
power leaves two signatures just as confusable.  Every line belongs to its
own cluster, so a singleton cluster marks a line that can be told apart
from all others.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .lars import IdentificationResult, degenerate_columns
from .sigmap import SignatureMap

__all__ = [
    "MdcCatalog",
    "UnobservableLineWarning",
    "column_correlations",
    "build_mdc",
    "diagnosability",
    "diagnosability_sweep",
    "augment",
    "TABLE_THRESHOLDS",
]

TABLE_THRESHOLDS = (0.80, 0.84, 0.88, 0.93, 0.95, 0.98, 0.99)
# rounding slack so that exactly proportional columns meet rho_star = 1
_CORR_SLACK = 1e-12


class UnobservableLineWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class MdcCatalog:
    clusters: tuple[frozenset[int], ...]
    rho_star: float
    diagnosability: float
    correlation_matrix: np.ndarray
    line_ids: tuple[int, ...]
    unobservable: tuple[int, ...] = ()

    def cluster(self, line_id: int) -> frozenset[int]:
        return self.clusters[self.line_ids.index(line_id)]


def column_correlations(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlations between the columns of ``f``.

    Constant columns get zero correlation with everything else and a unit
    diagonal.  Returns the L x L matrix and the mask of constant columns.
    """
    f = np.asarray(f, dtype=float)
    dead = degenerate_columns(f)
    z = f - f.mean(axis=0)
    norms = np.linalg.norm(z, axis=0)
    z[:, dead] = 0.0
    z[:, ~dead] /= norms[~dead]
    C = z.T @ z
    np.clip(C, -1.0, 1.0, out=C)
    np.fill_diagonal(C, 1.0)
    return C, dead


def _clusters(C: np.ndarray, rho_star: float, ids: Sequence[int]):
    close = np.abs(C) >= rho_star - _CORR_SLACK
    np.fill_diagonal(close, True)
    return tuple(frozenset(int(ids[j]) for j in np.flatnonzero(row)) for row in close)


def diagnosability(clusters: Sequence[frozenset[int]]) -> float:
    """Share of lines whose cluster holds only the line itself."""
    return sum(len(g) == 1 for g in clusters) / len(clusters)


def build_mdc(sig: SignatureMap | np.ndarray, rho_star: float, line_ids=None) -> MdcCatalog:
    if not 0 < rho_star <= 1:
        raise ValueError("rho_star must lie in (0, 1]")
    if isinstance(sig, SignatureMap):
        line_ids = sig.line_ids
        f = sig.f
    else:
        f = np.asarray(sig, dtype=float)
    if f.shape[0] < 2:
        raise ValueError("correlations need at least two PMU rows")
    if line_ids is None:
        line_ids = tuple(range(1, f.shape[1] + 1))
    C, dead = column_correlations(f)
    unobs = tuple(int(line_ids[i]) for i in np.flatnonzero(dead))
    if unobs:
        warnings.warn(
            f"lines {list(unobs)} have constant signatures under this placement",
            UnobservableLineWarning,
            stacklevel=2,
        )
    clusters = _clusters(C, rho_star, line_ids)
    return MdcCatalog(
        clusters=clusters,
        rho_star=float(rho_star),
        diagnosability=diagnosability(clusters),
        correlation_matrix=C,
        line_ids=tuple(line_ids),
        unobservable=unobs,
    )


def diagnosability_sweep(
    sig: SignatureMap | np.ndarray, thresholds: Iterable[float] = TABLE_THRESHOLDS
) -> list[tuple[float, float]]:
    """``(rho_star, V(rho_star))`` for each threshold, correlations computed once."""
    f = sig.f if isinstance(sig, SignatureMap) else np.asarray(sig, dtype=float)
    C, _ = column_correlations(f)
    ids = range(1, f.shape[1] + 1)
    out = []
    for rho in thresholds:
        if not 0 < rho <= 1:
            raise ValueError(f"threshold {rho} outside (0, 1]")
        out.append((float(rho), diagnosability(_clusters(C, rho, ids))))
    return out


def augment(result: IdentificationResult | Iterable[int], catalog: MdcCatalog) -> tuple[int, ...]:
    """Union of the clusters of every selected line, sorted."""
    lines = result.selected_lines if isinstance(result, IdentificationResult) else result
    out: set[int] = set()
    for l in lines:
        out |= catalog.cluster(int(l))
    return tuple(sorted(out))

"""Lasso regularization path by least angle regression.

The path is parametrized on the correlation scale: at a transition point
``lam`` every active standardized column satisfies ``|<F_j, r>| = lam``.
That is the Lagrangian problem ``||y - F b||^2 + 2 lam ||b||_1``, i.e. the
penalty weight of the usual squared-error form is twice the returned value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import dpotrf as _potrf, dpotrs as _potrs

from .sigmap import SignatureMap

__all__ = [
    "DegenerateDesignError",
    "StandardizedDesign",
    "LassoPath",
    "IdentificationResult",
    "standardize",
    "degenerate_columns",
    "lars_path",
    "select_outages",
]

# column norms below this fraction of the largest count as zero
ZERO_COLUMN_RTOL = 1e-10
# condition number above which the active Gram matrix is treated as rank deficient
_GRAM_COND_MAX = 1e12
EXACT_FIT_TOL = 1e-12


class DegenerateDesignError(ValueError):
    pass


def degenerate_columns(f: np.ndarray) -> np.ndarray:
    """Boolean mask of columns that are constant (zero norm once centered)."""
    centered = f - f.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    top = norms.max() if norms.size else 0.0
    return norms <= ZERO_COLUMN_RTOL * top


@dataclass(frozen=True, eq=False)
class StandardizedDesign:
    """Mean-centered, unit-norm columns; dropped columns are left as zeros."""

    columns: np.ndarray
    centers: np.ndarray
    scales: np.ndarray
    dropped_columns: tuple[int, ...]
    line_ids: tuple[int, ...]

    @property
    def retained(self) -> np.ndarray:
        return np.flatnonzero(self.scales > 0)


def standardize(f: SignatureMap | np.ndarray, line_ids=None) -> StandardizedDesign:
    if isinstance(f, SignatureMap):
        line_ids = f.line_ids
        f = f.f
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValueError("standardization needs a K x L matrix with K >= 2")
    if not np.all(np.isfinite(f)):
        raise ValueError("map contains NaN or Inf")
    if line_ids is None:
        line_ids = tuple(range(1, f.shape[1] + 1))
    centers = f.mean(axis=0)
    centered = f - centers
    norms = np.linalg.norm(centered, axis=0)
    dead = degenerate_columns(f)
    if dead.all():
        raise DegenerateDesignError("every column of the map is constant")
    scales = np.where(dead, 0.0, norms)
    cols = np.zeros_like(centered)
    cols[:, ~dead] = centered[:, ~dead] / norms[~dead]
    dropped = tuple(int(line_ids[i]) for i in np.flatnonzero(dead))
    return StandardizedDesign(cols, centers, scales, dropped, tuple(line_ids))


@dataclass(frozen=True, eq=False)
class LassoPath:
    """Transition points ``lambdas[0] > lambdas[1] > ...`` and solutions.

    ``betas`` are in the original column scale of the map, ``betas_std`` in
    the standardized scale.  ``active_sets[q]`` and ``events[q]`` describe
    the active set right after transition ``q``.
    """

    lambdas: np.ndarray
    betas: np.ndarray
    betas_std: np.ndarray
    active_sets: tuple[tuple[int, ...], ...]
    events: tuple[tuple[str, int], ...]
    max_steps: int
    line_ids: tuple[int, ...]
    degenerate: bool = False

    def __len__(self) -> int:
        return self.lambdas.size

    @property
    def terminal(self) -> np.ndarray:
        return self.betas[-1]

    def coef_at(self, lam: float, standardized: bool = True) -> np.ndarray:
        """Lasso solution at ``lam`` by linear interpolation along the path."""
        B = self.betas_std if standardized else self.betas
        lams = self.lambdas
        if lam >= lams[0]:
            return np.zeros(B.shape[1])
        if lam <= lams[-1]:
            if lam < lams[-1]:
                raise ValueError(f"lambda {lam} lies beyond the computed path")
            return B[-1].copy()
        q = int(np.searchsorted(-lams, -lam))
        hi, lo = lams[q - 1], lams[q]
        w = (hi - lam) / (hi - lo)
        return (1 - w) * B[q - 1] + w * B[q]


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    selected_lines: tuple[int, ...]
    coefficients: tuple[float, ...]
    path: LassoPath | None
    selection_rule: dict = field(default_factory=dict)


def _direction(G: np.ndarray, cA: np.ndarray, XA: np.ndarray, r: np.ndarray, lam: float):
    """Least-squares direction per unit decrease of lambda.

    ``G`` is the active Gram matrix and ``cA`` the active correlations.
    Falls back to the minimum-norm solution when ``G`` is numerically
    singular; the second return value flags that case.
    """
    C, info = _potrf(G, lower=1)
    if info == 0:
        d = C.diagonal()
        if (d.min() / d.max()) ** 2 >= 1.0 / _GRAM_COND_MAX:
            x, info = _potrs(C, cA / lam, lower=1)
            if info == 0:
                return x, False
    return np.linalg.lstsq(XA, r / lam, rcond=None)[0], True


def lars_path(
    design: StandardizedDesign, dtheta: np.ndarray, max_steps: int | None = None
) -> LassoPath:
    """LARS with the lasso modification.

    Starts at the column most correlated with the centered measurement,
    moves the active coefficients along their joint least-squares
    direction, admits the inactive column whose correlation catches up
    first (lower line id on exact ties) and removes an active column whose
    coefficient reaches zero.  Each add or drop is one step; the path stops
    after ``max_steps`` steps, at ``lambda = 0``, or on an exact fit.
    """
    y = np.asarray(dtheta, dtype=float).ravel()
    X = design.columns
    K, L = X.shape
    if y.size != K:
        raise ValueError(f"measurement has {y.size} entries, map has {K} rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurement contains NaN or Inf")
    live = design.scales > 0
    if max_steps is None:
        max_steps = min(K - 1, int(live.sum()))
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")

    y = y - y.mean()
    beta = np.zeros(L)
    dead = np.flatnonzero(~live)
    c = X.T @ y
    c[dead] = 0.0
    lam = float(np.max(np.abs(c)))

    lambdas = [lam]
    betas = [beta.copy()]
    active: list[int] = []
    events: list[tuple[str, int]] = []
    degenerate = False
    if lam > 0:
        j = int(np.flatnonzero(np.abs(c) == lam)[0])
        active.append(j)
        events.append(("add", j))
    sets = [tuple(active)]

    gram = X.T @ X
    inf = np.inf
    r = y.copy()
    step = 0
    banned, banned_sign = -1, 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        while step < max_steps and lam > 0 and active:
            if math.sqrt(r @ r) < EXACT_FIT_TOL:
                break
            A = np.array(active)
            delta, rank_def = _direction(gram[np.ix_(A, A)], c[A], X[:, A], r, lam)
            degenerate |= rank_def
            a = gram[:, A] @ delta

            # NaN and non-positive step lengths fail the comparison and become inf
            tiny = 1e-12 * lam
            g1 = (lam - c) / (1.0 - a)
            g1[~(g1 > tiny)] = inf
            g2 = (lam + c) / (1.0 + a)
            g2[~(g2 > tiny)] = inf
            # a column dropped last step sits on the bound it left from; only
            # re-entry through the opposite bound is a genuine event
            if banned >= 0:
                (g1 if banned_sign > 0 else g2)[banned] = inf
            g = np.minimum(g1, g2, out=g1)
            g[dead] = inf
            g[A] = inf
            gamma_add, j_add = inf, -1
            # centered data has rank K - 1: a full active set only moves to lambda = 0
            if len(active) < K - 1:
                gamma_add = float(g.min())
                if gamma_add < inf:
                    j_add = int(np.flatnonzero(g <= gamma_add + tiny)[0])

            t = -beta[A] / delta
            t = np.where(t > tiny, t, inf)
            gamma_drop = float(t.min())

            if min(gamma_add, gamma_drop) >= lam * (1 - 1e-12):
                gamma_add = gamma_drop = inf
            gamma = min(gamma_add, gamma_drop, lam)
            beta[A] += gamma * delta
            lam = lam - gamma
            banned = -1
            if gamma == gamma_drop and gamma_drop <= gamma_add:
                k = int(A[int(np.argmin(t))])
                banned_sign = 1.0 if c[k] > 0 else -1.0
                beta[k] = 0.0
                active.remove(k)
                banned = k
                events.append(("drop", k))
            elif gamma == gamma_add:
                active.append(j_add)
                events.append(("add", j_add))
            else:
                lam = 0.0
                events.append(("zero", -1))
            r = y - X @ beta
            c = X.T @ r
            c[dead] = 0.0
            step += 1
            lambdas.append(lam)
            betas.append(beta.copy())
            sets.append(tuple(active))

    betas_std = np.array(betas)
    scale = np.where(live, design.scales, 1.0)
    betas_orig = betas_std / scale
    ids = design.line_ids
    return LassoPath(
        lambdas=np.array(lambdas),
        betas=betas_orig,
        betas_std=betas_std,
        active_sets=tuple(tuple(ids[i] for i in s) for s in sets),
        events=tuple((kind, ids[i] if i >= 0 else 0) for kind, i in events),
        max_steps=max_steps,
        line_ids=ids,
        degenerate=degenerate,
    )


def select_outages(
    path: LassoPath, gamma: float = 0.3, top_k: int | None = None
) -> IdentificationResult:
    """Pick outage candidates from the terminal coefficients.

    Default keeps lines with ``|b_j| >= gamma * max|b|``; ``top_k`` keeps
    the ``top_k`` largest magnitudes instead.  Results are ordered by
    decreasing magnitude (lower line id first on ties).
    """
    if len(path) == 0:
        raise ValueError("empty lasso path")
    b = path.terminal
    mag = np.abs(b)
    order = np.lexsort((np.arange(b.size), -mag))
    order = order[mag[order] > 0]
    if top_k is not None:
        if top_k < 0:
            raise ValueError("top_k must be non-negative")
        keep = order[:top_k]
        rule = {"rule": "top_k", "k": int(top_k)}
    else:
        if not 0 < gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        keep = order[mag[order] >= gamma * mag.max()] if order.size else order
        rule = {"rule": "relative", "gamma": float(gamma)}
    ids = path.line_ids
    return IdentificationResult(
        selected_lines=tuple(int(ids[i]) for i in keep),
        coefficients=tuple(float(b[i]) for i in keep),
        path=path,
        selection_rule=rule,
    )

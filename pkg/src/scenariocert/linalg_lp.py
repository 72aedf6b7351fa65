"""Dense linear programming and elimination utilities.

``solve_lp`` is a two-phase tableau simplex.  Pricing picks the most
negative reduced cost and drops to Bland's rule during long runs of
degenerate pivots, so it always terminates and is a pure function of its
input.  Problems are stated as::

    maximize  c . x   subject to   G x <= h   (rows flagged in ``equality``
                                               are read as G_i x == h_i)

with ``x`` free.  Free variables are split into positive and negative parts
internally.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from ._numeric import FEAS_TOL, OPT_TOL, PIVOT_TOL
from .errors import InfeasibleSet, IterationLimit, MalformedProgram, UnboundedSet

__all__ = [
    "LinearProgram",
    "LPOutcome",
    "LPStatus",
    "as_matrix",
    "chebyshev_center",
    "numeric_rank",
    "solve_lp",
]


def as_matrix(values, rows=None, cols=None):
    """Validate and return a finite float64 2-D array."""
    M = np.array(values, dtype=np.float64, ndmin=2, copy=True)
    if M.ndim != 2:
        raise MalformedProgram("matrix must be two-dimensional")
    if rows is not None and M.shape[0] != rows:
        raise MalformedProgram(f"expected {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise MalformedProgram(f"expected {cols} columns, got {M.shape[1]}")
    if not np.all(np.isfinite(M)):
        raise MalformedProgram("matrix has non-finite entries")
    return M


class LPStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    equality: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        G = np.asarray(self.G, dtype=np.float64)
        if G.size == 0:
            G = G.reshape(h.size, c.size)
        if G.ndim != 2:
            raise MalformedProgram("constraint matrix must be two-dimensional")
        if G.shape[0] != h.size:
            raise MalformedProgram(
                f"constraint matrix has {G.shape[0]} rows but rhs has {h.size} entries"
            )
        if G.shape[1] != c.size:
            raise MalformedProgram(
                f"objective has {c.size} entries but constraint matrix has {G.shape[1]} columns"
            )
        for name, arr in (("objective", c), ("constraint matrix", G), ("rhs", h)):
            if not np.all(np.isfinite(arr)):
                raise MalformedProgram(f"{name} has non-finite entries")
        if self.equality is None:
            eq = np.zeros(h.size, dtype=bool)
        else:
            eq = np.asarray(self.equality, dtype=bool).reshape(-1)
            if eq.size != h.size:
                raise MalformedProgram("equality mask length differs from rhs length")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "equality", eq)

    @property
    def n_vars(self):
        return self.c.size


@dataclass(frozen=True)
class LPOutcome:
    status: LPStatus
    x: np.ndarray = None
    value: float = None
    pivots: int = field(default=0, compare=False)
    duals: np.ndarray = field(default=None, compare=False, repr=False)

    @property
    def optimal(self):
        return self.status is LPStatus.OPTIMAL


def _max_violation(lp, x):
    r = lp.G @ x - lp.h
    viol = np.where(lp.equality, np.abs(r), np.maximum(r, 0.0))
    return float(viol.max()) if viol.size else 0.0


def solve_lp(lp: LinearProgram) -> LPOutcome:
    """Solve ``lp`` with the two-phase simplex method.

    Examples
    --------
    >>> out = solve_lp(LinearProgram([1, 1], [[1, 0], [0, 1], [-1, 0], [0, -1]], [1, 1, 0, 0]))
    >>> out.status.value, out.value
    ('Optimal', 2.0)
    """
    if not isinstance(lp, LinearProgram):
        raise MalformedProgram("solve_lp expects a LinearProgram")
    m, n = lp.G.shape
    if m == 0:
        if np.any(lp.c != 0.0):
            return LPOutcome(LPStatus.UNBOUNDED)
        return LPOutcome(LPStatus.OPTIMAL, np.zeros(n), 0.0)

    flip = np.where(lp.h < 0.0, -1.0, 1.0)
    ineq = ~lp.equality
    n_slack = int(ineq.sum())
    # slack column per inequality row; its sign flips with the row
    slack_of_row = np.full(m, -1, dtype=np.int64)
    slack_of_row[ineq] = np.arange(n_slack)
    needs_art = lp.equality | (lp.h < 0.0)
    n_art = int(needs_art.sum())

    n_struct = 2 * n + n_slack
    ncol = n_struct + n_art
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :n] = lp.G * flip[:, None]
    T[:m, n:2 * n] = -T[:m, :n]
    rows_ineq = np.flatnonzero(ineq)
    T[rows_ineq, 2 * n + slack_of_row[rows_ineq]] = flip[rows_ineq]
    T[:m, ncol] = lp.h * flip
    A_std = T[:m, :n_struct].copy()
    rhs = T[:m, ncol].copy()

    basis = np.empty(m, dtype=np.int64)
    art_rows = np.flatnonzero(needs_art)
    basis[art_rows] = n_struct + np.arange(n_art)
    T[art_rows, n_struct + np.arange(n_art)] = 1.0
    plain = np.flatnonzero(~needs_art)
    basis[plain] = 2 * n + slack_of_row[plain]

    max_iter = 50 * (m + ncol) + 1000
    pivots = 0
    allowed = np.ones(ncol, dtype=np.bool_)

    if n_art:
        # phase 1: maximise minus the sum of artificials
        T[m, :] = -T[art_rows, :].sum(axis=0)
        T[m, n_struct:ncol] = 0.0
        status, it = kernels.simplex_iterate(T, basis, allowed, PIVOT_TOL, OPT_TOL, max_iter)
        pivots += it
        if status == kernels.ITERATION_LIMIT:
            raise IterationLimit("simplex phase 1 hit its iteration limit")
        infeas = -T[m, ncol]
        if infeas > FEAS_TOL * max(1.0, float(np.abs(rhs).max())):
            return LPOutcome(LPStatus.INFEASIBLE, pivots=pivots)
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= n_struct:
                row = T[i, :n_struct]
                j = int(np.argmax(np.abs(row)))
                if abs(row[j]) > PIVOT_TOL:
                    kernels.pivot(T, basis, i, j)
                    pivots += 1
                else:
                    keep[i] = False  # linearly dependent row
        sel = np.append(np.flatnonzero(keep), m)
        T = np.ascontiguousarray(T[np.ix_(sel, np.append(np.arange(n_struct), ncol))])
        basis = basis[keep].copy()
        A_std = A_std[keep]
        rhs = rhs[keep]

    mm = T.shape[0] - 1
    c_std = np.zeros(n_struct)
    c_std[:n] = lp.c
    c_std[n:2 * n] = -lp.c
    T[mm, :] = 0.0
    T[mm, :n_struct] = -c_std
    T[mm, :] += c_std[basis] @ T[:mm, :]
    allowed = np.ones(n_struct, dtype=np.bool_)
    status, it = kernels.simplex_iterate(T, basis, allowed, PIVOT_TOL, OPT_TOL, max_iter)
    pivots += it
    if status == kernels.ITERATION_LIMIT:
        raise IterationLimit("simplex phase 2 hit its iteration limit")
    if status == kernels.UNBOUNDED:
        return LPOutcome(LPStatus.UNBOUNDED, pivots=pivots)

    # reduced cost of a slack column is the multiplier of its row
    duals = np.full(m, np.nan)
    duals[rows_ineq] = T[mm, 2 * n + slack_of_row[rows_ineq]]

    z = np.zeros(n_struct)
    z[basis] = T[:mm, -1]
    x = z[:n] - z[n:2 * n]

    # re-solve the final basis against the original data to shed the
    # round-off accumulated by pivoting
    if mm:
        try:
            zb = np.linalg.solve(A_std[:, basis], rhs)
        except np.linalg.LinAlgError:
            zb = None
        if zb is not None and np.all(np.isfinite(zb)):
            z2 = np.zeros(n_struct)
            z2[basis] = zb
            x2 = z2[:n] - z2[n:2 * n]
            if _max_violation(lp, x2) <= max(_max_violation(lp, x), 1e-12):
                x = x2
    return LPOutcome(LPStatus.OPTIMAL, x, float(lp.c @ x), pivots=pivots, duals=duals)


def _constraint_arrays(poly):
    if hasattr(poly, "A") and hasattr(poly, "b"):
        return np.asarray(poly.A, dtype=np.float64), np.asarray(poly.b, dtype=np.float64)
    A, b = poly
    return as_matrix(A), np.asarray(b, dtype=np.float64).reshape(-1)


def chebyshev_center(poly):
    """Center and radius of the largest ball inside ``{x : A x <= b}``.

    ``poly`` is a :class:`~scenariocert.geometry.Polytope` or an ``(A, b)``
    pair.  Raises :class:`InfeasibleSet` when the set is empty.
    """
    A, b = _constraint_arrays(poly)
    if A.shape[0] == 0:
        raise MalformedProgram("polytope has no constraints")
    d = A.shape[1]
    norms = np.linalg.norm(A, axis=1)
    G = np.zeros((A.shape[0] + 1, d + 1))
    G[:-1, :d] = A
    G[:-1, d] = norms
    G[-1, d] = -1.0
    h = np.append(b, 0.0)
    c = np.zeros(d + 1)
    c[d] = 1.0
    out = solve_lp(LinearProgram(c, G, h))
    if out.status is LPStatus.INFEASIBLE:
        raise InfeasibleSet("polytope is empty")
    if out.status is LPStatus.UNBOUNDED:
        raise UnboundedSet("polytope contains arbitrarily large balls")
    return out.x[:d], max(float(out.x[d]), 0.0)


def numeric_rank(m, tol=1e-10):
    """Rank by full-pivot Gaussian elimination.

    A pivot counts when its magnitude exceeds ``tol * max(1, max|m_ij|)``.
    """
    M = np.asarray(m, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.size == 0:
        return 0
    scale = max(1.0, float(np.abs(M).max()))
    return kernels.elimination_rank(M, tol * scale)

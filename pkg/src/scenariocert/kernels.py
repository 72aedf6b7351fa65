"""Hot inner loops, each in a numba and a pure-numpy flavour.

The numba versions are used by default.  Setting the environment variable
``SCENARIO_CERT_PURE_NUMPY=1`` (or running without numba installed) routes
every call to the vectorised numpy versions instead.  Both flavours
implement the same pivoting rules, so they visit the same bases; the
floating point results can differ in the last bits because the
accumulation order differs.

Status codes returned by the simplex loops::

    0  optimal
    1  unbounded (entering column has no positive entry)
    2  iteration limit
"""

import numpy as np

from ._numeric import use_pure_numpy

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2

# Dantzig pricing until this many consecutive degenerate pivots, then
# Bland's rule until a pivot makes progress again (keeps termination)
BLAND_AFTER = 50
DEGENERATE_RHS = 1e-12


# ---------------------------------------------------------------------------
# simplex pivoting (Dantzig pricing with a Bland fallback)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _simplex_iterate_numba(T, basis, allowed, piv_tol, opt_tol, max_iter):
    m = T.shape[0] - 1
    ncol = T.shape[1] - 1
    iters = 0
    streak = 0
    while True:
        # entering column: most negative reduced cost, or Bland's lowest
        # index once degenerate pivots pile up
        col = -1
        most = -opt_tol
        for j in range(ncol):
            if allowed[j] and T[m, j] < -opt_tol:
                if streak >= BLAND_AFTER:
                    col = j
                    break
                if T[m, j] < most:
                    most = T[m, j]
                    col = j
        if col < 0:
            return OPTIMAL, iters
        if iters >= max_iter:
            return ITERATION_LIMIT, iters

        # leaving row: minimum ratio, ties to the lowest basic index
        row = -1
        best = np.inf
        for i in range(m):
            a = T[i, col]
            if a > piv_tol:
                r = T[i, ncol] / a
                if row < 0:
                    best = r
                    row = i
                else:
                    tie = 1e-12 * (1.0 + abs(best))
                    if r < best - tie:
                        best = r
                        row = i
                    elif r <= best + tie and basis[i] < basis[row]:
                        row = i
        if row < 0:
            return UNBOUNDED, iters
        if T[row, ncol] <= DEGENERATE_RHS:
            streak += 1
        else:
            streak = 0

        piv = T[row, col]
        for k in range(ncol + 1):
            T[row, k] /= piv
        T[row, col] = 1.0
        for i in range(m + 1):
            if i == row:
                continue
            f = T[i, col]
            if f != 0.0:
                for k in range(ncol + 1):
                    T[i, k] -= f * T[row, k]
                T[i, col] = 0.0
        basis[row] = col
        iters += 1


def _simplex_iterate_numpy(T, basis, allowed, piv_tol, opt_tol, max_iter):
    m = T.shape[0] - 1
    ncol = T.shape[1] - 1
    iters = 0
    streak = 0
    while True:
        cand = np.flatnonzero(allowed & (T[m, :ncol] < -opt_tol))
        if cand.size == 0:
            return OPTIMAL, iters
        if iters >= max_iter:
            return ITERATION_LIMIT, iters
        if streak >= BLAND_AFTER:
            col = int(cand[0])
        else:
            col = int(cand[np.argmin(T[m, cand])])  # first minimum, as the loop

        column = T[:m, col]
        rows = np.flatnonzero(column > piv_tol)
        if rows.size == 0:
            return UNBOUNDED, iters
        ratios = T[rows, ncol] / column[rows]
        # replay the sequential scan of the compiled kernel so both
        # flavours break ratio ties identically
        row = -1
        best = 0.0
        for i, r in zip(rows, ratios):
            if row < 0:
                best = r
                row = int(i)
                continue
            tie = 1e-12 * (1.0 + abs(best))
            if r < best - tie:
                best = r
                row = int(i)
            elif r <= best + tie and basis[i] < basis[row]:
                row = int(i)
        streak = streak + 1 if T[row, ncol] <= DEGENERATE_RHS else 0

        T[row] /= T[row, col]
        T[row, col] = 1.0
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        basis[row] = col
        iters += 1


def simplex_iterate(T, basis, allowed, piv_tol, opt_tol, max_iter):
    """Run primal simplex pivots on tableau ``T`` in place.

    ``T`` has one row per constraint plus a final reduced-cost row; the
    last column holds the right-hand side.  ``allowed`` masks the columns
    that may enter the basis.  Returns ``(status, pivots)``.
    """
    if NUMBA_AVAILABLE and not use_pure_numpy():
        status, iters = _simplex_iterate_numba(T, basis, allowed, piv_tol, opt_tol, max_iter)
    else:
        status, iters = _simplex_iterate_numpy(T, basis, allowed, piv_tol, opt_tol, max_iter)
    return int(status), int(iters)


def pivot(T, basis, row, col):
    """Single pivot on ``(row, col)``; used to drive artificials out."""
    T[row] /= T[row, col]
    T[row, col] = 1.0
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


# ---------------------------------------------------------------------------
# rank by full-pivot elimination
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _elimination_rank_numba(M, thresh):
    W = M.copy()
    m, n = W.shape
    rank = 0
    for k in range(min(m, n)):
        pi = k
        pj = k
        best = -1.0
        for i in range(k, m):
            for j in range(k, n):
                v = abs(W[i, j])
                if v > best:
                    best = v
                    pi = i
                    pj = j
        if best <= thresh:
            break
        if pi != k:
            for j in range(n):
                t = W[k, j]
                W[k, j] = W[pi, j]
                W[pi, j] = t
        if pj != k:
            for i in range(m):
                t = W[i, k]
                W[i, k] = W[i, pj]
                W[i, pj] = t
        p = W[k, k]
        for i in range(k + 1, m):
            f = W[i, k] / p
            if f != 0.0:
                for j in range(k, n):
                    W[i, j] -= f * W[k, j]
        rank += 1
    return rank


def _elimination_rank_numpy(M, thresh):
    W = M.copy()
    m, n = W.shape
    rank = 0
    for k in range(min(m, n)):
        sub = np.abs(W[k:, k:])
        flat = int(np.argmax(sub))
        pi, pj = divmod(flat, sub.shape[1])
        if sub[pi, pj] <= thresh:
            break
        pi += k
        pj += k
        W[[k, pi]] = W[[pi, k]]
        W[:, [k, pj]] = W[:, [pj, k]]
        f = W[k + 1:, k] / W[k, k]
        W[k + 1:, k:] -= np.outer(f, W[k, k:])
        rank += 1
    return rank


def elimination_rank(M, thresh):
    """Rank of ``M`` counting pivots whose magnitude exceeds ``thresh``."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.size == 0:
        return 0
    if NUMBA_AVAILABLE and not use_pure_numpy():
        return int(_elimination_rank_numba(M, float(thresh)))
    return int(_elimination_rank_numpy(M, float(thresh)))

"""Aggregative quadratic costs and their epigraphic scenario program.

Agents ``i = 1..N`` each choose ``x_i`` in ``R^n``; costs depend on the
decision only through the aggregate ``sigma(x) = sum_i x_i``:

    f(x)       = sigma' A0 sigma + b0' sigma
    g(x, th)   = sigma' A(th) sigma + b(th)' sigma

The scenario program minimises ``f(x) + gamma`` over ``x in X`` subject to
``g(x, th_m) <= gamma`` for every sampled ``th_m``.  :func:`solve_epigraph`
runs Kelley's cutting-plane method on ``(x, gamma, t)`` and then polishes
the result with Newton steps on the optimality system of the active pieces,
so the optimizer is accurate enough to compare re-solves against each other.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._numeric import FEAS_TOL, worker_count
from .errors import (
    DimensionMismatch,
    DomainError,
    InfeasibleDomain,
    InfeasibleSet,
    IterationLimit,
    UnboundedSet,
)
from .geometry import Polytope
from .linalg_lp import LinearProgram, LPStatus, chebyshev_center, numeric_rank, solve_lp
from .sampling import SeededStream

__all__ = [
    "AggregativeProgram",
    "CostSample",
    "EpigraphSolution",
    "check_support_rank_bound",
    "count_support_constraints",
    "cost_deterioration_event",
    "eval_f",
    "eval_g",
    "grad_g",
    "h_violation_event",
    "objective_increase_event",
    "solve_epigraph",
    "support_constraints",
    "support_rank",
    "support_rank_matrices",
]

SYM_TOL = 1e-12
PSD_FLOOR = -1e-10
DELTA_SUP = 1e-5
MAX_CUTS = 2000


def _psd_check(A, what):
    if not np.allclose(A, A.T, rtol=0.0, atol=SYM_TOL):
        raise DomainError(f"{what} is not symmetric")
    if A.size and np.linalg.eigvalsh(A).min() < PSD_FLOOR:
        raise DomainError(f"{what} is not positive semi-definite")


@dataclass(frozen=True)
class CostSample:
    """One realization ``(A(theta), b(theta))`` of the uncertain price map."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64, ndmin=2)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.shape != (b.size, b.size):
            raise DimensionMismatch(f"A has shape {A.shape} but b has length {b.size}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise DomainError("cost sample has non-finite entries")
        _psd_check(A, "A(theta)")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def to_dict(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


class AggregativeProgram:
    """Deterministic data ``(A0, b0, X)`` plus sampled cost realizations."""

    def __init__(self, N, n, A0, b0, X, samples=()):
        self.N, self.n = int(N), int(n)
        if self.N < 1 or self.n < 1:
            raise DomainError("N and n must be positive")
        A0 = np.array(A0, dtype=np.float64, ndmin=2)
        b0 = np.asarray(b0, dtype=np.float64).reshape(-1)
        if A0.shape != (self.n, self.n) or b0.size != self.n:
            raise DimensionMismatch("A0 must be n x n and b0 of length n")
        _psd_check(A0, "A0")
        if X.d != self.N * self.n:
            raise DimensionMismatch(f"domain has dimension {X.d}, expected {self.N * self.n}")
        self.A0, self.b0, self.X = A0, b0, X
        self.samples = list(samples)
        for s in self.samples:
            if s.b.size != self.n:
                raise DimensionMismatch("cost sample dimension differs from n")

    @property
    def dim(self):
        return self.N * self.n

    @property
    def M(self):
        return len(self.samples)

    def sigma(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.dim:
            raise DimensionMismatch(f"decision has length {x.size}, expected {self.dim}")
        return x.reshape(self.N, self.n).sum(axis=0)

    def replicate(self, v):
        """Lift an aggregate-space gradient to decision space."""
        return np.tile(v, self.N)

    def without(self, idx):
        keep = [s for j, s in enumerate(self.samples) if j != idx]
        return AggregativeProgram(self.N, self.n, self.A0, self.b0, self.X, keep)

    def with_samples(self, samples):
        return AggregativeProgram(self.N, self.n, self.A0, self.b0, self.X, samples)

    @property
    def has_f(self):
        return bool(np.any(self.A0) or np.any(self.b0))

    # -- serialisation -------------------------------------------------
    def to_dict(self):
        return {
            "N": self.N,
            "n": self.n,
            "A0": self.A0.tolist(),
            "b0": self.b0.tolist(),
            "X": self.X.to_dict(),
            "samples": [s.to_dict() for s in self.samples],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["N"],
            data["n"],
            data["A0"],
            data["b0"],
            Polytope.from_dict(data["X"]),
            [CostSample(s["A"], s["b"]) for s in data.get("samples", [])],
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _quad(A, b, sigma):
    return float(sigma @ (A @ sigma) + b @ sigma)


def eval_f(prog, x):
    return _quad(prog.A0, prog.b0, prog.sigma(x))


def eval_g(prog, x, s):
    """``g(x, theta) = sigma' A sigma + b' sigma`` with ``sigma = sum_i x_i``.

    >>> X = Polytope.box([0, 0], [1, 1])
    >>> prog = AggregativeProgram(2, 1, [[0.0]], [0.0], X)
    >>> eval_g(prog, [1.0, 1.0], CostSample([[1.0]], [0.0]))
    4.0
    """
    return _quad(s.A, s.b, prog.sigma(x))


def grad_g(prog, x, s):
    """Gradient in decision space: ``replicate(2 A sigma + b)``."""
    sigma = prog.sigma(x)
    return prog.replicate(2.0 * s.A @ sigma + s.b)


def _all_g(prog, sigma):
    if not prog.samples:
        return np.empty(0)
    As = np.stack([s.A for s in prog.samples])
    bs = np.stack([s.b for s in prog.samples])
    return np.einsum("i,mij,j->m", sigma, As, sigma) + bs @ sigma


@dataclass(frozen=True)
class EpigraphSolution:
    x_star: np.ndarray
    gamma_star: float
    value: float
    gap: float
    iterations: int = 0
    polished: bool = False
    bounds: tuple = field(default=(), compare=False, repr=False)  # (LB, UB) per round


# ---------------------------------------------------------------------------
# Kelley cutting planes
# ---------------------------------------------------------------------------

class _Cuts:
    """Linear cuts ``coef . x - var <= rhs`` on ``var in {gamma, t}``."""

    def __init__(self):
        self.coef, self.rhs, self.kind, self.sample, self.born = [], [], [], [], []
        self.last_active = []

    def add(self, coef, rhs, kind, sample, it):
        self.coef.append(coef)
        self.rhs.append(rhs)
        self.kind.append(kind)
        self.sample.append(sample)
        self.born.append(it)
        self.last_active.append(it)

    def __len__(self):
        return len(self.rhs)

    def prune(self, limit):
        """Drop the oldest cuts not active since their creation round."""
        excess = len(self) - limit
        if excess <= 0:
            return
        order = sorted(range(len(self)), key=lambda j: (self.last_active[j], self.born[j]))
        drop = set(order[:excess])
        for name in ("coef", "rhs", "kind", "sample", "born", "last_active"):
            vals = getattr(self, name)
            setattr(self, name, [v for j, v in enumerate(vals) if j not in drop])


def _domain_checks(X):
    try:
        center, radius = chebyshev_center(X)
    except InfeasibleSet as exc:
        raise InfeasibleDomain("decision domain is empty") from exc
    except UnboundedSet as exc:
        raise InfeasibleDomain("decision domain is unbounded") from exc
    for j in range(X.d):
        for sgn in (1.0, -1.0):
            c = np.zeros(X.d)
            c[j] = sgn
            if solve_lp(LinearProgram(c, X.A, X.b)).status is LPStatus.UNBOUNDED:
                raise InfeasibleDomain(f"decision domain is unbounded along axis {j}")
    return center


def _kelley(prog, tol, max_iter, max_cuts, x0):
    d = prog.dim
    use_g = prog.M > 0
    use_t = prog.has_f
    n_var = d + int(use_g) + int(use_t)
    gi = d if use_g else None
    ti = d + int(use_g) if use_t else None
    XA, Xb = prog.X.A, prog.X.b - prog.X.A @ x0  # shifted: x = x0 + y
    cuts = _Cuts()
    c = np.zeros(n_var)
    if use_g:
        c[gi] = -1.0
    if use_t:
        c[ti] = -1.0

    def add_cuts(x, sigma, gvals, gamma_master, it, first):
        if use_t:
            gf = 2.0 * prog.A0 @ sigma + prog.b0
            fval = _quad(prog.A0, prog.b0, sigma)
            coef = prog.replicate(gf)
            cuts.add(coef, float(coef @ (x - x0) - fval), "f", -1, it)
        if use_g:
            if first:
                chosen = [int(np.argmax(gvals))]
            else:
                viol = gvals - gamma_master
                order = np.argsort(-viol, kind="stable")
                chosen = [int(j) for j in order[: prog.n + 1] if viol[j] > 0.0] or [int(order[0])]
            for j in chosen:
                s = prog.samples[j]
                gg = 2.0 * s.A @ sigma + s.b
                coef = prog.replicate(gg)
                cuts.add(coef, float(coef @ (x - x0) - gvals[j]), "g", j, it)

    def F(x):
        sigma = prog.sigma(x)
        gvals = _all_g(prog, sigma)
        fval = _quad(prog.A0, prog.b0, sigma)
        return sigma, gvals, fval + (gvals.max() if gvals.size else 0.0)

    x = x0.copy()
    sigma, gvals, ub = F(x)
    best = (ub, x.copy())
    lb = -math.inf
    add_cuts(x, sigma, gvals, None, 0, True)
    last = None
    history = []
    for it in range(1, max_iter + 1):
        if len(cuts) > max_cuts:
            cuts.prune(max_cuts)
        rows = np.zeros((len(cuts), n_var))
        for r, (coef, kind) in enumerate(zip(cuts.coef, cuts.kind)):
            rows[r, :d] = coef
            rows[r, gi if kind == "g" else ti] = -1.0
        G = np.vstack([np.hstack([XA, np.zeros((XA.shape[0], n_var - d))]), rows])
        h = np.concatenate([Xb, cuts.rhs])
        out = solve_lp(LinearProgram(c, G, h))
        if out.status is LPStatus.INFEASIBLE:
            raise InfeasibleDomain("decision domain is empty")
        if out.status is LPStatus.UNBOUNDED:
            # only possible before both epigraph variables are pinned
            raise InfeasibleDomain("master problem unbounded; domain must be compact")
        master_val = -out.value
        lb = max(lb, master_val)
        cut_duals = out.duals[XA.shape[0]:]
        for r in np.flatnonzero(cut_duals > 0.0):
            cuts.last_active[r] = it
        y = out.x[:d]
        x = x0 + y
        gamma_master = out.x[gi] if use_g else 0.0
        sigma, gvals, val = F(x)
        if val < best[0]:
            best = (val, x.copy())
        last = (out, x, gamma_master, list(cuts.kind), list(cuts.sample))
        history.append((lb, best[0]))
        if not (use_g or use_t) or best[0] - lb <= tol * max(1.0, abs(best[0])):
            return best, lb, it, last, tuple(history)
        add_cuts(x, sigma, gvals, gamma_master, it, False)
    raise IterationLimit(f"Kelley iteration stopped at gap {best[0] - lb:.3g} after {max_iter} rounds")


# ---------------------------------------------------------------------------
# Newton polishing of the active pieces
# ---------------------------------------------------------------------------

def _kkt_residual(prog, x, gamma, lam, mu, S, R):
    sigma = prog.sigma(x)
    XA, Xb = prog.X.A, prog.X.b
    grad_sigma = 2.0 * prog.A0 @ sigma + prog.b0
    for l, m in zip(lam, S):
        s = prog.samples[m]
        grad_sigma = grad_sigma + l * (2.0 * s.A @ sigma + s.b)
    r1 = prog.replicate(grad_sigma) + XA[R].T @ mu
    parts = [r1]
    if prog.M:
        parts.append([1.0 - lam.sum()])
        parts.append(np.array([_quad(prog.samples[m].A, prog.samples[m].b, sigma) - gamma for m in S]))
    parts.append(XA[R] @ x - Xb[R])
    return np.concatenate([np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in parts])


def _kkt_jacobian(prog, x, lam, S, R):
    d, n, N = prog.dim, prog.n, prog.N
    sigma = prog.sigma(x)
    XA = prog.X.A
    lift = np.tile(np.eye(n), (1, N))  # sigma = lift @ x
    H = 2.0 * prog.A0
    for l, m in zip(lam, S):
        H = H + 2.0 * l * prog.samples[m].A
    use_g = prog.M > 0
    nS, nR = len(S), len(R)
    size_c = d + (1 + nS if use_g else 0) + nR
    J = np.zeros((size_c, size_c))
    # column layout: x | gamma | lambda | mu ; row layout mirrors the residual
    cg = d
    cl = d + 1
    cm = d + (1 + nS if use_g else 0)
    J[:d, :d] = lift.T @ H @ lift
    for k, m in enumerate(S):
        s = prog.samples[m]
        gg = lift.T @ (2.0 * s.A @ sigma + s.b)
        J[:d, cl + k] = gg
        J[d + 1 + k, :d] = gg
        J[d + 1 + k, cg] = -1.0
    if use_g:
        J[d, cl:cl + nS] = -1.0
    J[:d, cm:cm + nR] = XA[R].T
    J[cm:cm + nR, :d] = XA[R]
    return J


def _polish(prog, x, gamma, lam, mu, S, R, iters=30):
    scale = max(1.0, float(np.abs(prog.X.b).max()))
    for _ in range(iters):
        F = _kkt_residual(prog, x, gamma, lam, mu, S, R)
        if np.linalg.norm(F, np.inf) <= 1e-12 * scale:
            return x, gamma, lam, mu, True
        J = _kkt_jacobian(prog, x, lam, S, R)
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        d = prog.dim
        x = x + step[:d]
        k = d
        if prog.M:
            gamma = gamma + step[k]
            lam = lam + step[k + 1:k + 1 + len(S)]
            k += 1 + len(S)
        mu = mu + step[k:k + len(R)]
    F = _kkt_residual(prog, x, gamma, lam, mu, S, R)
    return x, gamma, lam, mu, bool(np.linalg.norm(F, np.inf) <= 1e-9 * scale)


def _polished_is_optimal(prog, x, gamma, lam, mu, ub):
    if np.any(lam < -1e-9) or np.any(mu < -1e-9):
        return False
    if not prog.X.contains(x, tol=FEAS_TOL):
        return False
    sigma = prog.sigma(x)
    gvals = _all_g(prog, sigma)
    g_top = gvals.max() if gvals.size else 0.0
    if gvals.size and g_top > gamma + 1e-9 * max(1.0, abs(gamma)):
        return False
    val = _quad(prog.A0, prog.b0, sigma) + g_top
    return val <= ub + 1e-9 * max(1.0, abs(ub))


def _active_from_master(prog, last, x0):
    out, x, gamma_master, kinds, samples = last
    nX = prog.X.n_constraints
    duals = np.nan_to_num(out.duals, nan=0.0)
    dual_tol = 1e-9
    mu_all = duals[:nX]
    R = [int(r) for r in np.flatnonzero(mu_all > dual_tol)]
    lam_by = {}
    for dv, kind, m in zip(duals[nX:], kinds, samples):
        if kind == "g" and dv > dual_tol:
            lam_by[m] = lam_by.get(m, 0.0) + dv
    S = sorted(lam_by)
    lam = np.array([lam_by[m] for m in S])
    mu = mu_all[R]
    return S, lam, R, mu, gamma_master


def _tie_break_weights(d):
    # fixed generic weights so equal-aggregate decisions resolve the same way
    return SeededStream(0, "tie-break").uniforms(1.0, 2.0, d)


def _canonical(prog, sigma):
    """Among ``x in X`` with aggregate ``sigma``, the minimiser of ``w . x``."""
    d, n, N = prog.dim, prog.n, prog.N
    lift = np.tile(np.eye(n), (1, N))
    G = np.vstack([prog.X.A, lift])
    h = np.concatenate([prog.X.b, sigma])
    eq = np.concatenate([np.zeros(prog.X.n_constraints, bool), np.ones(n, bool)])
    out = solve_lp(LinearProgram(-_tie_break_weights(d), G, h, eq))
    if not out.optimal:
        return None
    return out.x


def solve_epigraph(prog, tol=1e-7, max_iter=5000, max_cuts=MAX_CUTS, polish=True):
    """Minimise ``f(x) + max_m g(x, theta_m)`` over ``X``.

    Kelley iterations stop once ``UB - LB <= tol * max(1, |UB|)``.  The
    result is then refined on the active pieces and mapped to the canonical
    decision with the same aggregate (a fixed linear tie-break), since the
    cost only determines ``sigma(x)``.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    x0 = _domain_checks(prog.X)
    (ub, xk), lb, iters, last, history = _kelley(prog, tol, max_iter, max_cuts, x0)
    polished = False
    x_final = xk
    if polish and last is not None and (prog.M or prog.has_f):
        S, lam, R, mu, gamma_m = _active_from_master(prog, last, x0)
        xs, gs, lam2, mu2, ok = _polish(prog, last[1].copy(), gamma_m, lam, mu, S, R)
        # Newton may drift along aggregate-preserving directions; only the
        # aggregate matters, so test it through its canonical decision
        canon = _canonical(prog, prog.sigma(xs)) if ok else None
        if canon is not None and _polished_is_optimal(prog, canon, gs, lam2, mu2, ub):
            x_final = canon
            polished = True
    if not polished:
        canon = _canonical(prog, prog.sigma(x_final))
        if canon is not None and prog.X.contains(canon, tol=FEAS_TOL):
            x_final = canon
    sigma = prog.sigma(x_final)
    gvals = _all_g(prog, sigma)
    gamma = float(gvals.max()) if gvals.size else 0.0
    value = _quad(prog.A0, prog.b0, sigma) + gamma
    gap = max(0.0, value - lb) if math.isfinite(lb) else 0.0
    return EpigraphSolution(x_final, gamma, value, gap, iters, polished, history)


# ---------------------------------------------------------------------------
# support constraints and support rank
# ---------------------------------------------------------------------------

def support_constraints(prog, tol=1e-9, delta=DELTA_SUP, solution=None, act_tol=1e-7):
    """Sample indices (0-based) whose removal moves the optimizer by more than ``delta``.

    A sample strictly below the active level at the optimum cannot change
    it when removed, so only samples with ``g_m >= gamma* - act_tol`` (scaled)
    are re-solved.
    """
    if prog.M < 1:
        raise DomainError("support counting needs at least one cost sample")
    sol = solution or solve_epigraph(prog, tol)
    sigma = prog.sigma(sol.x_star)
    gvals = _all_g(prog, sigma)
    level = sol.gamma_star - act_tol * max(1.0, abs(sol.gamma_star))
    candidates = [int(j) for j in np.flatnonzero(gvals >= level)]

    def moved(j):
        other = solve_epigraph(prog.without(j), tol)
        return float(np.linalg.norm(other.x_star - sol.x_star)) > delta

    workers = min(worker_count(), len(candidates)) or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            flags = list(pool.map(moved, candidates))
    else:
        flags = [moved(j) for j in candidates]
    return [j for j, f in zip(candidates, flags) if f]


def count_support_constraints(prog, tol=1e-9, delta=DELTA_SUP):
    return len(support_constraints(prog, tol, delta))


def support_rank_matrices(prog, x, s):
    """Matrices ``(P, V, Q)`` whose rank bounds the support rank.

    ``P = [[1_NxN kron A, 0], [0, 0]]``, ``V = [1_1xN kron (2 sigma' A + b'), -1]``
    and ``Q`` stacks ``P`` over ``V``.
    """
    sigma = prog.sigma(x)
    N, n = prog.N, prog.n
    if s.b.size != n:
        raise DimensionMismatch("cost sample dimension differs from n")
    d = N * n
    P = np.zeros((d + 1, d + 1))
    P[:d, :d] = np.kron(np.ones((N, N)), s.A)
    V = np.zeros((1, d + 1))
    V[0, :d] = np.tile(2.0 * sigma @ s.A + s.b, N)
    V[0, d] = -1.0
    return P, V, np.vstack([P, V])


def support_rank(prog, x, s, tol=1e-10):
    return numeric_rank(support_rank_matrices(prog, x, s)[2], tol)


def check_support_rank_bound(prog, trials, seed):
    """Probe ``rank(Q) <= n + 1`` (with equality for nonsingular ``A``)."""
    if trials < 1:
        raise DomainError("trials must be positive")
    stream = SeededStream(seed, "support-rank")
    pool = prog.samples or [CostSample(prog.A0, prog.b0)]
    for t in range(int(trials)):
        x = stream.uniforms(-1.0, 1.0, prog.dim)
        s = pool[t % len(pool)]
        r = support_rank(prog, x, s)
        if r > prog.n + 1:
            return False
        if numeric_rank(s.A) == prog.n and r != prog.n + 1:
            return False
    return True


# ---------------------------------------------------------------------------
# violation events for a solved program
# ---------------------------------------------------------------------------

def cost_deterioration_event(prog, sol, s):
    """``g(x*, theta) > gamma* + FEAS_TOL``."""
    return eval_g(prog, sol.x_star, s) > sol.gamma_star + FEAS_TOL


def h_violation_event(prog, sol, s):
    """``h(x*, gamma*, theta) > 0`` with ``g`` summed agent by agent."""
    x = np.asarray(sol.x_star).reshape(prog.N, prog.n)
    price = s.A @ x.sum(axis=0) + s.b
    g = math.fsum(float(xi @ price) for xi in x)
    return g - sol.gamma_star > FEAS_TOL


def objective_increase_event(prog, sol, s):
    """Adding ``theta`` to the samples raises the worst-case cost at ``x*``."""
    sigma = prog.sigma(sol.x_star)
    train = _all_g(prog, sigma)
    base = float(train.max()) if train.size else 0.0
    fval = _quad(prog.A0, prog.b0, sigma)
    j_now = fval + base
    j_plus = fval + max(_quad(s.A, s.b, sigma), base)
    return j_plus > j_now + FEAS_TOL

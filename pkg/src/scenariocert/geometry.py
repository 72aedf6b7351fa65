"""H-representation polytopes and redundancy detection.

A :class:`Polytope` is ``{x : A x <= b}`` where every row may carry the
index of the sample that produced it (``-1`` marks deterministic rows).
Sample indices are 1-based, matching the multi-sample ``theta_1..theta_M``.

The support subsample of a scenario feasible set consists of the samples
owning at least one non-redundant row.  Two routes compute it:
:func:`naive_support_subsample` runs one LP per row against all other rows,
and :func:`clarkson_support_subsample` runs LPs only against the essential
rows found so far, discovering new ones by ray shooting from the Chebyshev
center.  Both first collapse parallel rows (see :meth:`Polytope.reduced`).
"""

import json
from dataclasses import dataclass

import numpy as np

from ._numeric import ANGLE_TOL, FEAS_TOL, OFFSET_TOL, RAY_TIE_TOL
from .errors import DegenerateInterior, DimensionMismatch, InfeasibleSet, UnboundedSet
from .linalg_lp import LinearProgram, LPStatus, chebyshev_center, solve_lp

__all__ = [
    "Polytope",
    "SupportFunction",
    "SupportSubsample",
    "clarkson_support_subsample",
    "is_redundant",
    "naive_support_subsample",
    "reduce_blocks",
    "set_violates",
    "support_value",
]

DETERMINISTIC = -1


class Polytope:
    """``{x in R^d : A x <= b}`` with per-row sample provenance."""

    def __init__(self, A, b, sample=None, d=None):
        A = np.array(A, dtype=np.float64, copy=True)
        b = np.array(b, dtype=np.float64, copy=True).reshape(-1)
        if A.size == 0:
            if d is None:
                raise DimensionMismatch("empty constraint list needs an explicit dimension")
            A = A.reshape(0, int(d))
        if A.ndim != 2 or A.shape[0] != b.size:
            raise DimensionMismatch("A must be (m, d) with m == len(b)")
        if d is not None and A.shape[1] != d:
            raise DimensionMismatch(f"rows have dimension {A.shape[1]}, expected {d}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise DimensionMismatch("polytope data must be finite")
        if sample is None:
            s = np.full(b.size, DETERMINISTIC, dtype=np.int64)
        else:
            s = np.array([DETERMINISTIC if v is None else int(v) for v in sample], dtype=np.int64)
            if s.size != b.size:
                raise DimensionMismatch("sample provenance length differs from row count")
        for arr in (A, b, s):
            arr.setflags(write=False)
        self.A, self.b, self.sample = A, b, s
        self._reduced = None

    # -- constructors --------------------------------------------------
    @classmethod
    def from_constraints(cls, constraints, d=None):
        """Build from ``(a, b)`` or ``(a, b, sample)`` tuples."""
        rows, rhs, smp = [], [], []
        for c in constraints:
            rows.append(np.asarray(c[0], dtype=np.float64))
            rhs.append(float(c[1]))
            smp.append(c[2] if len(c) > 2 else None)
        if not rows:
            return cls(np.empty((0, d or 0)), [], d=d)
        return cls(np.vstack(rows), rhs, smp, d=d)

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(hi, dtype=np.float64).reshape(-1)
        eye = np.eye(lo.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    # -- basic queries -------------------------------------------------
    @property
    def d(self):
        return self.A.shape[1]

    @property
    def n_constraints(self):
        return self.b.size

    def __len__(self):
        return self.b.size

    @property
    def constraints(self):
        return [(self.A[i], float(self.b[i])) for i in range(self.b.size)]

    def contains(self, x, tol=FEAS_TOL):
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(self.A @ x <= self.b + tol))

    def add(self, A, b, sample=None):
        """New polytope with extra rows appended."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if A.shape[1] != self.d:
            raise DimensionMismatch(f"rows have dimension {A.shape[1]}, polytope has {self.d}")
        if sample is None:
            sample = np.full(b.size, DETERMINISTIC)
        elif np.ndim(sample) == 0:
            sample = np.full(b.size, int(sample))
        return Polytope(
            np.vstack([self.A, A]),
            np.concatenate([self.b, b]),
            np.concatenate([self.sample, np.asarray(sample, dtype=np.int64)]),
            d=self.d,
        )

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Polytope(self.A[rows], self.b[rows], self.sample[rows], d=self.d)

    def chebyshev_center(self):
        return chebyshev_center(self.reduced()[0])

    # -- duplicate / parallel-row reduction ----------------------------
    def reduced(self):
        """Equivalent polytope with unit normals and no parallel duplicates.

        Rows are normalised to ``||a|| = 1``.  Among rows whose normals agree
        within ``ANGLE_TOL`` only the tightest offset survives; offsets
        within ``OFFSET_TOL`` of the tightest are duplicates and the lowest
        original index wins.  Zero rows with ``b >= 0`` are dropped.

        Returns ``(polytope, kept)`` where ``kept`` maps reduced rows to
        original row indices (ascending).
        """
        if self._reduced is None:
            self._reduced = _reduce(self)
        return self._reduced

    # -- serialisation -------------------------------------------------
    def to_dict(self):
        return {
            "d": int(self.d),
            "constraints": [
                {
                    "a": [float(v) for v in self.A[i]],
                    "b": float(self.b[i]),
                    "sample": None if self.sample[i] == DETERMINISTIC else int(self.sample[i]),
                }
                for i in range(self.b.size)
            ],
        }

    @classmethod
    def from_dict(cls, data):
        d = int(data["d"])
        cons = data.get("constraints", [])
        if not cons:
            return cls(np.empty((0, d)), [], d=d)
        A = np.array([c["a"] for c in cons], dtype=np.float64)
        if A.ndim != 2 or A.shape[1] != d:
            raise DimensionMismatch(f"constraint normals must have length {d}")
        return cls(A, [c["b"] for c in cons], [c.get("sample") for c in cons], d=d)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"Polytope(d={self.d}, constraints={self.n_constraints})"


def _normalise(A, b):
    norms = np.linalg.norm(A, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return A / safe[:, None], b / safe, zero


def _reduce(poly):
    return reduce_blocks([(poly.A, poly.b, poly.sample)], poly.d)


def reduce_blocks(blocks, d):
    """Parallel-row reduction over row blocks ``(A, b, sample)``.

    Blocks that share the same normal-matrix object are normalised and keyed
    once, so a stream of samples with fixed normals and random offsets costs
    little more than its offsets.  Row numbering is global across blocks in
    the given order.  Returns ``(polytope, kept)`` as :meth:`Polytope.reduced`.
    """
    blocks = list(blocks)
    objects = {}
    for A, _, _ in blocks:
        if id(A) not in objects:
            An, _, zero = _normalise(np.asarray(A, dtype=np.float64), np.zeros(len(A)))
            norms = np.linalg.norm(A, axis=1)
            objects[id(A)] = [A, An, norms, zero, None]
    # one global key table across distinct normal matrices
    key_parts = [np.round(ent[1][~ent[3]] / ANGLE_TOL).astype(np.int64) for ent in objects.values()]
    if key_parts and sum(k.shape[0] for k in key_parts):
        uniq, inverse = np.unique(np.vstack(key_parts), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
    else:
        uniq, inverse = np.empty((0, d)), np.empty(0, dtype=np.int64)
    pos = 0
    for ent in objects.values():
        live = ~ent[3]
        gids = np.full(live.size, -1, dtype=np.int64)
        gids[live] = inverse[pos:pos + int(live.sum())]
        pos += int(live.sum())
        ent[4] = gids

    gid_parts, off_parts, raw_parts, row_parts, samp_parts = [], [], [], [], []
    start = 0
    for A, b, s in blocks:
        A_, An, norms, zero, gids = objects[id(A)]
        b = np.asarray(b, dtype=np.float64)
        n = b.size
        gid_parts.append(gids)
        off_parts.append(np.where(zero, 0.0, b / np.where(zero, 1.0, norms)))
        raw_parts.append(b)
        row_parts.append(np.arange(start, start + n))
        samp_parts.append(np.broadcast_to(np.asarray(s, dtype=np.int64), (n,)))
        start += n
    if not gid_parts:
        empty = Polytope(np.empty((0, d)), [], d=d)
        empty._reduced = (empty, np.empty(0, dtype=np.int64))
        return empty, np.empty(0, dtype=np.int64)
    gid = np.concatenate(gid_parts)
    off = np.concatenate(off_parts)
    raw = np.concatenate(raw_parts)
    rows = np.concatenate(row_parts)
    samp = np.concatenate(samp_parts)

    # zero rows either always hold or make the set empty
    zero_rows = gid < 0
    bad = np.flatnonzero(zero_rows & (raw < -FEAS_TOL))
    live = np.flatnonzero(~zero_rows)
    ngroups = uniq.shape[0]
    if live.size:
        g = gid[live]
        gmin = np.full(ngroups, np.inf)
        np.minimum.at(gmin, g, off[live])
        eligible = off[live] <= gmin[g] + OFFSET_TOL
        winner = np.full(ngroups, np.iinfo(np.int64).max)
        np.minimum.at(winner, g[eligible], rows[live][eligible])
        winner = winner[winner != np.iinfo(np.int64).max]
    else:
        winner = np.empty(0, dtype=np.int64)
    kept = np.sort(np.concatenate([rows[bad], winner])).astype(np.int64)

    # rows are global indices; recover normals block by block
    normals = np.empty((kept.size, d))
    offsets = off[kept]
    bounds = np.cumsum([0] + [len(b) for _, b, _ in blocks])
    which = np.searchsorted(bounds, kept, side="right") - 1
    for t, (blk, r) in enumerate(zip(which, kept)):
        A_, An, norms, zero, _ = objects[id(blocks[blk][0])]
        local = r - bounds[blk]
        normals[t] = An[local]
    red = Polytope(normals, offsets, samp[kept], d=d)
    red._reduced = (red, np.arange(kept.size))
    return red, kept


# ---------------------------------------------------------------------------
# LP helpers
# ---------------------------------------------------------------------------

def _maximize(A, b, direction):
    return solve_lp(LinearProgram(direction, A, b))


def support_value(poly, a):
    """``max {a . x : x in poly}``; raises on empty or unbounded sets."""
    red = poly.reduced()[0]
    out = _maximize(red.A, red.b, np.asarray(a, dtype=np.float64))
    if out.status is LPStatus.INFEASIBLE:
        raise InfeasibleSet("polytope is empty")
    if out.status is LPStatus.UNBOUNDED:
        raise UnboundedSet("support LP is unbounded; the set is not compact")
    return out.value


class SupportFunction:
    """Memoised support function of a fixed polytope.

    Repeated queries with the same normal (compared bytewise) reuse the LP
    value; repeated queries with the very same normal matrix object reuse
    the whole vector.  Scenario test streams typically emit a fixed set of
    normals with random offsets, so each LP is solved once.
    """

    def __init__(self, poly):
        self.poly = poly
        self._cache = {}
        self._last = None

    def __call__(self, a):
        a = np.ascontiguousarray(a, dtype=np.float64)
        key = a.tobytes()
        val = self._cache.get(key)
        if val is None:
            val = support_value(self.poly, a)
            self._cache[key] = val
        return val

    def values(self, A):
        if self._last is not None and self._last[0] is A:
            return self._last[1]
        vals = np.array([self(row) for row in np.atleast_2d(A)])
        self._last = (A, vals)
        return vals

    @property
    def lp_count(self):
        return len(self._cache)


def set_violates(poly, test):
    """True iff some point of ``poly`` violates the halfspace ``test``.

    ``test`` is a :class:`~scenariocert.scenario.SampledHalfspace` or an
    ``(a, b)`` pair.  The boundary counts as satisfied (within ``FEAS_TOL``).
    """
    a, b = (test.a, test.b) if hasattr(test, "a") else (test[0], test[1])
    a = np.asarray(a, dtype=np.float64)
    if a.size != poly.d:
        raise DimensionMismatch(f"test normal has dimension {a.size}, polytope has {poly.d}")
    return support_value(poly, a) > float(b) + FEAS_TOL


def _others(A, b, idx):
    mask = np.ones(b.size, dtype=bool)
    mask[idx] = False
    return A[mask], b[mask]


def _redundant_against(A, b, a, rhs):
    """Is ``a . x <= rhs`` implied by ``A x <= b``?"""
    if b.size == 0:
        return False
    out = _maximize(A, b, a)
    if out.status is LPStatus.UNBOUNDED:
        return False
    if out.status is LPStatus.INFEASIBLE:
        raise InfeasibleSet("remaining constraints are infeasible")
    return out.value <= rhs + FEAS_TOL


def is_redundant(poly, idx):
    """True iff dropping row ``idx`` does not enlarge ``poly``."""
    if not 0 <= idx < poly.n_constraints:
        raise IndexError(f"constraint index {idx} out of range")
    out = solve_lp(LinearProgram(np.zeros(poly.d), poly.A, poly.b))
    if out.status is LPStatus.INFEASIBLE:
        raise InfeasibleSet("polytope is empty")
    A, b = _others(poly.A, poly.b, idx)
    return _redundant_against(A, b, poly.A[idx], poly.b[idx])


@dataclass(frozen=True)
class SupportSubsample:
    """Sample indices owning at least one non-redundant row."""

    indices: tuple
    constraint_rows: tuple = ()

    @property
    def k(self):
        return len(self.indices)

    def __len__(self):
        return len(self.indices)


def _sample_lookup(poly, sample_of):
    if sample_of is None:
        return poly.sample
    if isinstance(sample_of, dict):
        return np.array(
            [DETERMINISTIC if sample_of.get(i) is None else int(sample_of[i]) for i in range(len(poly))],
            dtype=np.int64,
        )
    return np.array([DETERMINISTIC if v is None else int(v) for v in sample_of], dtype=np.int64)


def _subsample(poly, sample_of, essential_reduced_rows, kept):
    samples = _sample_lookup(poly, sample_of)
    rows = tuple(int(kept[r]) for r in sorted(essential_reduced_rows))
    idx = sorted({int(samples[r]) for r in rows if samples[r] != DETERMINISTIC})
    return SupportSubsample(tuple(idx), rows)


def naive_support_subsample(poly, sample_of=None):
    """Support subsample by one redundancy LP per (reduced) row."""
    red, kept = poly.reduced()
    chebyshev_center(red)  # raises InfeasibleSet on an empty polytope
    essential = []
    for j in range(red.n_constraints):
        A, b = _others(red.A, red.b, j)
        if not _redundant_against(A, b, red.A[j], red.b[j]):
            essential.append(j)
    return _subsample(poly, sample_of, essential, kept)


def clarkson_support_subsample(poly, sample_of=None):
    """Support subsample by Clarkson's output-sensitive scheme.

    Each undecided row ``j`` is tested by an LP over the current essential
    rows plus a relaxed copy of ``j``.  If the optimizer breaks ``j``, the
    ray from the Chebyshev center to the optimizer leaves the polytope
    through an essential row, which is promoted; ties in the exit parameter
    go to the lower row index.  A last pass re-checks every essential row
    against the other essential rows so weakly redundant rows promoted
    through ties are dropped again.
    """
    red, kept = poly.reduced()
    A, b = red.A, red.b
    m = b.size
    center, radius = chebyshev_center(red)
    if radius <= FEAS_TOL:
        raise DegenerateInterior(f"Chebyshev radius {radius:.3g} is not positive")

    UNKNOWN, ESSENTIAL, REDUNDANT = 0, 1, 2
    status = np.zeros(m, dtype=np.int8)
    essential = []
    slack_at_center = b - A @ center
    for j in range(m):
        while status[j] == UNKNOWN:
            rows = np.array(essential + [j], dtype=np.int64)
            rhs = b[rows].copy()
            rhs[-1] += 1.0
            out = _maximize(A[rows], rhs, A[j])
            if out.status is not LPStatus.OPTIMAL:
                raise InfeasibleSet("Clarkson test LP failed")  # pragma: no cover
            if out.value <= b[j] + FEAS_TOL:
                status[j] = REDUNDANT
                break
            direction = out.x - center
            cand = np.flatnonzero(status == UNKNOWN)
            speed = A[cand] @ direction
            moving = speed > 0.0
            cand, speed = cand[moving], speed[moving]
            t = slack_at_center[cand] / speed
            tmin = t.min()
            hit = int(cand[t <= tmin + RAY_TIE_TOL].min())
            status[hit] = ESSENTIAL
            essential.append(hit)

    confirmed = []
    for i in essential:
        others = [r for r in essential if r != i]
        if not _redundant_against(A[others], b[others], A[i], b[i]):
            confirmed.append(i)
    return _subsample(poly, sample_of, confirmed, kept)

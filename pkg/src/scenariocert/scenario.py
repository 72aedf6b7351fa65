"""Scenario feasible sets, set certificates and Monte Carlo violation checks.

A :class:`ConstraintSampler` turns ``(seed, namespace, m)`` into the
halfspaces ``A_m x <= b_m`` of one uncertainty realization.  Training
samples live in the ``"train"`` namespace and test samples in ``"test"``,
so the two streams never share random numbers for the same seed.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._numeric import FEAS_TOL
from .certificates import Certificate
from .errors import (
    DegenerateInterior,
    DimensionMismatch,
    DomainError,
    EmptyFeasibleSet,
    InfeasibleSet,
    UnboundedSet,
)
from .geometry import Polytope, SupportFunction, clarkson_support_subsample, reduce_blocks
from .linalg_lp import LinearProgram, LPStatus, chebyshev_center, solve_lp
from .sampling import SeededStream

__all__ = [
    "ConstraintSampler",
    "FunctionSampler",
    "OffsetNoiseSampler",
    "SampledHalfspace",
    "ScenarioFeasibleSet",
    "ViolationEstimate",
    "assemble",
    "certify_set",
    "estimate_point_violation",
    "estimate_set_violation",
    "write_violation_csv",
]

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class SampledHalfspace:
    """``a . x <= b`` drawn as part of sample ``m``."""

    a: np.ndarray
    b: float
    m: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(a)) or not np.isfinite(self.b):
            raise DomainError("halfspace data must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "m", int(self.m))


class ConstraintSampler:
    """Deterministic map from ``(seed, namespace, m)`` to a halfspace block.

    Subclasses implement :meth:`draw`.  Returning the same normal-matrix
    object for every sample (only offsets random) lets the geometry layer
    key the normals once.
    """

    dimension = None

    def stream(self, seed, namespace, m):
        return SeededStream(seed, f"{namespace}/{int(m)}")

    def draw(self, seed, namespace, m):
        raise NotImplementedError

    def halfspaces(self, seed, m, namespace=TRAIN):
        A, b = self.draw(seed, namespace, m)
        return [SampledHalfspace(A[i], b[i], m) for i in range(len(b))]


class FunctionSampler(ConstraintSampler):
    """Sampler defined by ``fn(stream, m) -> (A, b)``."""

    def __init__(self, dimension, fn):
        self.dimension = int(dimension)
        self._fn = fn

    def draw(self, seed, namespace, m):
        A, b = self._fn(self.stream(seed, namespace, m), m)
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if A.shape != (b.size, self.dimension):
            raise DimensionMismatch(f"sampler emitted {A.shape} normals for {b.size} offsets")
        return A, b


class OffsetNoiseSampler(ConstraintSampler):
    """Fixed normals with offsets ``b_nom + noise``.

    ``noise`` is a truncated Gaussian with per-row standard deviation
    ``sigma`` cut at ``truncation`` standard deviations.
    """

    def __init__(self, A, b, sigma, truncation=3.0):
        A = np.array(A, dtype=np.float64, ndmin=2)
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), b.shape).copy()
        if A.shape[0] != b.size:
            raise DimensionMismatch("normals and offsets disagree in length")
        if np.any(sigma < 0) or not truncation > 0:
            raise DomainError("noise scales must be non-negative and truncation positive")
        for arr in (A, b, sigma):
            arr.setflags(write=False)
        self.A, self.b_nom, self.sigma, self.truncation = A, b, sigma, float(truncation)
        self.dimension = A.shape[1]

    @classmethod
    def from_dict(cls, data):
        return cls(data["A"], data["b"], data.get("sigma", 0.0), data.get("truncation", 3.0))

    def draw(self, seed, namespace, m):
        z = self.stream(seed, namespace, m).truncated_gaussians(0.0, 1.0, self.truncation, self.b_nom.size)
        return self.A, self.b_nom + self.sigma * z


def _probe_bounded(base):
    d = base.d
    for j in range(d):
        for sgn in (1.0, -1.0):
            c = np.zeros(d)
            c[j] = sgn
            out = solve_lp(LinearProgram(c, base.A, base.b))
            if out.status is LPStatus.INFEASIBLE:
                raise EmptyFeasibleSet("deterministic set is empty")
            if out.status is LPStatus.UNBOUNDED:
                raise UnboundedSet(f"deterministic set is unbounded along axis {j}")


class ScenarioFeasibleSet:
    """``X`` intersected with every sampled block.

    Blocks are kept separately so a large multi-sample sharing one normal
    matrix is reduced without stacking every row; :attr:`assembled`
    materialises the full polytope on request.
    """

    def __init__(self, base, blocks, M):
        self.base = base
        self.blocks = list(blocks)  # (A_m, b_m, m)
        self.M = int(M)
        self._reduced = None
        self._assembled = None
        self._support = None

    @property
    def d(self):
        return self.base.d

    @property
    def n_constraints(self):
        return self.base.n_constraints + sum(len(b) for _, b, _ in self.blocks)

    @property
    def sampled(self):
        return [SampledHalfspace(A[i], b[i], m) for A, b, m in self.blocks for i in range(len(b))]

    @property
    def assembled(self):
        if self._assembled is None:
            if self.blocks:
                A = np.vstack([self.base.A] + [A for A, _, _ in self.blocks])
                b = np.concatenate([self.base.b] + [b for _, b, _ in self.blocks])
                s = np.concatenate([self.base.sample] + [np.full(len(b), m) for _, b, m in self.blocks])
                self._assembled = Polytope(A, b, s, d=self.d)
            else:
                self._assembled = self.base
        return self._assembled

    def reduced(self):
        if self._reduced is None:
            parts = [(self.base.A, self.base.b, self.base.sample)]
            parts += [(A, b, m) for A, b, m in self.blocks]
            self._reduced = reduce_blocks(parts, self.d)
        return self._reduced

    def support_subsample(self):
        """Clarkson support subsample, computed once."""
        if self._support is None:
            red = self.reduced()[0]
            self._support = clarkson_support_subsample(red)
        return self._support


def assemble(base, sampler, M, seed, namespace=TRAIN):
    """Draw ``M`` training blocks and intersect them with ``base``."""
    if sampler.dimension != base.d:
        raise DimensionMismatch(f"sampler dimension {sampler.dimension} differs from base {base.d}")
    if M < 0:
        raise DomainError("M must be non-negative")
    _probe_bounded(base)
    blocks = []
    for m in range(1, int(M) + 1):
        A, b = sampler.draw(seed, namespace, m)
        blocks.append((A, b, m))
    sfs = ScenarioFeasibleSet(base, blocks, M)
    try:
        _, radius = chebyshev_center(sfs.reduced()[0])
    except InfeasibleSet as exc:
        raise EmptyFeasibleSet("scenario feasible set is empty") from exc
    if radius <= 0.0:
        raise EmptyFeasibleSet("scenario feasible set has empty interior")
    return sfs


def certify_set(sfs, beta, k_override=None):
    """A posteriori certificate for the whole scenario feasible set."""
    if k_override is not None:
        k = int(k_override)
        if k > sfs.M:
            k = sfs.M  # a bound above M carries no more information than M
    else:
        try:
            k = sfs.support_subsample().k
        except DegenerateInterior as exc:
            raise EmptyFeasibleSet(str(exc)) from exc
    return Certificate.posteriori(sfs.M, k, beta)


@dataclass
class ViolationEstimate:
    hits: int
    trials: int
    seed: int
    namespace: str = TEST
    blocks: list = field(default_factory=list, repr=False)

    @property
    def frequency(self):
        return self.hits / self.trials if self.trials else 0.0

    def to_dict(self):
        return {
            "hits": self.hits,
            "trials": self.trials,
            "frequency": self.frequency,
            "seed": self.seed,
            "namespace": self.namespace,
        }


def _block_size(trials, block_size):
    return int(block_size) if block_size else max(1, min(int(trials), 10000))


def _run_trials(trials, seed, block_size, hit_of):
    if trials < 1:
        raise DomainError("trials must be positive")
    size = _block_size(trials, block_size)
    blocks, total = [], 0
    for start in range(1, trials + 1, size):
        stop = min(trials, start + size - 1)
        hits = sum(1 for m in range(start, stop + 1) if hit_of(m))
        blocks.append((len(blocks), hits, stop - start + 1))
        total += hits
    return ViolationEstimate(total, int(trials), int(seed), TEST, blocks)


def estimate_set_violation(sfs, sampler, trials, seed, block_size=None):
    """Fraction of fresh samples with some halfspace cutting the set.

    Each distinct normal costs one support LP; later samples with the same
    normals only compare offsets.
    """
    red = sfs.reduced()[0]
    support = SupportFunction(red)

    def hit(m):
        A, b = sampler.draw(seed, TEST, m)
        return bool(np.any(support.values(A) > b + FEAS_TOL))

    return _run_trials(int(trials), seed, block_size, hit)


def estimate_point_violation(x, sampler, trials, seed, block_size=None):
    """Fraction of fresh samples whose constraints ``x`` breaks."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != sampler.dimension:
        raise DimensionMismatch(f"point has dimension {x.size}, sampler {sampler.dimension}")

    def hit(m):
        A, b = sampler.draw(seed, TEST, m)
        return bool(np.any(A @ x > b + FEAS_TOL))

    return _run_trials(int(trials), seed, block_size, hit)


def write_violation_csv(estimate, stream=None):
    """Per-block rows ``trial_block, hits, trials, frequency, seed, namespace``."""
    out = stream if stream is not None else io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["trial_block", "hits", "trials", "frequency", "seed", "namespace"])
    for block, hits, n in estimate.blocks:
        w.writerow([block, hits, n, repr(hits / n), estimate.seed, estimate.namespace])
    return out.getvalue() if stream is None else None

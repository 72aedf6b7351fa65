"""Violation-level arithmetic for scenario certificates.

Two families of bounds live here:

* a posteriori (wait-and-judge) levels ``eps(k)`` for a feasible set whose
  support subsample has ``k`` elements, using the uniform split that gives
  every term of the defining sum the weight ``beta / M``;
* a priori levels for a scenario optimizer whose number of support
  constraints is at most ``dim + 1``, obtained by inverting the binomial
  tail ``sum_{j<=dim} C(M, j) eps^j (1-eps)^(M-j)``.

Everything is evaluated in the natural-log domain; binomial coefficients go
through ``lgamma`` so ``M`` in the millions is fine.
"""

import json
import math
from dataclasses import asdict, dataclass

from .errors import DomainError, NoSolution

__all__ = [
    "APOSTERIORI_SET",
    "APRIORI_POINT",
    "Certificate",
    "beta_apriori",
    "epsilon_apriori",
    "epsilon_explicit",
    "epsilon_posteriori",
    "log_beta_apriori",
    "log_binom",
    "log_survival_posteriori",
    "sample_size",
]

APOSTERIORI_SET = "APosterioriSet"
APRIORI_POINT = "APrioriPoint"

_BISECT_LO = 1e-15
_BISECT_HI = 1.0 - 1e-15
_BISECT_ITERS = 200


def log_binom(M, k):
    """``log C(M, k)`` via log-gamma."""
    if k < 0 or k > M:
        return -math.inf
    return math.lgamma(M + 1) - math.lgamma(k + 1) - math.lgamma(M - k + 1)


def _logsumexp(terms):
    top = max(terms)
    if top == -math.inf:
        return -math.inf
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def _check_beta(beta):
    if not (0.0 < beta < 1.0):
        raise DomainError(f"beta must lie in (0, 1), got {beta!r}")


def _check_counts(M, k):
    if int(M) != M or int(k) != k:
        raise DomainError("sample counts must be integers")
    if M < 0 or k < 0:
        raise DomainError("sample counts must be non-negative")
    if k > M:
        raise DomainError(f"support cardinality {k} exceeds sample count {M}")


def log_survival_posteriori(M, k, beta):
    """``log(1 - eps(k))`` for the a posteriori level, without cancellation.

    Returns ``-inf`` at ``k == M`` where ``eps(M) = 1``.
    """
    _check_beta(beta)
    _check_counts(M, k)
    if k == M:
        return -math.inf
    return (math.log(beta) - math.log(M) - log_binom(M, k)) / (M - k)


def epsilon_posteriori(M, k, beta):
    """A posteriori violation level ``eps(k)`` for ``k`` support samples out of ``M``.

    ``eps(k) = 1 - (beta / (M C(M, k)))^(1/(M-k))`` for ``k < M`` and
    ``eps(M) = 1``.  With this choice every term of
    ``sum_{k<M} C(M,k) (1-eps(k))^(M-k)`` equals ``beta/M``, so the sum is
    exactly ``beta``.

    >>> round(epsilon_posteriori(10, 0, 0.1), 6)
    0.369043
    """
    ls = log_survival_posteriori(M, k, beta)
    if ls == -math.inf:
        return 1.0
    return -math.expm1(ls)


def log_beta_apriori(M, eps, dim):
    """Log of the binomial lower tail ``P[Bin(M, eps) <= dim]``."""
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must lie in (0, 1), got {eps!r}")
    if int(dim) != dim or dim < 0:
        raise DomainError("dim must be a non-negative integer")
    if not dim < M:
        raise DomainError(f"dim ({dim}) must be smaller than M ({M})")
    log_e = math.log(eps)
    log_1e = math.log1p(-eps)
    lgM = math.lgamma(M + 1)
    terms = [
        lgM - math.lgamma(j + 1) - math.lgamma(M - j + 1) + j * log_e + (M - j) * log_1e
        for j in range(int(dim) + 1)
    ]
    return _logsumexp(terms)


def beta_apriori(M, eps, dim):
    """Confidence parameter ``sum_{j=0}^{dim} C(M,j) eps^j (1-eps)^(M-j)``."""
    return math.exp(log_beta_apriori(M, eps, dim))


def epsilon_apriori(M, beta, dim):
    """Smallest-by-bisection ``eps`` with ``beta_apriori(M, eps, dim) = beta``.

    The returned value is the upper end of the final bracket, so
    ``beta_apriori(M, result, dim) <= beta`` up to rounding.
    """
    _check_beta(beta)
    if not dim < M:
        raise DomainError(f"dim ({dim}) must be smaller than M ({M})")
    target = math.log(beta)
    lo, hi = _BISECT_LO, _BISECT_HI
    if log_beta_apriori(M, lo, dim) < target:
        raise NoSolution("binomial tail never reaches beta on (0, 1)")
    if log_beta_apriori(M, hi, dim) > target:
        raise NoSolution("binomial tail stays above beta on (0, 1)")
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if log_beta_apriori(M, mid, dim) > target:
            lo = mid
        else:
            hi = mid
    return hi


def epsilon_explicit(M, beta, dim):
    """Closed-form sufficient level ``(2/M) (ln(1/beta) + dim ln 2)``."""
    if M <= 0:
        raise DomainError("M must be positive")
    if not beta > 0.0:
        raise DomainError("beta must be positive")
    return 2.0 / M * (math.log(1.0 / beta) + dim * math.log(2.0))


def sample_size(eps, beta, dim):
    """Smallest ``M`` with ``beta_apriori(M, eps, dim) <= beta``."""
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must lie in (0, 1), got {eps!r}")
    _check_beta(beta)
    target = math.log(beta)

    def ok(M):
        return log_beta_apriori(M, eps, dim) <= target

    lo = int(dim)  # infeasible by convention (needs M > dim)
    hi = int(dim) + 1
    while not ok(hi):
        lo = hi
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class Certificate:
    """A confidence statement ``P^M[violation > epsilon] <= beta``."""

    kind: str
    M: int
    k: int
    epsilon: float
    beta: float

    def __post_init__(self):
        if self.kind not in (APOSTERIORI_SET, APRIORI_POINT):
            raise DomainError(f"unknown certificate kind {self.kind!r}")
        if not (0.0 <= self.epsilon <= 1.0):
            raise DomainError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        _check_beta(self.beta)
        if self.kind == APOSTERIORI_SET:
            _check_counts(self.M, self.k)
            if self.k == self.M and self.epsilon != 1.0:
                raise DomainError("a set certificate with k == M must have epsilon == 1")

    @classmethod
    def posteriori(cls, M, k, beta):
        return cls(APOSTERIORI_SET, int(M), int(k), epsilon_posteriori(M, k, beta), float(beta))

    @classmethod
    def apriori(cls, M, beta, dim, explicit=False):
        eps = epsilon_explicit(M, beta, dim) if explicit else epsilon_apriori(M, beta, dim)
        # a level above one carries no information
        return cls(APRIORI_POINT, int(M), int(dim), min(1.0, eps), float(beta))

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data):
        return cls(
            kind=data["kind"],
            M=int(data["M"]),
            k=int(data["k"]),
            epsilon=float(data["epsilon"]),
            beta=float(data["beta"]),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

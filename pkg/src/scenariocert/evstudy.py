"""Electric-vehicle charging studies.

Two experiments:

* feasibility: every sample perturbs each vehicle's per-slot power bounds
  and its energy demand; the scenario feasible set is certified a
  posteriori and its violation probability estimated on fresh samples;
* cost: the deterministic charging polytope is fixed and the price map
  ``p(sigma) = A(theta) sigma + b(theta)`` is uncertain; the epigraphic
  program is solved and the violation of its optimal cost level estimated.

Vehicle ``i`` owns coordinates ``i*n .. i*n + n - 1`` of the decision.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from ._numeric import FEAS_TOL
from .aggregative import AggregativeProgram, CostSample, solve_epigraph
from .certificates import Certificate, epsilon_apriori, epsilon_explicit, epsilon_posteriori
from .errors import DomainError, InfeasibleSampleConfig, IterationLimit
from .geometry import Polytope
from .sampling import SeededStream
from .scenario import (
    TEST,
    TRAIN,
    ConstraintSampler,
    SampledHalfspace,
    assemble,
    certify_set,
    estimate_set_violation,
)

__all__ = [
    "EVCostConfig",
    "EVFeasibilityConfig",
    "EVFeasibilitySampler",
    "agent_sweep_epsilon",
    "base_price_profile",
    "build_cost_program",
    "charging_polytope",
    "run_cost_experiment",
    "run_feasibility_experiment",
    "sample_feasibility_constraints",
    "structural_facet_bound",
]

PROFILE_RESOURCE = "synthetic_price_profile_v1.json"


def base_price_profile(n):
    """Bundled synthetic 12-point profile, linearly resampled to ``n`` slots."""
    raw = resources.files("scenariocert.data").joinpath(PROFILE_RESOURCE).read_text()
    values = np.asarray(json.loads(raw)["values"], dtype=np.float64)
    if n == values.size:
        return values.copy()
    grid = np.linspace(0.0, 1.0, values.size)
    return np.interp(np.linspace(0.0, 1.0, int(n)), grid, values)


def structural_facet_bound(N, n):
    """Facets of a product of ``N`` boxes each cut by one energy halfspace."""
    return 2 * n * N + N


def _charging_rows(N, n):
    """Normals for upper bounds, lower bounds and the energy row, agent by agent."""
    d = N * n
    A = np.zeros((N * (2 * n + 1), d))
    for i in range(N):
        r = i * (2 * n + 1)
        cols = np.arange(i * n, (i + 1) * n)
        A[r + np.arange(n), cols] = 1.0
        A[r + n + np.arange(n), cols] = -1.0
        A[r + 2 * n, cols] = -1.0
    A.setflags(write=False)
    return A


def charging_polytope(lower, upper, energy, n):
    """``prod_i {x_i in [lower_i, upper_i], sum_t x_i^t >= energy_i}``.

    ``lower`` and ``upper`` are ``(N, n)`` arrays (or broadcastable).
    """
    energy = np.atleast_1d(np.asarray(energy, dtype=np.float64))
    N = energy.size
    lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), (N, n))
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), (N, n))
    A = _charging_rows(N, n)
    b = np.concatenate([np.concatenate([upper[i], -lower[i], [-energy[i]]]) for i in range(N)])
    return Polytope(A, b)


# ---------------------------------------------------------------------------
# uncertain constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EVFeasibilityConfig:
    """Nominal charging data and the noise that perturbs it.

    Offsets per sample are ``x_upper + th_u``, ``x_lower + th_l`` and
    ``energy + th_e`` with truncated Gaussian noise.
    """

    N: int
    n: int
    seed: int
    x_upper: tuple  # N rows of n values (kW)
    x_lower: float = 2.0
    energy: tuple = None  # kWh per vehicle; half the nominal deliverable energy if omitted
    sigma_bounds: float = 0.5
    sigma_energy: float = 1.0
    truncation: float = 3.0

    def __post_init__(self):
        up = np.asarray(self.x_upper, dtype=np.float64)
        if up.shape != (self.N, self.n):
            raise InfeasibleSampleConfig(f"x_upper must be {self.N} x {self.n}")
        object.__setattr__(self, "x_upper", tuple(tuple(float(v) for v in row) for row in up))
        if self.energy is None:
            energy = 0.5 * up.sum(axis=1)
        else:
            energy = np.asarray(self.energy, dtype=np.float64).reshape(-1)
            if energy.size != self.N:
                raise InfeasibleSampleConfig(f"energy must have {self.N} entries")
        object.__setattr__(self, "energy", tuple(float(v) for v in energy))
        self.validate()

    @classmethod
    def default(cls, N=5, n=12, seed=0, **kw):
        """Nominal upper bounds drawn uniformly on [10, 20] kW."""
        up = SeededStream(seed, "nominal").uniforms(10.0, 20.0, N * n).reshape(N, n)
        return cls(N=N, n=n, seed=seed, x_upper=up, **kw)

    def validate(self):
        up = self.upper_array
        if not self.truncation > 0:
            raise InfeasibleSampleConfig("truncation must be positive")
        if self.sigma_bounds < 0 or self.sigma_energy < 0:
            raise InfeasibleSampleConfig("noise scales must be non-negative")
        if not self.x_lower < up.min():
            raise InfeasibleSampleConfig("nominal lower bound must lie below every upper bound")
        wb = self.truncation * self.sigma_bounds
        we = self.truncation * self.sigma_energy
        if not self.x_lower + wb < up.min() - wb:
            raise InfeasibleSampleConfig("truncated bound noise can invert a charging interval")
        if np.any(np.asarray(self.energy) + we >= (up - wb).sum(axis=1)):
            raise InfeasibleSampleConfig("truncated energy noise can exceed deliverable energy")

    @property
    def upper_array(self):
        return np.asarray(self.x_upper, dtype=np.float64)

    @property
    def dimension(self):
        return self.N * self.n

    def base(self):
        """Deterministic box ``[0, 2 max x_upper]`` enclosing every sampled set."""
        d = self.dimension
        return Polytope.box(np.zeros(d), np.full(d, 2.0 * self.upper_array.max()))

    def to_dict(self):
        out = asdict(self)
        out["kind"] = "ev_feasibility"
        out["x_upper"] = [list(r) for r in self.x_upper]
        out["energy"] = list(self.energy)
        return out

    @classmethod
    def from_dict(cls, data):
        data = {k: v for k, v in data.items() if k != "kind"}
        if "x_upper" not in data:
            return cls.default(**data)
        return cls(**data)


class EVFeasibilitySampler(ConstraintSampler):
    """``N(2n + 1)`` halfspaces per sample over a shared normal matrix."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.dimension = cfg.dimension
        self.A = _charging_rows(cfg.N, cfg.n)
        up = cfg.upper_array
        nominal = [np.concatenate([up[i], np.full(cfg.n, -cfg.x_lower), [-cfg.energy[i]]]) for i in range(cfg.N)]
        self.b_nom = np.concatenate(nominal)
        self.b_nom.setflags(write=False)

    def draw(self, seed, namespace, m):
        cfg = self.cfg
        st = self.stream(seed, namespace, m)
        Nn = cfg.N * cfg.n
        th_u = st.truncated_gaussians(0.0, cfg.sigma_bounds, cfg.truncation, Nn).reshape(cfg.N, cfg.n)
        th_l = st.truncated_gaussians(0.0, cfg.sigma_bounds, cfg.truncation, Nn).reshape(cfg.N, cfg.n)
        th_e = st.truncated_gaussians(0.0, cfg.sigma_energy, cfg.truncation, cfg.N)
        noise = np.concatenate([np.concatenate([th_u[i], -th_l[i], [-th_e[i]]]) for i in range(cfg.N)])
        return self.A, self.b_nom + noise


def sample_feasibility_constraints(cfg, m, namespace=TRAIN, seed=None):
    """Halfspaces of sample ``m``: per vehicle ``n`` upper, ``n`` lower, one energy."""
    sampler = EVFeasibilitySampler(cfg)
    A, b = sampler.draw(cfg.seed if seed is None else seed, namespace, m)
    return [SampledHalfspace(A[r], b[r], m) for r in range(b.size)]


def run_feasibility_experiment(cfg, M_list, M_test, beta, k_override=None, seed=None):
    """One row per ``M``: structural and computed certificates and the empirical rate.

    ``k_used`` is ``k_override`` if given, else the structural facet bound.
    The Clarkson count and its level are reported alongside.
    """
    seed = cfg.seed if seed is None else int(seed)
    sampler = EVFeasibilitySampler(cfg)
    base = cfg.base()
    k_struct = structural_facet_bound(cfg.N, cfg.n) if k_override is None else int(k_override)
    rows = []
    for M in M_list:
        sfs = assemble(base, sampler, int(M), seed)
        k_comp = sfs.support_subsample().k
        cert = certify_set(sfs, beta, k_override=k_struct)
        est = estimate_set_violation(sfs, sampler, int(M_test), seed)
        rows.append({
            "M": int(M),
            "k_used": cert.k,
            "k_computed": k_comp,
            "epsilon_theory": cert.epsilon,
            "epsilon_computed": epsilon_posteriori(int(M), k_comp, beta),
            "epsilon_empirical": est.frequency,
            "hits": est.hits,
            "trials": est.trials,
            "beta": float(beta),
            "seed": seed,
            "namespace": TEST,
        })
    return rows


def agent_sweep_epsilon(n, M, beta, N_list):
    """``eps(k*)`` with ``k* = 2Nn + N`` for each agent count."""
    rows = []
    for N in N_list:
        k = structural_facet_bound(int(N), int(n))
        if k >= M:
            raise DomainError(f"k* = {k} must be smaller than M = {M}")
        rows.append({"N": int(N), "k": k, "epsilon": epsilon_posteriori(int(M), k, beta)})
    return rows


# ---------------------------------------------------------------------------
# uncertain cost
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EVCostConfig:
    """Deterministic charging constraints plus uniform price uncertainty.

    Per-vehicle upper bounds are drawn on ``x_upper_range`` unless given
    explicitly; energies are ``n * (x_lower + energy_fraction * (x_upper - x_lower))``.
    Sampled prices use ``diag A(theta) ~ U[A_diag_range]`` and
    ``b(theta) = U[b_scale_range] * b0`` componentwise.
    """

    N: int
    n: int
    seed: int = 0
    x_lower: float = 2.0
    x_upper_range: tuple = (6.0, 15.0)
    x_upper: tuple = None
    energy: tuple = None
    energy_fraction: float = 0.5
    A0_diag: float = 0.01
    b0: tuple = None
    A_diag_range: tuple = (0.0, 0.02)
    b_scale_range: tuple = (0.8, 1.2)

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise InfeasibleSampleConfig("N and n must be positive")
        if self.x_upper is None:
            lo, hi = self.x_upper_range
            up = SeededStream(self.seed, "bounds").uniforms(lo, hi, self.N)
        else:
            up = np.asarray(self.x_upper, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "x_upper", tuple(float(v) for v in up))
        if self.energy is None:
            en = self.n * (self.x_lower + self.energy_fraction * (up - self.x_lower))
        else:
            en = np.asarray(self.energy, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "energy", tuple(float(v) for v in en))
        b0 = base_price_profile(self.n) if self.b0 is None else np.asarray(self.b0, dtype=np.float64)
        object.__setattr__(self, "b0", tuple(float(v) for v in b0))
        object.__setattr__(self, "x_upper_range", tuple(self.x_upper_range))
        object.__setattr__(self, "A_diag_range", tuple(self.A_diag_range))
        object.__setattr__(self, "b_scale_range", tuple(self.b_scale_range))
        self.validate()

    def validate(self):
        up, en = np.asarray(self.x_upper), np.asarray(self.energy)
        if up.size != self.N or en.size != self.N or len(self.b0) != self.n:
            raise InfeasibleSampleConfig("per-vehicle data must have N entries and b0 n entries")
        if np.any(up <= self.x_lower):
            raise InfeasibleSampleConfig("upper bounds must exceed the lower bound")
        if np.any(en > self.n * up):
            raise InfeasibleSampleConfig("an energy demand exceeds deliverable energy")
        if self.A0_diag < 0 or self.A_diag_range[0] < 0 or self.A_diag_range[0] > self.A_diag_range[1]:
            raise InfeasibleSampleConfig("price slopes must be non-negative ranges")
        if self.b_scale_range[0] > self.b_scale_range[1]:
            raise InfeasibleSampleConfig("b scale range is reversed")

    def for_agents(self, N):
        """Same recipe with ``N`` vehicles (explicit per-vehicle data is dropped)."""
        if N == self.N:
            return self
        return replace(self, N=int(N), x_upper=None, energy=None)

    def polytope(self):
        return charging_polytope(self.x_lower, np.asarray(self.x_upper)[:, None], self.energy, self.n)

    def draw_samples(self, M, seed, namespace):
        """``M`` price realizations from one stream, ``2n`` uniforms each."""
        st = SeededStream(seed, namespace)
        u = st.unit_uniforms(2 * self.n * int(M)).reshape(int(M), 2, self.n)
        a_lo, a_hi = self.A_diag_range
        s_lo, s_hi = self.b_scale_range
        diag = a_lo + (a_hi - a_lo) * u[:, 0, :]
        b = (s_lo + (s_hi - s_lo) * u[:, 1, :]) * np.asarray(self.b0)
        return diag, b

    def to_dict(self):
        out = asdict(self)
        out["kind"] = "ev_cost"
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k != "kind"})


def build_cost_program(cfg, M, seed=None, namespace=TRAIN):
    seed = cfg.seed if seed is None else int(seed)
    diag, b = cfg.draw_samples(M, seed, namespace)
    samples = [CostSample(np.diag(diag[m]), b[m]) for m in range(int(M))]
    return AggregativeProgram(
        cfg.N, cfg.n, cfg.A0_diag * np.eye(cfg.n), np.asarray(cfg.b0), cfg.polytope(), samples
    )


def _test_exceedances(cfg, sol, sigma, M_test, seed, namespace):
    diag, b = cfg.draw_samples(M_test, seed, namespace)
    g = diag @ (sigma * sigma) + b @ sigma
    return int(np.count_nonzero(g > sol.gamma_star + FEAS_TOL))


def run_cost_experiment(cfg, N_list, M, M_test, beta, repeats, seed=None, tol=1e-7):
    """One row per ``(N, repeat)`` with the empirical rate of ``g(x*, th) > gamma*``.

    Rows whose solve hits the iteration limit are kept with status
    ``"iteration_limit"`` and empty measurements.
    """
    seed = cfg.seed if seed is None else int(seed)
    eps_exp = min(1.0, epsilon_explicit(int(M), beta, cfg.n))
    eps_bin = epsilon_apriori(int(M), beta, cfg.n) if cfg.n < M else 1.0
    rows = []
    for N in N_list:
        cN = cfg.for_agents(int(N))
        for r in range(int(repeats)):
            cell = f"N{int(N)}/r{r}"
            row = {
                "N": int(N),
                "repeat": r,
                "epsilon_theory": eps_exp,
                "epsilon_binomial": eps_bin,
                "M": int(M),
                "beta": float(beta),
                "seed": seed,
                "namespace": f"{TEST}/{cell}",
            }
            prog = build_cost_program(cN, M, seed, f"{TRAIN}/{cell}")
            try:
                sol = solve_epigraph(prog, tol)
            except IterationLimit:
                row.update(status="iteration_limit", empirical_violation=math.nan, hits=0,
                           trials=int(M_test), gamma_star=math.nan, value=math.nan)
                rows.append(row)
                continue
            hits = _test_exceedances(cN, sol, prog.sigma(sol.x_star), int(M_test), seed, f"{TEST}/{cell}")
            row.update(
                status="ok",
                empirical_violation=hits / int(M_test),
                hits=hits,
                trials=int(M_test),
                gamma_star=sol.gamma_star,
                value=sol.value,
            )
            rows.append(row)
    return rows

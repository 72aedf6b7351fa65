"""Exception hierarchy shared by all modules."""


class ScenarioCertError(Exception):
    """Base class for every error raised by this package."""


class MalformedProgram(ScenarioCertError, ValueError):
    """An LP or matrix has mismatched dimensions or non-finite data."""


class DomainError(ScenarioCertError, ValueError):
    """A numeric argument lies outside the domain of the function."""


class DimensionMismatch(ScenarioCertError, ValueError):
    pass


class InfeasibleSet(ScenarioCertError):
    """The polytope (or LP feasible region) is empty."""


class UnboundedSet(ScenarioCertError):
    """A support LP is unbounded, so the set is not compact."""


class DegenerateInterior(ScenarioCertError):
    """The polytope has (numerically) empty interior."""


class EmptyFeasibleSet(ScenarioCertError):
    """A scenario feasible set has no interior point."""


class NoSolution(ScenarioCertError):
    pass


class IterationLimit(ScenarioCertError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""


class InfeasibleDomain(ScenarioCertError):
    pass


class InfeasibleSampleConfig(ScenarioCertError, ValueError):
    """A sampler configuration can produce an empty constraint set."""

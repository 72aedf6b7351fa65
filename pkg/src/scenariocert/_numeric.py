"""Global numeric policy and runtime switches.

Every tolerance used by the LP kernel, the geometry layer and the Monte
Carlo estimators is defined here so that a single record documents the
numeric behaviour of the whole package.
"""

import os

#: absolute slack allowed when checking ``G x <= h`` and violation events
FEAS_TOL = 1e-8
#: entries with magnitude at or below this are never used as simplex pivots
PIVOT_TOL = 1e-10
#: reduced-cost threshold for declaring simplex optimality
OPT_TOL = 1e-10
#: normals closer than this (after normalisation) are considered parallel
ANGLE_TOL = 1e-9
#: offsets of parallel normals closer than this are duplicates
OFFSET_TOL = 1e-9
#: ray-shooting hit parameters closer than this are ties
RAY_TIE_TOL = 1e-12

PURE_NUMPY_ENV = "SCENARIO_CERT_PURE_NUMPY"
THREADS_ENV = "SCENARIO_CERT_THREADS"


def use_pure_numpy():
    """True when the env flag asks for the numpy kernels instead of numba."""
    return os.environ.get(PURE_NUMPY_ENV, "").strip().lower() in ("1", "true", "yes", "on")


def worker_count(default=None):
    """Number of worker threads allowed by ``SCENARIO_CERT_THREADS``."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    if default is not None:
        return max(1, int(default))
    return max(1, min(8, os.cpu_count() or 1))

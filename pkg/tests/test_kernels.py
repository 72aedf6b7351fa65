"""The compiled and the numpy kernels must take the same pivots."""

import numpy as np
import pytest

from scenariocert import kernels
from scenariocert.linalg_lp import LinearProgram, solve_lp

pytestmark = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba not installed")


def _tableau(seed, m=12, n=8):
    rng = np.random.default_rng(seed)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = rng.normal(size=(m, n))
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = rng.uniform(0.0, 2.0, size=m)
    T[:m, -1][rng.random(m) < 0.3] = 0.0  # degenerate rows
    T[m, :n] = -rng.normal(size=n)
    return T, np.arange(n, n + m)


@pytest.mark.parametrize("seed", range(25))
def test_simplex_parity(seed):
    T1, b1 = _tableau(seed)
    T2, b2 = T1.copy(), b1.copy()
    allowed = np.ones(T1.shape[1] - 1, dtype=np.bool_)
    s1 = kernels._simplex_iterate_numba(T1, b1, allowed, 1e-10, 1e-10, 10_000)
    s2 = kernels._simplex_iterate_numpy(T2, b2, allowed, 1e-10, 1e-10, 10_000)
    assert int(s1[0]) == int(s2[0]) and int(s1[1]) == int(s2[1])
    np.testing.assert_array_equal(b1, b2)
    np.testing.assert_allclose(T1, T2, atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_rank_parity(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(9, 4)) @ rng.normal(size=(4, 7))
    assert kernels._elimination_rank_numba(M, 1e-10) == kernels._elimination_rank_numpy(M, 1e-10) == 4


def test_env_flag_switches_path(monkeypatch):
    lp = LinearProgram([1.0, 1.0], [[1, 2], [3, 1], [-1, 0], [0, -1]], [4, 6, 0, 0])
    monkeypatch.setenv("SCENARIO_CERT_PURE_NUMPY", "1")
    a = solve_lp(lp)
    monkeypatch.setenv("SCENARIO_CERT_PURE_NUMPY", "0")
    b = solve_lp(lp)
    np.testing.assert_allclose(a.x, b.x, atol=1e-12)
    assert a.pivots == b.pivots

import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from scenariocert.certificates import (
    APOSTERIORI_SET,
    Certificate,
    beta_apriori,
    epsilon_apriori,
    epsilon_explicit,
    epsilon_posteriori,
    log_binom,
    log_survival_posteriori,
    sample_size,
)
from scenariocert.errors import DomainError

mpmath.mp.dps = 50


def mp_eps_posteriori(M, k, beta):
    return 1 - (mpmath.mpf(beta) / (M * mpmath.binomial(M, k))) ** (mpmath.mpf(1) / (M - k))


def test_posteriori_full_support_is_one():
    for M in (1, 7, 1000):
        assert epsilon_posteriori(M, M, 0.3) == 1.0


def test_posteriori_closed_form():
    assert epsilon_posteriori(10, 0, 0.1) == pytest.approx(1 - 0.01 ** 0.1, abs=1e-15)
    assert epsilon_posteriori(10, 0, 0.1) == pytest.approx(0.369043, abs=5e-7)


@pytest.mark.parametrize("M,k", [(50, 3), (1000, 40), (10000, 125), (10000, 9990)])
def test_posteriori_against_high_precision(M, k):
    assert epsilon_posteriori(M, k, 1e-6) == pytest.approx(float(mp_eps_posteriori(M, k, 1e-6)), rel=1e-12)


def test_posteriori_sum_identity_m1000():
    M, beta = 1000, 1e-6
    total = mpmath.fsum(
        mpmath.binomial(M, k) * mpmath.exp((M - k) * log_survival_posteriori(M, k, beta)) for k in range(M)
    )
    assert float(total) == pytest.approx(beta, rel=1e-9)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.1, 2.0])
def test_posteriori_rejects_beta(beta):
    with pytest.raises(DomainError):
        epsilon_posteriori(10, 2, beta)


def test_posteriori_rejects_k_above_m():
    with pytest.raises(DomainError):
        epsilon_posteriori(10, 11, 0.1)


@given(st.integers(2, 3000), st.floats(1e-9, 0.5))
def test_posteriori_monotone_in_k(M, beta):
    ks = sorted({0, M // 3, M // 2, M - 1, M})
    vals = [epsilon_posteriori(M, k, beta) for k in ks]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 50), st.integers(60, 2000), st.floats(1e-9, 0.5))
def test_posteriori_nonincreasing_in_m(k, M, beta):
    assert epsilon_posteriori(M + 1, k, beta) <= epsilon_posteriori(M, k, beta) + 1e-15


def test_log_binom_large_is_finite():
    assert math.isfinite(log_binom(10**6, 5 * 10**5))
    assert math.isfinite(epsilon_posteriori(10**6, 1000, 1e-6))


def test_beta_apriori_examples():
    assert beta_apriori(100, 0.05, 0) == pytest.approx(0.95 ** 100, rel=1e-12)
    assert beta_apriori(100, 0.05, 0) == pytest.approx(0.0059205, abs=1e-7)
    assert beta_apriori(50, 1e-12, 3) == pytest.approx(1.0, abs=1e-9)
    assert beta_apriori(500, 0.0885, 12) <= 1e-6


def test_beta_apriori_against_mpmath():
    M, eps, d = 500, 0.05, 12
    ref = mpmath.fsum(
        mpmath.binomial(M, j) * mpmath.mpf(eps) ** j * (1 - mpmath.mpf(eps)) ** (M - j) for j in range(d + 1)
    )
    assert beta_apriori(M, eps, d) == pytest.approx(float(ref), rel=1e-12)


def test_epsilon_apriori_examples():
    assert epsilon_apriori(100, 0.01, 0) == pytest.approx(1 - 0.01 ** 0.01, abs=1e-12)
    assert epsilon_apriori(100, 0.01, 0) == pytest.approx(0.045007, abs=5e-7)
    assert epsilon_apriori(500, 1e-6, 12) < 0.0885


@given(st.integers(20, 5000), st.floats(1e-9, 0.5), st.integers(0, 15))
def test_epsilon_apriori_round_trip(M, beta, d):
    if d >= M:
        return
    eps = epsilon_apriori(M, beta, d)
    assert beta_apriori(M, eps, d) == pytest.approx(beta, rel=1e-10)


@given(st.integers(50, 5000), st.floats(1e-9, 0.5), st.integers(0, 15))
def test_explicit_dominates_binomial(M, beta, d):
    exp_ = epsilon_explicit(M, beta, d)
    if d < M and 0 < exp_ < 1:
        assert exp_ >= epsilon_apriori(M, beta, d)


def test_explicit_examples():
    assert epsilon_explicit(500, 1e-6, 12) == pytest.approx(0.0885, abs=1e-4)
    assert epsilon_explicit(10, 1.0, 0) == 0.0
    assert epsilon_explicit(1000, 1e-3, 4) == pytest.approx(epsilon_explicit(500, 1e-3, 4) / 2, rel=1e-15)


def test_sample_size_examples():
    assert sample_size(0.1, 0.01, 0) == 44 == math.ceil(math.log(0.01) / math.log(0.9))
    assert sample_size(0.0885, 1e-6, 12) <= 500
    sizes = [sample_size(0.0885, 1e-6, 12 * N) for N in range(10, 51, 10)]
    assert sizes == sorted(set(sizes))


@given(st.floats(0.01, 0.5), st.floats(1e-8, 0.2), st.integers(0, 20))
def test_sample_size_is_minimal_and_monotone(eps, beta, d):
    M = sample_size(eps, beta, d)
    assert beta_apriori(M, eps, d) <= beta
    if M - 1 > d:
        assert beta_apriori(M - 1, eps, d) > beta
    assert sample_size(eps, beta, d + 1) >= M


def test_certificate_roundtrip_and_validation():
    c = Certificate.posteriori(100, 7, 1e-3)
    assert Certificate.from_json(c.to_json()) == c
    assert set(c.to_dict()) == {"kind", "M", "k", "epsilon", "beta"}
    assert c.kind == APOSTERIORI_SET
    with pytest.raises(DomainError):
        Certificate(APOSTERIORI_SET, 5, 5, 0.5, 0.1)
    with pytest.raises(DomainError):
        Certificate("Other", 5, 1, 0.5, 0.1)
    assert Certificate.apriori(10, 1e-6, 3, explicit=True).epsilon == 1.0

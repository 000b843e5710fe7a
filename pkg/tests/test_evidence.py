import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from learnt_harmonic.chains import Chain, ChainStore
from learnt_harmonic.evidence import (
    Evidence,
    EvidenceError,
    EvidenceResult,
    accumulate_chain,
    bayes_factor,
    combine_chains,
    effective_sample_size,
    expected_ratio,
    ln_variance_of_variance,
    result_from_combination,
    sanity_checks,
    taylor_inverse,
    uncorrelated_estimators,
)

from conftest import LN_2PI


class FixedTarget:
    """Stub model returning preset ln phi values in order."""

    def __init__(self, ln_phi):
        self.ln_phi = np.asarray(ln_phi, dtype=float)

    def predict(self, X):
        return self.ln_phi[: len(X)]


class GaussianTarget:
    def __init__(self, scale=1.0):
        self.scale = scale

    def predict(self, X):
        d = X.shape[1]
        return -0.5 * np.sum(X**2, axis=1) / self.scale**2 - 0.5 * d * LN_2PI - d * math.log(self.scale)


def oracle_combination(ln_rho, w):
    """Direct weighted statistics in 50-digit arithmetic, no shift."""
    mpmath.mp.dps = 50
    r = [mpmath.e ** mpmath.mpf(float(x)) for x in ln_rho]
    w = [mpmath.mpf(int(x)) for x in w]
    W = sum(w)
    neff = W**2 / sum(x * x for x in w)
    rho = sum(a * b for a, b in zip(w, r)) / W
    m2 = sum(a * (b - rho) ** 2 for a, b in zip(w, r)) / W
    m4 = sum(a * (b - rho) ** 4 for a, b in zip(w, r)) / W
    s2 = neff / (neff - 1) * m2
    sigma2 = s2 / neff
    kappa = m4 / s2**2
    nu4 = sigma2**2 / neff * (kappa - 1 + 2 / (neff - 1))
    return {k: float(mpmath.log(v)) for k, v in dict(rho=rho, s2=s2, sigma2=sigma2, nu4=nu4).items()} | {
        "kappa": float(kappa),
        "neff": float(neff),
    }


class TestAccumulateChain:
    def test_single_zero_term(self):
        ln_rho, n = accumulate_chain(Chain(np.zeros((1, 1)), [1.7]), FixedTarget([1.7]))
        assert ln_rho == 0.0 and n == 1

    def test_arithmetic_mean(self):
        chain = Chain(np.zeros((2, 1)), [0.0, 0.0])
        ln_rho, _ = accumulate_chain(chain, FixedTarget([math.log(2), math.log(4)]))
        assert math.isclose(math.exp(ln_rho), 3.0, rel_tol=1e-15)

    def test_zero_support_terms_skipped(self):
        chain = Chain(np.zeros((3, 1)), [0.0, 0.0, 0.0])
        ln_rho, _ = accumulate_chain(chain, FixedTarget([math.log(3), -np.inf, -np.inf]))
        assert math.isclose(math.exp(ln_rho), 1.0, rel_tol=1e-15)

    def test_disjoint_support_flagged(self):
        chain = Chain(np.zeros((2, 1)), [0.0, 0.0])
        ln_rho, _ = accumulate_chain(chain, FixedTarget([-np.inf, -np.inf]))
        assert ln_rho == -np.inf
        with pytest.raises(EvidenceError, match="no support"):
            combine_chains([ln_rho, ln_rho], [2, 2])

    def test_optimal_target_terms(self):
        ln_z = -12.345
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 2))
        lnp = -0.5 * np.sum(X**2, axis=1) - LN_2PI + ln_z
        ln_rho, _ = accumulate_chain(Chain(X, lnp), FixedTarget(lnp - ln_z))
        assert math.isclose(ln_rho, -ln_z, rel_tol=1e-14)


class TestEffectiveSampleSize:
    @pytest.mark.parametrize("w,expected", [([7] * 100, 100.0), ([1], 1.0), ([1, 3], 1.6)])
    def test_values(self, w, expected):
        assert math.isclose(effective_sample_size(w), expected, rel_tol=1e-15)

    @pytest.mark.parametrize("w", [[], [1, 0], [2, -1]])
    def test_invalid(self, w):
        with pytest.raises(EvidenceError):
            effective_sample_size(w)


class TestCombineChains:
    def test_equal_values(self):
        c = combine_chains([2.5] * 5, [10] * 5)
        assert c.ln_rho == 2.5
        assert c.ln_s2 == -np.inf and c.ln_sigma2 == -np.inf

    def test_two_values(self):
        a, b = 3.0, 5.0
        c = combine_chains([math.log(a), math.log(b)], [4, 4])
        assert math.isclose(math.exp(c.ln_rho), (a + b) / 2, rel_tol=1e-15)
        assert math.isclose(math.exp(c.ln_s2), (a - b) ** 2 / 2, rel_tol=1e-14)
        assert c.n_eff == 2.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_extended_precision_oracle(self, seed):
        rng = np.random.default_rng(seed)
        C = int(rng.integers(3, 40))
        ln_rho = rng.normal(200.0 * (seed - 2), 0.3, size=C)
        w = rng.integers(1, 1000, size=C)
        c = combine_chains(ln_rho, w)
        o = oracle_combination(ln_rho, w)
        for mine, theirs in [(c.ln_rho, o["rho"]), (c.ln_s2, o["s2"]), (c.ln_sigma2, o["sigma2"]), (c.ln_nu4, o["nu4"])]:
            assert abs(mine - theirs) < 1e-10  # relative 1e-10 on the linear scale
        assert math.isclose(c.kappa, o["kappa"], rel_tol=1e-10)
        assert math.isclose(c.n_eff, o["neff"], rel_tol=1e-12)

    def test_single_chain(self):
        with pytest.raises(EvidenceError):
            combine_chains([1.0], [10])

    def test_nonfinite(self):
        with pytest.raises(EvidenceError):
            combine_chains([1.0, np.inf], [1, 1])
        with pytest.raises(EvidenceError):
            combine_chains([1.0, np.nan], [1, 1])

    def test_nu4_independent_path(self):
        rng = np.random.default_rng(3)
        c = combine_chains(rng.normal(0, 0.2, 30), rng.integers(50, 100, 30))
        assert c.ln_nu4 == ln_variance_of_variance(c.ln_sigma2, c.kappa, c.n_eff)
        s2 = math.exp(c.ln_s2)
        linear = (s2 / c.n_eff) ** 2 / c.n_eff * (c.kappa - 1 + 2 / (c.n_eff - 1))
        assert math.isclose(math.exp(c.ln_nu4), linear, rel_tol=1e-12)


class TestShiftInvariance:
    ln_rho = np.random.default_rng(11).normal(0.0, 0.1, 25)
    w = np.random.default_rng(12).integers(100, 200, 25)

    @pytest.mark.parametrize("offset", [-500.0, 500.0])
    def test_data_offset(self, offset):
        a = combine_chains(self.ln_rho, self.w)
        b = combine_chains(self.ln_rho + offset, self.w)
        assert abs((b.ln_rho - offset) - a.ln_rho) < 1e-12
        assert abs((b.ln_sigma2 - 2 * offset) - a.ln_sigma2) < 1e-12
        assert abs((b.ln_nu4 - 4 * offset) - a.ln_nu4) < 1e-12
        assert math.isclose(a.kappa, b.kappa, rel_tol=1e-12)

    @pytest.mark.parametrize("delta", [-100.0, -10.0, 10.0, 60.0])
    def test_explicit_shift(self, delta):
        a = combine_chains(self.ln_rho, self.w)
        b = combine_chains(self.ln_rho, self.w, shift=-np.max(self.ln_rho) + delta)
        for x, y in [(a.ln_rho, b.ln_rho), (a.ln_sigma2, b.ln_sigma2), (a.ln_nu4, b.ln_nu4)]:
            assert abs(x - y) < 1e-12
        assert math.isclose(a.kappa, b.kappa, rel_tol=1e-12)


class TestUncorrelated:
    def test_constant_terms(self):
        c = 0.7
        u = uncorrelated_estimators(np.full(10, math.log(c)), np.zeros(10))
        np.testing.assert_allclose(np.exp(u.ln_moments), c ** np.arange(1, 5), rtol=1e-14)
        assert u.ln_sigma2 == -np.inf

    def test_optimal_target(self):
        ln_z = 4.2
        lnp = np.random.default_rng(0).normal(size=100)
        u = uncorrelated_estimators(lnp - ln_z, lnp)
        np.testing.assert_allclose(u.ln_moments, -ln_z * np.arange(1, 5), atol=1e-13)
        assert u.ln_sigma2 < 2 * u.ln_rho - 60  # zero to machine precision

    def test_unbiased_second_moment(self):
        # terms ~ Exp(1): mu_2 = 2
        rng = np.random.default_rng(5)
        vals = np.array([
            math.exp(uncorrelated_estimators(np.log(rng.exponential(size=50)), np.zeros(50)).ln_moments[1])
            for _ in range(10_000)
        ])
        assert abs(vals.mean() - 2.0) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)

    def test_variance_of_variance_vs_empirical(self):
        rng = np.random.default_rng(8)
        N = 400
        sig, vs = [], []
        for _ in range(3000):
            u = uncorrelated_estimators(np.log(rng.exponential(size=N)), np.zeros(N))
            sig.append(math.exp(u.ln_sigma2))
            vs.append(math.exp(u.ln_var_sigma2))
        assert math.isclose(np.mean(vs), np.var(sig, ddof=1), rel_tol=0.2)

    def test_needs_two_samples(self):
        with pytest.raises(EvidenceError):
            uncorrelated_estimators([0.0], [0.0])


class TestTaylor:
    def test_zero_variance(self):
        m, v = taylor_inverse(math.log(4.0), -np.inf)
        assert math.isclose(m, -math.log(4.0)) and v == -np.inf

    def test_plug_in(self):
        m, v = taylor_inverse(0.0, math.log(0.01))
        assert math.isclose(math.exp(m), 1.01, rel_tol=1e-14)
        assert math.isclose(math.exp(v), 0.01, rel_tol=1e-14)

    def test_rho_zero(self):
        with pytest.raises(EvidenceError):
            taylor_inverse(-np.inf, 0.0)

    def test_lognormal_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.lognormal(1.3, 0.05, 2_000_000)
        m, v = taylor_inverse(math.log(x.mean()), math.log(x.var()))
        assert math.isclose(math.exp(m), np.mean(1 / x), rel_tol=0.05)
        assert math.isclose(math.exp(v), np.var(1 / x), rel_tol=0.05)


def _result(ln_rho, ln_sigma2):
    from learnt_harmonic.evidence import ChainCombination

    return result_from_combination(ChainCombination(ln_rho, ln_sigma2, ln_sigma2, -np.inf, 3.0, 100.0))


class TestBayesFactor:
    def test_equal(self):
        bf = bayes_factor(_result(0.3, -np.inf), _result(0.3, -np.inf))
        assert bf.ln_bf_mean == 0.0 and bf.bf_var == 0.0

    def test_identical_with_noise(self):
        r = _result(0.3, math.log(0.01))
        bf = bayes_factor(r, r)
        assert bf.ln_bf == 0.0
        assert math.isclose(bf.ln_bf_mean, math.log1p(0.01 / math.exp(0.6)), rel_tol=1e-14)

    def test_half(self):
        bf = bayes_factor(_result(math.log(2), -np.inf), _result(0.0, -np.inf))
        assert math.isclose(math.exp(bf.ln_bf_mean), 0.5, rel_tol=1e-15)

    def test_lognormal_oracle(self):
        rng = np.random.default_rng(4)
        r1 = rng.lognormal(0.5, 0.04, 2_000_000)
        r2 = rng.lognormal(-0.2, 0.03, 2_000_000)
        bf = bayes_factor(
            _result(math.log(r1.mean()), math.log(r1.var())), _result(math.log(r2.mean()), math.log(r2.var()))
        )
        ratio = r2 / r1
        assert math.isclose(math.exp(bf.ln_bf_mean), ratio.mean(), rel_tol=1e-3)
        assert math.isclose(bf.bf_var, ratio.var(), rel_tol=0.1)

    def test_non_finite(self):
        with pytest.raises(EvidenceError):
            bayes_factor(_result(-np.inf, 0.0), _result(0.0, 0.0))


class TestSanityChecks:
    def test_expected_ratio(self):
        assert round(expected_ratio(100), 4) == 0.1421
        assert expected_ratio(3) == 1.0

    def test_gaussian_reference_no_flags(self):
        neff, ln_sigma2 = 100.0, math.log(0.01)
        ln_nu4 = ln_variance_of_variance(ln_sigma2, 3.0, neff)
        d = sanity_checks(3.0, ln_sigma2, ln_nu4, neff)
        assert not d.kurtosis_flag and not d.ratio_flag
        assert d.nu_over_sigma_ratio < 2 * d.expected_ratio

    def test_heavy_tails_flagged(self):
        neff, ln_sigma2 = 100.0, math.log(0.01)
        d = sanity_checks(50.0, ln_sigma2, ln_variance_of_variance(ln_sigma2, 50.0, neff), neff)
        assert d.kurtosis_flag and d.ratio_flag


def _gaussian_chains(rng, C, N, ln_z):
    X = rng.standard_normal((C, N, 1))
    return ChainStore.from_arrays(X, -0.5 * X[..., 0] ** 2 - 0.5 * LN_2PI + ln_z)


class TestEvidence:
    def test_zero_variance_optimal_target(self):
        ln_z = 300.0
        store = _gaussian_chains(np.random.default_rng(0), 10, 100, ln_z)
        res = Evidence(GaussianTarget(1.0)).add_chains(store).compute()
        assert abs(res.ln_rho_hat + ln_z) < 1e-12
        assert res.ln_sigma2 == -np.inf or res.ln_sigma2 - 2 * res.ln_rho_hat < -50

    def test_add_chain_matches_add_chains(self):
        store = _gaussian_chains(np.random.default_rng(1), 6, 40, 0.0)
        a = Evidence(GaussianTarget(0.8)).add_chains(store).compute()
        ev = Evidence(GaussianTarget(0.8))
        for c in store.chains:
            ev.add_chain(c)
        b = ev.compute()
        assert math.isclose(a.ln_rho_hat, b.ln_rho_hat, rel_tol=1e-14)
        assert math.isclose(a.ln_sigma2, b.ln_sigma2, rel_tol=1e-12)

    def test_unbiased_and_variance_calibrated(self):
        # N(0,1) posterior with ln z = 2, target N(0, 0.8^2)
        rng = np.random.default_rng(123)
        ln_z, target = 2.0, GaussianTarget(0.8)
        rhos, sig2 = [], []
        for _ in range(1000):
            res = Evidence(target).add_chains(_gaussian_chains(rng, 40, 25, ln_z)).compute()
            rhos.append(math.exp(res.ln_rho_hat + ln_z))
            sig2.append(math.exp(res.ln_sigma2 + 2 * ln_z))
        rhos = np.array(rhos)
        assert abs(rhos.mean() - 1.0) < 3 * rhos.std(ddof=1) / math.sqrt(rhos.size)
        first100 = slice(0, 100)
        assert math.isclose(np.mean(sig2[first100]), rhos[first100].var(ddof=1), rel_tol=0.3)

    def test_result_round_trip(self):
        store = _gaussian_chains(np.random.default_rng(2), 5, 30, -1.0)
        res = Evidence(GaussianTarget(0.9)).add_chains(store).compute(provenance={"seed": 1})
        back = EvidenceResult.from_dict(res.to_dict())
        assert back == res


@settings(max_examples=50, deadline=None)
@given(
    vals=st.lists(st.floats(-5, 5), min_size=2, max_size=30),
    offset=st.floats(-600, 600),
)
def test_combine_offset_property(vals, offset):
    lr = np.array(vals)
    w = np.arange(1, lr.size + 1)
    a, b = combine_chains(lr, w), combine_chains(lr + offset, w)
    assert abs(b.ln_rho - offset - a.ln_rho) < 1e-11
    if np.isfinite(a.ln_sigma2) and a.ln_sigma2 - 2 * a.ln_rho > -40:
        assert abs(b.ln_sigma2 - 2 * offset - a.ln_sigma2) < 1e-9

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import qmc
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from learnt_harmonic.chains import ChainStore, split_by_chain
from learnt_harmonic.targets import (
    CrossValidationPlan,
    DegenerateCovarianceError,
    HyperSphere,
    KernelDensityEstimate,
    ModifiedGaussianMixture,
    SelectionError,
    cross_validate,
    fit_hypersphere,
    fit_kde,
    fit_mgmm,
    hypersphere_ln_volume,
    ln_phi,
    load_model,
    mgmm_objective_and_gradients,
    model_from_dict,
    save_model,
)
from learnt_harmonic.targets.hypersphere import ln_mu2_at_radius
from learnt_harmonic.targets.selection import held_out_ln_mu2

from conftest import bimodal_store, gaussian_store


def mc_integral(model, lo, hi, m=20, seed=0):
    """Scrambled-Sobol estimate of the integral of phi over a box."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    X = qmc.scale(qmc.Sobol(lo.size, seed=seed).random_base2(m), lo, hi)
    vals = np.exp(model.predict(X))
    vol = np.prod(hi - lo)
    return vol * vals.mean(), vol * vals.std() / math.sqrt(X.shape[0])


class TestHypersphereVolume:
    def test_unit_disc(self):
        assert math.isclose(hypersphere_ln_volume(2, 1.0, np.eye(2)), math.log(math.pi), rel_tol=1e-15)

    def test_interval(self):
        assert math.isclose(hypersphere_ln_volume(1, 2.0, [[1.0]]), math.log(4.0), rel_tol=1e-15)

    def test_monte_carlo_5d(self):
        var = np.array([0.5, 0.6, 0.7, 0.8, 0.9])
        R = 1.3
        half = R * np.sqrt(var)
        rng = np.random.default_rng(0)
        X = rng.uniform(-half, half, size=(2_000_000, 5))
        frac = np.mean(np.sum(X**2 / var, axis=1) < R**2)
        mc = frac * np.prod(2 * half)
        assert math.isclose(math.exp(hypersphere_ln_volume(5, R, np.diag(var))), mc, rel_tol=0.01)

    @pytest.mark.parametrize("R", [0.0, -1.0])
    def test_non_positive_radius(self, R):
        with pytest.raises(ValueError):
            hypersphere_ln_volume(2, R, np.eye(2))


class TestHypersphereFit:
    def test_beats_coarse_grid(self):
        store = gaussian_store(nchains=20, nsamples=500, seed=1)
        m = fit_hypersphere(store)
        X, y = store.samples, store.ln_posterior
        best = ln_mu2_at_radius(X, y, m.radius_, m.mean_, m.covariance_)
        grid = [ln_mu2_at_radius(X, y, r, m.mean_, m.covariance_) for r in np.arange(1, 51) / 10]
        assert best <= min(grid) + 1e-12

    def test_grid_optimal_500(self):
        store = gaussian_store(nchains=10, nsamples=400, seed=2, ndim=3)
        m = fit_hypersphere(store)
        X, y = store.samples, store.ln_posterior
        r = np.sqrt(np.sum((X - m.mean_) ** 2 / np.diag(m.covariance_), axis=1))
        grid = np.linspace(r.min(), 1.2 * r.max(), 500)
        vals = [ln_mu2_at_radius(X, y, R, m.mean_, m.covariance_) for R in grid]
        assert m.fit_metadata_["ln_mu2"] <= min(vals) + math.log(1.001)

    def test_identical_samples(self):
        X = np.ones((3, 10, 2))
        with pytest.raises(DegenerateCovarianceError):
            fit_hypersphere(ChainStore.from_arrays(X, np.zeros((3, 10))))

    def test_uniform_1d(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, size=(10, 200, 1))
        store = ChainStore.from_arrays(X, np.zeros((10, 200)))
        m = fit_hypersphere(store)
        Xf, y = store.samples, store.ln_posterior
        sd = math.sqrt(m.covariance_[0, 0])
        grid = np.linspace(1e-3, 0.5, 5000) / sd
        vals = [ln_mu2_at_radius(Xf, y, R, m.mean_, m.covariance_) for R in grid]
        assert m.fit_metadata_["ln_mu2"] <= min(vals) + 1e-12
        # the optimum encloses (almost) all of the sampled support
        half_width = np.max(np.abs(Xf[:, 0] - m.mean_[0]))
        assert math.isclose(m.radius_ * sd, half_width, rel_tol=1e-3)

    def test_ln_phi_at_centre(self):
        m = fit_hypersphere(gaussian_store(seed=4))
        assert ln_phi(m, m.mean_) == -m.ln_volume_

    def test_fixed_radius_and_full_covariance(self):
        store = gaussian_store(seed=5)
        m = HyperSphere(covariance_type="full", radius=1.5).fit_chains(store)
        assert m.radius_ == 1.5
        assert m.covariance_[0, 1] != 0.0


class TestMGMMObjective:
    @staticmethod
    def instance(seed, d=2, K=3, n=20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d))
        centers = rng.normal(size=(K, d))
        variances = rng.uniform(0.5, 2.0, size=(K, d))
        z = rng.normal(size=K)
        s = rng.uniform(0.6, 1.5, size=K)
        y = rng.normal(-2.0, 0.5, size=n)
        return X, y, centers, variances, z, s, float(rng.uniform(0, 2))

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        X, y, c, v, z, s, lam = self.instance(seed)
        g = mgmm_objective_and_gradients(X, y, c, v, z, s, lam)
        h = 1e-5
        for k in range(z.size):
            e = np.zeros_like(z)
            e[k] = h
            fz = (mgmm_objective_and_gradients(X, y, c, v, z + e, s, lam).cost
                  - mgmm_objective_and_gradients(X, y, c, v, z - e, s, lam).cost) / (2 * h)
            fs = (mgmm_objective_and_gradients(X, y, c, v, z, s + e, lam).cost
                  - mgmm_objective_and_gradients(X, y, c, v, z, s - e, lam).cost) / (2 * h)
            scale = max(abs(g.cost), 1e-300)
            assert abs(g.grad_z[k] - fz) <= 1e-4 * max(abs(fz), 1e-6 * scale)
            assert abs(g.grad_s[k] - fs) <= 1e-4 * max(abs(fs), 1e-6 * scale)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), K=st.integers(1, 5))
    def test_softmax_identity(self, seed, K):
        X, y, c, v, z, s, lam = self.instance(seed, K=K)
        g = mgmm_objective_and_gradients(X, y, c, v, z, s, lam)
        assert abs(g.grad_z.sum()) <= 1e-12 * max(1.0, np.abs(g.grad_z).max(), g.cost)

    def test_far_batch_zero_gradient(self):
        X, y, c, v, z, s, _ = self.instance(0)
        g = mgmm_objective_and_gradients(X + 1e4, y, c, v, z, s, 0.0)
        assert g.cost == 0.0
        np.testing.assert_array_equal(g.grad_z, 0.0)
        np.testing.assert_array_equal(g.grad_s, 0.0)

    def test_regulariser_in_gradient(self):
        X, y, c, v, z, s, _ = self.instance(1)
        g0 = mgmm_objective_and_gradients(X, y, c, v, z, s, 0.0)
        g1 = mgmm_objective_and_gradients(X, y, c, v, z, s, 2.0)
        np.testing.assert_allclose(g1.grad_s - g0.grad_s, 2.0 * s, rtol=1e-12)
        assert math.isclose(g1.cost - g0.cost, np.sum(s**2), rel_tol=1e-12)

    def test_non_positive_scale(self):
        X, y, c, v, z, s, lam = self.instance(2)
        s[1] = 0.0
        with pytest.raises(ValueError):
            mgmm_objective_and_gradients(X, y, c, v, z, s, lam)


class TestMGMMFit:
    def test_single_component_weight(self):
        m = fit_mgmm(gaussian_store(seed=6), n_components=1)
        assert m.weights_.tolist() == [1.0]
        m.z_ = np.array([17.0])
        assert m.weights_.tolist() == [1.0]

    def test_mode_height(self):
        m = fit_mgmm(gaussian_store(seed=7), n_components=1)
        m.scales_ = np.array([1.0])
        d = 2
        expected = -0.5 * d * math.log(2 * math.pi) - 0.5 * np.sum(np.log(m.variances_[0]))
        assert math.isclose(ln_phi(m, m.centers_[0]), expected, rel_tol=1e-14)

    def test_two_blobs(self):
        store = bimodal_store(sep=8.0, seed=8)
        m = fit_mgmm(store, n_components=2)
        X = store.samples
        blob_means = [X[X[:, 0] < 0].mean(axis=0), X[X[:, 0] > 0].mean(axis=0)]
        centers = m.centers_[np.argsort(m.centers_[:, 0])]
        for c, b in zip(centers, blob_means):
            assert np.linalg.norm(c - b) < 0.1

    def test_regularisation_shrinks_scales(self):
        store = bimodal_store(sep=8.0, seed=9)
        small = fit_mgmm(store, n_components=2, reg=0.0)
        large = fit_mgmm(store, n_components=2, reg=100.0)
        assert np.all(large.scales_ < small.scales_)

    def test_objective_not_increased(self):
        m = fit_mgmm(gaussian_store(seed=10), n_components=2, learning_rate=0.05)
        assert m.fit_metadata_["final_objective"] <= m.fit_metadata_["initial_objective"]

    def test_too_few_samples(self):
        store = ChainStore.from_arrays(np.random.default_rng(0).normal(size=(1, 2, 2)), np.zeros((1, 2)))
        with pytest.raises(ValueError):
            fit_mgmm(store, n_components=3)

    def test_sklearn_protocol(self):
        m = ModifiedGaussianMixture(n_components=2, reg=0.5)
        assert clone(m).get_params() == m.get_params()
        with pytest.raises(NotFittedError):
            m.predict(np.zeros((1, 2)))


class TestKDE:
    def test_single_sample_indicator(self):
        m = KernelDensityEstimate(radius=1.0).fit(np.zeros((1, 2)), covariance=np.eye(2))
        assert m.predict(np.zeros((1, 2)))[0] == -m.ln_kernel_volume_
        assert math.isclose(m.ln_kernel_volume_, math.log(math.pi), rel_tol=1e-15)
        assert m.predict(np.array([[2.0, 0.0]]))[0] == -np.inf

    def test_brute_force_counts(self):
        store = gaussian_store(nchains=4, nsamples=300, seed=11)
        m = KernelDensityEstimate(radius=0.4).fit_chains(store)
        Q = np.random.default_rng(0).normal(size=(200, 2))
        var = np.diag(m.covariance_)
        T = store.samples
        counts = np.array([np.sum(np.sum((q - T) ** 2 / var, axis=1) < 0.4**2) for q in Q])
        with np.errstate(divide="ignore"):
            expected = np.log(counts / T.shape[0]) - m.ln_kernel_volume_
        np.testing.assert_allclose(m.predict(Q), expected, rtol=1e-12)

    def test_radius_selected_by_cv_on_rosenbrock(self):
        from learnt_harmonic.benchmarks import rosenbrock_problem
        from learnt_harmonic.sampler import SamplerConfig, run_sampler

        prob = rosenbrock_problem(with_ground_truth=False)
        cfg = SamplerConfig(nwalkers=20, nsamples=300, nburn=200, seed=0)
        store = run_sampler(prob.ln_posterior, cfg, prob.initial_positions(20, 0), vectorized=True)
        plan = CrossValidationPlan(nfolds=2, seed=1)
        m = fit_kde(store, [0.01, 0.1, 1.0], plan)
        cv = m.fit_metadata_["cv"]
        scores = []
        for r in (0.01, 0.1, 1.0):
            fold = []
            for tr, te in plan.folds(store.nchains):
                km = KernelDensityEstimate(radius=r).fit_chains(store.subset(tr))
                fold.append(held_out_ln_mu2(km, store.subset(te)))
            scores.append(np.logaddexp.reduce(fold) - math.log(len(fold)))
        np.testing.assert_allclose(cv["scores"], scores, rtol=1e-12)
        assert m.radius == [0.01, 0.1, 1.0][int(np.argmin(scores))]

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            fit_kde(gaussian_store(), [])
        with pytest.raises(ValueError):
            fit_kde(gaussian_store(), [0.1, -1.0])


class TestNormalisation:
    """Each family integrates to one (d = 2) by Monte Carlo."""

    store = gaussian_store(nchains=10, nsamples=300, seed=12)

    @pytest.mark.parametrize(
        "model",
        [HyperSphere(), ModifiedGaussianMixture(n_components=2), KernelDensityEstimate(radius=0.5)],
        ids=["hypersphere", "mgmm", "kde"],
    )
    def test_integrates_to_one(self, model):
        m = clone(model).fit_chains(self.store)
        X = self.store.samples
        pad = 4.0 if m.kind != "mgmm" else 7.0
        val, _ = mc_integral(m, X.min(axis=0) - pad, X.max(axis=0) + pad)
        assert abs(val - 1.0) < 0.01


class TestNarrowSupport:
    def test_hypersphere_and_kde(self):
        sp = split_by_chain(gaussian_store(nchains=20, nsamples=200, seed=13), 0.5, 0)
        T = sp.training.samples
        for m in (fit_hypersphere(sp.training), KernelDensityEstimate(radius=0.3).fit_chains(sp.training)):
            Q = sp.inference.samples
            supported = Q[np.isfinite(m.predict(Q))]
            assert supported.shape[0] > 0
            var = np.diag(m.covariance_)
            if m.kind == "hypersphere":
                inside = np.sum((T - m.mean_) ** 2 / var, axis=1) < m.radius_**2
                assert inside.any()
            else:
                for q in supported[:500]:
                    assert np.min(np.sum((q - T) ** 2 / var, axis=1)) < m.radius**2


class TestCrossValidation:
    def test_single_candidate(self):
        res = cross_validate(gaussian_store(), [HyperSphere()])
        assert res.best_index == 0 and isinstance(res.best_estimator, HyperSphere)

    def test_bimodal_prefers_mixture(self):
        res = cross_validate(
            bimodal_store(sep=8.0, seed=14), [HyperSphere(), ModifiedGaussianMixture(n_components=2)]
        )
        assert res.best_index == 1
        assert res.scores[1] < res.scores[0]

    def test_infinite_score_never_selected(self):
        res = cross_validate(gaussian_store(), [KernelDensityEstimate(radius=1e-9), HyperSphere()])
        assert res.scores[0] == np.inf and res.best_index == 1

    def test_all_fail(self):
        with pytest.raises(SelectionError):
            cross_validate(gaussian_store(), [KernelDensityEstimate(radius=1e-9)])

    def test_tie_goes_to_first(self):
        res = cross_validate(gaussian_store(), [HyperSphere(), HyperSphere()])
        assert res.best_index == 0

    def test_folds_partition_chains(self):
        folds = CrossValidationPlan(nfolds=3, seed=2).folds(10)
        held = np.concatenate([te for _, te in folds])
        np.testing.assert_array_equal(np.sort(held), np.arange(10))
        for tr, te in folds:
            assert not set(tr) & set(te)

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            CrossValidationPlan(nfolds=1)
        with pytest.raises(ValueError):
            CrossValidationPlan(nfolds=5).folds(3)


class TestSerialisation:
    @pytest.mark.parametrize(
        "model",
        [HyperSphere(), ModifiedGaussianMixture(n_components=2), KernelDensityEstimate(radius=0.5)],
        ids=["hypersphere", "mgmm", "kde"],
    )
    def test_round_trip(self, model, tmp_path):
        store = gaussian_store(nchains=4, nsamples=100, seed=15)
        m = clone(model).fit_chains(store)
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        Q = np.random.default_rng(1).normal(size=(50, 2))
        np.testing.assert_array_equal(back.predict(Q), m.predict(Q))
        assert back.get_params() == m.get_params()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            model_from_dict({"kind": "flow", "params": {}, "state": {}})

    def test_unfitted_ln_phi(self):
        with pytest.raises(NotFittedError):
            ln_phi(HyperSphere(), np.zeros(2))

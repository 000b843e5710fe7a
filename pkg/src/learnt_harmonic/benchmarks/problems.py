"""Benchmark posteriors: likelihoods, priors and reference evidences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
from scipy.special import gammaln, ndtr

from .quadrature import quadrature_ln_z

LN_2PI = math.log(2.0 * math.pi)

LnFn = Callable[[np.ndarray], np.ndarray]


def _as_2d(theta) -> tuple[np.ndarray, bool]:
    theta = np.asarray(theta, dtype=np.float64)
    single = theta.ndim == 1
    return (theta[None, :] if single else theta), single


def _vectorised(fn):
    """Let a row-wise ``(n, d) -> (n,)`` function also accept one point."""

    def wrapper(theta, *args, **kwargs):
        X, single = _as_2d(theta)
        out = fn(X, *args, **kwargs)
        return float(out[0]) if single else out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def box_ln_prior(theta, bounds):
    """Uniform log-density on a box, ``-inf`` outside (closed box)."""
    X, single = _as_2d(theta)
    bounds = np.asarray(bounds, dtype=np.float64)
    inside = np.all((X >= bounds[:, 0]) & (X <= bounds[:, 1]), axis=1)
    out = np.where(inside, -float(np.sum(np.log(bounds[:, 1] - bounds[:, 0]))), -np.inf)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class GroundTruth:
    kind: str  # "analytic" or "quadrature"
    ln_z: float


@dataclass(frozen=True, eq=False)
class BenchmarkProblem:
    """A posterior ``L * pi`` with optional reference evidence.

    ``ln_likelihood`` and ``ln_prior`` accept one point or an ``(n, d)``
    array. ``initial`` draws starting walkers: ``initial(n, rng)``.
    """

    name: str
    ndim: int
    ln_likelihood: LnFn
    ln_prior: LnFn
    bounds: np.ndarray | None = None
    ground_truth: GroundTruth | None = None
    initial: Callable | None = None
    info: dict = field(default_factory=dict)

    def ln_posterior(self, theta):
        """Unnormalised ln[L pi]; ``-inf`` outside the prior support."""
        X, single = _as_2d(theta)
        lp = np.asarray(self.ln_prior(X), dtype=np.float64)
        out = np.full(X.shape[0], -np.inf)
        ok = np.isfinite(lp)
        if np.any(ok):
            out[ok] = lp[ok] + np.asarray(self.ln_likelihood(X[ok]), dtype=np.float64)
        return float(out[0]) if single else out

    def initial_positions(self, nwalkers: int, seed: int = 0, max_tries: int = 100) -> np.ndarray:
        """Starting walkers with finite ln-posterior."""
        rng = np.random.default_rng(seed)
        draw = self.initial or (lambda n, r: r.uniform(self.bounds[:, 0], self.bounds[:, 1], (n, self.ndim)))
        X = draw(nwalkers, rng)
        for _ in range(max_tries):
            bad = ~np.isfinite(self.ln_posterior(X))
            if not np.any(bad):
                return X
            X[bad] = draw(int(bad.sum()), rng)
        raise RuntimeError(f"could not draw {nwalkers} finite initial positions for {self.name}")


# -- Rosenbrock and Rastrigin ----------------------------------------------

ROSENBROCK_BOUNDS = np.array([[-10.0, 10.0], [-5.0, 15.0]])
RASTRIGIN_BOUNDS = np.array([[-6.0, 6.0], [-6.0, 6.0]])


@_vectorised
def rosenbrock_ln_likelihood(X):
    """``-sum[100 (x_{i+1} - x_i^2)^2 + (x_i - 1)^2]``."""
    return -np.sum(100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (X[:, :-1] - 1.0) ** 2, axis=1)


@_vectorised
def rastrigin_ln_likelihood(X):
    """``-[10 d + sum(x_i^2 - 10 cos 2 pi x_i)]``."""
    d = X.shape[1]
    return -(10.0 * d + np.sum(X**2 - 10.0 * np.cos(2.0 * np.pi * X), axis=1))


@_vectorised
def rosenbrock_ln_posterior(X):
    return box_ln_prior(X, ROSENBROCK_BOUNDS) + rosenbrock_ln_likelihood(X)


@_vectorised
def rastrigin_ln_posterior(X):
    return box_ln_prior(X, RASTRIGIN_BOUNDS) + rastrigin_ln_likelihood(X)


_QUADRATURE_CACHE: dict = {}


def cached_quadrature_ln_z(key, ln_fn, bounds, **kwargs):
    if key not in _QUADRATURE_CACHE:
        _QUADRATURE_CACHE[key] = quadrature_ln_z(ln_fn, bounds, **kwargs)
    return _QUADRATURE_CACHE[key]


def rosenbrock_problem(with_ground_truth: bool = True) -> BenchmarkProblem:
    gt = None
    if with_ground_truth:
        q = cached_quadrature_ln_z("rosenbrock", rosenbrock_ln_posterior, ROSENBROCK_BOUNDS, start_panels=64)
        gt = GroundTruth("quadrature", q.ln_z)
    return BenchmarkProblem(
        "rosenbrock",
        2,
        rosenbrock_ln_likelihood,
        partial(box_ln_prior, bounds=ROSENBROCK_BOUNDS),
        ROSENBROCK_BOUNDS,
        gt,
        initial=lambda n, rng: np.array([1.0, 1.0]) + 0.5 * rng.standard_normal((n, 2)),
    )


def rastrigin_problem(with_ground_truth: bool = True) -> BenchmarkProblem:
    gt = None
    if with_ground_truth:
        q = cached_quadrature_ln_z("rastrigin", rastrigin_ln_posterior, RASTRIGIN_BOUNDS, start_panels=32)
        gt = GroundTruth("quadrature", q.ln_z)
    return BenchmarkProblem(
        "rastrigin",
        2,
        rastrigin_ln_likelihood,
        partial(box_ln_prior, bounds=RASTRIGIN_BOUNDS),
        RASTRIGIN_BOUNDS,
        gt,
        initial=lambda n, rng: rng.uniform(-6.0, 6.0, (n, 2)),
    )


# -- Normal-Gamma ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormalGammaSpec:
    """Gaussian data with unknown mean and precision under a Normal-Gamma prior.

    ``mu | tau ~ N(mu0, 1/(tau0 tau))`` and ``tau ~ Gamma(a0, rate=b0)``.
    """

    y: np.ndarray
    tau0: float
    mu0: float = 0.0
    a0: float = 1e-3
    b0: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64).reshape(-1))
        if not (self.a0 > 0 and self.b0 > 0 and self.tau0 > 0):
            raise ValueError("a0, b0 and tau0 must be positive")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def ybar(self) -> float:
        return float(self.y.mean()) if self.n else 0.0

    @property
    def s2(self) -> float:
        """Biased sample variance ``(1/n) sum (y - ybar)^2``."""
        return float(np.mean((self.y - self.ybar) ** 2)) if self.n else 0.0


def normal_gamma_data(n: int = 100, seed: int = 0, mu: float = 0.0, tau: float = 1.0) -> np.ndarray:
    return mu + np.random.default_rng(seed).standard_normal(n) / math.sqrt(tau)


def normal_gamma_ln_prior(spec: NormalGammaSpec, theta):
    X, single = _as_2d(theta)
    mu, tau = X[:, 0], X[:, 1]
    out = np.full(X.shape[0], -np.inf)
    ok = tau > 0
    m, t = mu[ok], tau[ok]
    out[ok] = (
        0.5 * (math.log(spec.tau0) + np.log(t) - LN_2PI)
        - 0.5 * spec.tau0 * t * (m - spec.mu0) ** 2
        + spec.a0 * math.log(spec.b0)
        - gammaln(spec.a0)
        + (spec.a0 - 1.0) * np.log(t)
        - spec.b0 * t
    )
    return float(out[0]) if single else out


def normal_gamma_ln_likelihood(spec: NormalGammaSpec, theta):
    X, single = _as_2d(theta)
    mu, tau = X[:, 0], X[:, 1]
    out = np.full(X.shape[0], -np.inf)
    ok = tau > 0
    if spec.n == 0:
        out[ok] = 0.0
    else:
        m, t = mu[ok], tau[ok]
        out[ok] = 0.5 * spec.n * (np.log(t) - LN_2PI) - 0.5 * t * spec.n * (spec.s2 + (spec.ybar - m) ** 2)
    return float(out[0]) if single else out


def normal_gamma_ln_posterior(spec: NormalGammaSpec, theta):
    """ln prior + ln likelihood at ``theta = (mu, tau)``; ``-inf`` for ``tau <= 0``."""
    X, single = _as_2d(theta)
    out = normal_gamma_ln_prior(spec, X) + normal_gamma_ln_likelihood(spec, X)
    return float(out[0]) if single else out


def normal_gamma_posterior_params(spec: NormalGammaSpec) -> dict:
    n = spec.n
    tau_n = spec.tau0 + n
    mu_n = (spec.tau0 * spec.mu0 + n * spec.ybar) / tau_n
    a_n = spec.a0 + 0.5 * n
    b_n = spec.b0 + 0.5 * n * spec.s2 + spec.tau0 * n * (spec.ybar - spec.mu0) ** 2 / (2.0 * tau_n)
    return {"tau_n": tau_n, "mu_n": mu_n, "a_n": a_n, "b_n": b_n}


def normal_gamma_analytic_ln_z(spec: NormalGammaSpec) -> float:
    p = normal_gamma_posterior_params(spec)
    return (
        -0.5 * spec.n * LN_2PI
        + gammaln(p["a_n"])
        - gammaln(spec.a0)
        + spec.a0 * math.log(spec.b0)
        - p["a_n"] * math.log(p["b_n"])
        + 0.5 * (math.log(spec.tau0) - math.log(p["tau_n"]))
    )


def normal_gamma_problem(tau0: float, n: int = 100, seed: int = 0, **prior) -> BenchmarkProblem:
    spec = NormalGammaSpec(normal_gamma_data(n, seed), tau0, **prior)
    p = normal_gamma_posterior_params(spec)
    tau_mean = p["a_n"] / p["b_n"]
    mu_sd = 1.0 / math.sqrt(p["tau_n"] * tau_mean)
    tau_sd = math.sqrt(p["a_n"]) / p["b_n"]

    def initial(k, rng):
        return np.column_stack(
            [p["mu_n"] + mu_sd * rng.standard_normal(k), tau_mean + tau_sd * rng.standard_normal(k)]
        )

    return BenchmarkProblem(
        f"normal_gamma_tau0_{tau0:g}",
        2,
        partial(normal_gamma_ln_likelihood, spec),
        partial(normal_gamma_ln_prior, spec),
        bounds=None,
        ground_truth=GroundTruth("analytic", normal_gamma_analytic_ln_z(spec)),
        initial=initial,
        info={"tau0": tau0, "n": n, "data_seed": seed, "spec": spec},
    )


# -- Gaussian in d dimensions ----------------------------------------------


def gaussian_nd_analytic_ln_z(ndim: int, a: float = 6.0) -> float:
    """``-d ln(2a) + d ln[Phi(a) - Phi(-a)]``, stable for large ``a``."""
    # Phi(a) - Phi(-a) = 1 - 2 Phi(-a), kept away from cancellation
    ln_mass = math.log1p(-2.0 * float(ndtr(-a)))
    return ndim * (ln_mass - math.log(2.0 * a))


@_vectorised
def _std_normal_ln_likelihood(X):
    return -0.5 * np.sum(X**2, axis=1) - 0.5 * X.shape[1] * LN_2PI


def gaussian_nd_problem(ndim: int, a: float = 6.0) -> BenchmarkProblem:
    """Normalised ``N(0, I)`` likelihood with a uniform prior on ``[-a, a]^d``."""
    if ndim < 1 or not a > 0:
        raise ValueError("need ndim >= 1 and a > 0")
    bounds = np.tile([-a, a], (ndim, 1)).astype(np.float64)

    def initial(k, rng):
        return np.clip(rng.standard_normal((k, ndim)), -a, a)

    return BenchmarkProblem(
        f"gaussian_{ndim}d",
        ndim,
        _std_normal_ln_likelihood,
        partial(box_ln_prior, bounds=bounds),
        bounds,
        GroundTruth("analytic", gaussian_nd_analytic_ln_z(ndim, a)),
        initial=initial,
        info={"a": a},
    )

"""Uniform target on a Mahalanobis ball fitted to the training samples."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .base import TargetModel, Whitener, ln_ball_volume, sample_covariance


class BracketError(RuntimeError):
    """The radius search could not bracket a minimum."""


class RadiusObjective:
    """Exact ``ln mu2(R)`` for a uniform ball target, as a function of ``R``.

    Training samples are sorted by Mahalanobis distance so that each
    evaluation is a binary search into a cumulative log-sum-exp. Radii that
    enclose no samples return ``+inf`` (zero support is not a valid fit).
    """

    def __init__(self, sq_dist, ln_posterior, ndim: int, ln_det_cov: float):
        order = np.argsort(sq_dist, kind="stable")
        self.sq_dist = np.asarray(sq_dist, dtype=np.float64)[order]
        self.cum = np.logaddexp.accumulate(-2.0 * np.asarray(ln_posterior, dtype=np.float64)[order])
        self.n = self.sq_dist.size
        self.ndim = ndim
        self.ln_det_cov = ln_det_cov

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt(self.sq_dist)

    def __call__(self, radius) -> np.ndarray:
        r = np.asarray(radius, dtype=np.float64)
        # strict inequality: samples with q < R^2 are inside
        count = np.searchsorted(self.sq_dist, r**2, side="left")
        out = np.full(r.shape, np.inf)
        ok = (count > 0) & (r > 0)
        if np.any(ok):
            ln_v = np.vectorize(lambda x: ln_ball_volume(self.ndim, x, self.ln_det_cov))(r[ok])
            out[ok] = self.cum[count[ok] - 1] - math.log(self.n) - 2.0 * ln_v
        return out if out.ndim else float(out)


def optimise_radius(objective: RadiusObjective, n_grid: int = 200):
    """Grid-bracketed Brent minimisation of ``ln mu2`` over the sampled radii.

    The search runs over ``(r_min, r_max]`` of the training radii; beyond
    the outermost sample the estimate keeps falling only because no samples
    probe the tails. Returns ``(R, ln_mu2, probes)``; ``R`` is never worse
    than any grid probe.
    """
    radii = objective.radii
    lo, hi = float(radii[0]), float(radii[-1])
    if not hi > 0:
        raise BracketError("all training samples sit at the centre")
    lo = max(lo, hi * 1e-12)
    grid = np.geomspace(np.nextafter(lo, np.inf), hi, n_grid) if hi > lo else np.array([hi])
    values = objective(grid)
    if not np.any(np.isfinite(values)):
        raise BracketError("no grid radius encloses any training sample")
    i = int(np.argmin(values))
    best_r, best_v = float(grid[i]), float(values[i])
    if 0 < i < grid.size - 1:
        f = lambda t: objective(math.exp(t))
        try:
            res = minimize_scalar(
                f, bracket=(math.log(grid[i - 1]), math.log(grid[i]), math.log(grid[i + 1])), method="brent"
            )
        except ValueError as e:
            raise BracketError(str(e)) from e
        r = math.exp(res.x)
        if lo < r <= hi and np.isfinite(res.fun) and res.fun < best_v:
            best_r, best_v = r, float(res.fun)
    return best_r, best_v, grid


class HyperSphere(TargetModel):
    """Normalised indicator of ``(x - mean)^T Sigma^-1 (x - mean) < R^2``.

    Parameters
    ----------
    covariance_type : {"diag", "full"}
        Structure of ``Sigma`` estimated from the training samples.
    radius : float or None
        Fixed radius; ``None`` selects ``R`` by minimising the second
        harmonic moment of the training samples.
    n_grid : int
        Number of grid probes bracketing the Brent search.
    """

    kind = "hypersphere"

    def __init__(self, covariance_type: str = "diag", radius: float | None = None, n_grid: int = 200):
        self.covariance_type = covariance_type
        self.radius = radius
        self.n_grid = n_grid

    def fit(self, X, y=None):
        X, y = self._validate_fit_data(X, y)
        cov = sample_covariance(X, self.covariance_type)
        mean = X.mean(axis=0)
        white = Whitener(mean, cov)
        objective = RadiusObjective(white.sq_dist(X), y, X.shape[1], white.ln_det)
        if self.radius is None:
            R, ln_mu2, grid = optimise_radius(objective, self.n_grid)
            meta = {"ln_mu2": ln_mu2, "grid_min": float(grid[0]), "grid_max": float(grid[-1])}
        else:
            R = float(self.radius)
            if not R > 0:
                raise ValueError(f"radius must be positive, got {R}")
            meta = {"ln_mu2": float(objective(R))}
        self.ndim_ = X.shape[1]
        self.mean_ = mean
        self.covariance_ = cov
        self.radius_ = float(R)
        self.ln_volume_ = ln_ball_volume(self.ndim_, self.radius_, white.ln_det)
        self._whitener = white
        self.fit_metadata_ = meta
        return self

    def predict(self, X) -> np.ndarray:
        X = self._check_X(X)
        inside = self._whitener.sq_dist(X) < self.radius_**2
        return np.where(inside, -self.ln_volume_, -np.inf)

    def _state(self) -> dict:
        return {
            "ndim": self.ndim_,
            "mean": self.mean_.tolist(),
            "covariance": self.covariance_.tolist(),
            "radius": self.radius_,
            "ln_volume": self.ln_volume_,
        }

    def _set_state(self, state: dict) -> None:
        self.ndim_ = int(state["ndim"])
        self.mean_ = np.asarray(state["mean"], dtype=np.float64)
        self.covariance_ = np.asarray(state["covariance"], dtype=np.float64).reshape(self.ndim_, self.ndim_)
        self.radius_ = float(state["radius"])
        self._whitener = Whitener(self.mean_, self.covariance_)
        self.ln_volume_ = ln_ball_volume(self.ndim_, self.radius_, self._whitener.ln_det)


def fit_hypersphere(training, covariance_type: str = "diag", n_grid: int = 200) -> HyperSphere:
    """Fit a :class:`HyperSphere` to a :class:`ChainStore`."""
    if training.nsamples == 0:
        raise ValueError("training set is empty")
    return HyperSphere(covariance_type=covariance_type, n_grid=n_grid).fit_chains(training)


def ln_mu2_at_radius(training_X, training_y, radius: float, mean, cov) -> float:
    """Reference ``ln mu2`` for a ball target at a given radius (brute force)."""
    white = Whitener(mean, cov)
    inside = white.sq_dist(training_X) < radius**2
    if not np.any(inside):
        return np.inf
    ln_v = ln_ball_volume(white.mean.size, radius, white.ln_det)
    y = np.asarray(training_y, dtype=np.float64)
    return float(logsumexp(-2.0 * y[inside]) - math.log(y.size) - 2.0 * ln_v)

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, logsumexp
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from ..chains import ChainStore


class DegenerateCovarianceError(ValueError):
    """A training dimension has zero (or non-finite) spread."""


def ln_ball_volume(ndim: int, radius: float, ln_det_cov: float = 0.0) -> float:
    """ln of the volume of {x : x^T S^-1 x < R^2}.

    ln[pi^(d/2) / Gamma(d/2 + 1)] + d ln R + 0.5 ln|S|.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if ndim < 1:
        raise ValueError(f"ndim must be positive, got {ndim}")
    return 0.5 * ndim * math.log(math.pi) - gammaln(0.5 * ndim + 1.0) + ndim * math.log(radius) + 0.5 * ln_det_cov


def hypersphere_ln_volume(ndim: int, radius: float, cov) -> float:
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    sign, ln_det = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("covariance must be positive definite")
    return ln_ball_volume(ndim, radius, ln_det)


def ln_mean_exp(ln_values) -> float:
    ln_values = np.asarray(ln_values, dtype=np.float64)
    if ln_values.size == 0 or not np.any(np.isfinite(ln_values)):
        return -np.inf
    return float(logsumexp(ln_values) - math.log(ln_values.size))


def sample_covariance(X: np.ndarray, covariance_type: str = "diag") -> np.ndarray:
    """Sample covariance as a full matrix; off-diagonals zeroed for ``diag``."""
    if X.shape[0] < 2:
        raise DegenerateCovarianceError("need at least two samples to estimate a covariance")
    if covariance_type == "diag":
        var = np.var(X, axis=0, ddof=1)
        if np.any(~(var > 0)) or not np.all(np.isfinite(var)):
            raise DegenerateCovarianceError("a training dimension has zero variance")
        return np.diag(var)
    if covariance_type == "full":
        cov = np.atleast_2d(np.cov(X, rowvar=False))
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise DegenerateCovarianceError("sample covariance is not positive definite") from e
        return cov
    raise ValueError(f"covariance_type must be 'diag' or 'full', got {covariance_type!r}")


class Whitener:
    """Maps x to L^-1 (x - mean) where cov = L L^T, so |.|^2 is the Mahalanobis form."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.asarray(cov, dtype=np.float64)
        self.diagonal = bool(np.all(self.cov == np.diag(np.diag(self.cov))))
        if self.diagonal:
            self._scale = np.sqrt(np.diag(self.cov))
        else:
            self._chol = np.linalg.cholesky(self.cov)
        self.ln_det = float(np.linalg.slogdet(self.cov)[1])

    def __call__(self, X):
        D = np.asarray(X, dtype=np.float64) - self.mean
        if self.diagonal:
            return D / self._scale
        from scipy.linalg import solve_triangular

        return solve_triangular(self._chol, D.T, lower=True).T

    def sq_dist(self, X):
        W = self(X)
        return np.einsum("ij,ij->i", W, W)


class TargetModel(BaseEstimator):
    """Normalized target density phi(theta) learnt from posterior samples.

    Follows the scikit-learn estimator protocol: ``fit(X, y)`` where ``X``
    holds samples and ``y`` their ln[L*pi] values, and ``predict(X)``
    returns ln phi (``-inf`` outside the support). ``score`` is minus the
    log second harmonic moment on ``(X, y)``, so larger is better.
    """

    kind = "base"

    def _validate_fit_data(self, X, y):
        X = check_array(X, dtype=np.float64)
        if y is None:
            raise ValueError("ln-posterior values (y) are required to fit a target model")
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} values")
        if not np.all(np.isfinite(y)):
            raise ValueError("ln-posterior values must be finite")
        return X, y

    def _check_X(self, X):
        check_is_fitted(self)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.ndim_:
            raise ValueError(f"expected {self.ndim_} dimensions, got {X.shape[1]}")
        return X

    def fit_chains(self, store: ChainStore):
        return self.fit(store.samples, store.ln_posterior)

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def ln_second_moment(self, X, y) -> float:
        """ln of mean((phi/(L pi))^2) over the given samples."""
        ln_phi = self.predict(X)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        terms = np.where(np.isfinite(ln_phi), ln_phi - y, -np.inf)
        return ln_mean_exp(2.0 * terms)

    def score(self, X, y) -> float:
        return -self.ln_second_moment(X, y)

    # -- serialization -------------------------------------------------

    def _state(self) -> dict:
        raise NotImplementedError

    def _set_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "kind": self.kind,
            "params": self.get_params(),
            "state": self._state(),
            "metadata": dict(getattr(self, "fit_metadata_", {})),
        }


def ln_phi(model: TargetModel, theta) -> float | np.ndarray:
    """ln phi at one point (1-d input) or many points (2-d input)."""
    try:
        check_is_fitted(model)
    except NotFittedError:
        raise
    theta = np.asarray(theta, dtype=np.float64)
    out = model.predict(theta)
    return float(out[0]) if theta.ndim == 1 else out

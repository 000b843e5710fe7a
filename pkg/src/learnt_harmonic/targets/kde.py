"""Truncated (indicator-kernel) density estimate target."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .base import TargetModel, Whitener, ln_ball_volume, sample_covariance


class KernelDensityEstimate(TargetModel):
    """``phi(x) = (1/N) sum_i 1[(x - x_i)^T S^-1 (x - x_i) < R^2] / V_K``.

    ``S`` is the training-sample covariance (diagonal by default) and
    ``V_K`` the volume of one kernel ball, so ``phi`` integrates to one.
    Evaluation counts neighbours with a k-d tree in whitened coordinates.

    Parameters
    ----------
    radius : float
        Kernel radius ``R`` in whitened units.
    covariance_type : {"diag", "full"}
    """

    kind = "kde"

    def __init__(self, radius: float = 0.1, covariance_type: str = "diag"):
        self.radius = radius
        self.covariance_type = covariance_type

    def fit(self, X, y=None, covariance=None):
        """Store the training samples.

        ``y`` is accepted for interface symmetry and unused. ``covariance``
        overrides the estimated kernel covariance.
        """
        if y is not None:
            X, _ = self._validate_fit_data(X, y)
        else:
            X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("training set is empty")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        cov = sample_covariance(X, self.covariance_type) if covariance is None else np.atleast_2d(covariance)
        self._init_state(X, np.mean(X, axis=0), cov)
        self.fit_metadata_ = {"ntrain": int(X.shape[0])}
        return self

    def _init_state(self, X, center, cov):
        self.ndim_ = X.shape[1]
        self.training_ = np.array(X, dtype=np.float64)
        self.center_ = np.asarray(center, dtype=np.float64)
        self.covariance_ = np.asarray(cov, dtype=np.float64)
        # Whitening about the sample mean keeps coordinates O(1) for the tree.
        self._whitener = Whitener(self.center_, self.covariance_)
        self._tree = cKDTree(self._whitener(self.training_))
        self.ln_kernel_volume_ = ln_ball_volume(self.ndim_, float(self.radius), self._whitener.ln_det)

    def counts(self, X) -> np.ndarray:
        """Number of training points strictly within ``R`` of each row."""
        X = self._check_X(X)
        r = np.nextafter(float(self.radius), 0.0)
        return np.asarray(self._tree.query_ball_point(self._whitener(X), r, return_length=True), dtype=np.int64)

    def predict(self, X) -> np.ndarray:
        c = self.counts(X)
        with np.errstate(divide="ignore"):
            return np.log(c) - math.log(self.training_.shape[0]) - self.ln_kernel_volume_

    def _state(self) -> dict:
        return {
            "ndim": self.ndim_,
            "center": self.center_.tolist(),
            "covariance": self.covariance_.tolist(),
            "training": self.training_.tolist(),
            "ln_kernel_volume": self.ln_kernel_volume_,
        }

    def _set_state(self, state: dict) -> None:
        ndim = int(state["ndim"])
        X = np.asarray(state["training"], dtype=np.float64).reshape(-1, ndim)
        self._init_state(X, state["center"], np.asarray(state["covariance"]).reshape(ndim, ndim))

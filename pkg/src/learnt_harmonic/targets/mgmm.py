"""Modified Gaussian mixture target trained to minimise estimator variance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax
from sklearn.cluster import KMeans
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_is_fitted

from .base import DegenerateCovarianceError, TargetModel

_LN_2PI = math.log(2.0 * math.pi)


class EmptyClusterError(ValueError):
    """K-means left a cluster with too few samples to estimate its spread."""


@dataclass(frozen=True)
class ObjectiveGradients:
    """Cost ``C`` and its gradients with respect to ``z`` and ``s``."""

    cost: float
    grad_z: np.ndarray
    grad_s: np.ndarray


def _component_sq_dist(X, centers, variances):
    # (n, K) Mahalanobis distances under each diagonal Sigma_k
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff / variances[None, :, :])


def _ln_component_terms(q, ln_det, z, s, ndim):
    """ln[w_k N(theta_i; mean_k, s_k^2 Sigma_k)], shape (n, K)."""
    ln_w = z - logsumexp(z)
    return ln_w - 0.5 * ndim * _LN_2PI - 0.5 * ln_det - ndim * np.log(s) - 0.5 * q / s**2


def mgmm_objective_and_gradients(
    X,
    ln_posterior,
    centers,
    variances,
    z,
    s,
    reg: float = 0.0,
    *,
    shift: float = 0.0,
    reduction: str = "sum",
) -> ObjectiveGradients:
    """Evaluate ``C = sum_i C_i^2 + (reg/2) sum_k s_k^2`` and its gradients.

    ``C_ik = w_k N(theta_i; mean_k, s_k^2 Sigma_k) / (L pi)(theta_i)`` and
    ``C_i = sum_k C_ik``. Every ``C_ik`` is multiplied by ``exp(-shift)``
    before squaring. With ``reduction="mean"`` the data term is averaged
    over the batch instead of summed; the regulariser is unchanged.

    Args:
        X: Samples, shape ``(n, d)``.
        ln_posterior: ln[L pi] at each sample, shape ``(n,)``.
        centers: Component means, shape ``(K, d)``.
        variances: Diagonals of the ``Sigma_k``, shape ``(K, d)``.
        z: Raw (pre-softmax) weights, shape ``(K,)``.
        s: Relative scales, shape ``(K,)``; all must be positive.
        reg: Regularisation strength ``lambda >= 0``.

    Returns:
        ObjectiveGradients with ``grad_s`` including the ``reg * s`` term.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(ln_posterior, dtype=np.float64).reshape(-1)
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    variances = np.atleast_2d(np.asarray(variances, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    if np.any(~(s > 0)):
        raise ValueError("scales s_k must be positive")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    ndim = X.shape[1]
    q = _component_sq_dist(X, centers, variances)
    ln_det = np.sum(np.log(variances), axis=1)
    ln_cik = _ln_component_terms(q, ln_det, z, s, ndim) - (y + shift)[:, None]
    with np.errstate(over="raise", under="ignore"):
        try:
            c_ik = np.exp(ln_cik)
            c_i = c_ik.sum(axis=1)
            w = softmax(z)
            norm = 1.0 / X.shape[0] if reduction == "mean" else 1.0
            data = norm * float(np.sum(c_i**2))
            grad_z = 2.0 * norm * (c_i @ c_ik - w * np.sum(c_i**2))
            grad_s = 2.0 * norm * np.sum(c_i[:, None] * c_ik * (q - ndim * s**2), axis=0) / s**3
        except FloatingPointError as e:
            raise ValueError("MGMM objective overflowed; non-finite cost") from e
    cost = data + 0.5 * reg * float(np.sum(s**2))
    if not np.isfinite(cost):
        raise ValueError("MGMM objective is not finite")
    return ObjectiveGradients(cost=cost, grad_z=grad_z, grad_s=grad_s + reg * s)


class ModifiedGaussianMixture(TargetModel):
    """Mixture of diagonal Gaussians ``N(mean_k, s_k^2 Sigma_k)`` with softmax weights.

    Centres and ``Sigma_k`` come from K-means clusters of the training
    samples; the raw weights ``z_k`` and scales ``s_k`` are then trained by
    stochastic gradient descent on the estimator's second moment plus an
    L2 penalty on the scales.

    Parameters
    ----------
    n_components : int
        Number of mixture components ``K``.
    reg : float
        Scale regularisation ``lambda``.
    learning_rate : float
        SGD step size.
    batch_size : int or None
        Minibatch size; ``None`` uses the full set up to 10^4 samples and
        batches of 10^3 beyond that.
    epochs : int
    n_init : int
        K-means restarts; the lowest inertia run is kept.
    random_state : int
    """

    kind = "mgmm"

    def __init__(
        self,
        n_components: int = 1,
        reg: float = 1e-3,
        learning_rate: float = 1e-3,
        batch_size: int | None = None,
        epochs: int = 50,
        n_init: int = 10,
        random_state: int = 0,
    ):
        self.n_components = n_components
        self.reg = reg
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.n_init = n_init
        self.random_state = random_state

    def _cluster(self, X, seed):
        Xs = StandardScaler().fit_transform(X)
        km = KMeans(n_clusters=self.n_components, n_init=self.n_init, random_state=seed)
        labels = km.fit_predict(Xs)
        centers, variances = [], []
        for k in range(self.n_components):
            members = X[labels == k]
            if members.shape[0] < 2:
                raise EmptyClusterError(f"cluster {k} has {members.shape[0]} samples")
            var = np.var(members, axis=0, ddof=1)
            if np.any(~(var > 0)):
                raise EmptyClusterError(f"cluster {k} has a zero-variance dimension")
            centers.append(members.mean(axis=0))
            variances.append(var)
        return np.array(centers), np.array(variances), float(km.inertia_)

    def fit(self, X, y=None):
        X, y = self._validate_fit_data(X, y)
        K = int(self.n_components)
        if K < 1:
            raise ValueError(f"n_components must be positive, got {K}")
        if X.shape[0] < K:
            raise ValueError(f"need at least {K} samples for {K} components")
        if self.reg < 0:
            raise ValueError("reg must be non-negative")
        if np.any(np.var(X, axis=0) == 0):
            raise DegenerateCovarianceError("a training dimension has zero variance")
        try:
            centers, variances, inertia = self._cluster(X, self.random_state)
            reseeded = False
        except EmptyClusterError:
            centers, variances, inertia = self._cluster(X, self.random_state + 1)
            reseeded = True

        n, d = X.shape
        z = np.zeros(K)
        s = np.ones(K)
        # Normalise so the mean C_i at initialisation is 1; keeps the cost O(1).
        q = _component_sq_dist(X, centers, variances)
        ln_det = np.sum(np.log(variances), axis=1)
        ln_ci = logsumexp(_ln_component_terms(q, ln_det, z, s, d), axis=1) - y
        shift = float(logsumexp(ln_ci) - math.log(n))

        def full_cost(z_, s_):
            return mgmm_objective_and_gradients(
                X, y, centers, variances, z_, s_, self.reg, shift=shift, reduction="mean"
            ).cost

        batch = self.batch_size or (n if n <= 10_000 else 1_000)
        batch = min(int(batch), n)
        rng = np.random.default_rng(self.random_state)
        initial = best_cost = full_cost(z, s)
        best = (z.copy(), s.copy())
        history = [initial]
        for _ in range(int(self.epochs)):
            order = rng.permutation(n) if batch < n else np.arange(n)
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                g = mgmm_objective_and_gradients(
                    X[idx], y[idx], centers, variances, z, s, self.reg, shift=shift, reduction="mean"
                )
                z = z - self.learning_rate * g.grad_z
                # Keep each scale step within a factor of two so s stays positive.
                s = np.clip(s - self.learning_rate * g.grad_s, 0.5 * s, 2.0 * s)
            cost = full_cost(z, s)
            history.append(cost)
            if cost < best_cost:
                best_cost, best = cost, (z.copy(), s.copy())

        self.ndim_ = d
        self.centers_ = centers
        self.variances_ = variances
        self.z_, self.scales_ = best
        self.fit_metadata_ = {
            "kmeans_inertia": inertia,
            "kmeans_reseeded": reseeded,
            "cost_shift": shift,
            "initial_objective": initial,
            "final_objective": best_cost,
            "objective_history": history,
        }
        return self

    @property
    def weights_(self) -> np.ndarray:
        check_is_fitted(self, "z_")
        return softmax(self.z_)

    def predict(self, X) -> np.ndarray:
        X = self._check_X(X)
        q = _component_sq_dist(X, self.centers_, self.variances_)
        ln_det = np.sum(np.log(self.variances_), axis=1)
        return logsumexp(_ln_component_terms(q, ln_det, self.z_, self.scales_, self.ndim_), axis=1)

    def objective(self, X, y, *, reduction: str = "sum") -> ObjectiveGradients:
        check_is_fitted(self)
        return mgmm_objective_and_gradients(
            X, y, self.centers_, self.variances_, self.z_, self.scales_, self.reg, reduction=reduction
        )

    def _state(self) -> dict:
        return {
            "ndim": self.ndim_,
            "centers": self.centers_.tolist(),
            "variances": self.variances_.tolist(),
            "z": self.z_.tolist(),
            "scales": self.scales_.tolist(),
        }

    def _set_state(self, state: dict) -> None:
        self.ndim_ = int(state["ndim"])
        self.centers_ = np.asarray(state["centers"], dtype=np.float64).reshape(-1, self.ndim_)
        self.variances_ = np.asarray(state["variances"], dtype=np.float64).reshape(-1, self.ndim_)
        self.z_ = np.asarray(state["z"], dtype=np.float64)
        self.scales_ = np.asarray(state["scales"], dtype=np.float64)


def fit_mgmm(training, n_components: int = 1, reg: float = 1e-3, **sgd) -> ModifiedGaussianMixture:
    """Fit a :class:`ModifiedGaussianMixture` to a :class:`ChainStore`."""
    if training.nsamples == 0:
        raise ValueError("training set is empty")
    return ModifiedGaussianMixture(n_components=n_components, reg=reg, **sgd).fit_chains(training)

"""Chain-grouped cross-validation over candidate target models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import clone
from sklearn.model_selection import KFold

from ..chains import ChainStore
from .base import TargetModel
from .kde import KernelDensityEstimate


class SelectionError(RuntimeError):
    """No candidate produced a finite cross-validation score."""


@dataclass(frozen=True)
class CrossValidationPlan:
    """Folds over whole chains.

    Attributes:
        nfolds: Number of folds (at least 2, at most the number of chains).
        seed: Seed of the chain shuffle.
    """

    nfolds: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.nfolds < 2:
            raise ValueError(f"nfolds must be at least 2, got {self.nfolds}")

    def folds(self, nchains: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(train_chain_indices, held_out_chain_indices)`` for every fold."""
        if nchains < self.nfolds:
            raise ValueError(f"{nchains} chains cannot fill {self.nfolds} folds")
        kf = KFold(n_splits=self.nfolds, shuffle=True, random_state=self.seed)
        return [(np.sort(a), np.sort(b)) for a, b in kf.split(np.arange(nchains))]


@dataclass
class CrossValidationResult:
    """Outcome of :func:`cross_validate`.

    ``scores`` are ``ln`` of the fold-averaged held-out second moment
    (lower is better); failed candidates score ``+inf``.
    """

    best_index: int
    best_estimator: TargetModel
    scores: np.ndarray
    fold_scores: np.ndarray
    errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "best_index": self.best_index,
            "scores": [float(s) for s in self.scores],
            "fold_scores": self.fold_scores.tolist(),
            "errors": {str(k): v for k, v in self.errors.items()},
        }


def held_out_ln_mu2(model: TargetModel, store: ChainStore) -> float:
    """ln mu2 on held-out chains; ``+inf`` if no held-out sample has support."""
    v = model.ln_second_moment(store.samples, store.ln_posterior)
    return math.inf if v == -math.inf else v


def cross_validate(
    training: ChainStore,
    candidates,
    plan: CrossValidationPlan | None = None,
    *,
    refit: bool = True,
) -> CrossValidationResult:
    """Select the candidate with the smallest fold-averaged held-out ``mu2``.

    Each candidate (an unfitted :class:`TargetModel`) is cloned and fitted
    on the chains outside a fold, then scored on the held-out chains. Fold
    scores are averaged in linear space. Ties go to the earlier candidate.
    The winner is refitted on all training chains when ``refit`` is set.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates given")
    plan = plan or CrossValidationPlan()
    folds = plan.folds(training.nchains)
    fold_scores = np.full((len(candidates), len(folds)), np.inf)
    errors: dict = {}
    for c, cand in enumerate(candidates):
        for f, (tr, te) in enumerate(folds):
            try:
                model = clone(cand).fit_chains(training.subset(tr))
                fold_scores[c, f] = held_out_ln_mu2(model, training.subset(te))
            except (ValueError, ArithmeticError, RuntimeError) as e:
                errors[c] = f"{type(e).__name__}: {e}"
                fold_scores[c, :] = np.inf
                break
    scores = np.array(
        [logsumexp(row) - math.log(row.size) if np.all(np.isfinite(row)) else np.inf for row in fold_scores]
    )
    if not np.any(np.isfinite(scores)):
        raise SelectionError(f"every candidate failed or has infinite held-out score: {errors}")
    best = int(np.argmin(scores))  # first minimum on ties
    best_est = clone(candidates[best])
    if refit:
        best_est = best_est.fit_chains(training)
    return CrossValidationResult(best, best_est, scores, fold_scores, errors)


def fit_kde(
    training: ChainStore,
    radius_grid,
    plan: CrossValidationPlan | None = None,
    covariance_type: str = "diag",
) -> KernelDensityEstimate:
    """KDE target with radius chosen from ``radius_grid`` by cross-validation."""
    radius_grid = [float(r) for r in radius_grid]
    if not radius_grid:
        raise ValueError("radius grid is empty")
    if any(not r > 0 for r in radius_grid):
        raise ValueError("all radii must be positive")
    if training.nsamples == 0:
        raise ValueError("training set is empty")
    cands = [KernelDensityEstimate(radius=r, covariance_type=covariance_type) for r in radius_grid]
    result = cross_validate(training, cands, plan)
    model = result.best_estimator
    model.fit_metadata_ = {**model.fit_metadata_, "cv": result.to_dict(), "radius_grid": radius_grid}
    return model

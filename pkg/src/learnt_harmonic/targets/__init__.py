"""Learnt target densities and their selection."""

from __future__ import annotations

import json
from pathlib import Path

from .base import (
    DegenerateCovarianceError,
    TargetModel,
    hypersphere_ln_volume,
    ln_ball_volume,
    ln_phi,
)
from .hypersphere import BracketError, HyperSphere, fit_hypersphere
from .kde import KernelDensityEstimate
from .mgmm import (
    EmptyClusterError,
    ModifiedGaussianMixture,
    ObjectiveGradients,
    fit_mgmm,
    mgmm_objective_and_gradients,
)
from .selection import (
    CrossValidationPlan,
    CrossValidationResult,
    SelectionError,
    cross_validate,
    fit_kde,
)

MODEL_KINDS = {
    cls.kind: cls for cls in (HyperSphere, ModifiedGaussianMixture, KernelDensityEstimate)
}


def model_from_dict(data: dict) -> TargetModel:
    """Rebuild a fitted model from :meth:`TargetModel.to_dict` output."""
    try:
        cls = MODEL_KINDS[data["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {data.get('kind')!r}") from None
    model = cls(**data["params"])
    model._set_state(data["state"])
    model.fit_metadata_ = dict(data.get("metadata", {}))
    return model


def save_model(model: TargetModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True))


def load_model(path) -> TargetModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def make_model(spec: dict) -> TargetModel:
    """Build an unfitted model from ``{"kind": ..., **params}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    return MODEL_KINDS[kind](**spec)


__all__ = [
    "BracketError",
    "CrossValidationPlan",
    "CrossValidationResult",
    "DegenerateCovarianceError",
    "EmptyClusterError",
    "HyperSphere",
    "KernelDensityEstimate",
    "MODEL_KINDS",
    "ModifiedGaussianMixture",
    "ObjectiveGradients",
    "SelectionError",
    "TargetModel",
    "cross_validate",
    "fit_hypersphere",
    "fit_kde",
    "fit_mgmm",
    "hypersphere_ln_volume",
    "ln_ball_volume",
    "ln_phi",
    "load_model",
    "make_model",
    "mgmm_objective_and_gradients",
    "model_from_dict",
    "save_model",
]

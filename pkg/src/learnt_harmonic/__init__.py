"""Learnt harmonic mean estimation of the Bayesian evidence.

Typical use::

    from learnt_harmonic import ChainStore, HyperSphere, Evidence, split_by_chain

    split = split_by_chain(store, training_proportion=0.5, seed=0)
    model = HyperSphere().fit_chains(split.training)
    result = Evidence(model).add_chains(split.inference).compute()
    result.ln_evidence_mean, result.ln_evidence_std
"""

from .chains import Chain, ChainError, ChainStore, SplitResult, split_by_chain
from .evidence import (
    BayesFactorResult,
    Evidence,
    EvidenceError,
    EvidenceResult,
    bayes_factor,
    combine_chains,
    effective_sample_size,
    uncorrelated_estimators,
)
from .sampler import SamplerConfig, run_sampler
from .targets import (
    CrossValidationPlan,
    HyperSphere,
    KernelDensityEstimate,
    ModifiedGaussianMixture,
    cross_validate,
    fit_hypersphere,
    fit_kde,
    fit_mgmm,
    ln_phi,
)

__version__ = "0.1.0"

__all__ = [
    "BayesFactorResult",
    "Chain",
    "ChainError",
    "ChainStore",
    "CrossValidationPlan",
    "Evidence",
    "EvidenceError",
    "EvidenceResult",
    "HyperSphere",
    "KernelDensityEstimate",
    "ModifiedGaussianMixture",
    "SamplerConfig",
    "SplitResult",
    "bayes_factor",
    "combine_chains",
    "cross_validate",
    "effective_sample_size",
    "fit_hypersphere",
    "fit_kde",
    "fit_mgmm",
    "ln_phi",
    "run_sampler",
    "split_by_chain",
    "uncorrelated_estimators",
]

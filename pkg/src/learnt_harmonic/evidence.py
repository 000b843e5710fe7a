"""Reciprocal-evidence estimation from inference chains and a fitted target.

All quantities that can overflow (1/z can exceed e^700) are carried as
natural logs. Per-chain estimates are combined after subtracting a common
log-space shift; the shift cancels analytically in every returned value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .chains import Chain, ChainStore

KURTOSIS_THRESHOLD = 9.0
RATIO_FACTOR = 2.0


class EvidenceError(ValueError):
    pass


def ln_terms(ln_phi: np.ndarray, ln_posterior: np.ndarray) -> np.ndarray:
    """ln[phi / (L pi)] per sample; ``-inf`` where phi vanishes."""
    ln_phi = np.asarray(ln_phi, dtype=np.float64)
    ln_posterior = np.asarray(ln_posterior, dtype=np.float64)
    out = np.full(ln_phi.shape, -np.inf)
    ok = np.isfinite(ln_phi)
    out[ok] = ln_phi[ok] - ln_posterior[ok]
    return out


def _ln_mean(ln_values: np.ndarray) -> float:
    if ln_values.size == 0 or not np.any(np.isfinite(ln_values)):
        return -np.inf
    return float(logsumexp(ln_values) - math.log(ln_values.size))


def accumulate_chain(chain: Chain, model) -> tuple[float, int]:
    """Return ``(ln rho_j, N_j)`` for one chain.

    ``ln rho_j`` is ``-inf`` when the target has no support on any sample of
    the chain; :func:`combine_chains` rejects that case rather than treating
    it as a zero estimate.
    """
    ln_phi = model.predict(chain.samples)
    terms = ln_terms(ln_phi, chain.ln_posterior)
    return _ln_mean(terms), chain.nsamples


def effective_sample_size(weights) -> float:
    """(sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise EvidenceError("weights are empty")
    if np.any(~(w > 0)):
        raise EvidenceError("weights must be strictly positive")
    return float(w.sum() ** 2 / np.sum(w * w))


@dataclass(frozen=True)
class ChainCombination:
    """Weighted combination of per-chain estimates, in log form.

    ``ln_s2`` is the population-variance estimate, ``ln_sigma2`` the
    variance of the combined estimator and ``ln_nu4`` its variance.
    """

    ln_rho: float
    ln_s2: float
    ln_sigma2: float
    ln_nu4: float
    kappa: float
    n_eff: float


def _ln(x: float) -> float:
    return math.log(x) if x > 0 else -np.inf


def ln_variance_of_variance(ln_sigma2: float, kappa: float, n_eff: float) -> float:
    """ln nu^4 = ln[(sigma^4 / N_eff) (kappa - 1 + 2/(N_eff - 1))]."""
    factor = kappa - 1.0 + 2.0 / (n_eff - 1.0)
    return 2.0 * ln_sigma2 - math.log(n_eff) + _ln(factor)


def combine_chains(ln_rho_chains, weights, shift: float | None = None) -> ChainCombination:
    """Combine per-chain ``ln rho_j`` with weights ``w_j = N_j``.

    ``shift`` is added to every ``ln rho_j`` before exponentiating; by default
    it is ``-max(ln rho_j)`` so the largest term is exactly 1.
    """
    lr = np.asarray(ln_rho_chains, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if lr.shape != w.shape or lr.ndim != 1:
        raise EvidenceError("ln_rho_chains and weights must be 1-d and of equal length")
    if lr.size < 2:
        raise EvidenceError("at least two chains are required for variance estimates")
    if np.any(np.isposinf(lr)) or np.any(np.isnan(lr)):
        raise EvidenceError("per-chain estimates must be finite or -inf")
    if not np.any(np.isfinite(lr)):
        raise EvidenceError("target has no support on any inference chain")
    n_eff = effective_sample_size(w)
    if shift is None:
        shift = -float(np.max(lr))
    r = np.exp(lr + shift)
    W = w.sum()
    rho = np.sum(w * r) / W
    dev = r - rho
    m2 = np.sum(w * dev**2) / W
    m4 = np.sum(w * dev**4) / W
    s2 = n_eff / (n_eff - 1.0) * m2
    sigma2 = s2 / n_eff
    kappa = m4 / s2**2 if s2 > 0 else float("nan")
    ln_rho = _ln(rho) - shift
    ln_s2 = _ln(s2) - 2.0 * shift
    ln_sigma2 = _ln(sigma2) - 2.0 * shift
    if s2 > 0:
        ln_nu4 = ln_variance_of_variance(ln_sigma2, kappa, n_eff)
    else:
        ln_nu4 = -np.inf
    return ChainCombination(ln_rho, ln_s2, ln_sigma2, ln_nu4, float(kappa), n_eff)


@dataclass(frozen=True)
class UncorrelatedEstimates:
    ln_moments: np.ndarray  # ln mu_hat_n for n = 1..n_order
    ln_rho: float
    ln_sigma2: float
    ln_var_sigma2: float


def uncorrelated_estimators(ln_phi, ln_posterior, n_order: int = 4) -> UncorrelatedEstimates:
    """Harmonic-moment estimators for independent samples.

    The variance of the variance estimator uses plug-in (biased) sample
    central moments.
    """
    terms = ln_terms(ln_phi, ln_posterior)
    N = terms.size
    if N < 2:
        raise EvidenceError("need at least two samples")
    if n_order < 2:
        raise EvidenceError("n_order must be at least 2")
    ln_mu = np.array([_ln_mean(n * terms) for n in range(1, n_order + 1)])
    ln_rho = float(ln_mu[0])
    if not np.isfinite(ln_rho):
        return UncorrelatedEstimates(ln_mu, -np.inf, -np.inf, -np.inf)
    shift = -float(np.max(terms))
    c = np.exp(terms + shift)
    mu1 = c.mean()
    mu2 = np.mean(c * c)
    sigma2 = max(mu2 - mu1 * mu1, 0.0) / (N - 1)
    dev = c - mu1
    cm2 = np.mean(dev**2)
    cm4 = np.mean(dev**4)
    var_sigma2 = ((N - 1) ** 2 / N**3 * cm4 - (N - 1) * (N - 3) / N**3 * cm2**2) / (N - 1) ** 2
    return UncorrelatedEstimates(
        ln_moments=ln_mu,
        ln_rho=ln_rho,
        ln_sigma2=_ln(sigma2) - 2.0 * shift,
        ln_var_sigma2=_ln(max(var_sigma2, 0.0)) - 4.0 * shift,
    )


def taylor_inverse(ln_rho: float, ln_sigma2: float) -> tuple[float, float]:
    """Second-order moments of 1/rho.

    Returns ``(ln E[z], ln var[z])`` with E[z] ~ (1/rho)(1 + sigma^2/rho^2)
    and var[z] ~ sigma^2/rho^4.
    """
    if not np.isfinite(ln_rho):
        raise EvidenceError("rho must be positive and finite")
    rel = math.exp(ln_sigma2 - 2.0 * ln_rho) if np.isfinite(ln_sigma2) else 0.0
    return -ln_rho + math.log1p(rel), ln_sigma2 - 4.0 * ln_rho


def expected_ratio(n_eff: float) -> float:
    """nu^2 / sigma^2 expected for Gaussian per-chain estimates."""
    return math.sqrt(2.0 / (n_eff - 1.0))


@dataclass(frozen=True)
class Diagnostics:
    nu_over_sigma_ratio: float
    expected_ratio: float
    kurtosis_flag: bool
    ratio_flag: bool


def sanity_checks(kappa: float, ln_sigma2: float, ln_nu4: float, n_eff: float) -> Diagnostics:
    if np.isfinite(ln_sigma2) and np.isfinite(ln_nu4):
        ratio = math.exp(0.5 * ln_nu4 - ln_sigma2)
    else:
        ratio = float("nan")
    expected = expected_ratio(n_eff) if n_eff > 1 else float("inf")
    kflag = bool(np.isfinite(kappa) and kappa > KURTOSIS_THRESHOLD)
    rflag = bool(np.isfinite(ratio) and ratio > RATIO_FACTOR * expected)
    return Diagnostics(ratio, expected, kflag, rflag)


@dataclass(frozen=True)
class EvidenceResult:
    ln_rho_hat: float
    ln_sigma2: float
    ln_nu4: float
    kappa_hat: float
    n_eff: float
    ln_evidence_mean: float
    ln_evidence_var: float
    diagnostics: Diagnostics
    nchains: int = 0
    nsamples: int = 0
    provenance: dict = field(default_factory=dict)

    @property
    def ln_evidence_std(self) -> float:
        """Delta-method standard deviation of ln z, i.e. std(z)/E(z)."""
        if not np.isfinite(self.ln_evidence_var):
            return 0.0
        return math.exp(0.5 * self.ln_evidence_var - self.ln_evidence_mean)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ln_evidence_std"] = self.ln_evidence_std
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceResult":
        d = dict(d)
        d.pop("ln_evidence_std", None)
        d["diagnostics"] = Diagnostics(**d["diagnostics"])
        return cls(**d)


def result_from_combination(comb: ChainCombination, nchains=0, nsamples=0, provenance=None) -> EvidenceResult:
    ln_mean, ln_var = taylor_inverse(comb.ln_rho, comb.ln_sigma2)
    return EvidenceResult(
        ln_rho_hat=comb.ln_rho,
        ln_sigma2=comb.ln_sigma2,
        ln_nu4=comb.ln_nu4,
        kappa_hat=comb.kappa,
        n_eff=comb.n_eff,
        ln_evidence_mean=ln_mean,
        ln_evidence_var=ln_var,
        diagnostics=sanity_checks(comb.kappa, comb.ln_sigma2, comb.ln_nu4, comb.n_eff),
        nchains=nchains,
        nsamples=nsamples,
        provenance=dict(provenance or {}),
    )


class Evidence:
    """Accumulates per-chain estimates for a fitted target model.

    >>> ev = Evidence(model).add_chains(inference)   # doctest: +SKIP
    >>> ev.compute().ln_evidence_mean                # doctest: +SKIP
    """

    def __init__(self, model):
        self.model = model
        self.ln_rho_chains: list[float] = []
        self.weights: list[int] = []

    def add_chain(self, chain: Chain) -> "Evidence":
        ln_rho, n = accumulate_chain(chain, self.model)
        self.ln_rho_chains.append(ln_rho)
        self.weights.append(n)
        return self

    def add_chains(self, store: ChainStore) -> "Evidence":
        # One batched prediction is much cheaper than per-chain calls.
        ln_phi = self.model.predict(store.samples)
        terms = ln_terms(ln_phi, store.ln_posterior)
        start = 0
        for n in store.nsamples_per_chain:
            self.ln_rho_chains.append(_ln_mean(terms[start : start + n]))
            self.weights.append(int(n))
            start += n
        return self

    @property
    def nchains(self) -> int:
        return len(self.weights)

    def combine(self, shift: float | None = None) -> ChainCombination:
        return combine_chains(self.ln_rho_chains, self.weights, shift=shift)

    def compute(self, provenance=None) -> EvidenceResult:
        return result_from_combination(
            self.combine(), nchains=self.nchains, nsamples=int(sum(self.weights)), provenance=provenance
        )


@dataclass(frozen=True)
class BayesFactorResult:
    """Bayes factor z1/z2 from two evidence results.

    ``ln_bf`` is the plug-in point estimate ln(rho2 / rho1), exactly zero
    for identical inputs; ``ln_bf_mean`` is ln E[z1/z2] including the
    second-order bias term.
    """

    ln_bf: float
    ln_bf_mean: float
    ln_bf_var: float
    evidence_1: EvidenceResult
    evidence_2: EvidenceResult

    @property
    def bf_var(self) -> float:
        return math.exp(self.ln_bf_var) if np.isfinite(self.ln_bf_var) else 0.0

    @property
    def ln_bf_std(self) -> float:
        if not np.isfinite(self.ln_bf_var):
            return 0.0
        return math.exp(0.5 * self.ln_bf_var - self.ln_bf_mean)

    def to_dict(self) -> dict:
        return {
            "ln_bf": self.ln_bf,
            "ln_bf_mean": self.ln_bf_mean,
            "ln_bf_var": self.ln_bf_var,
            "ln_bf_std": self.ln_bf_std,
            "evidence_1": self.evidence_1.to_dict(),
            "evidence_2": self.evidence_2.to_dict(),
        }


def bayes_factor(r1: EvidenceResult, r2: EvidenceResult) -> BayesFactorResult:
    """z1/z2 from reciprocal estimates via second-order Taylor expansion.

    E[z1/z2] ~ (rho2/rho1)(1 + sigma1^2/rho1^2);
    var[z1/z2] ~ (rho1^2 sigma2^2 + rho2^2 sigma1^2) / rho1^4.
    """
    for r in (r1, r2):
        if not np.isfinite(r.ln_rho_hat):
            raise EvidenceError("Bayes factor needs finite reciprocal-evidence estimates")
        if np.isnan(r.ln_sigma2) or np.isposinf(r.ln_sigma2):
            raise EvidenceError("Bayes factor needs finite variance estimates")
    l1, l2 = r1.ln_rho_hat, r2.ln_rho_hat
    rel1 = math.exp(r1.ln_sigma2 - 2.0 * l1) if np.isfinite(r1.ln_sigma2) else 0.0
    ln_mean = l2 - l1 + math.log1p(rel1)
    ln_var = float(logsumexp([2 * l1 + r2.ln_sigma2, 2 * l2 + r1.ln_sigma2])) - 4.0 * l1
    return BayesFactorResult(l2 - l1, ln_mean, ln_var, r1, r2)

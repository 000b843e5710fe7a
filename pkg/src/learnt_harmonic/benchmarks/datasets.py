"""Pima Indians logistic regression and Radiata pine linear regression."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import partial
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .problems import LN_2PI, BenchmarkProblem, GroundTruth, _as_2d

PIMA_COLUMNS = ("NP", "PGC", "BP", "TST", "BMI", "DP", "AGE", "outcome")
PIMA_MODELS = {"M1": ("NP", "PGC", "BMI", "DP"), "M2": ("NP", "PGC", "BMI", "DP", "AGE")}
PIMA_ROWS = 532
# Reference ln Bayes factors ln(z_M1 / z_M2), keyed by prior precision.
PIMA_REFERENCE_LN_BF = {0.01: 2.63620, 1.0: 0.26236}

RADIATA_COLUMNS = ("y", "x", "z")
RADIATA_ROWS = 42
RADIATA_REFERENCE_LN_Z = {"M1": -310.12829, "M2": -301.70460}


class DatasetError(ValueError):
    """A dataset file is malformed or fails validation."""


def _default_path(name: str) -> Path:
    return Path(str(resources.files("learnt_harmonic.benchmarks") / "data" / name))


def read_numeric_csv(path, columns, expected_rows: int | None) -> dict[str, np.ndarray]:
    """Read named numeric columns, validating header, types and row count."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise DatasetError(f"{path}: missing column(s) {missing}")
        rows = list(reader)
    if expected_rows is not None and len(rows) != expected_rows:
        raise DatasetError(f"{path}: expected {expected_rows} rows, found {len(rows)}")
    out = {}
    for c in columns:
        try:
            vals = np.array([float(r[c]) for r in rows], dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise DatasetError(f"{path}: non-numeric value in column {c!r}") from e
        if not np.all(np.isfinite(vals)):
            raise DatasetError(f"{path}: non-finite value in column {c!r}")
        out[c] = vals
    return out


# -- Pima ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PimaSpec:
    """Logistic regression with prior ``theta ~ N(0, I / tau)``.

    ``design`` holds a leading bias column followed by the model's
    covariates (standardised unless ``standardized`` is false).
    """

    design: np.ndarray
    outcome: np.ndarray
    model_id: str
    tau: float
    standardized: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def ndim(self) -> int:
        return self.design.shape[1]


def load_pima_table(path=None, expected_rows: int | None = PIMA_ROWS) -> dict[str, np.ndarray]:
    path = path or _default_path("pima.csv")
    data = read_numeric_csv(path, PIMA_COLUMNS, expected_rows)
    if not np.all(np.isin(data["outcome"], (0.0, 1.0))):
        raise DatasetError(f"{path}: outcome must be 0 or 1")
    for c in PIMA_COLUMNS[:-1]:
        if np.any(data[c] < 0):
            raise DatasetError(f"{path}: negative value in column {c!r}")
    return data


def load_pima(
    path=None,
    model_id: str = "M1",
    tau: float = 0.01,
    standardize: bool = True,
    expected_rows: int | None = PIMA_ROWS,
) -> PimaSpec:
    """Load the Pima table and build the design matrix for one model."""
    if model_id not in PIMA_MODELS:
        raise ValueError(f"model_id must be one of {sorted(PIMA_MODELS)}, got {model_id!r}")
    data = load_pima_table(path, expected_rows)
    cov = np.column_stack([data[c] for c in PIMA_MODELS[model_id]])
    if standardize:
        cov = (cov - cov.mean(axis=0)) / cov.std(axis=0, ddof=1)
    design = np.column_stack([np.ones(cov.shape[0]), cov])
    return PimaSpec(design, data["outcome"], model_id, float(tau), standardize)


def log_logistic(t) -> tuple[np.ndarray, np.ndarray]:
    """``(ln p, ln(1 - p))`` for ``p = 1 / (1 + exp(-t))`` without rounding to 0 or 1."""
    t = np.asarray(t, dtype=np.float64)
    return -np.logaddexp(0.0, -t), -np.logaddexp(0.0, t)


def pima_ln_prior(spec: PimaSpec, theta):
    X, single = _as_2d(theta)
    if X.shape[1] != spec.ndim:
        raise ValueError(f"{spec.model_id} expects {spec.ndim} parameters, got {X.shape[1]}")
    out = 0.5 * spec.ndim * (math.log(spec.tau) - LN_2PI) - 0.5 * spec.tau * np.sum(X**2, axis=1)
    return float(out[0]) if single else out


def pima_ln_likelihood(spec: PimaSpec, theta):
    X, single = _as_2d(theta)
    if X.shape[1] != spec.ndim:
        raise ValueError(f"{spec.model_id} expects {spec.ndim} parameters, got {X.shape[1]}")
    t = X @ spec.design.T
    ln_p, ln_q = log_logistic(t)
    out = ln_p @ spec.outcome + ln_q @ (1.0 - spec.outcome)
    return float(out[0]) if single else out


def pima_ln_posterior(spec: PimaSpec, theta):
    """Bernoulli-logistic log likelihood plus the Gaussian log prior."""
    X, single = _as_2d(theta)
    out = pima_ln_prior(spec, X) + pima_ln_likelihood(spec, X)
    return float(out[0]) if single else out


def pima_laplace(spec: PimaSpec) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mode and inverse Hessian of the negative ln-posterior."""
    A, yv = spec.design, spec.outcome

    def f(th):
        t = A @ th
        val = -(yv @ t - np.sum(np.logaddexp(0.0, t))) + 0.5 * spec.tau * th @ th
        p = 1.0 / (1.0 + np.exp(-t))
        return val, -(A.T @ (yv - p)) + spec.tau * th

    res = minimize(f, np.zeros(spec.ndim), jac=True, method="BFGS")
    p = 1.0 / (1.0 + np.exp(-(A @ res.x)))
    H = (A * (p * (1.0 - p))[:, None]).T @ A + spec.tau * np.eye(spec.ndim)
    return res.x, np.linalg.inv(H)


def pima_problem(model_id: str = "M1", tau: float = 0.01, path=None, standardize: bool = True) -> BenchmarkProblem:
    spec = load_pima(path, model_id, tau, standardize)
    mode, cov = pima_laplace(spec)
    chol = np.linalg.cholesky(cov)

    def initial(k, rng):
        return mode + rng.standard_normal((k, spec.ndim)) @ chol.T

    return BenchmarkProblem(
        f"pima_{model_id}_tau_{tau:g}",
        spec.ndim,
        partial(pima_ln_likelihood, spec),
        partial(pima_ln_prior, spec),
        initial=initial,
        info={"model_id": model_id, "tau": tau, "standardized": standardize, "spec": spec},
    )


# -- Radiata pine ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadiataSpec:
    """Linear regression ``y ~ N(alpha + beta (c - cbar), 1/tau)``.

    Priors: ``alpha | tau ~ N(mu_alpha, 1/(r0 tau))``,
    ``beta | tau ~ N(mu_beta, 1/(s0 tau))`` and ``tau ~ Gamma(a0, rate=b0)``.
    Model M1 regresses on density ``x``, M2 on resin-adjusted density ``z``.
    """

    y: np.ndarray
    covariate: np.ndarray
    model_id: str
    mu_alpha: float = 3000.0
    mu_beta: float = 185.0
    r0: float = 0.06
    s0: float = 6.0
    a0: float = 3.0
    b0: float = 2.0 * 300.0**2

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def covariate_mean(self) -> float:
        return float(self.covariate.mean())

    @property
    def design(self) -> np.ndarray:
        return np.column_stack([np.ones(self.n), self.covariate - self.covariate_mean])

    @property
    def prior_mean(self) -> np.ndarray:
        return np.array([self.mu_alpha, self.mu_beta])

    @property
    def prior_precision(self) -> np.ndarray:
        return np.diag([self.r0, self.s0])


def load_radiata_table(path=None, expected_rows: int | None = RADIATA_ROWS) -> dict[str, np.ndarray]:
    path = path or _default_path("radiata.csv")
    data = read_numeric_csv(path, RADIATA_COLUMNS, expected_rows)
    for c in RADIATA_COLUMNS:
        if np.any(data[c] <= 0):
            raise DatasetError(f"{path}: column {c!r} must be positive")
    return data


def load_radiata(path=None, model_id: str = "M1", expected_rows: int | None = RADIATA_ROWS, **hyper) -> RadiataSpec:
    if model_id not in ("M1", "M2"):
        raise ValueError(f"model_id must be 'M1' or 'M2', got {model_id!r}")
    data = load_radiata_table(path, expected_rows)
    cov = data["x"] if model_id == "M1" else data["z"]
    return RadiataSpec(data["y"], cov, model_id, **hyper)


def radiata_ln_prior(spec: RadiataSpec, theta):
    X, single = _as_2d(theta)
    a, b, tau = X[:, 0], X[:, 1], X[:, 2]
    out = np.full(X.shape[0], -np.inf)
    ok = tau > 0
    a, b, t = a[ok], b[ok], tau[ok]
    out[ok] = (
        0.5 * (math.log(spec.r0 * spec.s0) + 2.0 * np.log(t) - 2.0 * LN_2PI)
        - 0.5 * t * (spec.r0 * (a - spec.mu_alpha) ** 2 + spec.s0 * (b - spec.mu_beta) ** 2)
        + spec.a0 * math.log(spec.b0)
        - gammaln(spec.a0)
        + (spec.a0 - 1.0) * np.log(t)
        - spec.b0 * t
    )
    return float(out[0]) if single else out


def radiata_ln_likelihood(spec: RadiataSpec, theta):
    X, single = _as_2d(theta)
    tau = X[:, 2]
    out = np.full(X.shape[0], -np.inf)
    ok = tau > 0
    resid = spec.y[None, :] - X[ok, :2] @ spec.design.T
    out[ok] = 0.5 * spec.n * (np.log(tau[ok]) - LN_2PI) - 0.5 * tau[ok] * np.sum(resid**2, axis=1)
    return float(out[0]) if single else out


def radiata_ln_posterior(spec: RadiataSpec, theta):
    """Joint Normal-Gamma prior plus the Gaussian regression likelihood."""
    X, single = _as_2d(theta)
    out = radiata_ln_prior(spec, X) + radiata_ln_likelihood(spec, X)
    return float(out[0]) if single else out


def radiata_posterior_params(spec: RadiataSpec) -> dict:
    A, y = spec.design, spec.y
    Q0, mu0 = spec.prior_precision, spec.prior_mean
    M = A.T @ A + Q0
    try:
        nu = np.linalg.solve(M, A.T @ y + Q0 @ mu0)
    except np.linalg.LinAlgError as e:
        raise ValueError("posterior precision matrix is singular") from e
    quad = float(y @ y + mu0 @ Q0 @ mu0 - nu @ M @ nu)
    return {"M": M, "nu": nu, "a_n": spec.a0 + 0.5 * spec.n, "b_n": spec.b0 + 0.5 * quad}


def radiata_analytic_ln_z(spec: RadiataSpec) -> float:
    """Closed-form ln evidence of the conjugate regression model."""
    p = radiata_posterior_params(spec)
    ln_det_m = np.linalg.slogdet(p["M"])[1]
    ln_det_q = np.linalg.slogdet(spec.prior_precision)[1]
    return float(
        spec.a0 * math.log(spec.b0)
        - 0.5 * spec.n * LN_2PI
        + gammaln(p["a_n"])
        - gammaln(spec.a0)
        + 0.5 * (ln_det_q - ln_det_m)
        - p["a_n"] * math.log(p["b_n"])
    )


def radiata_problem(model_id: str = "M1", path=None, **hyper) -> BenchmarkProblem:
    spec = load_radiata(path, model_id, **hyper)
    p = radiata_posterior_params(spec)
    tau_mean = p["a_n"] / p["b_n"]
    coef_cov = np.linalg.inv(p["M"]) / tau_mean
    chol = np.linalg.cholesky(coef_cov)
    tau_sd = math.sqrt(p["a_n"]) / p["b_n"]

    def initial(k, rng):
        coef = p["nu"] + rng.standard_normal((k, 2)) @ chol.T
        return np.column_stack([coef, tau_mean + tau_sd * rng.standard_normal(k)])

    return BenchmarkProblem(
        f"radiata_{model_id}",
        3,
        partial(radiata_ln_likelihood, spec),
        partial(radiata_ln_prior, spec),
        ground_truth=GroundTruth("analytic", radiata_analytic_ln_z(spec)),
        initial=initial,
        info={"model_id": model_id, "spec": spec},
    )

"""Benchmark posteriors with reference evidences and vendored datasets."""

from __future__ import annotations

from .datasets import (
    PIMA_REFERENCE_LN_BF,
    RADIATA_REFERENCE_LN_Z,
    DatasetError,
    PimaSpec,
    RadiataSpec,
    load_pima,
    load_radiata,
    log_logistic,
    pima_ln_posterior,
    pima_problem,
    radiata_analytic_ln_z,
    radiata_ln_posterior,
    radiata_problem,
)
from .problems import (
    BenchmarkProblem,
    GroundTruth,
    NormalGammaSpec,
    gaussian_nd_analytic_ln_z,
    gaussian_nd_problem,
    normal_gamma_analytic_ln_z,
    normal_gamma_data,
    normal_gamma_ln_posterior,
    normal_gamma_problem,
    rastrigin_ln_posterior,
    rastrigin_problem,
    rosenbrock_ln_posterior,
    rosenbrock_problem,
)
from .quadrature import QuadratureError, QuadratureResult, quadrature_ln_z

PROBLEMS = {
    "rosenbrock": rosenbrock_problem,
    "rastrigin": rastrigin_problem,
    "normal_gamma": normal_gamma_problem,
    "pima": pima_problem,
    "radiata": radiata_problem,
    "gaussian": gaussian_nd_problem,
}


def get_problem(name: str, **kwargs) -> BenchmarkProblem:
    """Build a benchmark by name, forwarding keyword options to its factory."""
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; expected one of {sorted(PROBLEMS)}") from None
    return factory(**kwargs)


__all__ = [
    "BenchmarkProblem",
    "DatasetError",
    "GroundTruth",
    "NormalGammaSpec",
    "PIMA_REFERENCE_LN_BF",
    "PROBLEMS",
    "PimaSpec",
    "QuadratureError",
    "QuadratureResult",
    "RADIATA_REFERENCE_LN_Z",
    "RadiataSpec",
    "gaussian_nd_analytic_ln_z",
    "gaussian_nd_problem",
    "get_problem",
    "load_pima",
    "load_radiata",
    "log_logistic",
    "normal_gamma_analytic_ln_z",
    "normal_gamma_data",
    "normal_gamma_ln_posterior",
    "normal_gamma_problem",
    "pima_ln_posterior",
    "pima_problem",
    "quadrature_ln_z",
    "radiata_analytic_ln_z",
    "radiata_ln_posterior",
    "radiata_problem",
    "rastrigin_ln_posterior",
    "rastrigin_problem",
    "rosenbrock_ln_posterior",
    "rosenbrock_problem",
]

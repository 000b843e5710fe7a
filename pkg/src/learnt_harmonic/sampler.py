"""Affine-invariant ensemble sampler using the stretch move.

Walkers are updated in two half-ensembles; each walker in the active half
draws a partner from the complementary half and proposes

    Y = partner + z * (X - partner),   g(z) ~ 1/sqrt(z) on [1/a, a],

accepted with probability ``min(1, z**(d-1) * exp(lnP(Y) - lnP(X)))``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chains import ChainStore

LnPosteriorFn = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SamplerConfig:
    nwalkers: int
    nsamples: int
    nburn: int = 0
    stretch_scale: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.nwalkers < 2:
            raise ValueError("nwalkers must be at least 2")
        if self.nsamples < 1:
            raise ValueError("nsamples must be positive")
        if self.nburn < 0:
            raise ValueError("nburn must be non-negative")
        if not self.stretch_scale > 1.0:
            raise ValueError(f"stretch_scale must exceed 1, got {self.stretch_scale}")


@dataclass
class MoveLog:
    """Per-walker proposal bookkeeping (post burn-in unless noted)."""

    proposed: np.ndarray
    accepted: np.ndarray
    burn_proposed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    burn_accepted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    burn_seconds: float = 0.0
    sample_seconds: float = 0.0


def acceptance_rate(log: MoveLog) -> float:
    total = int(np.sum(log.proposed))
    if total == 0:
        raise ValueError("no moves were logged")
    return int(np.sum(log.accepted)) / total


def draw_stretch(rng: np.random.Generator, a: float, size) -> np.ndarray:
    """Inverse-CDF draw from g(z) proportional to 1/sqrt(z) on [1/a, a]."""
    u = rng.random(size)
    return ((a - 1.0) * u + 1.0) ** 2 / a


def stretch_log_accept(z, ndim: int, ln_new, ln_old):
    """Log acceptance probability ``min(0, (d-1) ln z + lnP(Y) - lnP(X))``."""
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        diff = np.asarray(ln_new, dtype=np.float64) - np.asarray(ln_old, dtype=np.float64)
    diff = np.where(np.isnan(diff), -np.inf, diff)
    return np.minimum(0.0, (ndim - 1) * np.log(z) + diff)


def _evaluator(fn: LnPosteriorFn, vectorized: bool) -> Callable[[np.ndarray], np.ndarray]:
    if vectorized:
        def ev(x):
            out = np.asarray(fn(x), dtype=np.float64).reshape(x.shape[0])
            return np.where(np.isnan(out), -np.inf, out)
    else:
        def ev(x):
            out = np.fromiter((fn(row) for row in x), dtype=np.float64, count=x.shape[0])
            return np.where(np.isnan(out), -np.inf, out)
    return ev


def gaussian_ball(center, scale, nwalkers: int, seed: int = 0) -> np.ndarray:
    """Default initial positions: ``center + scale * N(0, I)`` per walker."""
    center = np.atleast_1d(np.asarray(center, dtype=np.float64))
    rng = np.random.default_rng(seed)
    return center + np.asarray(scale, dtype=np.float64) * rng.standard_normal((nwalkers, center.size))


def run_sampler(
    fn: LnPosteriorFn,
    config: SamplerConfig,
    initial,
    *,
    vectorized: bool = False,
    return_log: bool = False,
):
    """Run the ensemble and return one chain per walker (post burn-in).

    Parameters
    ----------
    fn : callable
        ln[L(theta) pi(theta)]; ``-inf`` outside the support. If
        ``vectorized`` it maps an ``(n, d)`` array to ``(n,)`` values.
    config : SamplerConfig
    initial : array, shape (nwalkers, d)
    return_log : bool
        Also return the :class:`MoveLog`.
    """
    x = np.array(initial, dtype=np.float64, copy=True)
    if x.ndim != 2 or x.shape[0] != config.nwalkers:
        raise ValueError(f"initial must have shape ({config.nwalkers}, d), got {x.shape}")
    nwalkers, ndim = x.shape
    if nwalkers < 2 * ndim:
        raise ValueError(f"need nwalkers >= 2*ndim ({2 * ndim}), got {nwalkers}")
    evaluate = _evaluator(fn, vectorized)
    lnp = evaluate(x)
    if not np.all(np.isfinite(lnp)):
        bad = int(np.sum(~np.isfinite(lnp)))
        raise ValueError(f"{bad} initial positions have non-finite ln-posterior")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    a = config.stretch_scale
    half = nwalkers // 2
    halves = (np.arange(half), np.arange(half, nwalkers))

    total = config.nburn + config.nsamples
    chain = np.empty((nwalkers, config.nsamples, ndim))
    chain_lnp = np.empty((nwalkers, config.nsamples))
    proposed = np.zeros((2, nwalkers), dtype=np.int64)
    accepted = np.zeros((2, nwalkers), dtype=np.int64)
    seconds = [0.0, 0.0]

    for it in range(total):
        stage = 0 if it < config.nburn else 1
        t0 = time.perf_counter()
        for k in (0, 1):
            active, other = halves[k], halves[1 - k]
            n = active.size
            z = draw_stretch(rng, a, n)
            partners = other[rng.integers(0, other.size, n)]
            log_u = np.log(rng.random(n))
            y = x[partners] + z[:, None] * (x[active] - x[partners])
            lnp_y = evaluate(y)
            accept = log_u < stretch_log_accept(z, ndim, lnp_y, lnp[active])
            idx = active[accept]
            x[idx] = y[accept]
            lnp[idx] = lnp_y[accept]
            proposed[stage, active] += 1
            accepted[stage, idx] += 1
        if stage:
            j = it - config.nburn
            chain[:, j] = x
            chain_lnp[:, j] = lnp
        seconds[stage] += time.perf_counter() - t0

    store = ChainStore(ndim).add_chains(chain, chain_lnp)
    if not return_log:
        return store
    log = MoveLog(
        proposed=proposed[1],
        accepted=accepted[1],
        burn_proposed=proposed[0],
        burn_accepted=accepted[0],
        burn_seconds=seconds[0],
        sample_seconds=seconds[1],
    )
    return store, log

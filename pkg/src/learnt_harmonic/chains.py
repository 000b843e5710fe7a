"""Multi-chain posterior sample containers and chain-level splitting."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ChainError(ValueError):
    """Raised for inconsistent or non-finite chain data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Chain:
    """One Markov chain: an ``(n, d)`` sample matrix and its ln[L*pi] values."""

    samples: np.ndarray
    ln_posterior: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        lnp = np.asarray(self.ln_posterior, dtype=np.float64)
        if samples.ndim != 2:
            raise ChainError(f"samples must be 2-d, got shape {samples.shape}")
        if lnp.ndim != 1 or lnp.shape[0] != samples.shape[0]:
            raise ChainError(
                f"ln_posterior shape {lnp.shape} does not match {samples.shape[0]} samples"
            )
        if samples.shape[0] == 0:
            raise ChainError("chain is empty")
        if not np.all(np.isfinite(samples)):
            raise ChainError("samples contain non-finite values")
        if not np.all(np.isfinite(lnp)):
            raise ChainError("ln_posterior contains non-finite values")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "ln_posterior", _frozen(lnp))

    @property
    def nsamples(self) -> int:
        return self.samples.shape[0]

    @property
    def ndim(self) -> int:
        return self.samples.shape[1]


class ChainStore:
    """Immutable ordered collection of chains sharing one dimension.

    Mutating-style methods (:meth:`add_chains`, :meth:`add_chain`) return a
    new store.
    """

    def __init__(self, ndim: int, chains: Iterable[Chain] = ()):
        ndim = int(ndim)
        if ndim < 1:
            raise ChainError(f"ndim must be positive, got {ndim}")
        chains = tuple(chains)
        for c in chains:
            if c.ndim != ndim:
                raise ChainError(f"chain has dimension {c.ndim}, store has {ndim}")
        self._ndim = ndim
        self._chains = chains

    @property
    def ndim(self) -> int:
        return self._ndim

    @property
    def chains(self) -> tuple[Chain, ...]:
        return self._chains

    @property
    def nchains(self) -> int:
        return len(self._chains)

    @property
    def nsamples_per_chain(self) -> np.ndarray:
        return np.array([c.nsamples for c in self._chains], dtype=np.int64)

    @property
    def nsamples(self) -> int:
        return int(self.nsamples_per_chain.sum())

    @cached_property
    def samples(self) -> np.ndarray:
        """All samples stacked chain by chain, shape ``(nsamples, ndim)``."""
        if not self._chains:
            return np.empty((0, self._ndim))
        return _frozen(np.concatenate([c.samples for c in self._chains]))

    @cached_property
    def ln_posterior(self) -> np.ndarray:
        if not self._chains:
            return np.empty(0)
        return _frozen(np.concatenate([c.ln_posterior for c in self._chains]))

    @property
    def chain_ids(self) -> np.ndarray:
        """Chain index of every stacked sample (usable as CV ``groups``)."""
        return np.repeat(np.arange(self.nchains), self.nsamples_per_chain)

    def __len__(self) -> int:
        return self.nchains

    def __getitem__(self, idx) -> Chain:
        return self._chains[idx]

    def __repr__(self) -> str:
        return f"ChainStore(ndim={self._ndim}, nchains={self.nchains}, nsamples={self.nsamples})"

    def add_chain(self, samples, ln_posterior) -> "ChainStore":
        return ChainStore(self._ndim, self._chains + (Chain(samples, ln_posterior),))

    def add_chains(self, samples, ln_posterior) -> "ChainStore":
        """Append ``C`` chains from a ``(C, N, d)`` array and ``(C, N)`` ln-posteriors."""
        samples = np.asarray(samples, dtype=np.float64)
        ln_posterior = np.asarray(ln_posterior, dtype=np.float64)
        if samples.ndim != 3:
            raise ChainError(f"samples must be 3-d (C, N, d), got shape {samples.shape}")
        if samples.shape[2] != self._ndim:
            raise ChainError(f"samples have dimension {samples.shape[2]}, store has {self._ndim}")
        if ln_posterior.shape != samples.shape[:2]:
            raise ChainError(
                f"ln_posterior shape {ln_posterior.shape} does not match {samples.shape[:2]}"
            )
        new = tuple(Chain(s, l) for s, l in zip(samples, ln_posterior))
        return ChainStore(self._ndim, self._chains + new)

    def subset(self, indices: Sequence[int]) -> "ChainStore":
        return ChainStore(self._ndim, (self._chains[i] for i in indices))

    @classmethod
    def from_arrays(cls, samples, ln_posterior) -> "ChainStore":
        samples = np.asarray(samples)
        if samples.ndim != 3:
            raise ChainError(f"samples must be 3-d (C, N, d), got shape {samples.shape}")
        return cls(samples.shape[2]).add_chains(samples, ln_posterior)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "ndim": self._ndim,
            "chains": [
                {"samples": c.samples.tolist(), "ln_posterior": c.ln_posterior.tolist()}
                for c in self._chains
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainStore":
        ndim = int(data["ndim"])
        chains = []
        for c in data["chains"]:
            s = np.asarray(c["samples"], dtype=np.float64).reshape(-1, ndim)
            chains.append(Chain(s, c["ln_posterior"]))
        return cls(ndim, chains)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path) -> "ChainStore":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_csv(self, path) -> None:
        """Write one row per sample: chain_id, sample_index, theta_*, ln_posterior.

        Floats are written with ``repr`` so values round-trip exactly.
        """
        header = ["chain_id", "sample_index"]
        header += [f"theta_{i}" for i in range(self._ndim)] + ["ln_posterior"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for j, c in enumerate(self._chains):
                for i in range(c.nsamples):
                    w.writerow([j, i, *map(repr, c.samples[i].tolist()), repr(float(c.ln_posterior[i]))])

    @classmethod
    def from_csv(cls, path) -> "ChainStore":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            theta_cols = [h for h in header if h.startswith("theta_")]
            ndim = len(theta_cols)
            if header[:2] != ["chain_id", "sample_index"] or header[-1] != "ln_posterior" or ndim == 0:
                raise ChainError(f"unexpected chain CSV header: {header}")
            rows = [r for r in reader if r]
        if not rows:
            return cls(ndim)
        data = np.array(rows, dtype=np.float64)
        ids = data[:, 0].astype(np.int64)
        order = np.lexsort((data[:, 1], ids))
        data, ids = data[order], ids[order]
        chains = []
        for cid in np.unique(ids):
            block = data[ids == cid]
            chains.append(Chain(block[:, 2 : 2 + ndim], block[:, -1]))
        return cls(ndim, chains)


@dataclass(frozen=True)
class SplitResult:
    training: ChainStore
    inference: ChainStore
    training_proportion: float
    training_indices: tuple[int, ...]
    inference_indices: tuple[int, ...]


def split_by_chain(store: ChainStore, training_proportion: float = 0.5, seed: int = 0) -> SplitResult:
    """Assign whole chains to training and inference sets.

    The permutation comes from ``numpy.random.Generator(PCG64(seed))``.
    Training receives ``floor(p*C + 0.5)`` chains, clipped so that both
    sides hold at least one chain.
    """
    p = float(training_proportion)
    if not 0.0 < p < 1.0:
        raise ValueError(f"training_proportion must lie in (0, 1), got {p}")
    C = store.nchains
    if C < 2:
        raise ValueError(f"need at least 2 chains to split, got {C}")
    ntrain = int(np.floor(p * C + 0.5))
    ntrain = min(max(ntrain, 1), C - 1)
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(C)
    train_idx = tuple(sorted(int(i) for i in perm[:ntrain]))
    infer_idx = tuple(sorted(int(i) for i in perm[ntrain:]))
    return SplitResult(
        training=store.subset(train_idx),
        inference=store.subset(infer_idx),
        training_proportion=p,
        training_indices=train_idx,
        inference_indices=infer_idx,
    )

"""Config-driven sample -> split -> fit -> estimate pipelines with repetitions.

Config schema (YAML or JSON; omitted keys take the defaults shown)::

    benchmark:   {name: rosenbrock, params: {}}
    sampler:     {nwalkers: null, nsamples: 1000, nburn: 500, stretch_scale: 2.0}
    split:       {training_proportion: 0.5}
    model:       {kind: hypersphere}            # one model, or
    model:       {cross_validation: {nfolds: 2, candidates: [{kind: hypersphere},
                                                            {kind: mgmm, n_components: 2}]}}
    repetitions: 1
    seed:        0
    output:      null

``nwalkers: null`` resolves to ``max(100, 2 * ndim)``. A KDE model may give
``radius_grid`` instead of ``radius`` to select the radius by
cross-validation.

Seeds: repetition ``r`` and stage ``s`` (0 initial walkers, 1 sampler,
2 split, 3 model) use ``SeedSequence([seed, r, s]).generate_state(1)[0]``.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .benchmarks import PROBLEMS, get_problem
from .chains import split_by_chain
from .evidence import Evidence, EvidenceResult, bayes_factor
from .sampler import SamplerConfig, acceptance_rate, run_sampler
from .targets import MODEL_KINDS, CrossValidationPlan, cross_validate, make_model

SCHEMA_VERSION = 1
STAGES = {"initial": 0, "sampler": 1, "split": 2, "model": 3}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def derive_seed(base: int, repetition: int, stage: str) -> int:
    """Deterministic 32-bit seed for one stage of one repetition."""
    return int(np.random.SeedSequence([int(base), int(repetition), STAGES[stage]]).generate_state(1)[0])


_DEFAULTS = {
    "benchmark": {"name": None, "params": {}},
    "sampler": {"nwalkers": None, "nsamples": 1000, "nburn": 500, "stretch_scale": 2.0},
    "split": {"training_proportion": 0.5},
    "model": {"kind": "hypersphere"},
    "repetitions": 1,
    "seed": 0,
    "output": None,
}


@dataclass
class ExperimentConfig:
    benchmark: dict
    sampler: dict
    split: dict
    model: dict
    repetitions: int = 1
    seed: int = 0
    output: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = copy.deepcopy(_DEFAULTS)
        for key, value in data.items():
            if isinstance(merged[key], dict) and key != "model":
                if not isinstance(value, dict):
                    raise ConfigError(f"{key!r} must be a mapping")
                extra = set(value) - set(merged[key])
                if extra:
                    raise ConfigError(f"unknown {key} keys: {sorted(extra)}")
                merged[key].update(value)
            else:
                merged[key] = value
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config {path}: {e}") from e
        return cls.from_dict(data)

    def validate(self) -> None:
        name = self.benchmark.get("name")
        if name not in PROBLEMS:
            raise ConfigError(f"unknown benchmark {name!r}; expected one of {sorted(PROBLEMS)}")
        if not isinstance(self.benchmark.get("params"), dict):
            raise ConfigError("benchmark.params must be a mapping")
        if not isinstance(self.repetitions, int) or self.repetitions < 1:
            raise ConfigError(f"repetitions must be an integer >= 1, got {self.repetitions!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        p = self.split.get("training_proportion")
        if not isinstance(p, (int, float)) or not 0 < p < 1:
            raise ConfigError(f"split.training_proportion must lie in (0, 1), got {p!r}")
        s = self.sampler
        for key in ("nsamples", "nburn"):
            if not isinstance(s[key], int) or s[key] < (1 if key == "nsamples" else 0):
                raise ConfigError(f"sampler.{key} invalid: {s[key]!r}")
        if s["nwalkers"] is not None and (not isinstance(s["nwalkers"], int) or s["nwalkers"] < 4):
            raise ConfigError(f"sampler.nwalkers invalid: {s['nwalkers']!r}")
        if not isinstance(s["stretch_scale"], (int, float)) or not s["stretch_scale"] > 1:
            raise ConfigError("sampler.stretch_scale must exceed 1")
        for spec in self.candidate_specs():
            if not isinstance(spec, dict) or spec.get("kind") not in MODEL_KINDS:
                raise ConfigError(f"unknown model spec {spec!r}; kinds are {sorted(MODEL_KINDS)}")
            try:
                make_model({k: v for k, v in spec.items() if k != "radius_grid"})
            except TypeError as e:
                raise ConfigError(f"bad model parameters in {spec!r}: {e}") from e
        cv = self.model.get("cross_validation")
        if cv is not None and int(cv.get("nfolds", 2)) < 2:
            raise ConfigError("cross_validation.nfolds must be at least 2")

    def candidate_specs(self) -> list[dict]:
        m = self.model
        if not isinstance(m, dict):
            raise ConfigError("model must be a mapping")
        if "cross_validation" in m:
            cands = m["cross_validation"].get("candidates") or []
            if not cands:
                raise ConfigError("cross_validation.candidates is empty")
            return [dict(c) for c in cands]
        if m.get("kind") == "kde" and "radius_grid" in m:
            grid = m["radius_grid"]
            if not grid or any(not (isinstance(r, (int, float)) and r > 0) for r in grid):
                raise ConfigError("radius_grid must be a non-empty list of positive radii")
            base = {k: v for k, v in m.items() if k not in ("radius_grid", "nfolds")}
            return [{**base, "radius": float(r)} for r in grid]
        return [dict(m)]

    @property
    def uses_cv(self) -> bool:
        return len(self.candidate_specs()) > 1 or "cross_validation" in self.model

    @property
    def nfolds(self) -> int:
        if "cross_validation" in self.model:
            return int(self.model["cross_validation"].get("nfolds", 2))
        return int(self.model.get("nfolds", 2))

    def to_dict(self) -> dict:
        return {
            "benchmark": copy.deepcopy(self.benchmark),
            "sampler": dict(self.sampler),
            "split": dict(self.split),
            "model": copy.deepcopy(self.model),
            "repetitions": self.repetitions,
            "seed": self.seed,
            "output": self.output,
        }


@dataclass
class RepetitionResult:
    index: int
    status: str  # "ok" or "failed"
    seeds: dict
    evidence: EvidenceResult | None = None
    model: dict = field(default_factory=dict)
    acceptance_rate: float | None = None
    error: str | None = None
    timings: dict = field(default_factory=dict)

    def to_dict(self, ground_truth: float | None) -> dict:
        ev = self.evidence.to_dict() if self.evidence is not None else None
        err = None
        if self.evidence is not None and ground_truth is not None:
            err = self.evidence.ln_evidence_mean - ground_truth
        return {
            "index": self.index,
            "status": self.status,
            "seeds": self.seeds,
            "evidence": ev,
            "ln_z_error": err,
            "model": self.model,
            "acceptance_rate": self.acceptance_rate,
            "error": self.error,
        }


@dataclass
class ExperimentReport:
    config: dict
    ground_truth: dict | None
    repetitions: list[RepetitionResult]
    timings: dict = field(default_factory=dict)

    @property
    def successes(self) -> list[RepetitionResult]:
        return [r for r in self.repetitions if r.status == "ok"]

    def aggregate(self) -> dict:
        ok = self.successes
        ln_z = np.array([r.evidence.ln_evidence_mean for r in ok])
        est = np.array([r.evidence.ln_evidence_std for r in ok])
        out = {
            "n_success": len(ok),
            "n_failed": len(self.repetitions) - len(ok),
            "mean_ln_z": float(ln_z.mean()) if ok else None,
            "measured_std_ln_z": float(ln_z.std(ddof=1)) if len(ok) > 1 else None,
            "mean_estimated_std_ln_z": float(est.mean()) if ok else None,
        }
        if self.ground_truth is not None and ok:
            out["mean_ln_z_error"] = out["mean_ln_z"] - self.ground_truth["ln_z"]
        return out

    def to_dict(self) -> dict:
        """Deterministic content; wall-clock timings are kept separately."""
        gt = self.ground_truth["ln_z"] if self.ground_truth else None
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "ground_truth": self.ground_truth,
            "repetitions": [r.to_dict(gt) for r in self.repetitions],
            "aggregate": self.aggregate(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
        reps = []
        for r in data["repetitions"]:
            ev = EvidenceResult.from_dict(r["evidence"]) if r["evidence"] is not None else None
            reps.append(
                RepetitionResult(
                    r["index"], r["status"], r["seeds"], ev, r["model"], r["acceptance_rate"], r["error"]
                )
            )
        return cls(data["config"], data["ground_truth"], reps)


def build_problem(config: ExperimentConfig):
    try:
        return get_problem(config.benchmark["name"], **config.benchmark["params"])
    except TypeError as e:
        raise ConfigError(f"bad benchmark parameters: {e}") from e


def resolved_sampler(config: ExperimentConfig, ndim: int) -> dict:
    s = dict(config.sampler)
    if s["nwalkers"] is None:
        s["nwalkers"] = max(100, 2 * ndim)
    if s["nwalkers"] < 2 * ndim:
        raise ConfigError(f"sampler.nwalkers must be at least 2*ndim = {2 * ndim}")
    return s


def _with_seed(spec: dict, seed: int) -> dict:
    spec = dict(spec)
    if spec.get("kind") == "mgmm":
        spec.setdefault("random_state", seed)
    return spec


def run_repetition(problem, config: ExperimentConfig, sampler: dict, index: int) -> RepetitionResult:
    seeds = {stage: derive_seed(config.seed, index, stage) for stage in STAGES}
    timings = {}
    try:
        initial = problem.initial_positions(sampler["nwalkers"], seeds["initial"])
        scfg = SamplerConfig(seed=seeds["sampler"], **sampler)
        store, log = run_sampler(problem.ln_posterior, scfg, initial, vectorized=True, return_log=True)
        timings.update(burn_seconds=log.burn_seconds, sample_seconds=log.sample_seconds)
        split = split_by_chain(store, config.split["training_proportion"], seeds["split"])

        t0 = time.perf_counter()
        specs = [_with_seed(s, seeds["model"]) for s in config.candidate_specs()]
        model_info: dict = {}
        if config.uses_cv:
            plan = CrossValidationPlan(nfolds=config.nfolds, seed=seeds["model"])
            cv = cross_validate(split.training, [make_model(s) for s in specs], plan)
            model = cv.best_estimator
            model_info["cv"] = cv.to_dict()
        else:
            model = make_model(specs[0]).fit_chains(split.training)
        model_info.update(kind=model.kind, params=model.get_params())
        timings["fit_seconds"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        provenance = {
            "benchmark": problem.name,
            "repetition": index,
            "seeds": seeds,
            "model": model.kind,
            "training_chains": list(split.training_indices),
        }
        result = Evidence(model).add_chains(split.inference).compute(provenance=provenance)
        timings["evidence_seconds"] = time.perf_counter() - t0
        return RepetitionResult(index, "ok", seeds, result, model_info, acceptance_rate(log), timings=timings)
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as e:
        return RepetitionResult(index, "failed", seeds, error=f"{type(e).__name__}: {e}", timings=timings)


def run_experiment(config: ExperimentConfig, *, write: bool = True) -> ExperimentReport:
    """Run every repetition; failures are recorded and the run continues."""
    config.validate()
    t0 = time.perf_counter()
    problem = build_problem(config)
    setup = time.perf_counter() - t0
    sampler = resolved_sampler(config, problem.ndim)
    echoed = config.to_dict()
    echoed.pop("output")  # keeps the report bytes independent of where it is written
    echoed["sampler"] = sampler
    echoed["resolved"] = {
        "ndim": problem.ndim,
        "problem": problem.name,
        "candidates": config.candidate_specs(),
        "nfolds": config.nfolds if config.uses_cv else None,
        "problem_info": {k: v for k, v in problem.info.items() if k != "spec"},
    }
    gt = None
    if problem.ground_truth is not None:
        gt = {"kind": problem.ground_truth.kind, "ln_z": problem.ground_truth.ln_z}
    reps = [run_repetition(problem, config, sampler, i) for i in range(config.repetitions)]
    timings = {
        "setup_seconds": setup,
        "total_seconds": time.perf_counter() - t0,
        "repetitions": [r.timings for r in reps],
    }
    report = ExperimentReport(echoed, gt, reps, timings)
    if write and config.output:
        emit_report(report, config.output, "json")
    return report


def compare_models(config1: ExperimentConfig, config2: ExperimentConfig) -> dict:
    """Run two experiments and form ln BF_12 per paired repetition."""
    r1, r2 = run_experiment(config1, write=False), run_experiment(config2, write=False)
    pairs = []
    for a, b in zip(r1.repetitions, r2.repetitions):
        if a.status == "ok" and b.status == "ok":
            pairs.append({"index": a.index, **bayes_factor(a.evidence, b.evidence).to_dict()})
        else:
            pairs.append({"index": a.index, "error": a.error or b.error})
    good = [p for p in pairs if "ln_bf" in p]
    return {
        "schema_version": SCHEMA_VERSION,
        "bayes_factors": pairs,
        "aggregate": {
            "n_success": len(good),
            "mean_ln_bf": float(np.mean([p["ln_bf"] for p in good])) if good else None,
            "mean_ln_bf_taylor": float(np.mean([p["ln_bf_mean"] for p in good])) if good else None,
            "mean_ln_bf_std": float(np.mean([p["ln_bf_std"] for p in good])) if good else None,
        },
        "report_1": r1.to_dict(),
        "report_2": r2.to_dict(),
    }


# -- report emission -------------------------------------------------------

CSV_FIELDS = (
    "index",
    "status",
    "ln_evidence_mean",
    "ln_evidence_std",
    "ln_rho_hat",
    "ln_sigma2",
    "kappa_hat",
    "n_eff",
    "ground_truth_ln_z",
    "ln_z_error",
    "model_kind",
    "error",
)


def dumps_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def report_csv(report: dict) -> str:
    gt = report["ground_truth"]["ln_z"] if report.get("ground_truth") else None
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in report["repetitions"]:
        ev = r["evidence"] or {}
        w.writerow(
            {
                "index": r["index"],
                "status": r["status"],
                "ln_evidence_mean": repr(ev["ln_evidence_mean"]) if ev else "",
                "ln_evidence_std": repr(ev["ln_evidence_std"]) if ev else "",
                "ln_rho_hat": repr(ev["ln_rho_hat"]) if ev else "",
                "ln_sigma2": repr(ev["ln_sigma2"]) if ev else "",
                "kappa_hat": repr(ev["kappa_hat"]) if ev else "",
                "n_eff": repr(ev["n_eff"]) if ev else "",
                "ground_truth_ln_z": "" if gt is None else repr(gt),
                "ln_z_error": "" if r["ln_z_error"] is None else repr(r["ln_z_error"]),
                "model_kind": (r.get("model") or {}).get("kind", ""),
                "error": r["error"] or "",
            }
        )
    return buf.getvalue()


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    except OSError as e:
        raise OSError(f"cannot write report to {path}: {e}") from e
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def emit_report(report: ExperimentReport | dict, path, fmt: str = "json") -> Path:
    """Write a report atomically as schema-versioned JSON or per-repetition CSV.

    For :class:`ExperimentReport` objects with timings, the JSON variant
    also writes ``<path>.timings.json``; the main file stays byte-stable
    across reruns.
    """
    data = report.to_dict() if isinstance(report, ExperimentReport) else report
    if fmt == "json":
        text = dumps_json(data)
    elif fmt == "csv":
        text = report_csv(data)
    else:
        raise ValueError(f"format must be 'json' or 'csv', got {fmt!r}")
    path = Path(path)
    _atomic_write(path, text)
    if fmt == "json" and isinstance(report, ExperimentReport) and report.timings:
        _atomic_write(path.with_name(path.name + ".timings.json"), dumps_json(report.timings))
    return path


def load_report(path) -> dict:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path} is not a version-{SCHEMA_VERSION} report")
    return data

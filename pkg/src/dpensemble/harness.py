"""Experiment runner: sweeps over methods, party counts, privacy levels
and trials, with canonical CSV output.

The user-facing privacy knob is inv_epsilon = 1/epsilon (the x-axis of
the accuracy figures); inv_epsilon = 0 means no noise.  Party shards and
ensembles are fixed per (M, non-private trial); only the noise is redrawn
across private trials.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import data as D
from . import pipelines as P
from .data import DataError, Dataset, PartitionPlan, SyntheticSpec
from .ensemble import train_locals
from .models import LossSpec
from .pipelines import MethodSpec, evaluate


class ConfigError(Exception):
    pass


CSV_COLUMNS = ["method", "M", "inv_epsilon", "trial", "accuracy",
               "noise_norm", "beta", "solver_iters", "runtime_ms", "seed"]


@dataclass(frozen=True)
class ResultRecord:
    method: str
    M: int
    inv_epsilon: float
    trial: int
    accuracy: float
    noise_norm: float
    beta: float  # inf for non-private releases
    solver_iters: int
    runtime_ms: int
    seed: int

    def sort_key(self):
        return (self.method, self.M, self.inv_epsilon, self.trial)


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset source: exactly one of path or synthetic
    path: str | None = None
    format: str = "csv"
    test_path: str | None = None
    synthetic: dict | None = None
    add_bias: bool = True
    aux_fraction: float = 0.1
    lam: float = 1e-4
    loss: str = "logistic"
    M: tuple[int, ...] = (10,)
    inv_epsilon: tuple[float, ...] = (0.0, 1.0)
    methods: tuple[str, ...] = ("batch", "indiv", "vote", "soft", "avg")
    protect_aux: bool = False
    trials_private: int = 100
    trials_nonprivate: int = 10
    master_seed: int = 0
    test_fraction: float = 0.3
    record_runtime: bool = False  # keeps CSVs byte-identical across runs
    workers: int = 1
    output: str = "results.csv"

    def validate(self):
        problems = []
        if (self.path is None) == (self.synthetic is None):
            problems.append("exactly one of 'path' or 'synthetic' must be set")
        if not self.M:
            problems.append("M list is empty")
        if any(m < 1 for m in self.M):
            problems.append("M entries must be >= 1")
        if not self.inv_epsilon:
            problems.append("inv_epsilon list is empty")
        if any(v < 0 for v in self.inv_epsilon):
            problems.append("inv_epsilon entries must be >= 0")
        if not self.methods:
            problems.append("methods list is empty")
        unknown = [m for m in self.methods if m not in P.METHODS]
        if unknown:
            problems.append(f"unknown methods {unknown}")
        if self.trials_private < 1 or self.trials_nonprivate < 1:
            problems.append("trials_private and trials_nonprivate must be >= 1")
        if not 0.0 < self.aux_fraction < 1.0:
            problems.append("aux_fraction must lie in (0, 1)")
        if self.lam <= 0:
            problems.append("lam must be > 0")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read the YAML key-value config file, apply CLI overrides, validate."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"config parse error: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw.update(overrides or {})
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("M", "inv_epsilon", "methods"):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(raw[key])
    try:
        return ExperimentConfig(**raw).validate()
    except TypeError as e:
        raise ConfigError(str(e)) from None


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit per-job seed; independent of scheduling order."""
    text = ":".join([str(master_seed)] + [str(p) for p in parts])
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _build_synthetic_spec(cfg: dict) -> SyntheticSpec:
    d = int(cfg.get("d", 10))
    K = int(cfg.get("K", 2))
    sep = float(cfg.get("separation", 2.0))
    means = np.asarray(cfg["means"]) if "means" in cfg else D.default_means(K, d, sep)
    return SyntheticSpec(d=d, K=K, means=means,
                         cov_scale=float(cfg.get("cov_scale", 1.0)),
                         label_noise=float(cfg.get("label_noise", 0.0)),
                         seed=int(cfg.get("seed", 0)))


def _prepare_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Returns (train, test), bias-augmented and normalized with the
    training scale.  The test set never feeds shards or the aux pool."""
    if config.synthetic is not None:
        spec = _build_synthetic_spec(dict(config.synthetic))
        n = int(dict(config.synthetic).get("n", 2000))
        full = D.synthesize(spec, n, seed=derive_seed(config.master_seed, "data"))
        train, test = D.train_test_split(
            full, config.test_fraction, derive_seed(config.master_seed, "split"))
    else:
        full = D.load(config.path, config.format)
        if config.test_path:
            train, test = full, D.load(config.test_path, config.format, K=full.K)
        else:
            train, test = D.train_test_split(
                full, config.test_fraction, derive_seed(config.master_seed, "split"))
    if config.add_bias:
        train, test = D.add_bias(train), D.add_bias(test)
    train, scale = D.normalize(train)
    test = D.apply_scale(test, scale)
    return train, test


def _union(shards: list[Dataset]) -> Dataset:
    X = np.vstack([s.X for s in shards])
    y = np.concatenate([s.y for s in shards])
    return Dataset(X, y, K=shards[0].K)


@dataclass
class _Cell:
    """Partition + ensemble shared by every method at one (M, trial)."""

    shards: list
    aux: Dataset
    ensemble: object


def run_experiment(config: ExperimentConfig) -> list[ResultRecord]:
    config.validate()
    train, test = _prepare_data(config)
    loss = LossSpec(config.loss)
    records: list[ResultRecord] = []

    def base_spec(method, eps, seed):
        return MethodSpec(method=method, epsilon=eps, lam=config.lam, loss=loss,
                          protect_aux=config.protect_aux, seed=seed)

    def make_cell(M, trial) -> _Cell:
        plan = PartitionPlan(M=M, aux_fraction=config.aux_fraction,
                             seed=derive_seed(config.master_seed, "part", M, trial))
        shards, aux = D.partition(train, plan)
        return _Cell(shards, aux, train_locals(shards, config.lam, loss))

    nonprivate = [m for m in config.methods if m in ("batch", "indiv")]
    private = [m for m in config.methods if m in P.PRIVATE_METHODS]

    jobs = []

    def nonprivate_job(method, M, trial):
        def job():
            t0 = time.perf_counter()
            cell = make_cell(M, trial)
            spec = base_spec(method, math.inf, 0)
            if method == "batch":
                model, diag = P.run_batch(_union(cell.shards), spec)
                acc = evaluate(model, test)
            else:
                acc, diag = P.run_indiv(cell.shards, test, spec)
            ms = int((time.perf_counter() - t0) * 1000) if config.record_runtime else 0
            return ResultRecord(method, M, 0.0, trial, acc, 0.0, math.inf,
                                diag["solver_iters"], ms,
                                derive_seed(config.master_seed, "part", M, trial))
        return job

    def private_job(method, M, inv_eps):
        def job():
            t0 = time.perf_counter()
            cell = make_cell(M, 0)
            eps = math.inf if inv_eps == 0 else 1.0 / inv_eps
            spec = base_spec(method, eps, 0)
            if method == "vote":
                prep = P.prepare_vote(cell.ensemble, cell.aux, spec)
            elif method == "soft":
                prep = P.prepare_soft(cell.ensemble, cell.aux, spec)
            else:
                prep = P.prepare_avg(cell.shards, spec)
            out = []
            for trial in range(config.trials_private):
                seed = derive_seed(config.master_seed, "noise", method, M,
                                   inv_eps, trial)
                model, diag = P.release(prep, eps, seed)
                acc = evaluate(model, test)
                ms = int((time.perf_counter() - t0) * 1000) if config.record_runtime else 0
                out.append(ResultRecord(method, M, float(inv_eps), trial, acc,
                                        diag["noise_norm"], diag["beta"],
                                        diag["solver_iters"], ms, seed))
            return out
        return job

    for M in config.M:
        for method in nonprivate:
            for trial in range(config.trials_nonprivate):
                jobs.append(nonprivate_job(method, M, trial))
        for method in private:
            for inv_eps in config.inv_epsilon:
                jobs.append(private_job(method, M, inv_eps))

    if config.workers == 1:
        results = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda j: j(), jobs))
    for res in results:
        records.extend(res if isinstance(res, list) else [res])
    records.sort(key=ResultRecord.sort_key)
    if config.output:
        write_records(records, config.output)
    return records


# ---------------------------------------------------------------------------
# CSV emission / parsing (round-trip exact)

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal form
    return str(value)


def emit_records(records: list[ResultRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def write_records(records: list[ResultRecord], path) -> None:
    Path(path).write_text(emit_records(records))


def parse_records(text: str) -> list[ResultRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_COLUMNS:
        raise DataError(f"unexpected CSV header: {rows[0] if rows else 'empty'}")
    out = []
    for row in rows[1:]:
        vals = dict(zip(CSV_COLUMNS, row))
        out.append(ResultRecord(
            method=vals["method"], M=int(vals["M"]),
            inv_epsilon=float(vals["inv_epsilon"]), trial=int(vals["trial"]),
            accuracy=float(vals["accuracy"]), noise_norm=float(vals["noise_norm"]),
            beta=float(vals["beta"]), solver_iters=int(vals["solver_iters"]),
            runtime_ms=int(vals["runtime_ms"]), seed=int(vals["seed"])))
    return out


def read_records(path) -> list[ResultRecord]:
    return parse_records(Path(path).read_text())


# ---------------------------------------------------------------------------
# summaries

SUMMARY_COLUMNS = ["method", "M", "inv_epsilon", "n", "mean_accuracy", "sd_accuracy"]


def summarize(records: list[ResultRecord]) -> list[dict]:
    """Per-(method, M, inv_epsilon) mean and population s.d. of accuracy."""
    if not records:
        raise DataError("no records to summarize")
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.method, r.M, r.inv_epsilon), []).append(r.accuracy)
    rows = []
    for (method, M, inv_eps), accs in sorted(groups.items()):
        accs = np.asarray(accs)
        rows.append({"method": method, "M": M, "inv_epsilon": inv_eps,
                     "n": len(accs), "mean_accuracy": float(accs.mean()),
                     "sd_accuracy": float(accs.std())})
    return rows


def write_summary(rows: list[dict], path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    Path(path).write_text(buf.getvalue())

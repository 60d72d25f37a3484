"""End-to-end training pipelines and the generalization-bound calculator.

Five methods share one evaluation path:
  batch - ERM over all private data, no privacy
  indiv - mean test accuracy of the local classifiers
  vote  - transfer hard majority labels, ERM, perturb
  soft  - transfer vote fractions, weighted ERM, perturb
  avg   - perturbed mean of per-shard ERM parameters

Private pipelines are split into a deterministic prepare stage (solve for
w_s, fix the sensitivity) and a release stage (sample noise, output w_p),
so repeated private trials redraw only the noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .ensemble import Ensemble, train_locals, transfer
from .models import (LinearModel, LossSpec, accuracy, erm_minimize, risk,
                     weighted_erm_minimize)
from .privacy import SensitivitySpec, noise_spec_for, perturb, sensitivity


class PipelineError(Exception):
    pass


METHODS = ("batch", "indiv", "vote", "soft", "avg")
PRIVATE_METHODS = ("vote", "soft", "avg")


@dataclass(frozen=True)
class MethodSpec:
    method: str
    epsilon: float = math.inf  # inf means zero noise
    lam: float = 1e-4
    loss: LossSpec = field(default_factory=LossSpec)
    protect_aux: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise PipelineError(f"unknown method {self.method!r}")
        if not (self.epsilon > 0):
            raise PipelineError("epsilon must be > 0 (or inf)")
        if self.lam <= 0:
            raise PipelineError("lam must be > 0")


def _arity(K: int) -> str:
    return "binary" if K == 2 else "multiclass"


@dataclass(frozen=True)
class PreparedRelease:
    """Pre-noise solution plus everything needed to sanitize it."""

    w_s: LinearModel
    sens_spec: SensitivitySpec
    solver_iters: int
    risk_args: tuple | None = None  # (S, lam, loss, weighted) for diagnostics

    @property
    def sensitivity(self) -> float:
        return sensitivity(self.sens_spec)


def prepare_vote(ensemble: Ensemble, aux: Dataset, spec: MethodSpec) -> PreparedRelease:
    labeled = transfer(ensemble, aux, mode="vote")
    w_s, report = erm_minimize(labeled, spec.lam, spec.loss)
    sens_spec = SensitivitySpec("vote-erm", _arity(ensemble.K), spec.lam,
                                M=ensemble.M, N=aux.n, protect_aux=spec.protect_aux)
    return PreparedRelease(w_s, sens_spec, report.iterations,
                           (labeled, spec.lam, spec.loss, False))


def prepare_soft(ensemble: Ensemble, aux: Dataset, spec: MethodSpec) -> PreparedRelease:
    soft = transfer(ensemble, aux, mode="soft")
    w_s, report = weighted_erm_minimize(soft, spec.lam, spec.loss)
    sens_spec = SensitivitySpec("soft-erm", _arity(ensemble.K), spec.lam,
                                M=ensemble.M, N=aux.n, protect_aux=spec.protect_aux)
    return PreparedRelease(w_s, sens_spec, report.iterations,
                           (soft, spec.lam, spec.loss, True))


def prepare_avg(shards: list[Dataset], spec: MethodSpec) -> PreparedRelease:
    """Parameter averaging; defined only for homogeneous linear locals, so
    every shard is refit with the shared linear loss."""
    if not shards:
        raise PipelineError("no shards")
    models, iters = [], 0
    for shard in shards:
        model, report = erm_minimize(shard, spec.lam, spec.loss)
        models.append(model)
        iters += report.iterations
    K = shards[0].K
    w_bar = LinearModel(np.mean([m.w for m in models], axis=0), d=models[0].d, K=K)
    sens_spec = SensitivitySpec("param-avg", _arity(K), spec.lam,
                                M=len(shards), protect_aux=spec.protect_aux)
    return PreparedRelease(w_bar, sens_spec, iters)


def release(prep: PreparedRelease, epsilon: float, seed) -> tuple[LinearModel, dict]:
    """Sample eta with density exp(-beta ||eta||) and output w_p = w_s + eta."""
    noise = noise_spec_for(epsilon, prep.sensitivity, prep.w_s.w.shape[0])
    w_p, eta_norm = perturb(prep.w_s, noise, seed)
    diag = {"beta": noise.beta, "noise_norm": eta_norm,
            "solver_iters": prep.solver_iters, "sensitivity": prep.sensitivity}
    if prep.risk_args is not None:
        S, lam, loss, weighted = prep.risk_args
        diag["pre_noise_risk"] = risk(prep.w_s, S, lam, loss, weighted=weighted)
        diag["post_noise_risk"] = risk(w_p, S, lam, loss, weighted=weighted)
    return w_p, diag


def run_vote(ensemble: Ensemble, aux: Dataset, spec: MethodSpec):
    """Majority-voted ERM with output perturbation (binary beta = lam*eps/2)."""
    return release(prepare_vote(ensemble, aux, spec), spec.epsilon, spec.seed)


def run_soft(ensemble: Ensemble, aux: Dataset, spec: MethodSpec):
    """Weighted ERM on vote fractions (binary beta = M*lam*eps/2; divided
    by (N+M-1)/N when the auxiliary data is protected too)."""
    return release(prepare_soft(ensemble, aux, spec), spec.epsilon, spec.seed)


def run_avg(shards: list[Dataset], spec: MethodSpec):
    """Perturbed parameter averaging of per-shard ERM solutions."""
    return release(prepare_avg(shards, spec), spec.epsilon, spec.seed)


def run_batch(all_private: Dataset, spec: MethodSpec):
    """Single ERM over the union of all private data, no noise."""
    w, report = erm_minimize(all_private, spec.lam, spec.loss)
    diag = {"beta": math.inf, "noise_norm": 0.0,
            "solver_iters": report.iterations,
            "gradient_norm": report.gradient_norm}
    return w, diag


def run_indiv(shards: list[Dataset], test: Dataset, spec: MethodSpec):
    """Mean held-out accuracy of the individually trained local models."""
    ensemble = train_locals(shards, spec.lam, spec.loss)
    accs = [float(np.mean(h(test.X) == test.y)) for h in ensemble.classifiers]
    diag = {"beta": math.inf, "noise_norm": 0.0, "solver_iters": 0,
            "per_party_accuracy": accs}
    return float(np.mean(accs)), diag


def evaluate(model: LinearModel, test: Dataset) -> float:
    """Shared evaluation path: accuracy on the held-out test set."""
    return accuracy(model, test)


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the three-term generalization gap for the soft pipeline."""

    d: int
    c: float
    lam: float
    M: int
    epsilon: float
    N: int
    delta_p: float
    delta_s: float
    w0_norm: float

    def __post_init__(self):
        if not (0 < self.delta_p < 1 and 0 < self.delta_s < 1):
            raise PipelineError("delta_p and delta_s must lie in (0, 1)")
        if min(self.d, self.M, self.N) < 1 or self.lam <= 0 or self.epsilon <= 0:
            raise PipelineError("scales must be positive")


def theorem3_bound(p: BoundParams) -> tuple[float, float, float]:
    """Additive gap terms (noise, sample, regularization):

      noise  = 4 d^2 (c + lam) log^2(d / delta_p) / (lam^2 M^2 eps^2)
      sample = 16 (32 + log(1 / delta_s)) / (lam N)
      reg    = lam / 2 * ||w_0||^2
    """
    noise_term = (4.0 * p.d ** 2 * (p.c + p.lam) * math.log(p.d / p.delta_p) ** 2
                  / (p.lam ** 2 * p.M ** 2 * p.epsilon ** 2))
    sample_term = 16.0 * (32.0 + math.log(1.0 / p.delta_s)) / (p.lam * p.N)
    reg_term = 0.5 * p.lam * p.w0_norm ** 2
    return noise_term, sample_term, reg_term

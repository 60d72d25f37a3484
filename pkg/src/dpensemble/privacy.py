"""L2 sensitivities, exponential-norm noise, and output perturbation.

The released vector w_s is made epsilon-differentially private by adding
a noise vector with density proportional to exp(-beta * ||eta||), where
beta = epsilon / S(f).  Neighboring datasets differ in ALL samples of a
single party.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .models import LinearModel


class PrivacyError(Exception):
    pass


_METHODS = ("vote-erm", "soft-erm", "standard-erm", "param-avg")
_ARITIES = ("binary", "multiclass")

# L2 sensitivity of the released minimizer, as a function of (lam, M, N).
# vote-erm is independent of M; standard-erm uses single-sample neighbors.
_TABLE = {
    ("vote-erm", "binary"): lambda lam, M, N: 2.0 / lam,
    ("soft-erm", "binary"): lambda lam, M, N: 2.0 / (M * lam),
    ("standard-erm", "binary"): lambda lam, M, N: 2.0 / (N * lam),
    ("param-avg", "binary"): lambda lam, M, N: 2.0 / (M * lam),
    ("vote-erm", "multiclass"): lambda lam, M, N: math.sqrt(2.0) / lam,
    ("soft-erm", "multiclass"): lambda lam, M, N: math.sqrt(2.0) / (M * lam),
    ("standard-erm", "multiclass"): lambda lam, M, N: 2.0 * math.sqrt(2.0) / (N * lam),
    ("param-avg", "multiclass"): lambda lam, M, N: 2.0 * math.sqrt(2.0) / (M * lam),
}


@dataclass(frozen=True)
class SensitivitySpec:
    method: str
    arity: str = "binary"
    lam: float = 1e-4
    M: int = 1
    N: int = 1  # auxiliary-pool size; used only when protect_aux
    protect_aux: bool = False

    def __post_init__(self):
        if self.method not in _METHODS:
            raise PrivacyError(f"unknown method {self.method!r}")
        if self.arity not in _ARITIES:
            raise PrivacyError(f"unknown arity {self.arity!r}")
        if self.lam <= 0:
            raise PrivacyError("lam must be > 0")
        if self.M < 1:
            raise PrivacyError("M must be >= 1")
        if self.protect_aux and self.N < 1:
            raise PrivacyError("N must be >= 1 when protect_aux is set")


def sensitivity(spec: SensitivitySpec) -> float:
    """Global L2 sensitivity of the release mechanism.

    protect_aux additionally covers a single auxiliary sample: soft-erm
    grows by (N + M - 1) / N, vote-erm is already private without change.
    """
    value = _TABLE[(spec.method, spec.arity)](spec.lam, spec.M, spec.N)
    if spec.protect_aux:
        if spec.method == "soft-erm":
            value *= (spec.N + spec.M - 1) / spec.N
        elif spec.method in ("param-avg", "standard-erm"):
            raise PrivacyError(f"protect_aux is not defined for {spec.method}")
        # vote-erm: unchanged
    return value


@dataclass(frozen=True)
class NoiseSpec:
    """beta is the inverse length scale of the density exp(-beta ||eta||);
    beta = inf is the zero-noise sentinel (epsilon = inf)."""

    beta: float
    d_total: int

    def __post_init__(self):
        if not (self.beta > 0):  # rejects NaN and non-positive values
            raise PrivacyError("beta must be > 0 (or inf for zero noise)")
        if self.d_total < 1:
            raise PrivacyError("d_total must be >= 1")


def noise_spec_for(eps: float, sens: float, d_total: int) -> NoiseSpec:
    beta = math.inf if math.isinf(eps) else eps / sens
    return NoiseSpec(beta=beta, d_total=d_total)


def sample_noise(spec: NoiseSpec, seed) -> np.ndarray:
    """Draw eta with density proportional to exp(-beta ||eta||).

    Radius ~ Gamma(d_total, 1/beta), direction uniform on the unit sphere
    (normalized standard Gaussian).  seed may be an int or a Generator.
    """
    if math.isinf(spec.beta):
        return np.zeros(spec.d_total)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    radius = rng.gamma(shape=spec.d_total, scale=1.0 / spec.beta)
    direction = rng.standard_normal(spec.d_total)
    direction /= np.linalg.norm(direction)
    return radius * direction


def perturb(model: LinearModel, spec: NoiseSpec, seed) -> tuple[LinearModel, float]:
    """Release w_p = w_s + eta; returns (w_p, ||eta||) for diagnostics."""
    if spec.d_total != model.w.shape[0]:
        raise PrivacyError(
            f"dimension mismatch: noise d_total={spec.d_total}, model {model.w.shape[0]}")
    eta = sample_noise(spec, seed)
    return replace(model, w=model.w + eta), float(np.linalg.norm(eta))


def gamma_tail_bound(k: int, theta: float, delta: float) -> float:
    """High-probability bound for X ~ Gamma(k, theta):
    P(X <= k * theta * log(k / delta)) >= 1 - delta."""
    if k < 1:
        raise PrivacyError("k must be >= 1")
    if theta <= 0:
        raise PrivacyError("theta must be > 0")
    if not 0.0 < delta < 1.0:
        raise PrivacyError("delta must lie in (0, 1)")
    return k * theta * math.log(k / delta)

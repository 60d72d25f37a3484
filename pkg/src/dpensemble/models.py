"""Loss functions, regularized ERM solvers, risks and prediction.

Losses satisfy: convex, continuously differentiable, |l'| <= 1, and l'
Lipschitz with constant c (logistic: c = 1/4, smoothed hinge: c = 1/(2h)).
Binary models are weight vectors of length d; multiclass models stack K
blocks of length d into a single vector [w_1; ...; w_K].
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, logsumexp


class ModelError(Exception):
    pass


class ConvergenceError(ModelError):
    """Solver failed to reach the requested gradient norm."""

    def __init__(self, msg, grad_norm):
        super().__init__(msg)
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class LossSpec:
    """Binary surrogate loss.  kind is "logistic" or "smoothed-hinge";
    h is the half-width of the smoothed hinge's quadratic zone."""

    kind: str = "logistic"
    h: float = 0.5

    def __post_init__(self):
        if self.kind not in ("logistic", "smoothed-hinge"):
            raise ModelError(f"unknown loss kind {self.kind!r}")
        if self.kind == "smoothed-hinge" and self.h <= 0:
            raise ModelError("smoothed-hinge half-width must be > 0")

    @property
    def c(self) -> float:
        """Lipschitz constant of l'."""
        return 0.25 if self.kind == "logistic" else 1.0 / (2.0 * self.h)


@dataclass(frozen=True)
class LinearModel:
    w: np.ndarray
    d: int
    K: int = 2

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).ravel()
        object.__setattr__(self, "w", w)
        expect = self.d if self.K == 2 else self.d * self.K
        if w.shape != (expect,):
            raise ModelError(f"weight length {w.shape[0]} != expected {expect}")
        if not np.all(np.isfinite(w)):
            raise ModelError("non-finite weights")

    def blocks(self) -> np.ndarray:
        """Multiclass weights as a (K, d) matrix."""
        return self.w.reshape(self.K, self.d)


@dataclass(frozen=True)
class SolveReport:
    gradient_norm: float
    iterations: int
    objective: float


def loss_value_and_deriv(spec: LossSpec, t):
    """Vectorized (l(t), l'(t)); overflow-safe for any finite t."""
    t = np.asarray(t, dtype=np.float64)
    if spec.kind == "logistic":
        val = np.logaddexp(0.0, -t)
        deriv = -expit(-t)
    else:
        h = spec.h
        val = np.where(t >= 1 + h, 0.0,
                       np.where(t <= 1 - h, 1.0 - t, (1 + h - t) ** 2 / (4 * h)))
        deriv = np.where(t >= 1 + h, 0.0,
                         np.where(t <= 1 - h, -1.0, -(1 + h - t) / (2 * h)))
    return val, deriv


def _loss_second_deriv(spec: LossSpec, t):
    t = np.asarray(t, dtype=np.float64)
    if spec.kind == "logistic":
        s = expit(t)
        return s * (1.0 - s)
    h = spec.h
    return np.where((t > 1 - h) & (t < 1 + h), 1.0 / (2 * h), 0.0)


# ---------------------------------------------------------------------------
# objective machinery.  Everything is expressed through soft labels alpha:
# hard binary labels are alpha in {0, 1}, hard multiclass labels one-hot.

def _binary_objective(w, X, alpha, lam, spec):
    s = X @ w
    lp, dp = loss_value_and_deriv(spec, s)
    lm, dm = loss_value_and_deriv(spec, -s)
    n = X.shape[0]
    obj = float(np.mean(alpha * lp + (1 - alpha) * lm) + 0.5 * lam * w @ w)
    coeff = alpha * dp - (1 - alpha) * dm
    grad = X.T @ coeff / n + lam * w
    return obj, grad, s


def _binary_hessian(w, X, alpha, lam, spec, s):
    curv = alpha * _loss_second_deriv(spec, s) + (1 - alpha) * _loss_second_deriv(spec, -s)
    H = (X * curv[:, None]).T @ X / X.shape[0]
    H[np.diag_indices_from(H)] += lam
    return H

def _softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _multiclass_objective(w, X, alpha, lam, spec):
    if spec.kind != "logistic":
        raise ModelError("multiclass ERM supports the logistic (softmax) loss only")
    n, d = X.shape
    K = alpha.shape[1]
    W = w.reshape(K, d)
    scores = X @ W.T  # (n, K)
    lse = logsumexp(scores, axis=1)
    obj = float(np.mean(lse - np.sum(alpha * scores, axis=1)) + 0.5 * lam * w @ w)
    P = _softmax(scores)
    grad = ((P - alpha).T @ X) / n + lam * W
    return obj, grad.ravel(), (scores, P)


def _multiclass_hessian(w, X, alpha, lam, spec, aux):
    _, P = aux
    n, d = X.shape
    K = P.shape[1]
    H = np.zeros((K * d, K * d))
    for k in range(K):
        for l in range(k, K):
            coeff = P[:, k] * ((1.0 if k == l else 0.0) - P[:, l])
            block = (X * coeff[:, None]).T @ X / n
            H[k * d:(k + 1) * d, l * d:(l + 1) * d] = block
            if l != k:
                H[l * d:(l + 1) * d, k * d:(k + 1) * d] = block
    H[np.diag_indices_from(H)] += lam
    return H


def _newton(w0, objective, hessian, X, alpha, lam, spec, tol, max_iter):
    """Damped Newton with Armijo backtracking, run to ||grad|| <= tol.

    The objective is lam-strongly convex, so the (Hessian + lam I) system
    is always SPD and the minimizer unique.
    """
    w = w0.copy()
    obj, grad, aux = objective(w, X, alpha, lam, spec)
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return w, SolveReport(gnorm, it - 1, obj)
        H = hessian(w, X, alpha, lam, spec, aux)
        step = cho_solve(cho_factor(H), grad)
        t = 1.0
        descent = float(grad @ step)
        while t > 1e-12:
            w_new = w - t * step
            obj_new, grad_new, aux_new = objective(w_new, X, alpha, lam, spec)
            if obj_new <= obj - 1e-4 * t * descent + 1e-15:
                break
            t *= 0.5
        w, obj, grad, aux = w_new, obj_new, grad_new, aux_new
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return w, SolveReport(gnorm, it, obj)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (||grad|| = {gnorm:.3e})", gnorm)


def _check_features(X):
    norms = np.linalg.norm(X, axis=1)
    if norms.size and norms.max() > 1.0 + 1e-9:
        raise ModelError("feature vectors must satisfy ||x|| <= 1 (normalize first)")


def _alpha_from_labels(y, K):
    if K == 2:
        return (np.asarray(y) + 1) / 2.0  # {-1,+1} -> {0,1}
    alpha = np.zeros((len(y), K))
    alpha[np.arange(len(y)), np.asarray(y) - 1] = 1.0
    return alpha


DEFAULT_TOL = 1e-9


def erm_minimize(dataset, lam: float, spec: LossSpec = LossSpec(),
                 tol: float = DEFAULT_TOL, max_iter: int = 500
                 ) -> tuple[LinearModel, SolveReport]:
    """Minimize the regularized empirical risk over a labeled dataset."""
    if lam <= 0:
        raise ModelError("lam must be > 0")
    if dataset.n == 0:
        raise ModelError("empty dataset")
    if not dataset.labeled:
        raise ModelError("erm_minimize needs labels")
    _check_features(dataset.X)
    alpha = _alpha_from_labels(dataset.y, dataset.K)
    return _solve(dataset.X, alpha, dataset.K, lam, spec, tol, max_iter)


def weighted_erm_minimize(soft, lam: float, spec: LossSpec = LossSpec(),
                          tol: float = DEFAULT_TOL, max_iter: int = 500
                          ) -> tuple[LinearModel, SolveReport]:
    """Minimize the weighted empirical risk over (x, alpha) pairs.

    soft needs attributes X and alpha; alpha is a fraction in [0, 1]
    (binary) or a row-stochastic (n, K) matrix (multiclass).
    """
    if lam <= 0:
        raise ModelError("lam must be > 0")
    X, alpha = soft.X, np.asarray(soft.alpha, dtype=np.float64)
    _check_features(X)
    _check_alpha(alpha)
    K = 2 if alpha.ndim == 1 else alpha.shape[1]
    return _solve(X, alpha, K, lam, spec, tol, max_iter)


def _check_alpha(alpha):
    if alpha.ndim == 1:
        if np.any(alpha < -1e-12) or np.any(alpha > 1 + 1e-12):
            raise ModelError("binary alpha must lie in [0, 1]")
    else:
        if np.any(alpha < -1e-12) or np.any(np.abs(alpha.sum(axis=1) - 1.0) > 1e-9):
            raise ModelError("multiclass alpha rows must lie on the simplex")


def _solve(X, alpha, K, lam, spec, tol, max_iter):
    d = X.shape[1]
    if K == 2:
        w0 = np.zeros(d)
        w, rep = _newton(w0, _binary_objective, _binary_hessian,
                         X, alpha, lam, spec, tol, max_iter)
    else:
        w0 = np.zeros(K * d)
        w, rep = _newton(w0, _multiclass_objective, _multiclass_hessian,
                         X, alpha, lam, spec, tol, max_iter)
    return LinearModel(w, d=d, K=K), rep


# ---------------------------------------------------------------------------
# risks, gradients, prediction

def _resolve(model, S, weighted):
    """Common dimension/label plumbing for risk and gradient."""
    X = S.X
    if X.shape[1] != model.d:
        raise ModelError(f"dimension mismatch: model d={model.d}, data d={X.shape[1]}")
    if weighted:
        alpha = np.asarray(S.alpha, dtype=np.float64)
    else:
        alpha = _alpha_from_labels(S.y, model.K)
    return X, alpha


def risk(model: LinearModel, S, lam: float, spec: LossSpec = LossSpec(),
         weighted: bool = False) -> float:
    """Empirical risk R^lam_S(w); pass lam=0 for the unregularized risk."""
    X, alpha = _resolve(model, S, weighted)
    if model.K == 2:
        obj, _, _ = _binary_objective(model.w, X, alpha, lam, spec)
    else:
        obj, _, _ = _multiclass_objective(model.w, X, alpha, lam, spec)
    return obj


def gradient(model: LinearModel, S, lam: float, spec: LossSpec = LossSpec(),
             weighted: bool = False) -> np.ndarray:
    """Analytic gradient of the corresponding (weighted) regularized risk."""
    X, alpha = _resolve(model, S, weighted)
    if model.K == 2:
        _, grad, _ = _binary_objective(model.w, X, alpha, lam, spec)
    else:
        _, grad, _ = _multiclass_objective(model.w, X, alpha, lam, spec)
    return grad


def decision_scores(model: LinearModel, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != model.d:
        raise ModelError(f"dimension mismatch: model d={model.d}, data d={X.shape[1]}")
    if model.K == 2:
        return X @ model.w
    return X @ model.blocks().T


def predict(model: LinearModel, X: np.ndarray) -> np.ndarray:
    """Binary: sign(w.x) with 0 -> +1.  Multiclass: argmax_k w_k.x,
    ties broken toward the smallest class index."""
    scores = decision_scores(model, X)
    if model.K == 2:
        return np.where(scores >= 0.0, 1, -1)
    return np.argmax(scores, axis=1) + 1  # np.argmax takes the first maximum


def accuracy(model: LinearModel, dataset) -> float:
    if not dataset.labeled:
        raise ModelError("accuracy needs labels")
    return float(np.mean(predict(model, dataset.X) == dataset.y))


# ---------------------------------------------------------------------------
# plain-text serialization (round-trip exact)

def save_model(model: LinearModel, path, lam: float = 0.0,
               spec: LossSpec = LossSpec()) -> None:
    lines = [f"d={model.d} K={model.K} loss={spec.kind} lam={lam!r}"]
    lines += [repr(float(v)) for v in model.w]
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> tuple[LinearModel, dict]:
    lines = Path(path).read_text().splitlines()
    meta = dict(tok.split("=", 1) for tok in lines[0].split())
    w = np.asarray([float(v) for v in lines[1:]])
    model = LinearModel(w, d=int(meta["d"]), K=int(meta["K"]))
    return model, {"loss": meta["loss"], "lam": float(meta["lam"])}

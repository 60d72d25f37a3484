"""Black-box local classifiers, voting, and knowledge transfer.

Local classifiers are opaque predict functions; any deterministic
classifier type can participate in an ensemble.  Transfer labels an
unlabeled auxiliary pool either with hard majority votes or with
per-class vote fractions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset
from .models import LinearModel, LossSpec, erm_minimize, predict


class EnsembleError(Exception):
    pass


@dataclass(frozen=True)
class ClassifierHandle:
    """Opaque deterministic classifier: X (n, d) -> labels (n,).

    model is populated for locally trained linear classifiers and is None
    for externally supplied or constant classifiers.
    """

    predict_fn: Callable[[np.ndarray], np.ndarray]
    party_id: int
    model: LinearModel | None = None

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.predict_fn(np.atleast_2d(X)))


@dataclass(frozen=True)
class Ensemble:
    classifiers: tuple[ClassifierHandle, ...]
    K: int = 2

    def __post_init__(self):
        if len(self.classifiers) < 1:
            raise EnsembleError("ensemble needs at least one classifier")
        object.__setattr__(self, "classifiers", tuple(self.classifiers))

    @property
    def M(self) -> int:
        return len(self.classifiers)


@dataclass(frozen=True)
class SoftLabeledSet:
    """Auxiliary features paired with vote fractions.

    alpha is (n,) in [0, 1] for binary or a row-stochastic (n, K) matrix
    for multiclass; M * alpha is integral for ensemble-produced labels.
    """

    X: np.ndarray
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]


def constant_handle(label: int, party_id: int) -> ClassifierHandle:
    return ClassifierHandle(lambda X, _v=label: np.full(X.shape[0], _v, dtype=np.int64),
                            party_id=party_id)


def linear_handle(model: LinearModel, party_id: int) -> ClassifierHandle:
    return ClassifierHandle(lambda X, _m=model: predict(_m, X),
                            party_id=party_id, model=model)


def train_locals(shards: list[Dataset], lam: float,
                 spec: LossSpec = LossSpec()) -> Ensemble:
    """One logistic-regression classifier per shard.  A shard containing a
    single class yields a constant classifier predicting that class."""
    if not shards:
        raise EnsembleError("no shards")
    handles = []
    K = shards[0].K
    for i, shard in enumerate(shards):
        if shard.n == 0:
            raise EnsembleError(f"shard {i} is empty")
        if not shard.labeled:
            raise EnsembleError(f"shard {i} is unlabeled")
        uniq = np.unique(shard.y)
        if len(uniq) == 1:
            handles.append(constant_handle(int(uniq[0]), party_id=i))
        else:
            model, _ = erm_minimize(shard, lam, spec)
            handles.append(linear_handle(model, party_id=i))
    return Ensemble(tuple(handles), K=K)


def _vote_counts(ensemble: Ensemble, X: np.ndarray) -> np.ndarray:
    """Per-class vote counts, shape (n, K)."""
    X = np.atleast_2d(X)
    counts = np.zeros((X.shape[0], ensemble.K), dtype=np.int64)
    for handle in ensemble.classifiers:
        labels = handle(X)
        if ensemble.K == 2:
            idx = np.where(labels == 1, 1, 0)
        else:
            idx = labels - 1
        counts[np.arange(X.shape[0]), idx] += 1
    return counts


def majority_vote(ensemble: Ensemble, X: np.ndarray) -> np.ndarray:
    """Binary: +1 iff the positive count is >= M/2 (even-M ties vote +1).
    Multiclass: plurality with ties to the smallest class index."""
    counts = _vote_counts(ensemble, X)
    if ensemble.K == 2:
        return np.where(counts[:, 1] >= ensemble.M / 2.0, 1, -1)
    return np.argmax(counts, axis=1) + 1


def vote_fraction(ensemble: Ensemble, X: np.ndarray) -> np.ndarray:
    """Binary: fraction of positive votes, shape (n,).
    Multiclass: per-class fractions on the K-simplex, shape (n, K)."""
    counts = _vote_counts(ensemble, X)
    if ensemble.K == 2:
        return counts[:, 1] / ensemble.M
    return counts / ensemble.M


def transfer(ensemble: Ensemble, aux: Dataset, mode: str = "soft"):
    """Label every auxiliary point with the ensemble's knowledge.

    mode="vote" returns a hard-labeled Dataset, mode="soft" a
    SoftLabeledSet of vote fractions.  Features are untouched.
    """
    if aux.n == 0:
        raise EnsembleError("auxiliary pool is empty")
    if mode == "vote":
        labels = majority_vote(ensemble, aux.X)
        return Dataset(aux.X, labels, K=ensemble.K, source_idx=aux.source_idx)
    if mode == "soft":
        return SoftLabeledSet(aux.X, vote_fraction(ensemble, aux.X))
    raise EnsembleError(f"unknown transfer mode {mode!r}")

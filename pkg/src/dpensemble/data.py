"""Dataset ingestion, normalization, partitioning and synthesis.

All other modules consume the immutable :class:`Dataset` defined here.
Binary labels are {-1, +1}; multiclass labels are {1, ..., K}.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class DataError(Exception):
    """Raised for malformed input files or invalid dataset operations."""


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix with optional labels.

    X has shape (n, d).  y is None for unlabeled data, otherwise an int
    array of shape (n,).  source_idx optionally tracks the row indices in
    the dataset this one was carved out of (used for disjointness checks).
    """

    X: np.ndarray
    y: np.ndarray | None
    K: int = 2
    source_idx: np.ndarray | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        object.__setattr__(self, "X", X)
        if X.ndim != 2:
            raise DataError("feature matrix must be 2-dimensional")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        if self.K < 2:
            raise DataError("K must be >= 2")
        if self.y is not None:
            y = np.asarray(self.y, dtype=np.int64)
            object.__setattr__(self, "y", y)
            if y.shape != (X.shape[0],):
                raise DataError("label vector length mismatch")
            valid = {-1, 1} if self.K == 2 else set(range(1, self.K + 1))
            labels = set(np.unique(y).tolist())
            if not labels <= valid:
                raise DataError(f"labels {sorted(labels - valid)} outside {sorted(valid)}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def labeled(self) -> bool:
        return self.y is not None

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx)
        src = self.source_idx[idx] if self.source_idx is not None else idx
        return Dataset(self.X[idx], None if self.y is None else self.y[idx],
                       K=self.K, source_idx=src)

    def without_labels(self) -> "Dataset":
        return replace(self, y=None)


@dataclass(frozen=True)
class PartitionPlan:
    """How to split one dataset into M party shards plus an auxiliary pool."""

    M: int
    aux_fraction: float
    seed: int

    def __post_init__(self):
        if self.M < 1:
            raise DataError("M must be >= 1")
        if not 0.0 < self.aux_fraction < 1.0:
            raise DataError("aux_fraction must lie in (0, 1)")


def add_bias(dataset: Dataset) -> Dataset:
    """Append a constant-1 feature column (call before normalization)."""
    ones = np.ones((dataset.n, 1))
    return replace(dataset, X=np.hstack([dataset.X, ones]))


def normalize(dataset: Dataset) -> tuple[Dataset, float]:
    """Scale features so every training vector satisfies ||x|| <= 1.

    Divides by the max L2 norm when it exceeds 1, otherwise leaves the
    data untouched.  Returns the divisor so test data can reuse it.
    """
    if dataset.n == 0:
        raise DataError("cannot normalize an empty dataset")
    norms = np.linalg.norm(dataset.X, axis=1)
    scale = float(max(norms.max(), 1.0))
    if scale == 1.0:
        return dataset, 1.0
    return replace(dataset, X=dataset.X / scale), scale


def apply_scale(dataset: Dataset, scale: float) -> Dataset:
    """Apply a training-time divisor to held-out data, radially clipping
    any vector that still exceeds unit norm."""
    X = dataset.X / scale
    norms = np.linalg.norm(X, axis=1)
    over = norms > 1.0
    if np.any(over):
        X = X.copy()
        X[over] /= norms[over, None]
    return replace(dataset, X=X)


def partition(dataset: Dataset, plan: PartitionPlan) -> tuple[list[Dataset], Dataset]:
    """Split into M disjoint labeled shards and an unlabeled auxiliary pool.

    The auxiliary pool gets floor(aux_fraction * n) samples with labels
    stripped; the remainder is divided as evenly as possible, the first
    (rem mod M) shards getting one extra sample.  Deterministic in seed.
    """
    n = dataset.n
    n_aux = int(np.floor(plan.aux_fraction * n))
    if n_aux < 1:
        raise DataError("aux_fraction too small: auxiliary pool would be empty")
    if n - n_aux < plan.M:
        raise DataError(f"too few samples ({n - n_aux}) for {plan.M} parties")
    rng = np.random.default_rng(plan.seed)
    perm = rng.permutation(n)
    aux = dataset.subset(perm[:n_aux]).without_labels()
    rest = perm[n_aux:]
    q, r = divmod(len(rest), plan.M)
    shards = []
    start = 0
    for i in range(plan.M):
        size = q + (1 if i < r else 0)
        shards.append(dataset.subset(rest[start:start + size]))
        start += size
    return shards, aux


def train_test_split(dataset: Dataset, test_fraction: float, seed: int
                     ) -> tuple[Dataset, Dataset]:
    """Seeded split preceding any partitioning (test set never re-enters)."""
    n = dataset.n
    n_test = int(round(test_fraction * n))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return dataset.subset(perm[n_test:]), dataset.subset(perm[:n_test])


# ---------------------------------------------------------------------------
# file loading

def _parse_label(tok: str, row: int) -> int:
    try:
        return int(float(tok))
    except ValueError:
        raise DataError(f"row {row}: bad label token {tok!r}") from None


def _infer_k(labels: np.ndarray) -> int:
    uniq = set(labels.tolist())
    if uniq <= {-1, 1}:
        return 2
    if min(uniq) >= 1:
        return int(max(uniq))
    raise DataError(f"unknown label convention: {sorted(uniq)}")


def load(path: str | Path, format: str = "csv", *, d: int | None = None,
         K: int | None = None, header: bool = False) -> Dataset:
    """Load a labeled dataset from disk.

    csv: first column is the integer label, remaining columns are features.
    sparse: ``<label> <index>:<value> ...`` with 1-based indices, densified.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    lines = path.read_text().splitlines()
    if header and format == "csv":
        lines = lines[1:]
    rows, labels = [], []
    if format == "csv":
        width = None
        for i, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            toks = line.split(",")
            labels.append(_parse_label(toks[0], i))
            try:
                feats = [float(t) for t in toks[1:]]
            except ValueError:
                raise DataError(f"row {i}: could not parse features") from None
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise DataError(f"row {i}: expected {width} features, got {len(feats)}")
            rows.append(feats)
    elif format == "sparse-index-value" or format == "sparse":
        pairs_per_row = []
        max_idx = 0
        for i, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            toks = line.split()
            labels.append(_parse_label(toks[0], i))
            pairs = []
            for t in toks[1:]:
                try:
                    idx_s, val_s = t.split(":")
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DataError(f"row {i}: bad index:value pair {t!r}") from None
                if idx < 1:
                    raise DataError(f"row {i}: indices are 1-based, got {idx}")
                pairs.append((idx, val))
                max_idx = max(max_idx, idx)
            pairs_per_row.append(pairs)
        dim = d if d is not None else max_idx
        if max_idx > dim:
            raise DataError(f"index {max_idx} exceeds declared dimension {dim}")
        for pairs in pairs_per_row:
            row = [0.0] * dim
            for idx, val in pairs:
                row[idx - 1] = val
            rows.append(row)
    else:
        raise DataError(f"unknown format {format!r}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    y = np.asarray(labels, dtype=np.int64)
    return Dataset(np.asarray(rows), y, K=K if K is not None else _infer_k(y))


# ---------------------------------------------------------------------------
# synthetic data with a closed-form posterior

@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian mixture generator whose true posterior is known exactly.

    Classes have uniform priors, isotropic shared covariance
    (cov_scale**2 * I) and per-class means.  label_noise flips each drawn
    label to a uniformly random other class with the given probability.
    """

    d: int
    K: int
    means: np.ndarray  # (K, d)
    cov_scale: float
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).reshape(self.K, self.d)
        object.__setattr__(self, "means", means)
        if self.cov_scale <= 0:
            raise DataError("cov_scale must be > 0")
        if not 0.0 <= self.label_noise < 1.0:
            raise DataError("label_noise must lie in [0, 1)")


def default_means(K: int, d: int, separation: float) -> np.ndarray:
    """Deterministic well-spread class means: binary gets +-sep/2 along e1,
    K>2 puts each class at sep/2 along its own axis."""
    means = np.zeros((K, d))
    if K == 2:
        means[0, 0] = -separation / 2.0
        means[1, 0] = +separation / 2.0
    else:
        for j in range(K):
            means[j, j % d] = separation / 2.0
    return means


def synthesize(spec: SyntheticSpec, n: int, seed: int | None = None) -> Dataset:
    """Draw n i.i.d. samples from the mixture (deterministic in seed)."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    classes = rng.integers(0, spec.K, size=n)  # 0-based internally
    X = spec.means[classes] + spec.cov_scale * rng.standard_normal((n, spec.d))
    if spec.label_noise > 0:
        flip = rng.random(n) < spec.label_noise
        offset = rng.integers(1, spec.K, size=n)
        classes = np.where(flip, (classes + offset) % spec.K, classes)
    if spec.K == 2:
        y = np.where(classes == 1, 1, -1)
    else:
        y = classes + 1
    return Dataset(X, y, K=spec.K)


def posterior(spec: SyntheticSpec, X: np.ndarray) -> np.ndarray:
    """True class posterior Q(j | x), shape (n, K), including label noise."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    # log N(x; mu_j, s^2 I) up to a shared constant
    d2 = ((X[:, None, :] - spec.means[None, :, :]) ** 2).sum(axis=2)
    logp = -d2 / (2.0 * spec.cov_scale ** 2)
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    q = p / p.sum(axis=1, keepdims=True)
    rho = spec.label_noise
    if rho > 0:
        q = (1.0 - rho) * q + rho * (1.0 - q) / (spec.K - 1)
    return q

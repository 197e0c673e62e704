"""Datasets, Dirichlet label-skew federation, cohort sampling and batching."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import Batch
from .seeding import derive_rng


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent shapes: features {X.shape}, labels {y.shape}")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError("label out of range")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _class_means(input_dim: int, num_classes: int, separation: float) -> np.ndarray:
    means = np.zeros((num_classes, input_dim))
    if num_classes <= input_dim:
        # scaled simplex corners: every pair is exactly `separation` apart
        means[np.arange(num_classes), np.arange(num_classes)] = separation / math.sqrt(2.0)
    elif input_dim == 1:
        means[:, 0] = separation * np.arange(num_classes)
    else:
        # regular polygon in the first two axes, neighbours `separation` apart
        r = separation / (2.0 * math.sin(math.pi / num_classes))
        angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
        means[:, 0] = r * np.cos(angles)
        means[:, 1] = r * np.sin(angles)
    return means


def synth_generate(
    input_dim: int,
    num_classes: int,
    samples_per_class: int,
    separation: float,
    seed: int,
    nuisance: float = 0.0,
) -> Dataset:
    """Unit-covariance Gaussian clusters, one per class, rows shuffled.

    ``nuisance > 0`` adds ``nuisance * xi * u`` to every row, with one scalar
    ``xi ~ N(0, 1)`` per row and a fixed random unit direction ``u``. This
    stretches all clusters along ``u``: the nearest-centroid rule degrades
    while the data stays linearly separable, so gradient methods need many
    steps rather than one to reach high accuracy.
    """
    if min(input_dim, num_classes, samples_per_class) <= 0:
        raise ValueError("input_dim, num_classes and samples_per_class must be positive")
    if nuisance < 0:
        raise ValueError("nuisance must be >= 0")
    rng = derive_rng(seed, "synth")
    means = _class_means(input_dim, num_classes, separation)
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    X = means[labels] + rng.standard_normal((labels.size, input_dim))
    if nuisance > 0:
        u = derive_rng(seed, "synth-nuisance").standard_normal(input_dim)
        u /= np.linalg.norm(u)
        X += nuisance * rng.standard_normal((labels.size, 1)) * u
    perm = rng.permutation(labels.size)
    return Dataset(X[perm], labels[perm], num_classes)


def load_csv(path, num_classes: int | None = None) -> Dataset:
    """Header row, float feature columns, integer label in the last column."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    labels = raw[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ValueError(f"{path}: label column must hold integers")
    labels = labels.astype(np.int64)
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    return Dataset(raw[:, :-1], labels, k)


def save_csv(dataset: Dataset, path) -> None:
    header = ",".join([f"x{j}" for j in range(dataset.input_dim)] + ["label"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(dataset)
    n_test = max(1, int(round(test_fraction * n)))
    if n_test >= n:
        raise ValueError("dataset too small to split")
    perm = derive_rng(seed, "split").permutation(n)
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int = 10
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 2:
            raise ValueError(f"num_clients must be >= 2, got {self.num_clients}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class CohortSpec:
    cohort_size: int = 10
    seed: int = 0


@dataclass(frozen=True)
class FederatedDataset:
    shards: list[Dataset]
    num_classes: int
    input_dim: int
    # row indices into the source dataset, per client; kept for auditing
    indices: list[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def num_clients(self) -> int:
        return len(self.shards)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.shards]

    def pooled(self) -> Dataset:
        return Dataset(
            np.concatenate([s.features for s in self.shards]),
            np.concatenate([s.labels for s in self.shards]),
            self.num_classes,
        )


def _proportional_counts(n: int, p: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of ``n * p`` to integers summing to n."""
    raw = n * p
    counts = np.floor(raw).astype(np.int64)
    short = n - int(counts.sum())
    if short:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(dataset: Dataset, spec: PartitionSpec) -> FederatedDataset:
    """Label-skew split: class c is divided among clients in proportion p_c ~ Dir(alpha).

    Shards left empty by the draw each receive one random row taken from the
    currently largest shard.
    """
    K = spec.num_clients
    if len(dataset) < K:
        raise ValueError(f"dataset has {len(dataset)} rows, fewer than {K} clients")
    rng = derive_rng(spec.seed, "dirichlet")
    buckets: list[list[int]] = [[] for _ in range(K)]
    for c in range(dataset.num_classes):
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size == 0:
            continue
        p = rng.dirichlet(np.full(K, spec.alpha))
        rows = rng.permutation(rows)
        counts = _proportional_counts(rows.size, p)
        start = 0
        for k in range(K):
            buckets[k].extend(rows[start : start + counts[k]].tolist())
            start += counts[k]

    for k in range(K):
        if not buckets[k]:
            donor = max(range(K), key=lambda j: (len(buckets[j]), -j))
            pick = int(rng.integers(len(buckets[donor])))
            buckets[k].append(buckets[donor].pop(pick))

    indices = [np.sort(np.asarray(b, dtype=np.int64)) for b in buckets]
    shards = [dataset.subset(idx) for idx in indices]
    return FederatedDataset(shards, dataset.num_classes, dataset.input_dim, indices)


def partition_summary(fd: FederatedDataset) -> dict:
    return {
        "num_clients": fd.num_clients,
        "num_classes": fd.num_classes,
        "clients": [
            {"id": k, "size": len(s), "class_histogram": s.class_histogram().tolist()}
            for k, s in enumerate(fd.shards)
        ],
    }


def write_partition_summary(fd: FederatedDataset, path) -> None:
    Path(path).write_text(json.dumps(partition_summary(fd), indent=2) + "\n", encoding="utf-8")


def sample_cohort(num_clients: int, spec: CohortSpec, t: int) -> list[int]:
    """Uniform draw of ``cohort_size`` distinct client ids for round t, ascending."""
    N = spec.cohort_size
    if not 1 <= N <= num_clients:
        raise ValueError(f"cohort_size must lie in [1, {num_clients}], got {N}")
    if N == num_clients:
        return list(range(num_clients))
    picks = derive_rng(spec.seed, "cohort", t).choice(num_clients, size=N, replace=False)
    return sorted(int(k) for k in picks)


def steps_per_epoch(n_rows: int, batch_size: int) -> int:
    return -(-n_rows // batch_size)


def epoch_permutation(n_rows: int, epoch_seed: int, epoch: int) -> np.ndarray:
    return derive_rng(epoch_seed, "epoch", epoch).permutation(n_rows)


def next_batch(shard: Dataset, epoch_seed: int, step_index: int, batch_size: int) -> Batch:
    """Batch number ``step_index`` of an endless sequence of reshuffled epochs.

    The last batch of each epoch is short when the shard size is not a
    multiple of ``batch_size``.
    """
    n = len(shard)
    if n == 0:
        raise ValueError("empty shard")
    spe = steps_per_epoch(n, batch_size)
    epoch, pos = divmod(step_index, spe)
    idx = epoch_permutation(n, epoch_seed, epoch)[pos * batch_size : (pos + 1) * batch_size]
    return Batch(shard.features[idx], shard.labels[idx])


class BatchStream:
    """Sequential form of :func:`next_batch` that caches the current epoch order."""

    def __init__(self, shard: Dataset, epoch_seed: int, batch_size: int):
        if len(shard) == 0:
            raise ValueError("empty shard")
        self.shard = shard
        self.epoch_seed = epoch_seed
        self.batch_size = batch_size
        self.spe = steps_per_epoch(len(shard), batch_size)
        self._epoch = -1
        self._perm = None
        self.step_index = 0

    def __next__(self) -> Batch:
        epoch, pos = divmod(self.step_index, self.spe)
        if epoch != self._epoch:
            self._perm = epoch_permutation(len(self.shard), self.epoch_seed, epoch)
            self._epoch = epoch
        idx = self._perm[pos * self.batch_size : (pos + 1) * self.batch_size]
        self.step_index += 1
        return Batch(self.shard.features[idx], self.shard.labels[idx])

    def __iter__(self):
        return self


def mean_shard_size(fd: FederatedDataset, batch_size: int) -> float:
    """Mean local epoch length in optimizer steps, ``mean_k ceil(|D_k| / batch_size)``."""
    return float(np.mean([steps_per_epoch(len(s), batch_size) for s in fd.shards]))

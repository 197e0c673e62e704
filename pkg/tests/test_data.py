import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedvar.data import (
    BatchStream,
    CohortSpec,
    Dataset,
    FederatedDataset,
    PartitionSpec,
    dirichlet_partition,
    load_csv,
    mean_shard_size,
    next_batch,
    partition_summary,
    sample_cohort,
    save_csv,
    synth_generate,
    train_test_split,
    write_partition_summary,
)
from fedvar.harness import centralized_baseline
from fedvar.models import ModelKind, ModelSpec
from fedvar.optim import OptimizerSpec, OptKind
from fedvar.seeding import derive_rng


def rows_multiset(ds):
    return Counter((tuple(x), int(y)) for x, y in zip(ds.features, ds.labels))


def toy(n, classes=3, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n, dim)), rng.integers(0, classes, n), classes)


def test_synth_shape_and_determinism():
    ds = synth_generate(2, 2, 50, 6.0, 0)
    assert len(ds) == 100 and ds.input_dim == 2
    np.testing.assert_array_equal(ds.class_histogram(), [50, 50])
    again = synth_generate(2, 2, 50, 6.0, 0)
    np.testing.assert_array_equal(ds.features, again.features)
    np.testing.assert_array_equal(ds.labels, again.labels)
    one = synth_generate(3, 4, 1, 6.0, 0)
    np.testing.assert_array_equal(one.class_histogram(), [1, 1, 1, 1])


def test_synth_is_separable_by_centralized_training():
    ds = synth_generate(2, 2, 50, 6.0, 0)
    spec = ModelSpec(ModelKind.LOGREG, 2, 2)
    acc = centralized_baseline(spec, ds, 30, OptimizerSpec(OptKind.SGD, 0.1), 8, 0)
    assert acc >= 0.99


def test_nuisance_keeps_labels_and_stretches_data():
    plain = synth_generate(10, 4, 100, 6.0, 1)
    wide = synth_generate(10, 4, 100, 6.0, 1, nuisance=30.0)
    np.testing.assert_array_equal(plain.class_histogram(), wide.class_histogram())
    assert wide.features.var(axis=0).sum() > 10 * plain.features.var(axis=0).sum()


def test_partition_is_exact():
    ds = toy(300)
    fd = dirichlet_partition(ds, PartitionSpec(10, 0.5, 3))
    assert sum(fd.sizes()) == len(ds)
    assert all(s > 0 for s in fd.sizes())
    assert rows_multiset(fd.pooled()) == rows_multiset(ds)
    idx = np.concatenate(fd.indices)
    np.testing.assert_array_equal(np.sort(idx), np.arange(len(ds)))


@given(st.integers(2, 12), st.floats(0.01, 100.0), st.integers(0, 10_000))
def test_partition_property(k, alpha, seed):
    ds = toy(60, seed=seed % 7)
    fd = dirichlet_partition(ds, PartitionSpec(k, alpha, seed))
    assert fd.num_clients == k
    assert sum(fd.sizes()) == 60 and min(fd.sizes()) >= 1
    assert rows_multiset(fd.pooled()) == rows_multiset(ds)


def test_huge_alpha_is_nearly_iid():
    ds = toy(1000, classes=4, seed=1)
    glob = ds.class_histogram() / len(ds)
    for seed in range(5):
        fd = dirichlet_partition(ds, PartitionSpec(10, 1e9, seed))
        for shard in fd.shards:
            assert np.max(np.abs(shard.class_histogram() / len(shard) - glob)) <= 0.05


def test_partition_errors():
    with pytest.raises(ValueError):
        PartitionSpec(1, 1.0)
    with pytest.raises(ValueError):
        PartitionSpec(5, 0.0)
    with pytest.raises(ValueError):
        dirichlet_partition(toy(4), PartitionSpec(5, 1.0))


def test_partition_summary(tmp_path):
    fd = dirichlet_partition(toy(50), PartitionSpec(4, 1.0, 0))
    path = tmp_path / "p.json"
    write_partition_summary(fd, path)
    doc = json.loads(path.read_text())
    assert doc == partition_summary(fd)
    assert [c["size"] for c in doc["clients"]] == fd.sizes()
    assert all(sum(c["class_histogram"]) == c["size"] for c in doc["clients"])


def test_cohort_examples():
    full = CohortSpec(10, 0)
    for t in range(5):
        assert sample_cohort(10, full, t) == list(range(10))
    half = CohortSpec(5, 4)
    c = sample_cohort(10, half, 3)
    assert len(set(c)) == 5 and c == sorted(c) and all(0 <= k < 10 for k in c)
    assert sample_cohort(10, half, 3) == c
    with pytest.raises(ValueError):
        sample_cohort(10, CohortSpec(11), 0)


def test_cohort_frequency():
    spec = CohortSpec(5, 9)
    hits = np.zeros(10)
    for t in range(10_000):
        hits[sample_cohort(10, spec, t)] += 1
    np.testing.assert_allclose(hits / 10_000, 0.5, atol=0.02)


def test_next_batch_examples():
    shard = toy(8)
    b = next_batch(shard, 5, 0, 8)
    assert len(b) == 8
    assert rows_multiset(Dataset(b.features, b.labels, 3)) == rows_multiset(shard)

    shard = toy(10)
    sizes = [len(next_batch(shard, 5, i, 8)) for i in range(3)]
    assert sizes == [8, 2, 8]
    b0 = next_batch(shard, 5, 0, 8)
    b1 = next_batch(shard, 5, 1, 8)
    epoch0 = Dataset(np.vstack([b0.features, b1.features]), np.concatenate([b0.labels, b1.labels]), 3)
    assert rows_multiset(epoch0) == rows_multiset(shard)


def test_batches_cover_each_epoch_once_and_replay():
    shard = toy(23)
    seq1 = [next_batch(shard, 11, i, 4) for i in range(12)]
    seq2 = [next_batch(shard, 11, i, 4) for i in range(12)]
    for a, b in zip(seq1, seq2):
        np.testing.assert_array_equal(a.features, b.features)
    for e in range(2):
        part = seq1[6 * e : 6 * (e + 1)]
        ds = Dataset(np.vstack([b.features for b in part]), np.concatenate([b.labels for b in part]), 3)
        assert rows_multiset(ds) == rows_multiset(shard)


def test_batch_stream_matches_next_batch():
    shard = toy(13)
    stream = BatchStream(shard, 77, 5)
    for i in range(10):
        a, b = next(stream), next_batch(shard, 77, i, 5)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)


def fd_with_sizes(sizes):
    shards = [toy(n, seed=i) for i, n in enumerate(sizes)]
    return FederatedDataset(shards, 3, 2)


def test_mean_shard_size():
    assert mean_shard_size(fd_with_sizes([80] * 10), 8) == 10
    assert mean_shard_size(fd_with_sizes([8, 16]), 8) == 1.5
    assert mean_shard_size(fd_with_sizes([1, 2, 3]), 8) >= 1


def test_csv_round_trip(tmp_path):
    ds = toy(20, dim=3)
    path = tmp_path / "d.csv"
    save_csv(ds, path)
    back = load_csv(path, num_classes=3)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert path.read_text().splitlines()[0] == "x0,x1,x2,label"


def test_train_test_split_partitions_rows():
    ds = toy(50)
    tr, te = train_test_split(ds, 0.2, 0)
    assert len(te) == 10 and len(tr) == 40
    assert rows_multiset(tr) + rows_multiset(te) == rows_multiset(ds)


def test_derive_rng_streams():
    a = derive_rng(3, "batch", 1, 2).random(4)
    np.testing.assert_array_equal(a, derive_rng(3, "batch", 1, 2).random(4))
    assert not np.array_equal(a, derive_rng(3, "batch", 2, 1).random(4))
    assert not np.array_equal(a, derive_rng(3, "cohort", 1, 2).random(4))
    with pytest.raises(ValueError):
        derive_rng(-1, "batch")

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedvar.sketch import SketchConfig, combine, sketch
from fedvar.variance import (
    aggregate,
    estimate_variance,
    exact_variance,
    extend_tau,
    local_state,
    query_indices,
    threshold_adjust,
)

CFG = SketchConfig()


def coordinate_variance_oracle(deltas):
    D = np.asarray(deltas, dtype=np.float64)
    return float(np.var(D, axis=0, ddof=0).sum())


def test_local_state():
    ls = local_state(CFG, np.zeros(40))
    assert ls.drift_norm_sq == 0 and not ls.drift_sketch.counters.any()
    assert local_state(CFG, [3.0, 4.0]).drift_norm_sq == 25.0
    v = np.random.default_rng(1).standard_normal(300)
    ls = local_state(CFG, v)
    assert ls.drift_norm_sq == pytest.approx(float(np.sum(v * v)), rel=1e-12)
    np.testing.assert_array_equal(ls.drift_sketch.counters, sketch(CFG, v).counters)


def test_aggregate():
    v = np.random.default_rng(2).standard_normal(50)
    s = local_state(CFG, v)
    g = aggregate([s, s, s])
    assert g.mean_norm_sq == pytest.approx(s.drift_norm_sq, rel=1e-15)
    np.testing.assert_allclose(g.mean_sketch.counters, s.drift_sketch.counters, atol=1e-12)
    one = np.zeros(5)
    one[0] = 1.0
    three = np.zeros(5)
    three[0] = np.sqrt(3.0)
    assert aggregate([local_state(CFG, one), local_state(CFG, three)]).mean_norm_sq == pytest.approx(2.0)

    rng = np.random.default_rng(3)
    deltas = [rng.standard_normal(80) for _ in range(7)]
    g = aggregate([local_state(CFG, d) for d in deltas])
    assert g.cohort_size == 7
    assert g.mean_norm_sq == pytest.approx(np.mean([d @ d for d in deltas]), rel=1e-12)
    np.testing.assert_allclose(g.mean_sketch.counters, sketch(CFG, np.mean(deltas, axis=0)).counters, atol=1e-12)


def test_aggregate_mixed_configs():
    a = local_state(SketchConfig(seed=0), np.ones(5))
    b = local_state(SketchConfig(seed=1), np.ones(5))
    with pytest.raises(ValueError):
        aggregate([a, b])
    with pytest.raises(ValueError):
        aggregate([])


def test_estimate_identical_one_sparse_drifts():
    d = np.zeros(100)
    d[7] = 3.0
    g = aggregate([local_state(CFG, d)] * 4)
    assert estimate_variance(g) == 0.0


def test_estimate_cancellation():
    c = 2.5
    a, b = np.zeros(50), np.zeros(50)
    a[0], b[0] = c, -c
    g = aggregate([local_state(CFG, a), local_state(CFG, b)])
    assert not g.mean_sketch.counters.any()
    assert estimate_variance(g) == c * c


def test_estimate_close_to_exact():
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        deltas = [rng.standard_normal(500) for _ in range(10)]
        nu = estimate_variance(aggregate([local_state(CFG, d) for d in deltas]))
        ex = exact_variance(deltas)
        errs.append(abs(nu - ex) / max(ex, 1e-12))
    assert np.median(errs) <= 0.15


def test_estimate_converges_with_width():
    rng = np.random.default_rng(4)
    deltas = [rng.standard_normal(300) + 2.0 for _ in range(8)]
    ex = exact_variance(deltas)
    errs = []
    for width in (64, 512, 4096):
        cfg = SketchConfig(depth=7, width=width)
        errs.append(abs(estimate_variance(aggregate([local_state(cfg, d) for d in deltas])) - ex) / ex)
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.1


def test_exact_variance_examples():
    d = np.random.default_rng(0).standard_normal(20)
    assert exact_variance([d, d, d]) == 0.0
    assert exact_variance([np.array([1.0, 0.0]), np.array([-1.0, 0.0])]) == 1.0
    rng = np.random.default_rng(9)
    deltas = [rng.standard_normal(30) for _ in range(20)]
    assert exact_variance(deltas) == pytest.approx(coordinate_variance_oracle(deltas), rel=1e-10)
    with pytest.raises(ValueError):
        exact_variance([])


@given(st.integers(2, 10), st.integers(1, 40), st.integers(0, 2**32 - 1), st.floats(-100, 100))
def test_exact_variance_properties(n, d, seed, shift):
    rng = np.random.default_rng(seed)
    deltas = [rng.standard_normal(d) for _ in range(n)]
    v = exact_variance(deltas)
    assert v >= 0
    assert v == pytest.approx(coordinate_variance_oracle(deltas), rel=1e-10, abs=1e-12)
    perm = [deltas[i] for i in rng.permutation(n)]
    assert exact_variance(perm) == pytest.approx(v, rel=1e-12, abs=1e-15)
    # a common offset moves every model the same way and leaves the spread alone
    shifted = [x + shift for x in deltas]
    assert exact_variance(shifted) == pytest.approx(v, rel=1e-6, abs=1e-6)


def test_query_indices():
    assert query_indices(5, 23) == [5, 10, 15, 20]
    assert query_indices(10, 100) == list(range(10, 101, 10))
    assert query_indices(30, 20) == []


def test_threshold_adjust():
    assert threshold_adjust(4.0, 20, 100) == 10.0
    assert threshold_adjust(3.7, 50, 100) == 3.7
    assert threshold_adjust(0.0, 5, 100) == 1e-12
    assert threshold_adjust(0.0, 5, 100, theta_min=1e-6) == 1e-6
    with pytest.raises(ValueError):
        threshold_adjust(1.0, 0, 100)
    with pytest.raises(ValueError):
        threshold_adjust(-1.0, 3, 100)


@given(st.floats(1e-6, 1e6), st.floats(1e-3, 1e3), st.integers(1, 200), st.integers(1, 400))
def test_threshold_homogeneous(v, c, s, tt):
    assert threshold_adjust(c * v, s, tt) == pytest.approx(c * threshold_adjust(v, s, tt), rel=1e-12)


def test_extend_tau():
    assert extend_tau(10, 10) == 100
    assert extend_tau(1, 1.5) == 18
    for e in (1, 4, 13):
        assert extend_tau(e, e) == 10 * e
    with pytest.raises(ValueError):
        extend_tau(0, 3)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedvar import optim
from fedvar.optim import FEDAVG_SERVER, PAIRINGS, OptimizerSpec, OptKind, init_state, step
from fedvar.params import NonFiniteError

ALL_KINDS = list(OptKind)


def test_init_state_shapes():
    assert init_state(OptimizerSpec(OptKind.SGD), 5).step == 0
    st_adam = init_state(OptimizerSpec(OptKind.ADAM, 0.001), 3)
    assert st_adam.step == 0
    np.testing.assert_array_equal(st_adam.m, [0, 0, 0])
    np.testing.assert_array_equal(st_adam.v, [0, 0, 0])
    np.testing.assert_array_equal(init_state(OptimizerSpec(OptKind.ADAGRAD, 0.1), 2).acc, [0, 0])
    with pytest.raises(ValueError):
        init_state(OptimizerSpec(OptKind.SGD), 0)


def test_sgd_step():
    spec = OptimizerSpec(OptKind.SGD, 1.0)
    w, _ = step(spec, init_state(spec, 2), np.array([1.0, 1.0]), np.array([0.5, -0.5]))
    np.testing.assert_array_equal(w, [0.5, 1.5])


def test_adam_single_step():
    spec = OptimizerSpec(OptKind.ADAM, learning_rate=0.001)
    w, s = step(spec, init_state(spec, 1), np.array([0.0]), np.array([1.0]))
    assert s.m[0] == pytest.approx(0.1, abs=1e-15)
    assert s.v[0] == pytest.approx(0.001, abs=1e-15)
    # m_hat = 1, v_hat = 1 -> w = -0.001 / (1 + 1e-8)
    assert w[0] == pytest.approx(-0.000999999990000000099999999, abs=1e-12)
    assert w[0] == pytest.approx(-0.000999999995, abs=1e-11)


def test_adamw_single_step_scalar_oracle():
    lr, b1, b2, eps, wd = 0.01, 0.9, 0.999, 1e-8, 0.1
    spec = OptimizerSpec(OptKind.ADAMW, lr, beta1=b1, beta2=b2, epsilon=eps, weight_decay=wd)
    w0, g = 2.0, -0.5
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    mh, vh = m / (1 - b1), v / (1 - b2)
    expect = (w0 - lr * wd * w0) - lr * mh / (math.sqrt(vh) + eps)
    w, _ = step(spec, init_state(spec, 1), np.array([w0]), np.array([g]))
    assert w[0] == pytest.approx(expect, abs=1e-12)


def test_adagrad_single_step():
    spec = OptimizerSpec(OptKind.ADAGRAD, learning_rate=0.1, epsilon=0.0)
    w, s = step(spec, init_state(spec, 1), np.array([2.0]), np.array([3.0]))
    assert s.acc[0] == 9.0
    assert w[0] == pytest.approx(1.9, abs=1e-12)


def test_adagrad_zero_gradient_with_zero_epsilon():
    spec = OptimizerSpec(OptKind.ADAGRAD, learning_rate=0.1, epsilon=0.0)
    w, _ = step(spec, init_state(spec, 2), np.array([1.0, 2.0]), np.zeros(2))
    np.testing.assert_array_equal(w, [1.0, 2.0])


def test_sgdm_two_steps_scalar_oracle():
    spec = OptimizerSpec(OptKind.SGDM, learning_rate=0.1, momentum=0.9)
    s = init_state(spec, 1)
    w = np.array([1.0])
    w, s = step(spec, s, w, np.array([2.0]))  # buf = 2
    assert w[0] == pytest.approx(0.8, abs=1e-12)
    w, s = step(spec, s, w, np.array([1.0]))  # buf = 0.9*2 + 1 = 2.8
    assert s.buf[0] == pytest.approx(2.8, abs=1e-12)
    assert w[0] == pytest.approx(0.8 - 0.28, abs=1e-12)


def test_adam_second_step_scalar_oracle():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    spec = OptimizerSpec(OptKind.ADAM, lr)
    m = v = 0.0
    w_ref = 0.3
    s = init_state(spec, 1)
    w = np.array([w_ref])
    for t, g in enumerate([0.7, -1.2], start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w_ref -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        w, s = step(spec, s, w, np.array([g]))
        assert w[0] == pytest.approx(w_ref, abs=1e-12)
    assert s.step == 2


def test_step_errors():
    spec = OptimizerSpec(OptKind.SGD, 1.0)
    with pytest.raises(ValueError):
        step(spec, init_state(spec, 2), np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        step(spec, init_state(OptimizerSpec(OptKind.ADAM, 0.1), 2), np.zeros(2), np.zeros(2))
    with pytest.raises(NonFiniteError):
        step(spec, init_state(spec, 1), np.array([1.0]), np.array([np.inf]))


def test_spec_validation():
    with pytest.raises(ValueError):
        OptimizerSpec(OptKind.SGD, learning_rate=0.0)
    with pytest.raises(ValueError):
        OptimizerSpec(OptKind.ADAM, beta1=1.0)
    with pytest.raises(ValueError):
        OptimizerSpec(OptKind.ADAM, epsilon=0.0)
    with pytest.raises(ValueError):
        OptimizerSpec(OptKind.SGDM, momentum=-0.1)


def test_defaults():
    s = OptimizerSpec(OptKind.ADAM)
    assert (s.beta1, s.beta2, s.epsilon, s.momentum, s.weight_decay) == (0.9, 0.999, 1e-8, 0.9, 0.01)
    assert FEDAVG_SERVER.kind is OptKind.SGD and FEDAVG_SERVER.learning_rate == 1.0
    assert set(PAIRINGS) == {"FedAvg", "FedAvgM", "FedAdam", "FedAdamW", "FedAdaGrad"}


def test_fedavg_identity():
    rng = np.random.default_rng(0)
    w_t = rng.standard_normal(20)
    clients = [w_t + rng.standard_normal(20) for _ in range(5)]
    mean_delta = np.mean([c - w_t for c in clients], axis=0)
    w_next, _ = step(FEDAVG_SERVER, init_state(FEDAVG_SERVER, 20), w_t, -mean_delta)
    # w - 1.0 * (-m) is w + m bit for bit
    np.testing.assert_array_equal(w_next, w_t + mean_delta)
    # agreement with the averaged client models holds up to rounding only
    np.testing.assert_allclose(w_next, np.mean(clients, axis=0), rtol=1e-12, atol=1e-12)


def test_zero_gradient():
    w = np.array([1.5, -2.0])
    g = np.zeros(2)
    for kind in (OptKind.SGD, OptKind.SGDM, OptKind.ADAM):
        spec = OptimizerSpec(kind, 0.1)
        out, _ = step(spec, init_state(spec, 2), w, g)
        np.testing.assert_array_equal(out, w)
    spec = OptimizerSpec(OptKind.ADAMW, 0.1, weight_decay=0.2)
    out, _ = step(spec, init_state(spec, 2), w, g)
    np.testing.assert_array_equal(out, w - 0.1 * 0.2 * w)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_quadratic_decreases(kind):
    spec = OptimizerSpec(kind, learning_rate=0.01)
    w = np.random.default_rng(1).standard_normal(8)
    f0 = 0.5 * w @ w
    s = init_state(spec, 8)
    for _ in range(100):
        w, s = step(spec, s, w, w.copy())
    assert 0.5 * w @ w < f0


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_state_invariants_and_purity(kind):
    spec = OptimizerSpec(kind, learning_rate=0.05)
    rng = np.random.default_rng(2)
    s = init_state(spec, 4)
    w = rng.standard_normal(4)
    for n in range(1, 6):
        g = rng.standard_normal(4)
        w_copy, g_copy = w.copy(), g.copy()
        a = step(spec, s, w, g)
        b = step(spec, s, w, g)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(w, w_copy)
        np.testing.assert_array_equal(g, g_copy)
        w, s = a
        assert s.step == n
        for buf in (s.v, s.acc):
            if buf is not None:
                assert buf.shape == (4,) and np.all(buf >= 0)


@given(
    st.sampled_from(ALL_KINDS),
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=6),
)
def test_step_deterministic(kind, vals):
    spec = OptimizerSpec(kind, learning_rate=0.01)
    w = np.array(vals)
    g = np.array(vals[::-1])
    a = optim.step(spec, init_state(spec, w.size), w, g)
    b = optim.step(spec, init_state(spec, w.size), w, g)
    np.testing.assert_array_equal(a[0], b[0])

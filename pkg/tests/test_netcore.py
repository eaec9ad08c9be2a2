import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import gradient_suite
from tard.errors import ConfigError, DegenerateBatchError, UsageError
from tard.netcore import (AdamState, BatchNorm, Dense, Mode, ReLU, Sequential, adam_step, mse_grad, mse_loss,
                          relu)


def test_dense_hand_example():
    d = Dense(2, 2)
    d.weight = np.eye(2)
    d.bias = np.array([1.0, 1.0])
    assert np.array_equal(d.forward([[1.0, 2.0]]), [[2.0, 3.0]])


def test_dense_zero_and_identity():
    d = Dense(3, 3)
    d.bias[:] = 0
    assert np.array_equal(d.forward(np.zeros((2, 3))), np.zeros((2, 3)))
    d.weight = np.eye(3)
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(d.forward(x), x)


def test_dense_dimension_mismatch():
    with pytest.raises(ConfigError):
        Dense(3, 2).forward(np.ones((2, 4)))


def test_batchnorm_hand_example():
    bn = BatchNorm(1, eps=1e-300)
    out = bn.forward(np.array([[2.0], [4.0]]))
    assert np.allclose(out.ravel(), [-1.0, 1.0], atol=1e-12)


def test_batchnorm_zero_gamma_gives_beta():
    bn = BatchNorm(3)
    bn.gamma[:] = 0
    bn.beta[:] = [1.0, -2.0, 3.0]
    out = bn.forward(np.random.default_rng(0).standard_normal((5, 3)))
    assert np.array_equal(out, np.tile([1.0, -2.0, 3.0], (5, 1)))


@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 5)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_batchnorm_train_normalizes(x):
    bn = BatchNorm(x.shape[1], eps=1e-8)
    z = bn.forward(x)
    spread = x.std(axis=0)
    ok = spread > 0.1  # below this eps itself shifts the variance by more than 1e-6
    assert np.all(np.abs(z.mean(axis=0)) <= 1e-6)
    assert np.all(np.abs(z.var(axis=0)[ok] - 1.0) <= 1e-6)


def test_batchnorm_running_update_momentum():
    bn = BatchNorm(2, momentum=0.1)
    x = np.array([[1.0, 2.0], [3.0, 6.0]])
    bn.forward(x)
    assert np.allclose(bn.running_mean, 0.1 * x.mean(axis=0))
    assert np.allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=0))


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm(1, mode=Mode.EVAL, eps=1e-12)
    bn.running_mean[:] = 3.0
    bn.running_var[:] = 4.0
    assert np.allclose(bn.forward([[5.0]]), [[1.0]])


def test_adabn_replaces_running_stats_exactly():
    rng = np.random.default_rng(1)
    bn = BatchNorm(4, mode=Mode.ADABN)
    for _ in range(5):
        x = rng.standard_normal((7, 4)) * 3 + 1
        bn.forward(x)
        assert np.array_equal(bn.running_mean, x.mean(axis=0))
        assert np.array_equal(bn.running_var, ((x - x.mean(axis=0)) ** 2).mean(axis=0))


def test_adabn_idempotent():
    x = np.random.default_rng(2).standard_normal((9, 3))
    bn = BatchNorm(3, mode=Mode.ADABN)
    first = bn.forward(x)
    stats = [a.copy() for a in bn.statistics().values()]
    second = bn.forward(x)
    assert np.array_equal(first, second)
    assert all(np.array_equal(a, b) for a, b in zip(stats, bn.statistics().values()))


@pytest.mark.parametrize("mode", [Mode.TRAIN, Mode.ADABN])
def test_single_row_batch_rejected(mode):
    with pytest.raises(DegenerateBatchError):
        BatchNorm(2, mode=mode).forward(np.ones((1, 2)))


def test_single_row_allowed_in_eval():
    assert BatchNorm(2, mode=Mode.EVAL).forward(np.ones((1, 2))).shape == (1, 2)


def test_relu_examples():
    assert np.array_equal(relu([[-1.0, 0.0, 2.0]]), [[0.0, 0.0, 2.0]])
    assert np.array_equal(relu(-np.ones((2, 2))), np.zeros((2, 2)))
    x = np.ones((2, 2)) * 3
    assert np.array_equal(relu(x), x)


def test_mse_examples():
    assert mse_loss([[1.0, 1.0]], [[0.0, 2.0]]) == 1.0
    t = np.random.default_rng(0).standard_normal((3, 4))
    assert mse_loss(t, t) == 0.0
    assert np.isclose(mse_loss(t + 0.5, t), 0.25)
    with pytest.raises(ConfigError):
        mse_loss(np.ones((2, 2)), np.ones((2, 3)))


_eighths = st.integers(-80, 80).map(lambda v: v / 8.0)


@given(arrays(np.float64, (3, 2), elements=_eighths), arrays(np.float64, (3, 2), elements=_eighths))
def test_mse_nonnegative_and_zero_iff_equal(a, b):
    v = mse_loss(a, b)
    assert v >= 0
    assert (v == 0) == np.array_equal(a, b)


def test_linear_layer_closed_form_gradient():
    rng = np.random.default_rng(3)
    d = Dense(3, 2, rng)
    x, t = rng.standard_normal((4, 3)), rng.standard_normal((4, 2))
    p = d.forward(x)
    d.backward(mse_grad(p, t))
    assert np.allclose(d.dweight, 2.0 / p.size * x.T @ (p - t), atol=1e-14)


def test_zero_loss_zero_gradient():
    rng = np.random.default_rng(4)
    net = Sequential([Dense(3, 4, rng), BatchNorm(4), ReLU(), Dense(4, 2, rng)])
    x = rng.standard_normal((5, 3))
    p = net.forward(x)
    net.backward(mse_grad(p, p.copy()))
    assert all(np.all(g == 0) for g in net.gradients())


def test_backward_without_forward():
    with pytest.raises(UsageError):
        Dense(2, 2).backward(np.ones((1, 2)))
    with pytest.raises(UsageError):
        BatchNorm(2).backward(np.ones((2, 2)))


def test_finite_difference_gradients():
    assert gradient_suite(50, seed=0) <= 1e-4


def test_init_is_seeded():
    a = Dense(5, 4, np.random.default_rng(9))
    b = Dense(5, 4, np.random.default_rng(9))
    assert np.array_equal(a.weight, b.weight)
    limit = np.sqrt(6.0 / 9)
    assert np.all(np.abs(a.weight) <= limit)


def test_adam_zero_gradient():
    p = [np.array([1.0, -2.0])]
    s = AdamState.for_params(p)
    adam_step(p, [np.zeros(2)], s)
    assert np.array_equal(p[0], [1.0, -2.0])
    assert s.step == 1


@pytest.mark.parametrize("g", [1e-3, 1.0, 250.0])
def test_adam_first_step_magnitude_is_lr(g):
    p = [np.zeros(3)]
    s = AdamState.for_params(p, lr=1e-3)
    adam_step(p, [np.full(3, g)], s)
    assert np.allclose(p[0], -1e-3, rtol=1e-4)


def test_adam_opposite_gradients_partially_cancel():
    p = [np.zeros(1)]
    s = AdamState.for_params(p)
    adam_step(p, [np.ones(1)], s)
    one = abs(p[0][0])
    adam_step(p, [-np.ones(1)], s)
    assert abs(p[0][0]) < one


def test_adam_shape_mismatch():
    with pytest.raises(ConfigError):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState())

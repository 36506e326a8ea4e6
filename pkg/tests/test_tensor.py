import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eeglrp import tensor as T
from eeglrp.lrp import RuleConfig
from eeglrp.tensor import ReverseMode, Tensor

from gradcheck import TOL, check_op, op_cases

OPS = [c[0] for c in op_cases(np.random.default_rng(0))]


@pytest.mark.parametrize("name", OPS)
def test_finite_differences_per_op(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    cases = {c[0]: c for c in op_cases(rng)}
    _, f, gen = cases[name]
    errors = [check_op(f, gen(), rng) for _ in range(20)]
    assert max(errors) <= TOL, f"{name}: worst relative error {max(errors):.2e}"


# -- forward examples --------------------------------------------------------


def test_matmul_examples(rng):
    assert np.array_equal(T.matmul(np.eye(2), np.array([[3.0], [4.0]])).data, [[3.0], [4.0]])
    assert T.matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])).data.tolist() == [[11.0]]
    a, b = rng.standard_normal((5, 4)), rng.standard_normal((4, 3))
    loop = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(4):
                loop[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(T.matmul(a, b).data, loop, atol=1e-12, rtol=0)


def test_matmul_shape_mismatch():
    with pytest.raises(T.DimensionError):
        T.matmul(np.ones((2, 3)), np.ones((2, 3)))


def _conv_loop(x, w, stride):
    co, ci, k = w.shape
    t_out = (x.shape[1] - k) // stride + 1
    y = np.zeros((co, t_out))
    for o in range(co):
        for t in range(t_out):
            for c in range(ci):
                for j in range(k):
                    y[o, t] += w[o, c, j] * x[c, t * stride + j]
    return y


def test_conv1d_examples(rng):
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    assert T.conv1d(x, np.array([[[1.0]]])).data.tolist() == [[1.0, 2.0, 3.0, 4.0]]
    assert T.conv1d(x, np.array([[[1.0, 1.0]]])).data.tolist() == [[3.0, 5.0, 7.0]]
    for stride in (1, 2, 3):
        xs, ws = rng.standard_normal((3, 40)), rng.standard_normal((4, 3, 5))
        y = T.conv1d(xs, ws, stride=stride).data
        assert y.shape == (4, (40 - 5) // stride + 1)
        np.testing.assert_allclose(y, _conv_loop(xs, ws, stride), atol=1e-12, rtol=0)


def test_conv1d_kernel_too_long():
    with pytest.raises(T.DimensionError):
        T.conv1d(np.ones((1, 3)), np.ones((1, 1, 4)))


def test_layer_norm_examples(rng):
    np.testing.assert_array_equal(T.layer_norm(np.ones((1, 3))).data, np.zeros((1, 3)))
    np.testing.assert_allclose(T.layer_norm(np.array([-1.0, 1.0])).data, [-1.0, 1.0], atol=1e-9)
    y = T.layer_norm(rng.standard_normal((50, 64)) * 3 + 2).data
    np.testing.assert_allclose(y.mean(-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(-1), 1.0, atol=1e-9)


def test_softmax_examples(rng):
    assert T.softmax(np.zeros(2)).data.tolist() == [0.5, 0.5]
    np.testing.assert_allclose(T.softmax(np.array([1000.0, 0.0])).data, [1.0, 0.0], atol=1e-12)
    assert abs(T.softmax(rng.standard_normal(17)).data.sum() - 1.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e4, 1e4)))
def test_softmax_is_probability_vector(x):
    p = T.softmax(x).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


def test_gelu_examples():
    assert T.gelu(np.array(0.0)).data == 0.0
    assert abs(T.gelu(np.array(30.0)).data - 30.0) < 1e-12
    # exact erf form
    expected = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    assert abs(float(T.gelu(np.array(1.0)).data) - expected) <= 1e-6
    assert abs(float(T.gelu(np.array(1.0)).data) - 0.8413447460685429) <= 1e-6


def test_nonfinite_forward_is_an_error():
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        T.mul(np.array([1e308]), np.array([1e308]))


# -- backward ------------------------------------------------------------------


def test_identity_gradient():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = T.mul(x, 1.0)
    assert T.backward(y, 1.0)[x] == 1.0


def test_linear_chain_matches_finite_differences(rng):
    for _ in range(5):
        w1, w2 = rng.standard_normal((4, 3)), rng.standard_normal((3, 1))
        err = check_op(lambda x: T.linear(T.linear(x, w1), w2), [rng.standard_normal((2, 4))], rng)
        assert err <= 1e-5


def test_relevance_single_linear_layer_is_x_times_w(rng):
    x, w = rng.standard_normal(5), rng.standard_normal((5, 1))
    xt = Tensor(x, requires_grad=True)
    out = T.linear(xt, w)
    rel = T.backward(out, np.ones(1), ReverseMode.RELEVANCE, RuleConfig(), inputs=[xt])[xt]
    np.testing.assert_allclose(rel, x * w[:, 0], atol=1e-12)


def test_backward_twice_without_retain_is_state_error(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    y = T.sum(T.mul(x, x))
    T.backward(y)
    with pytest.raises(T.GraphStateError):
        T.backward(y)


def test_seed_shape_checked():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(T.DimensionError):
        T.backward(T.mul(x, 2.0), np.ones(2))


def _small_net(rng):
    w1, b1 = rng.standard_normal((6, 5)), rng.standard_normal(5)
    w2 = rng.standard_normal((5, 5))
    g = rng.standard_normal(5) + 1

    def f(x):
        h = T.gelu(T.linear(x, w1, b1))
        h = T.layer_norm(h, g)
        a = T.softmax(T.matmul(h.reshape(2, 5), T.transpose(h.reshape(2, 5))), axis=-1)
        return T.linear(T.matmul(a, h.reshape(2, 5), rule="attention_value"), w2)

    return f


@pytest.mark.parametrize("mode", [ReverseMode.GRADIENT, ReverseMode.RELEVANCE])
def test_backward_is_linear_in_seed(rng, mode):
    f = _small_net(rng)
    x = rng.standard_normal((2, 6))
    seed = rng.standard_normal((2, 5))
    out = []
    for c in (1.0, 2.0):
        xt = Tensor(x, requires_grad=True)
        y = f(xt)
        out.append(T.backward(y, c * seed, mode, RuleConfig(), inputs=[xt])[xt])
    np.testing.assert_array_equal(2.0 * out[0], out[1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-8, 8).filter(lambda c: abs(c) > 1e-3))
def test_seed_scaling_property(seed, c):
    rng = np.random.default_rng(seed)
    f = _small_net(rng)
    x = rng.standard_normal((2, 6))
    s = rng.standard_normal((2, 5))
    res = []
    for scale in (1.0, c):
        xt = Tensor(x, requires_grad=True)
        res.append(T.backward(f(xt), scale * s, ReverseMode.GRADIENT, inputs=[xt])[xt])
    np.testing.assert_allclose(c * res[0], res[1], rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**31 - 1))
def test_matmul_oracle_property(m, n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 8))
    a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
    ref = sum(np.outer(a[:, j], b[j]) for j in range(k))
    np.testing.assert_allclose(T.matmul(a, b).data, ref, atol=1e-12, rtol=0)

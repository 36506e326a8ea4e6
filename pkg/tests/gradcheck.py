"""Central finite-difference checks shared by the tensor and acceptance tests."""
from __future__ import annotations

import numpy as np

from eeglrp import tensor as T

H = 1e-5
TOL = 1e-5


def numeric_grad(f, arrays, idx, cot, h=H):
    base = arrays[idx]
    g = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = base[i]
        base[i] = old + h
        fp = float(np.sum(f(*arrays).data * cot))
        base[i] = old - h
        fm = float(np.sum(f(*arrays).data * cot))
        base[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def check_op(f, arrays, rng, wrt=None):
    """Max relative error between analytic and numeric gradients of ``sum(f(*arrays) * cot)``."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    wrt = range(len(arrays)) if wrt is None else wrt
    leaves = [T.Tensor(a, requires_grad=True) for a in arrays]
    out = f(*leaves)
    cot = rng.standard_normal(out.shape)
    grads = T.backward(out, cot, inputs=[leaves[i] for i in wrt])
    worst = 0.0
    for i in wrt:
        num = numeric_grad(lambda *a: f(*[T.Tensor(x) for x in a]), arrays, i, cot)
        worst = max(worst, rel_error(grads[leaves[i]], num))
    return worst


def op_cases(rng):
    """(name, function, input generator) for every differentiable op."""
    r = rng

    def ln_in():
        return [r.standard_normal((3, 5)) * 2 + 1, r.standard_normal(5) + 1, r.standard_normal(5)]

    mask = (r.random((3, 4)) > 0.4).astype(float)
    targets = (r.random((6,)) > 0.5).astype(float)
    weights = r.random(6) + 0.5
    return [
        ("add", lambda a, b: T.add(a, b), lambda: [r.standard_normal((3, 4)), r.standard_normal((4,))]),
        ("sub", lambda a, b: T.sub(a, b), lambda: [r.standard_normal((2, 3)), r.standard_normal((2, 1))]),
        ("neg", lambda a: T.neg(a), lambda: [r.standard_normal((4,))]),
        ("mul", lambda a, b: T.mul(a, b), lambda: [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
        ("matmul", lambda a, b: T.matmul(a, b), lambda: [r.standard_normal((2, 3, 4)), r.standard_normal((4, 2))]),
        ("linear", lambda x, w, b: T.linear(x, w, b), lambda: [r.standard_normal((3, 4)), r.standard_normal((4, 2)), r.standard_normal(2)]),
        (
            "conv1d",
            lambda x, w, b: T.conv1d(x, w, b, stride=2),
            lambda: [r.standard_normal((2, 2, 9)), r.standard_normal((3, 2, 3)), r.standard_normal(3)],
        ),
        ("gelu", lambda x: T.gelu(x), lambda: [r.standard_normal((3, 4)) * 2]),
        ("softmax", lambda x: T.softmax(x, axis=-1), lambda: [r.standard_normal((3, 5)) * 2]),
        ("layer_norm", lambda x, g, b: T.layer_norm(x, g, b), ln_in),
        ("reshape", lambda x: T.reshape(x, (6, 2)), lambda: [r.standard_normal((3, 4))]),
        ("transpose", lambda x: T.transpose(x, (2, 0, 1)), lambda: [r.standard_normal((2, 3, 4))]),
        ("getitem", lambda x: T.getitem(x, (slice(None), [0, 2, 2])), lambda: [r.standard_normal((2, 4))]),
        ("concat", lambda a, b: T.concat([a, b], axis=1), lambda: [r.standard_normal((2, 3)), r.standard_normal((2, 2))]),
        ("stack", lambda a, b: T.stack([a, b], axis=0), lambda: [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
        ("sum", lambda x: T.sum(x, axis=1, keepdims=True), lambda: [r.standard_normal((3, 4))]),
        ("mean", lambda x: T.mean(x, axis=0), lambda: [r.standard_normal((3, 4))]),
        ("broadcast_to", lambda x: T.broadcast_to(x, (3, 2, 4)), lambda: [r.standard_normal((2, 1))]),
        ("bce_with_logits", lambda z: T.bce_with_logits(z, targets, weights), lambda: [r.standard_normal(6) * 3]),
        ("masked_mse", lambda p: T.masked_mse(p, np.ones((3, 4)), mask), lambda: [r.standard_normal((3, 4))]),
    ]

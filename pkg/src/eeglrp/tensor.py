"""Dense float64 tensors recorded on an eager computation graph.

A single reverse sweep runs in one of two modes:

* ``ReverseMode.GRADIENT`` -- exact vector-Jacobian products, used for training.
* ``ReverseMode.RELEVANCE`` -- layer-wise relevance propagation written as
  "input times modified gradient". Every op carries a rule tag, and in this
  mode its backward replaces the true local Jacobian by the rule-specific
  one. Relevance at an input leaf is ``x * g`` plus any relevance handed to
  it directly (the w-square input rule does not factor through ``x``).

Relevance rules read their constants from a ``rules`` object (duck-typed;
see :class:`eeglrp.lrp.RuleConfig`) passed to :func:`backward`.
"""
from __future__ import annotations

import enum
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

__all__ = [
    "ReverseMode",
    "Tensor",
    "GraphStateError",
    "DimensionError",
    "RuleError",
    "as_tensor",
    "backward",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "linear",
    "conv1d",
    "gelu",
    "softmax",
    "layer_norm",
    "reshape",
    "transpose",
    "getitem",
    "concat",
    "stack",
    "sum",
    "mean",
    "broadcast_to",
    "bce_with_logits",
    "masked_mse",
    "VARIANCE_FLOOR",
]

VARIANCE_FLOOR = 1e-12


class ReverseMode(enum.Enum):
    GRADIENT = "gradient"
    RELEVANCE = "relevance"


class GraphStateError(RuntimeError):
    """Backward requested on a graph that was never recorded or already freed."""


class DimensionError(ValueError):
    pass


class RuleError(RuntimeError):
    """A relevance rule was applied where it is undefined."""


class _Direct:
    """Relevance passed to a parent as-is rather than as a modified gradient."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


class _Ctx:
    __slots__ = ("mode", "rules", "needs")

    def __init__(self, mode, rules, needs):
        self.mode = mode
        self.rules = rules
        self.needs = needs

    @property
    def relevance(self) -> bool:
        return self.mode is ReverseMode.RELEVANCE


class Tensor:
    """An n-dimensional float64 array plus the graph node that produced it."""

    __slots__ = (
        "data",
        "requires_grad",
        "name",
        "op",
        "rule",
        "structural",
        "_parents",
        "_vjp",
        "_freed",
    )

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self.rule = "standard"
        self.structural = False
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._freed = False

    @classmethod
    def _node(cls, data, parents, vjp, op, rule="standard", structural=False):
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        if not np.isfinite(data).all():
            raise FloatingPointError(f"{op} produced non-finite values")
        out.data = data
        out.requires_grad = False
        out.name = None
        out.op = op
        out.rule = rule
        out.structural = structural
        out._parents = tuple(parents)
        out._vjp = vjp
        out._freed = False
        return out

    @property
    def is_leaf(self) -> bool:
        return self.op == "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        Tensor.__init__(out, self.data)
        return out

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _sign0(y: np.ndarray) -> np.ndarray:
    return np.where(y >= 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _accumulate(store: dict, key: int, value: np.ndarray):
    prev = store.get(key)
    store[key] = value if prev is None else prev + value


def _free(order: Iterable[Tensor]):
    for node in order:
        if not node.is_leaf:
            node._vjp = None
            node._parents = ()
            node._freed = True


def backward(
    output: Tensor,
    seed=None,
    mode: ReverseMode = ReverseMode.GRADIENT,
    rules=None,
    inputs: Sequence[Tensor] | None = None,
    retain_graph: bool = False,
) -> dict[Tensor, np.ndarray]:
    """Run one reverse sweep from ``output``.

    Parameters
    ----------
    output : Tensor
        Node to start from.
    seed : array_like, optional
        Cotangent at ``output``; defaults to ones of its shape.
    mode : ReverseMode
        Gradient or relevance propagation.
    rules : object, optional
        Rule constants for relevance mode (``epsilon``, ``gamma``,
        ``linear_epsilon``, ``input_rule``, ``bilinear_split``,
        ``softmax_rule``). Required in relevance mode.
    inputs : sequence of Tensor, optional
        Leaves to report. Defaults to every reachable leaf with
        ``requires_grad``.
    retain_graph : bool
        Keep the recorded graph for another sweep.

    Returns
    -------
    dict
        ``{leaf: array}`` holding gradients, or relevance ``x * g`` (+ direct
        contributions) in relevance mode.
    """
    if output._freed:
        raise GraphStateError("graph was freed by an earlier backward; run forward again")
    if mode is ReverseMode.RELEVANCE and rules is None:
        raise ValueError("relevance mode needs a rule configuration")
    seed = np.ones_like(output.data) if seed is None else np.asarray(seed, dtype=np.float64)
    if seed.shape != output.shape:
        raise DimensionError(f"seed shape {seed.shape} does not match output shape {output.shape}")

    order = _toposort(output)
    if inputs is None:
        targets = [n for n in order if n.is_leaf and n.requires_grad]
    else:
        targets = list(inputs)
    target_ids = {id(t) for t in targets}

    need: dict[int, bool] = {}
    for node in order:
        if node.is_leaf:
            need[id(node)] = id(node) in target_ids
        else:
            need[id(node)] = any(need[id(p)] for p in node._parents)

    grads: dict[int, np.ndarray] = {id(output): seed}
    direct: dict[int, np.ndarray] = {}
    results: dict[int, np.ndarray] = {}
    for node in reversed(order):
        key = id(node)
        g = grads.pop(key, None)
        d = direct.pop(key, None)
        if node.is_leaf:
            if key in target_ids:
                if mode is ReverseMode.RELEVANCE:
                    r = np.zeros_like(node.data) if g is None else node.data * g
                    results[key] = r if d is None else r + d
                else:
                    results[key] = np.zeros_like(node.data) if g is None else g
            continue
        if not need[key]:
            continue
        if node._vjp is None:
            raise GraphStateError(f"node {node.op} has no recorded backward")
        needs = tuple(need[id(p)] for p in node._parents)
        if g is not None:
            outs = node._vjp(g, _Ctx(mode, rules, needs))
            for p, o, n in zip(node._parents, outs, needs):
                if not n or o is None:
                    continue
                if isinstance(o, _Direct):
                    _accumulate(direct, id(p), o.value)
                else:
                    _accumulate(grads, id(p), o)
        if d is not None:
            if not node.structural:
                raise RuleError(
                    f"direct relevance cannot pass through '{node.op}'; "
                    "the w-square rule applies to the input layer only"
                )
            outs = node._vjp(d, _Ctx(ReverseMode.GRADIENT, rules, needs))
            for p, o, n in zip(node._parents, outs, needs):
                if n and o is not None:
                    _accumulate(direct, id(p), o)

    if not retain_graph:
        _free(order)
    out: dict[Tensor, np.ndarray] = {}
    for t in targets:
        out[t] = results.get(id(t), np.zeros_like(t.data))
    return out


# ---------------------------------------------------------------------------
# elementwise / linear algebra
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def vjp(g, ctx):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor._node(a.data + b.data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def vjp(g, ctx):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return Tensor._node(a.data - b.data, (a, b), vjp, "sub")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g, ctx):
        return (-g,)

    return Tensor._node(-a.data, (a,), vjp, "neg")


def _bilinear_shares(ctx) -> tuple[float, float]:
    s = float(ctx.rules.bilinear_split)
    return 1.0 - s, s


def mul(a, b) -> Tensor:
    """Elementwise product.

    In relevance mode a product of two input-dependent factors is bilinear:
    the left factor receives ``1 - bilinear_split`` of the relevance and the
    right factor ``bilinear_split``. A product with a constant is linear.
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape

    def vjp(g, ctx):
        ga = _unbroadcast(g * bd, sa) if ctx.needs[0] else None
        gb = _unbroadcast(g * ad, sb) if ctx.needs[1] else None
        if ctx.relevance and ctx.needs[0] and ctx.needs[1]:
            left, right = _bilinear_shares(ctx)
            ga, gb = ga * left, gb * right
        return ga, gb

    return Tensor._node(ad * bd, (a, b), vjp, "mul", rule="bilinear")


def matmul(a, b, rule: str = "bilinear") -> Tensor:
    """Batched matrix product ``a @ b`` with broadcast batch dimensions.

    ``rule="attention_value"`` marks the product of attention weights and
    values; under ``softmax_rule="value-path-identity"`` the weights are then
    treated as constants and all relevance flows to the values.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs at least 2-D operands")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape

    def vjp(g, ctx):
        needs_a, needs_b = ctx.needs
        if ctx.relevance and rule == "attention_value" and ctx.rules.softmax_rule == "value-path-identity":
            needs_a = False
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), sa) if needs_a else None
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), sb) if needs_b else None
        if ctx.relevance and ga is not None and gb is not None:
            left, right = _bilinear_shares(ctx)
            ga, gb = ga * left, gb * right
        return ga, gb

    return Tensor._node(out, (a, b), vjp, "matmul", rule=rule)


def linear(x, w, b=None) -> Tensor:
    """Affine map ``x @ w + b`` over the last axis; ``w`` has shape (in, out).

    Relevance rule: epsilon-LRP. With ``rules.linear_epsilon == 0`` this is
    the plain gradient (bias relevance is absorbed).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input feature size {x.shape[-1]} != weight rows {w.shape[0]}")
    parents = [x, w]
    y = x.data @ w.data
    if b is not None:
        b = as_tensor(b)
        y = y + b.data
        parents.append(b)
    xd, wd = x.data, w.data

    def vjp(g, ctx):
        if ctx.relevance:
            eps = float(getattr(ctx.rules, "linear_epsilon", 0.0))
            if eps > 0.0:
                g = g * y / (y + eps * _sign0(y))
            gx = g @ wd.T
            return (gx, None, None)[: len(parents)]
        gx = g @ wd.T if ctx.needs[0] else None
        gw = None
        if ctx.needs[1]:
            gw = xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        out = [gx, gw]
        if b is not None:
            out.append(g.reshape(-1, g.shape[-1]).sum(axis=0) if ctx.needs[2] else None)
        return tuple(out)

    return Tensor._node(y, parents, vjp, "linear", rule="epsilon")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    co, ci, k = w.shape
    win = sliding_window_view(x, k, axis=-1)[..., ::stride, :]  # (..., ci, t_out, k)
    t_out = win.shape[-2]
    cols = np.moveaxis(win, -3, -2).reshape(*x.shape[:-2], t_out, ci * k)
    y = cols @ w.reshape(co, ci * k).T  # (..., t_out, co)
    return np.swapaxes(y, -1, -2), cols


def _conv_input_grad(g: np.ndarray, w: np.ndarray, t: int, stride: int) -> np.ndarray:
    co, ci, k = w.shape
    t_out = g.shape[-1]
    gcols = np.swapaxes(g, -1, -2) @ w.reshape(co, ci * k)  # (..., t_out, ci*k)
    gcols = gcols.reshape(*g.shape[:-2], t_out, ci, k)
    gx = np.zeros((*g.shape[:-2], ci, t), dtype=np.float64)
    span = stride * (t_out - 1) + 1
    for j in range(k):
        gx[..., :, j : j + span : stride] += np.swapaxes(gcols[..., j], -1, -2)
    return gx


def conv1d(x, w, b=None, stride: int = 1, rule: str = "epsilon") -> Tensor:
    """Valid 1-D cross-correlation over the last axis.

    Parameters
    ----------
    x : Tensor, shape (..., ch_in, t)
    w : Tensor, shape (ch_out, ch_in, k)
    b : Tensor, shape (ch_out,), optional
    stride : int
    rule : {"epsilon", "gamma", "input"}
        Relevance rule. ``"input"`` resolves to ``rules.input_rule``
        (``"wsquare"`` or ``"epsilon"``). The gamma rule is the sign-aware
        form; on nonnegative inputs and positive outputs it is
        ``W + gamma * max(W, 0)``, ``b + gamma * max(b, 0)``.

    Output length is ``(t - k) // stride + 1``.
    """
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 3 or x.ndim < 2:
        raise DimensionError("conv1d expects x (..., ch_in, t) and w (ch_out, ch_in, k)")
    co, ci, k = w.shape
    t = x.shape[-1]
    if x.shape[-2] != ci:
        raise DimensionError(f"conv1d: input has {x.shape[-2]} channels, kernel expects {ci}")
    if k > t:
        raise DimensionError(f"conv1d: kernel length {k} exceeds input length {t}")
    if stride < 1:
        raise DimensionError("conv1d: stride must be >= 1")
    y, cols = _conv_forward(x.data, w.data, stride)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        y = y + b.data[:, None]
        parents.append(b)
    xd, wd = x.data, w.data
    bd = None if b is None else b.data

    def relevance_vjp(g, ctx):
        r = rule
        if r == "input":
            r = ctx.rules.input_rule
        if r == "wsquare":
            rel_out = y * g
            w2 = wd**2
            colsum = w2.reshape(co, -1).sum(axis=1)
            zero = colsum == 0.0
            w2 = np.where(zero[:, None, None], 1.0, w2)
            colsum = np.where(zero, float(ci * k), colsum)
            share = rel_out / colsum[:, None]
            return (_Direct(_conv_input_grad(share, w2, t, stride)), None, None)[: len(parents)]
        if r not in ("gamma", "epsilon"):
            raise RuleError(f"unknown conv relevance rule {r!r}")
        eps = float(ctx.rules.epsilon)
        rel_out = y * g
        if r == "epsilon":
            s = rel_out / (y + eps * _sign0(y))
            return (_conv_input_grad(s, wd, t, stride), None, None)[: len(parents)]
        gamma = float(ctx.rules.gamma)
        # Sign-aware gamma: for a positive output, contributions x*w > 0 are
        # amplified (w + gamma*w+ on positive inputs, w + gamma*w- on negative
        # ones); for a negative output the roles swap. Each denominator then
        # has the sign of its output and cannot pass through zero.
        w_up = wd + gamma * np.maximum(wd, 0.0)
        w_dn = wd + gamma * np.minimum(wd, 0.0)
        xp, xn = np.maximum(xd, 0.0), np.minimum(xd, 0.0)
        z_pos = _conv_forward(xp, w_up, stride)[0] + _conv_forward(xn, w_dn, stride)[0]
        z_neg = _conv_forward(xp, w_dn, stride)[0] + _conv_forward(xn, w_up, stride)[0]
        if bd is not None:
            z_pos = z_pos + (bd + gamma * np.maximum(bd, 0.0))[:, None]
            z_neg = z_neg + (bd + gamma * np.minimum(bd, 0.0))[:, None]
        s_pos = np.where(y > 0, rel_out, 0.0) / (z_pos + eps * _sign0(z_pos))
        s_neg = np.where(y < 0, rel_out, 0.0) / (z_neg + eps * _sign0(z_neg))
        g_pos_in = _conv_input_grad(s_pos, w_up, t, stride) + _conv_input_grad(s_neg, w_dn, t, stride)
        g_neg_in = _conv_input_grad(s_pos, w_dn, t, stride) + _conv_input_grad(s_neg, w_up, t, stride)
        gx = np.where(xd > 0, g_pos_in, np.where(xd < 0, g_neg_in, 0.0))
        return (gx, None, None)[: len(parents)]

    def vjp(g, ctx):
        if ctx.relevance:
            return relevance_vjp(g, ctx)
        gx = _conv_input_grad(g, wd, t, stride) if ctx.needs[0] else None
        gw = None
        if ctx.needs[1]:
            gt = np.swapaxes(g, -1, -2).reshape(-1, co)
            gw = (gt.T @ cols.reshape(-1, ci * k)).reshape(co, ci, k)
        out = [gx, gw]
        if b is not None:
            out.append(np.moveaxis(g, -2, -1).reshape(-1, co).sum(axis=0) if ctx.needs[2] else None)
        return tuple(out)

    return Tensor._node(y, parents, vjp, "conv1d", rule=rule)


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU. Relevance rule: identity, ``R_in = R_out``."""
    x = as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))

    def vjp(g, ctx):
        if ctx.relevance:
            # gelu(x) / x == cdf(x), so x * g_in == gelu(x) * g_out exactly
            return (g * cdf,)
        return (g * (cdf + xd * _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)),)

    return Tensor._node(xd * cdf, (x,), vjp, "gelu", rule="identity")


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax with the max-subtraction detached.

    Relevance rule (``rules.softmax_rule``): ``"exact-jacobian-grad-input"``
    uses the true Jacobian; ``"value-path-identity"`` passes nothing back.
    """
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g, ctx):
        if ctx.relevance:
            rule = ctx.rules.softmax_rule
            if rule == "value-path-identity":
                return (None,)
            if rule != "exact-jacobian-grad-input":
                raise RuleError(f"unknown softmax rule {rule!r}")
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._node(y, (x,), vjp, "softmax", rule="softmax-rule")


def layer_norm(x, gain=None, bias=None) -> Tensor:
    """Standardize over the last axis, then apply ``gain`` and ``bias``.

    Variance is floored at ``VARIANCE_FLOOR`` before the square root. In
    relevance mode the 1/sigma factor is a constant and only the mean
    subtraction stays linear.
    """
    x = as_tensor(x)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    live = var >= VARIANCE_FLOOR
    sigma = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    xhat = xc / sigma
    parents = [x]
    y = xhat
    gd = None
    if gain is not None:
        gain = as_tensor(gain)
        gd = gain.data
        y = y * gd
        parents.append(gain)
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data
        parents.append(bias)
    sg, sb = (gain.shape if gain is not None else None), (bias.shape if bias is not None else None)

    def vjp(g, ctx):
        gy = g if gd is None else g * gd
        gy_mean = gy.mean(axis=-1, keepdims=True)
        if ctx.relevance:
            gx = (gy - gy_mean) / sigma
            return (gx,) + (None,) * (len(parents) - 1)
        proj = np.where(live, (gy * xhat).mean(axis=-1, keepdims=True), 0.0)
        gx = (gy - gy_mean - xhat * proj) / sigma
        out = [gx]
        if gain is not None:
            out.append(_unbroadcast(g * xhat, sg))
        if bias is not None:
            out.append(_unbroadcast(g, sb))
        return tuple(out)

    return Tensor._node(y, parents, vjp, "layer_norm", rule="detached-norm")


# ---------------------------------------------------------------------------
# structural ops (pure data movement; direct relevance passes through)
# ---------------------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape

    def vjp(g, ctx):
        return (g.reshape(src),)

    return Tensor._node(x.data.reshape(shape), (x,), vjp, "reshape", structural=True)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(a % x.ndim for a in axes)
    inv = tuple(np.argsort(axes))

    def vjp(g, ctx):
        return (g.transpose(inv),)

    return Tensor._node(x.data.transpose(axes), (x,), vjp, "transpose", structural=True)


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    basic = _is_basic_index(idx)

    def vjp(g, ctx):
        out = np.zeros(src, dtype=np.float64)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return Tensor._node(x.data[idx], (x,), vjp, "getitem", structural=True)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g, ctx):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._node(np.concatenate([t.data for t in ts], axis=axis), ts, vjp, "concat", structural=True)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]

    def vjp(g, ctx):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._node(np.stack([t.data for t in ts], axis=axis), ts, vjp, "stack", structural=True)


# ---------------------------------------------------------------------------
# reductions / broadcasting
# ---------------------------------------------------------------------------


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    if not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape).copy()


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    src = x.shape

    def vjp(g, ctx):
        return (_expand_reduced(g, src, axis, keepdims),)

    return Tensor._node(x.data.sum(axis=axis, keepdims=keepdims), (x,), vjp, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    out = x.data.mean(axis=axis, keepdims=keepdims)
    n = x.data.size // max(np.size(out), 1)

    def vjp(g, ctx):
        return (_expand_reduced(g, src, axis, keepdims) / n,)

    return Tensor._node(out, (x,), vjp, "mean")


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape

    def vjp(g, ctx):
        return (_unbroadcast(g, src),)

    return Tensor._node(np.broadcast_to(x.data, shape).copy(), (x,), vjp, "broadcast_to")


# ---------------------------------------------------------------------------
# losses (gradient mode only)
# ---------------------------------------------------------------------------


def _no_relevance(op: str):
    raise RuleError(f"{op} is a training loss and has no relevance rule")


def bce_with_logits(logits, targets, weights=None) -> Tensor:
    """Mean of ``weights * BCE(sigmoid(logits), targets)`` over all elements."""
    z = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    w = np.ones_like(z.data) if weights is None else np.broadcast_to(np.asarray(weights, dtype=np.float64), z.shape)
    zd = z.data
    softplus = np.maximum(zd, 0.0) + np.log1p(np.exp(-np.abs(zd)))
    n = zd.size
    loss = float((w * (softplus - t * zd)).sum() / n)

    def vjp(g, ctx):
        if ctx.relevance:
            _no_relevance("bce_with_logits")
        sig = np.where(zd >= 0, 1.0 / (1.0 + np.exp(-np.abs(zd))), 1.0 - 1.0 / (1.0 + np.exp(-np.abs(zd))))
        return (g * w * (sig - t) / n,)

    return Tensor._node(np.array(loss), (z,), vjp, "bce_with_logits")


def masked_mse(pred, target, mask) -> Tensor:
    """Mean squared error over elements where ``mask`` is nonzero (0 if none)."""
    p = as_tensor(pred)
    tgt = np.asarray(target, dtype=np.float64)
    m = np.broadcast_to(np.asarray(mask, dtype=np.float64), p.shape)
    count = float(m.sum())
    denom = max(count, 1.0)
    diff = p.data - tgt
    loss = float((m * diff * diff).sum() / denom)

    def vjp(g, ctx):
        if ctx.relevance:
            _no_relevance("masked_mse")
        return (g * 2.0 * m * diff / denom,)

    return Tensor._node(np.array(loss), (p,), vjp, "masked_mse")

"""Layer-wise relevance propagation on :class:`~eeglrp.model.LabramMini`.

Relevance runs through :func:`eeglrp.tensor.backward` in relevance mode;
each op applies its own rule (epsilon on linear maps, gamma on the conv
stem, w-square at the input conv, bilinear splits and a pluggable softmax
rule inside attention, identity on GELU, detached 1/sigma in layer norms).

The ``*_rule`` functions below are the same rules written as explicit array
formulas, for single layers, without the graph machinery.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .io import read_container, write_container
from .tensor import ReverseMode, Tensor

__all__ = [
    "RuleConfig",
    "AttributionResult",
    "epsilon_linear_rule",
    "gamma_conv_rule",
    "wsquare_input_rule",
    "attention_relevance",
    "select_logits",
    "attribute",
    "attribute_batch",
    "save_attribution",
    "load_attribution",
]

SOFTMAX_RULES = ("exact-jacobian-grad-input", "value-path-identity")
INPUT_RULES = ("wsquare", "epsilon")


@dataclass(frozen=True)
class RuleConfig:
    """Rule constants.

    ``epsilon`` stabilizes the conv-stem (gamma / epsilon) denominators.
    ``linear_epsilon`` does the same for Transformer linear layers; the
    default 0 is the epsilon-free modified-gradient form, in which those
    layers pass the plain gradient.
    ``bilinear_split`` is the share of a product's relevance given to its
    right factor (values in ``A @ V``, keys in ``Q @ K^T``).
    """

    epsilon: float = 1e-6
    gamma: float = 0.25
    input_rule: str = "wsquare"
    bilinear_split: float = 0.5
    softmax_rule: str = "exact-jacobian-grad-input"
    linear_epsilon: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0.0 < self.bilinear_split <= 1.0:
            raise ValueError("bilinear_split must lie in (0, 1]")
        if self.input_rule not in INPUT_RULES:
            raise ValueError(f"input_rule must be one of {INPUT_RULES}")
        if self.softmax_rule not in SOFTMAX_RULES:
            raise ValueError(f"softmax_rule must be one of {SOFTMAX_RULES}")
        if self.linear_epsilon < 0:
            raise ValueError("linear_epsilon must be nonnegative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# explicit single-layer rules
# ---------------------------------------------------------------------------


def _stab(z: np.ndarray, eps: float) -> np.ndarray:
    return z + eps * np.where(z >= 0, 1.0, -1.0)


def epsilon_linear_rule(x, W, b, R_out, eps: float = 1e-6) -> np.ndarray:
    """Epsilon-LRP through ``y = x @ W + b`` with ``W`` of shape (in, out).

    ``R_in[i] = x[i] * sum_j W[i, j] * R_out[j] / (y[j] + eps * sign(y[j]))``.
    A 1-D ``W`` is a single output unit.
    """
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    R_out = np.atleast_1d(np.asarray(R_out, dtype=np.float64))
    y = x @ W + (0.0 if b is None else np.asarray(b, dtype=np.float64))
    return x * (W @ (R_out / _stab(y, eps)))


def gamma_conv_rule(x, W, b, R_out, gamma: float = 0.25, eps: float = 1e-6, stride: int = 1) -> np.ndarray:
    """Gamma-LRP through a valid 1-D convolution, written as explicit loops.

    ``x`` has shape (ch_in, t), ``W`` (ch_out, ch_in, k), ``R_out``
    (ch_out, t_out). For an output ``y > 0`` every contribution
    ``x * w`` that is positive is scaled by ``1 + gamma`` (and a positive
    bias likewise), and the denominator is the sum of the scaled
    contributions; for ``y < 0`` the negative contributions are scaled. On
    nonnegative inputs with a positive output this is the familiar
    ``W + gamma * max(W, 0)``, ``b + gamma * max(b, 0)`` rule.
    """
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if W.ndim == 1:
        W = W[None, None]
    co, ci, k = W.shape
    R_out = np.asarray(R_out, dtype=np.float64).reshape(co, -1)
    t_out = R_out.shape[1]
    bias = np.zeros(co) if b is None else np.broadcast_to(np.asarray(b, dtype=np.float64), (co,))
    R_in = np.zeros_like(x)
    for o in range(co):
        for t in range(t_out):
            seg = x[:, t * stride : t * stride + k]
            contrib = seg * W[o]
            y = contrib.sum() + bias[o]
            if y == 0:
                continue
            boost = (contrib > 0) if y > 0 else (contrib < 0)
            scaled = contrib * np.where(boost, 1.0 + gamma, 1.0)
            b_boost = (bias[o] > 0) if y > 0 else (bias[o] < 0)
            z = scaled.sum() + bias[o] * (1.0 + gamma * b_boost)
            R_in[:, t * stride : t * stride + k] += scaled * R_out[o, t] / _stab(np.array(z), eps)
    return R_in


def wsquare_input_rule(W, b, R_out, t_in: int | None = None, stride: int = 1) -> np.ndarray:
    """W-square rule: relevance shared by squared weights, independent of the input.

    Dense ``W`` (in, out): ``R_in[i] = sum_j W[i,j]**2 / sum_i' W[i',j]**2 * R_out[j]``.
    Conv ``W`` (ch_out, ch_in, k) needs ``t_in``; ``R_out`` is (ch_out, t_out).
    A unit whose weights are all zero spreads its relevance uniformly. ``b``
    is accepted for signature symmetry and does not enter the shares.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    R_out = np.asarray(R_out, dtype=np.float64)
    if W.ndim == 2:
        w2 = W**2
        col = w2.sum(axis=0)
        shares = np.where(col > 0, w2 / np.where(col > 0, col, 1.0), 1.0 / W.shape[0])
        return shares @ np.atleast_1d(R_out)
    if t_in is None:
        raise ValueError("conv w-square rule needs t_in")
    co, ci, k = W.shape
    R_out = R_out.reshape(co, -1)
    R_in = np.zeros((ci, t_in))
    for o in range(co):
        w2 = W[o] ** 2
        tot = w2.sum()
        share = w2 / tot if tot > 0 else np.full_like(w2, 1.0 / w2.size)
        for t in range(R_out.shape[1]):
            R_in[:, t * stride : t * stride + k] += share * R_out[o, t]
    return R_in


def attention_relevance(q, k, v, R_out, rules: RuleConfig = RuleConfig(), eps: float = 0.0, scale: float | None = None):
    """Relevance through one attention head ``softmax(q k^T * scale) @ v``.

    Parameters
    ----------
    q, k, v : (n, d) arrays
    R_out : (n, d) relevance at the head output
    rules : RuleConfig
        ``bilinear_split`` and ``softmax_rule`` are used.
    eps : float
        Stabilizer of the bilinear denominators.

    Returns
    -------
    (R_q, R_k, R_v)
        Relevance of each input path.
    """
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    R_out = np.asarray(R_out, dtype=np.float64)
    scale = 1.0 / np.sqrt(q.shape[-1]) if scale is None else scale
    S = (q @ k.T) * scale
    A = np.exp(S - S.max(axis=-1, keepdims=True))
    A /= A.sum(axis=-1, keepdims=True)
    Z = A @ v
    ratio = R_out / _stab(Z, eps) if eps > 0 else R_out / np.where(Z == 0, 1.0, Z)
    value_only = rules.softmax_rule == "value-path-identity"
    s = 1.0 if value_only else rules.bilinear_split
    # contribution of (i, l, j) is A[i, l] * v[l, j]
    R_v = s * (A.T @ ratio) * v
    if value_only:
        return np.zeros_like(q), np.zeros_like(k), R_v
    R_A = (1.0 - s) * (ratio @ v.T) * A
    # exact-Jacobian gradient x input through the softmax
    g_A = R_A / np.where(A == 0, 1.0, A)
    g_S = A * (g_A - (g_A * A).sum(axis=-1, keepdims=True))
    R_S = S * g_S
    ratio_S = R_S / (_stab(S, eps) if eps > 0 else np.where(S == 0, 1.0, S))
    sk = rules.bilinear_split
    R_q = (1.0 - sk) * (ratio_S @ k) * q * scale
    R_k = sk * (ratio_S.T @ q) * k * scale
    return R_q, R_k, R_v


# ---------------------------------------------------------------------------
# attribution
# ---------------------------------------------------------------------------


@dataclass
class AttributionResult:
    """Relevance maps for the explained logits of one window.

    ``maps`` has shape (n_selected, n_channels, t_in).
    """

    window_id: int
    logit_indices: list[int]
    logit_values: list[float]
    predicted: list[int]
    targets: list[int | None]
    maps: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.logit_indices) != self.maps.shape[0]:
            raise ValueError("one relevance map per selected logit is required")


def select_logits(targets, k_pos: int, k_neg: int, rng: np.random.Generator) -> list[int]:
    """Balanced subsample of timestep indices: ``k_pos`` positives then ``k_neg`` negatives.

    A class with fewer members than requested contributes all of them.
    """
    targets = np.asarray(targets)
    if targets.size == 0:
        raise ValueError("empty target vector")
    pos = np.flatnonzero(targets == 1)
    neg = np.flatnonzero(targets == 0)
    take_pos = rng.choice(pos, size=min(k_pos, pos.size), replace=False) if pos.size else pos
    take_neg = rng.choice(neg, size=min(k_neg, neg.size), replace=False) if neg.size else neg
    return [int(i) for i in np.sort(take_pos)] + [int(i) for i in np.sort(take_neg)]


def attribute_batch(
    model,
    windows: np.ndarray,
    logit_indices: Sequence[Sequence[int]],
    rules: RuleConfig = RuleConfig(),
    targets: np.ndarray | None = None,
    window_ids: Sequence[int] | None = None,
) -> list[AttributionResult]:
    """Explain several windows at once; window ``b`` gets one map per entry of ``logit_indices[b]``.

    Windows do not interact in an eval-mode forward pass, so slot ``j`` of
    every window shares one relevance sweep.
    """
    windows = np.asarray(windows, dtype=np.float64)
    B = windows.shape[0]
    if len(logit_indices) != B:
        raise ValueError("need one index list per window")
    x = Tensor(windows)
    logits = model.forward(x)
    flat = logits.data.reshape(B, -1)
    t_out = flat.shape[1]
    for idx in logit_indices:
        for i in idx:
            if not 0 <= int(i) < t_out:
                raise ValueError(f"logit index {i} out of range for {t_out} logits")
    n_slots = max((len(i) for i in logit_indices), default=0)
    maps = np.zeros((B, n_slots, *windows.shape[1:]))
    for j in range(n_slots):
        seed = np.zeros((B, t_out))
        for b, idx in enumerate(logit_indices):
            if j < len(idx):
                seed[b, int(idx[j])] = 1.0
        rel = T.backward(
            logits,
            seed.reshape(logits.shape),
            mode=ReverseMode.RELEVANCE,
            rules=rules,
            inputs=[x],
            retain_graph=j < n_slots - 1,
        )
        maps[:, j] = rel[x]
    out = []
    for b, idx in enumerate(logit_indices):
        idx = [int(i) for i in idx]
        vals = [float(flat[b, i]) for i in idx]
        tg: list[int | None]
        if targets is None:
            tg = [None] * len(idx)
        else:
            tb = np.asarray(targets[b]).reshape(-1)
            tg = [int(tb[i]) if tb.size > 1 else int(tb[0]) for i in idx]
        out.append(
            AttributionResult(
                window_id=int(window_ids[b]) if window_ids is not None else b,
                logit_indices=idx,
                logit_values=vals,
                predicted=[int(v > 0) for v in vals],
                targets=tg,
                maps=maps[b, : len(idx)].copy(),
            )
        )
    return out


def attribute(
    model,
    window: np.ndarray,
    logit_indices: Sequence[int] = (0,),
    rules: RuleConfig = RuleConfig(),
    target=None,
    window_id: int = 0,
) -> AttributionResult:
    """Explain the selected logits of one (n_channels, t_in) window."""
    targets = None if target is None else np.asarray(target)[None]
    (res,) = attribute_batch(model, np.asarray(window)[None], [list(logit_indices)], rules, targets, [window_id])
    return res


def save_attribution(path: str | Path, result: AttributionResult) -> None:
    meta = {
        "window_id": result.window_id,
        "logit_indices": result.logit_indices,
        "logit_values": result.logit_values,
        "predicted": result.predicted,
        "targets": result.targets,
    }
    write_container(path, "attribution", meta, {"relevance": result.maps})


def load_attribution(path: str | Path) -> AttributionResult:
    meta, tensors = read_container(path, kind="attribution")
    return AttributionResult(maps=tensors["relevance"], **meta)

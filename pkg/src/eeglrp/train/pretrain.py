"""Masked patch reconstruction, used to produce backbones for the finetuned and frozen runs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..model import LabramMini, truncated_normal
from .optim import AdamWState, adamw_step, cosine_lr

__all__ = ["PretrainResult", "mask_tokens", "masked_pretrain"]


@dataclass
class PretrainResult:
    model: LabramMini = field(repr=False)
    losses: list[float]
    initial_loss: float
    final_loss: float
    mask_fraction: float
    seed: int


def mask_tokens(n_windows: int, n_tokens: int, mask_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean (n_windows, n_tokens) mask with ``round(mask_fraction * n_tokens)`` entries set per row."""
    k = int(round(mask_fraction * n_tokens))
    mask = np.zeros((n_windows, n_tokens), dtype=bool)
    if k == 0:
        return mask
    order = np.argsort(rng.random((n_windows, n_tokens)), axis=1)[:, :k]
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def _reconstruction_loss(model: LabramMini, decoder, windows: np.ndarray, mask: np.ndarray, rng=None) -> T.Tensor:
    cfg = model.config
    patches = model.patchify(windows)
    target = patches.data.reshape(len(windows), -1, cfg.patch_len)
    tokens = model.conv_stem(patches)
    m = mask[..., None].astype(np.float64)
    tokens = tokens * (1.0 - m) + model.params["mask_token"] * m
    x = model.encoder_forward(model.add_cls_and_encodings(tokens), train=rng is not None, rng=rng)
    x = model._norm(x, "norm")[..., 1:, :]
    pred = T.linear(x, decoder[0], decoder[1])
    return T.masked_mse(pred, target, m)


def _eval_loss(model, decoder, windows, masks, batch_size) -> float:
    total = 0.0
    for lo in range(0, len(windows), batch_size):
        sl = slice(lo, lo + batch_size)
        total += float(_reconstruction_loss(model, decoder, windows[sl], masks[sl]).data) * len(windows[sl])
    return total / len(windows)


def masked_pretrain(
    model: LabramMini,
    windows: np.ndarray,
    mask_fraction: float = 0.5,
    epochs: int = 20,
    learning_rate: float = 1e-3,
    batch_size: int = 32,
    weight_decay: float = 0.05,
    seed: int = 0,
    log=None,
) -> PretrainResult:
    """Train the backbone of ``model`` in place to reconstruct masked raw patches.

    A random subset of patch tokens per window has its embedding replaced
    by the learned ``mask_token``; a temporary linear decoder maps each
    final token back to ``patch_len`` samples and the loss is the mean
    squared error over masked patches only. The decoder is discarded and
    head parameters are left untouched.

    Returns
    -------
    PretrainResult
        The same model object, the per-epoch mean training loss, and the
        eval-mode loss on one fixed set of masks before and after training.
    """
    if not 0.0 < mask_fraction < 1.0:
        raise ValueError(f"mask_fraction must lie in (0, 1), got {mask_fraction}")
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or len(windows) == 0:
        raise ValueError("windows must be a nonempty (n, channels, samples) stack")
    cfg = model.config
    rng = np.random.default_rng(seed)
    decoder = (
        T.Tensor(truncated_normal(rng, (cfg.embed_dim, cfg.patch_len)), requires_grad=True),
        T.Tensor(np.zeros(cfg.patch_len), requires_grad=True),
    )
    names = model.backbone_names()
    leaves = [model.params[n] for n in names] + list(decoder)
    keys = names + ["decoder.weight", "decoder.bias"]
    state = AdamWState()
    n_tokens = cfg.n_channels * (windows.shape[-1] // cfg.patch_len)
    eval_masks = mask_tokens(len(windows), n_tokens, mask_fraction, np.random.default_rng([seed, 1]))
    initial = _eval_loss(model, decoder, windows, eval_masks, batch_size)
    losses = []
    for epoch in range(epochs):
        lr = cosine_lr(epoch, learning_rate, epochs)
        total = 0.0
        order = rng.permutation(len(windows))
        for lo in range(0, len(windows), batch_size):
            idx = order[lo : lo + batch_size]
            mask = mask_tokens(len(idx), n_tokens, mask_fraction, rng)
            loss = _reconstruction_loss(model, decoder, windows[idx], mask, rng)
            grads = T.backward(loss, inputs=leaves)
            adamw_step(
                {k: t.data for k, t in zip(keys, leaves)},
                {k: grads[t] for k, t in zip(keys, leaves)},
                state,
                lr,
                weight_decay,
            )
            total += float(loss.data) * len(idx)
        losses.append(total / len(windows))
        if log is not None:
            log({"epoch": epoch, "lr": lr, "loss": losses[-1]})
    final = _eval_loss(model, decoder, windows, eval_masks, batch_size)
    return PretrainResult(model, losses, initial, final, mask_fraction, seed)

"""Label-smoothed, class-weighted binary cross-entropy."""
from __future__ import annotations

import numpy as np

from .. import tensor as T

__all__ = ["smooth_targets", "smoothed_weighted_ce"]


def smooth_targets(labels, smoothing: float = 0.1) -> np.ndarray:
    """True class gets ``1 - s/2``, the other ``s/2``."""
    y = np.asarray(labels, dtype=np.float64)
    return y * (1.0 - smoothing) + 0.5 * smoothing


def smoothed_weighted_ce(logits, labels, smoothing: float = 0.1, pos_weight: float | None = None) -> T.Tensor:
    """Mean binary cross-entropy against smoothed targets.

    Elements whose label is 1 have their loss multiplied by ``pos_weight``.
    """
    y = np.asarray(labels, dtype=np.float64)
    weights = None
    if pos_weight is not None:
        weights = np.where(y == 1, float(pos_weight), 1.0)
    return T.bce_with_logits(logits, smooth_targets(y, smoothing), weights)

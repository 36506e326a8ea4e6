"""Classification metrics and their bootstrap spread."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

__all__ = ["UndefinedMetricError", "auroc", "balanced_accuracy", "f1_score", "accuracy", "metrics", "bootstrap_sd"]


class UndefinedMetricError(ValueError):
    pass


def _flat(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).astype(int).reshape(-1)
    if s.size == 0 or s.size != y.size:
        raise ValueError("scores and labels must be nonempty and of equal size")
    return s, y


def auroc(scores, labels) -> float:
    """Mann-Whitney statistic with midranks for ties."""
    s, y = _flat(scores, labels)
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError("AUROC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def balanced_accuracy(scores, labels) -> float:
    """Mean recall over the classes present; predictions are ``score > 0``."""
    s, y = _flat(scores, labels)
    pred = s > 0
    recalls = [np.mean(pred[y == c] == bool(c)) for c in (0, 1) if np.any(y == c)]
    return float(np.mean(recalls))


def f1_score(scores, labels) -> float:
    s, y = _flat(scores, labels)
    pred = s > 0
    tp = np.sum(pred & (y == 1))
    denom = 2 * tp + np.sum(pred & (y == 0)) + np.sum(~pred & (y == 1))
    return float(2 * tp / denom) if denom else 0.0


def accuracy(scores, labels) -> float:
    s, y = _flat(scores, labels)
    return float(np.mean((s > 0) == (y == 1)))


def metrics(scores, labels) -> dict[str, float]:
    """AUROC (nan when only one class is present), balanced accuracy and F1."""
    try:
        a = auroc(scores, labels)
    except UndefinedMetricError:
        a = float("nan")
    return {"auroc": a, "balanced_accuracy": balanced_accuracy(scores, labels), "f1": f1_score(scores, labels)}


def bootstrap_sd(scores, labels, n_boot: int = 1000, seed: int = 0) -> dict[str, tuple[float, float]]:
    """``{metric: (mean, sd)}`` over ``n_boot`` resamples with replacement.

    Resamples holding a single class are skipped for AUROC only.
    """
    s, y = _flat(scores, labels)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, s.size, size=(n_boot, s.size))
    ys, pred = y[idx] == 1, s[idx] > 0
    tp = np.sum(pred & ys, axis=1)
    fp = np.sum(pred & ~ys, axis=1)
    fn = np.sum(~pred & ys, axis=1)
    tn = np.sum(~pred & ~ys, axis=1)
    npos, nneg = tp + fn, tn + fp
    with np.errstate(invalid="ignore", divide="ignore"):
        rec_pos = np.where(npos > 0, tp / np.maximum(npos, 1), np.nan)
        rec_neg = np.where(nneg > 0, tn / np.maximum(nneg, 1), np.nan)
        bac = np.nanmean(np.stack([rec_pos, rec_neg]), axis=0)
        denom = 2 * tp + fp + fn
        f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    acc = (tp + tn) / s.size
    aucs = []
    for row in idx:
        yy = y[row]
        n1 = yy.sum()
        if 0 < n1 < yy.size:
            r = rankdata(s[row])
            aucs.append((r[yy == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * (yy.size - n1)))
    aucs = np.array(aucs) if aucs else np.array([np.nan])

    def summary(v):
        return float(np.mean(v)), float(np.std(v, ddof=1)) if v.size > 1 else 0.0

    return {"auroc": summary(aucs), "balanced_accuracy": summary(bac), "f1": summary(f1), "accuracy": summary(acc)}

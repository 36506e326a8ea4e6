"""Common spatial patterns with Fisher LDA, the classical two-class baseline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "CspModel",
    "LdaModel",
    "fit_csp",
    "csp_features",
    "fit_lda",
    "predict",
    "grid_search_components",
    "balanced_accuracy",
    "VARIANCE_FLOOR",
]

VARIANCE_FLOOR = 1e-12
RIDGE = 1e-8


@dataclass(frozen=True)
class CspModel:
    """``filters`` is (n_components, n_channels), most discriminative first."""

    filters: np.ndarray
    eigenvalues: np.ndarray
    n_components: int


@dataclass(frozen=True)
class LdaModel:
    weights: np.ndarray
    bias: float


def _two_classes(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels).astype(int)
    if set(np.unique(labels)) != {0, 1}:
        raise ValueError("need both classes 0 and 1")
    return labels


def class_covariances(windows: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Mean trace-normalized spatial covariance per class."""
    labels = _two_classes(labels)
    x = np.asarray(windows, dtype=np.float64)
    x = x - x.mean(axis=-1, keepdims=True)
    cov = np.einsum("nct,ndt->ncd", x, x)
    tr = np.trace(cov, axis1=1, axis2=2)
    cov = cov / np.maximum(tr, VARIANCE_FLOOR)[:, None, None]
    return cov[labels == 0].mean(axis=0), cov[labels == 1].mean(axis=0)


def fit_csp(windows: np.ndarray, labels, n_components: int) -> CspModel:
    """Solve ``S1 w = lam (S1 + S2) w`` by whitening the composite covariance.

    Eigenvalues lie in [0, 1]; filters are taken alternately from the top
    and bottom of the spectrum. The composite gets a ridge of
    ``1e-8 * trace / n_channels``.
    """
    s0, s1 = class_covariances(windows, labels)
    n_ch = s0.shape[0]
    if n_components % 2 or not 0 < n_components <= n_ch:
        raise ValueError(f"n_components must be even and in [2, {n_ch}], got {n_components}")
    comp = s0 + s1
    ridge = RIDGE * np.trace(comp) / n_ch
    d, u = np.linalg.eigh(comp)
    if d.min() <= ridge:
        d, u = np.linalg.eigh(comp + ridge * np.eye(n_ch))
    whiten = u / np.sqrt(d)  # columns scaled: whiten.T @ comp @ whiten = I
    lam, v = np.linalg.eigh(whiten.T @ s1 @ whiten)
    filters_all = (whiten @ v).T  # row i: filter for lam[i], ascending
    order = []
    lo, hi = 0, n_ch - 1
    while len(order) < n_components:
        order.append(hi)
        order.append(lo)
        hi, lo = hi - 1, lo + 1
    return CspModel(filters_all[order], lam[order], n_components)


def csp_features(model: CspModel, windows: np.ndarray) -> np.ndarray:
    """Log of each component's variance divided by the summed component variance."""
    x = np.asarray(windows, dtype=np.float64)
    z = np.einsum("kc,nct->nkt", model.filters, x)
    var = np.maximum(z.var(axis=-1), VARIANCE_FLOOR)
    return np.log(var / var.sum(axis=-1, keepdims=True))


def fit_lda(features: np.ndarray, labels) -> LdaModel:
    """Fisher discriminant ``w = Sw^-1 (mu1 - mu0)``, bias at the midpoint of the projected means."""
    labels = _two_classes(labels)
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    m0, m1 = f[labels == 0].mean(axis=0), f[labels == 1].mean(axis=0)
    c0, c1 = f[labels == 0] - m0, f[labels == 1] - m1
    sw = c0.T @ c0 + c1.T @ c1
    d = sw.shape[0]
    sw = sw + (RIDGE * np.trace(sw) / d + 1e-300) * np.eye(d)
    w = np.linalg.solve(sw, m1 - m0)
    b = -0.5 * float(w @ (m0 + m1))
    return LdaModel(w, b)


def predict(model: LdaModel, features: np.ndarray) -> np.ndarray:
    """Signed distances to the decision hyperplane (positive means class 1)."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    norm = float(np.linalg.norm(model.weights)) or 1.0
    return (f @ model.weights + model.bias) / norm


def balanced_accuracy(scores, labels) -> float:
    labels = np.asarray(labels).astype(int)
    pred = (np.asarray(scores) > 0).astype(int)
    recalls = [np.mean(pred[labels == c] == c) for c in (0, 1) if np.any(labels == c)]
    return float(np.mean(recalls))


def fit_csp_lda(windows, labels, n_components: int) -> tuple[CspModel, LdaModel]:
    csp = fit_csp(windows, labels, n_components)
    return csp, fit_lda(csp_features(csp, windows), labels)


def grid_search_components(train: tuple, val: tuple, candidates: Sequence[int]) -> int:
    """Component count with the best validation balanced accuracy; ties go to the smaller count.

    ``train`` and ``val`` are ``(windows, labels)`` pairs.
    """
    if len(candidates) == 0:
        raise ValueError("no candidate component counts")
    best, best_bac = None, -np.inf
    for k in sorted(candidates):
        csp, lda = fit_csp_lda(train[0], train[1], k)
        bac = balanced_accuracy(predict(lda, csp_features(csp, val[0])), val[1])
        if bac > best_bac:
            best, best_bac = k, bac
    return int(best)

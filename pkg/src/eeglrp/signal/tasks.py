"""Targets, windowing and subject splits for the three task families."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .recording import Recording

__all__ = [
    "WindowedDataset",
    "make_rpeak_target",
    "median_binarize",
    "rolling_windows",
    "epoch_windows",
    "split_subjects",
    "assign_splits",
    "RPEAK_WINDOW_S",
]

RPEAK_WINDOW_S = 0.020


@dataclass
class WindowedDataset:
    """Fixed-length windows with window- or timestep-level binary labels.

    ``labels`` is (n,) for classification or (n, t_in) for segmentation.
    ``subjects`` and ``splits`` are per-window string arrays.
    """

    windows: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    sample_rate: float
    channel_names: tuple[str, ...]
    splits: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subjects = np.asarray(self.subjects, dtype=str)
        n = len(self.windows)
        if self.windows.ndim != 3:
            raise ValueError("windows must be (n_windows, n_channels, t_in)")
        if len(self.labels) != n or len(self.subjects) != n:
            raise ValueError("labels and subjects need one entry per window")
        if self.labels.ndim == 2 and self.labels.shape[1] != self.windows.shape[2]:
            raise ValueError("per-timestep labels must have t_in columns")
        if self.splits is None:
            self.splits = np.full(n, "train")
        self.splits = np.asarray(self.splits, dtype=str)

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def t_in(self) -> int:
        return self.windows.shape[2]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[1]

    @property
    def segmentation(self) -> bool:
        return self.labels.ndim == 2

    def select(self, mask: np.ndarray) -> "WindowedDataset":
        return WindowedDataset(
            self.windows[mask],
            self.labels[mask],
            self.subjects[mask],
            self.sample_rate,
            self.channel_names,
            self.splits[mask],
            dict(self.extra),
        )

    def split(self, name: str) -> "WindowedDataset":
        return self.select(self.splits == name)

    def with_subjects(self, subjects: Sequence[str]) -> "WindowedDataset":
        return self.select(np.isin(self.subjects, list(subjects)))

    @classmethod
    def concat(cls, parts: Sequence["WindowedDataset"]) -> "WindowedDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        first = parts[0]
        return cls(
            np.concatenate([p.windows for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.subjects for p in parts]),
            first.sample_rate,
            first.channel_names,
            np.concatenate([p.splits for p in parts]),
            dict(first.extra),
        )


def make_rpeak_target(rec: Recording, peaks: Sequence[int] | None = None) -> np.ndarray:
    """Per-sample 0/1 target with a 20 ms block around every R-peak.

    The block is ``w = round(0.020 * rate)`` samples covering
    ``[peak - w // 2, peak - w // 2 + w)``; overlapping blocks merge. With
    ``peaks=None`` the recording's ``"R"`` events are used.
    """
    if peaks is None:
        peaks = rec.event_indices("R")
    peaks = np.asarray(peaks, dtype=int)
    target = np.zeros(rec.n_samples, dtype=np.int64)
    width = int(round(RPEAK_WINDOW_S * rec.sample_rate))
    for p in peaks:
        lo = max(p - width // 2, 0)
        target[lo : min(p - width // 2 + width, rec.n_samples)] = 1
    return target


def median_binarize(series) -> np.ndarray:
    """1 where the value strictly exceeds the series median, else 0."""
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise ValueError("cannot binarize an empty series")
    return (series > np.median(series)).astype(np.int64)


def rolling_windows(
    rec: Recording,
    window_s: float = 4.0,
    stride_s: float = 1.0,
    per_sample_target: np.ndarray | None = None,
) -> WindowedDataset:
    """Windows every ``stride_s`` seconds.

    Labels: ``per_sample_target`` sliced per window (segmentation), else the
    median-binarized 1 Hz target at the last whole second the window covers.
    A recording shorter than one window yields an empty dataset and a warning.
    """
    fs = rec.sample_rate
    w, s = int(round(window_s * fs)), int(round(stride_s * fs))
    n = (rec.n_samples - w) // s + 1 if rec.n_samples >= w else 0
    starts = np.arange(n) * s
    if n == 0:
        warnings.warn(f"recording of {rec.duration:.2f} s is shorter than one {window_s} s window", stacklevel=2)
        shape_lab = (0, w) if per_sample_target is not None else (0,)
        return WindowedDataset(np.zeros((0, rec.n_channels, w)), np.zeros(shape_lab), np.zeros(0, dtype=str), fs, rec.montage.names)
    windows = np.stack([rec.data[:, a : a + w] for a in starts])
    if per_sample_target is not None:
        labels = np.stack([np.asarray(per_sample_target)[a : a + w] for a in starts])
    elif rec.continuous_target is not None:
        binary = median_binarize(rec.continuous_target)
        last = np.minimum((starts + w) // int(round(fs)) - 1, len(binary) - 1)
        labels = binary[last]
    else:
        raise ValueError("rolling windows need a per-sample target or a continuous 1 Hz target")
    return WindowedDataset(windows, labels, np.full(n, rec.subject), fs, rec.montage.names)


def epoch_windows(rec: Recording, classes: Sequence[str], window_s: float = 4.0) -> WindowedDataset:
    """One window starting at each event whose label is in ``classes``; label = class position."""
    fs = rec.sample_rate
    w = int(round(window_s * fs))
    wins, labs = [], []
    for i, lab in rec.events:
        if lab in classes and i + w <= rec.n_samples:
            wins.append(rec.data[:, i : i + w])
            labs.append(list(classes).index(lab))
    windows = np.stack(wins) if wins else np.zeros((0, rec.n_channels, w))
    return WindowedDataset(windows, np.array(labs, dtype=np.int64), np.full(len(wins), rec.subject), fs, rec.montage.names)


def split_subjects(subjects: Sequence[str], seed: int, ratios=(0.8, 0.1, 0.1)) -> dict[str, str]:
    """Seeded subject-level split; val and test sizes are ``round(ratio * n)`` with at least one subject each when n >= 3."""
    subs = sorted(set(subjects))
    n = len(subs)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(round(ratios[1] * n))
    n_test = int(round(ratios[2] * n))
    if n >= 3:
        n_val, n_test = max(n_val, 1), max(n_test, 1)
    out = {}
    for rank, idx in enumerate(order):
        if rank < n_test:
            out[subs[idx]] = "test"
        elif rank < n_test + n_val:
            out[subs[idx]] = "val"
        else:
            out[subs[idx]] = "train"
    return out


def assign_splits(ds: WindowedDataset, mapping: dict[str, str]) -> WindowedDataset:
    ds.splits = np.array([mapping[s] for s in ds.subjects], dtype=str)
    return ds

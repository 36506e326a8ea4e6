"""Synthetic task datasets: recordings per subject -> labelled, split windows."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .signal.filters import preprocess
from .signal.recording import DEFAULT_CHANNELS, Montage, Recording
from .signal.synth import synth_affect, synth_cfa, synth_shortcut
from .signal.tasks import WindowedDataset, assign_splits, epoch_windows, make_rpeak_target, rolling_windows, split_subjects

__all__ = ["TASKS", "DatasetSpec", "make_recordings", "build_dataset", "recordings_to_dataset", "SHORTCUT_CLASSES"]

TASKS = ("rpeak", "shortcut_lr", "affect")
SHORTCUT_CLASSES = ("left", "right")


@dataclass(frozen=True)
class DatasetSpec:
    """Parameters of a synthetic task.

    ``planted_channels`` names the electrodes carrying the planted effect:
    the heartbeat channel for ``rpeak``, the two frontal drift sets (class
    ``left`` first) for ``shortcut_lr``, and the 10 Hz drivers for ``affect``.
    Windows are multiplied by ``input_scale`` (microvolts to model units).
    """

    task: str = "rpeak"
    seed: int = 0
    n_subjects: int = 10
    duration_s: float = 60.0
    n_trials: int = 40
    channel_names: tuple[str, ...] = DEFAULT_CHANNELS
    planted_channels: tuple = ("Iz",)
    mean_hr_bpm: float = 60.0
    shortcut_snr: float = 4.0
    genuine_snr: float = 0.0
    genuine_channels: tuple[str, str] = ("C3", "C4")
    sample_rate: float = 200.0
    preprocess: bool = False
    window_s: float = 4.0
    stride_s: float = 1.0
    input_scale: float = 0.01
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        planted = self.planted_channels
        if self.task == "shortcut_lr":
            if len(planted) != 2 or any(isinstance(p, str) for p in planted):
                raise ValueError("shortcut_lr needs two channel lists in planted_channels")
            planted = tuple(tuple(p) for p in planted)
        else:
            planted = tuple(planted)
        object.__setattr__(self, "planted_channels", planted)
        montage = Montage.standard(self.channel_names)
        for name in self.all_planted() + list(self.genuine_channels):
            if name not in montage.names:
                raise ValueError(f"channel {name!r} is not in the montage {list(montage.names)}")
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be positive")

    def all_planted(self) -> list[str]:
        if self.task == "shortcut_lr":
            return [c for group in self.planted_channels for c in group]
        return list(self.planted_channels)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DatasetSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown dataset keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("channel_names", "genuine_channels", "split_ratios"):
            if k in d:
                d[k] = tuple(d[k])
        if "planted_channels" in d:
            d["planted_channels"] = tuple(tuple(p) if isinstance(p, (list, tuple)) else p for p in d["planted_channels"])
        return cls(**d)


def _subject(i: int) -> str:
    return f"S{i:02d}"


def make_recordings(spec: DatasetSpec) -> list[Recording]:
    recs = []
    n_ch = len(spec.channel_names)
    for i in range(spec.n_subjects):
        seed = spec.seed * 1000 + i
        common = dict(n_channels=n_ch, sample_rate=spec.sample_rate, channel_names=spec.channel_names, subject=_subject(i))
        if spec.task == "rpeak":
            rec = synth_cfa(seed, duration_s=spec.duration_s, planted_channel=spec.planted_channels[0], mean_hr_bpm=spec.mean_hr_bpm, **common)
        elif spec.task == "shortcut_lr":
            rec = synth_shortcut(
                seed,
                drift_channels=spec.planted_channels,
                n_trials=spec.n_trials,
                shortcut_snr=spec.shortcut_snr,
                genuine_snr=spec.genuine_snr,
                genuine_channels=spec.genuine_channels,
                trial_s=spec.window_s,
                **common,
            )
        else:
            rec = synth_affect(seed, duration_s=spec.duration_s, driver_channels=spec.planted_channels, **common)
        recs.append(rec)
    return recs


def recordings_to_dataset(recs: list[Recording], spec: DatasetSpec) -> WindowedDataset:
    """Window every recording, scale inputs, and attach the seeded subject split."""
    parts = []
    for rec in recs:
        if spec.preprocess:
            rec = preprocess(rec)
        if spec.task == "rpeak":
            ds = rolling_windows(rec, spec.window_s, spec.stride_s, per_sample_target=make_rpeak_target(rec))
        elif spec.task == "shortcut_lr":
            ds = epoch_windows(rec, SHORTCUT_CLASSES, spec.window_s)
        else:
            ds = rolling_windows(rec, spec.window_s, spec.stride_s)
        parts.append(ds)
    ds = WindowedDataset.concat(parts)
    ds.windows *= spec.input_scale
    ds.extra["task"] = spec.task
    mapping = split_subjects([r.subject for r in recs], spec.seed, spec.split_ratios)
    return assign_splits(ds, mapping)


def build_dataset(spec: DatasetSpec) -> WindowedDataset:
    return recordings_to_dataset(make_recordings(spec), spec)

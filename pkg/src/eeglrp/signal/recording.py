"""Recordings, montages and their on-disk container."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..io import read_container, write_container

__all__ = ["Montage", "Recording", "STANDARD_POSITIONS", "DEFAULT_CHANNELS", "save_recording", "load_recording"]

# (polar angle from Cz in degrees, azimuth in degrees clockwise from the nose)
_SPHERICAL = {
    "Fp1": (90, -18), "Fpz": (90, 0), "Fp2": (90, 18),
    "AF3": (74, -25), "AF4": (74, 25),
    "F7": (90, -54), "F3": (60, -40), "Fz": (45, 0), "F4": (60, 40), "F8": (90, 54),
    "FC5": (68, -70), "FC1": (32, -45), "FC2": (32, 45), "FC6": (68, 70),
    "T7": (90, -90), "C3": (45, -90), "Cz": (0, 0), "C4": (45, 90), "T8": (90, 90),
    "CP5": (68, -110), "CP1": (32, -135), "CP2": (32, 135), "CP6": (68, 110),
    "P7": (90, -126), "P3": (60, -140), "Pz": (45, 180), "P4": (60, 140), "P8": (90, 126),
    "PO3": (74, -155), "PO4": (74, 155),
    "O1": (90, -162), "Oz": (90, 180), "O2": (90, 162),
    "Iz": (108, 180),
}

# azimuthal equidistant projection; the Fp-T-O ring lands at radius 0.8
_RING = 0.8
STANDARD_POSITIONS: dict[str, tuple[float, float]] = {
    name: (
        _RING * pol / 90.0 * float(np.sin(np.deg2rad(az))),
        _RING * pol / 90.0 * float(np.cos(np.deg2rad(az))),
    )
    for name, (pol, az) in _SPHERICAL.items()
}
DEFAULT_CHANNELS = ("Fp1", "Fp2", "C3", "Cz", "C4", "Pz", "Oz", "Iz")


@dataclass(frozen=True)
class Montage:
    """Ordered electrode names with 2-D scalp coordinates (unit head circle, nose at +y)."""

    names: tuple[str, ...]
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        coords = np.asarray(self.coords, dtype=np.float64).reshape(len(self.names), 2)
        object.__setattr__(self, "coords", coords)
        if len(set(self.names)) != len(self.names):
            raise ValueError("electrode names must be unique")
        if np.any(np.hypot(coords[:, 0], coords[:, 1]) > 1.0):
            raise ValueError("electrode coordinates must lie within the unit disc")

    @classmethod
    def standard(cls, names: Sequence[str] = DEFAULT_CHANNELS) -> "Montage":
        missing = [n for n in names if n not in STANDARD_POSITIONS]
        if missing:
            raise ValueError(f"unknown electrode(s): {', '.join(missing)}")
        return cls(tuple(names), np.array([STANDARD_POSITIONS[n] for n in names]))

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"electrode {name!r} is not in the montage") from None

    def indices(self, names: Sequence[str]) -> list[int]:
        return [self.index(n) for n in names]

    def __eq__(self, other):
        return isinstance(other, Montage) and self.names == other.names and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.names)


@dataclass
class Recording:
    """Multi-channel EEG in microvolts.

    ``events`` holds ``(sample_index, label)`` pairs; ``continuous_target``
    is an optional 1 Hz series of length ``n_samples // sample_rate``.
    """

    data: np.ndarray
    sample_rate: float
    montage: Montage
    events: list[tuple[int, str]] = field(default_factory=list)
    continuous_target: np.ndarray | None = None
    target_name: str | None = None
    subject: str = "S00"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("recording data must be (n_channels, n_samples)")
        if self.data.shape[0] != len(self.montage):
            raise ValueError(f"{self.data.shape[0]} channels but montage has {len(self.montage)}")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        self.events = [(int(i), str(lab)) for i, lab in self.events]
        for i, _ in self.events:
            if not 0 <= i < self.n_samples:
                raise ValueError(f"event index {i} outside recording of {self.n_samples} samples")
        if self.continuous_target is not None:
            self.continuous_target = np.asarray(self.continuous_target, dtype=np.float64)
            expected = int(self.n_samples // self.sample_rate)
            if self.continuous_target.shape != (expected,):
                raise ValueError(f"continuous target needs {expected} 1 Hz steps, got {self.continuous_target.shape}")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def replace(self, **changes) -> "Recording":
        return dataclasses.replace(self, **changes)

    def event_indices(self, label: str | None = None) -> np.ndarray:
        return np.array([i for i, lab in self.events if label is None or lab == label], dtype=int)


def save_recording(path: str | Path, rec: Recording) -> None:
    """Header carries names, rate, coordinates, events and target; samples are stored as float32."""
    meta = {
        "names": list(rec.montage.names),
        "coords": rec.montage.coords.tolist(),
        "sample_rate": rec.sample_rate,
        "events": [[i, lab] for i, lab in rec.events],
        "continuous_target": None if rec.continuous_target is None else rec.continuous_target.tolist(),
        "target_name": rec.target_name,
        "subject": rec.subject,
    }
    write_container(path, "recording", meta, {"data": rec.data}, dtype="<f4")


def load_recording(path: str | Path) -> Recording:
    meta, tensors = read_container(path, kind="recording")
    target = meta["continuous_target"]
    return Recording(
        data=tensors["data"],
        sample_rate=meta["sample_rate"],
        montage=Montage(tuple(meta["names"]), np.array(meta["coords"])),
        events=[(int(i), lab) for i, lab in meta["events"]],
        continuous_target=None if target is None else np.array(target),
        target_name=meta["target_name"],
        subject=meta["subject"],
    )

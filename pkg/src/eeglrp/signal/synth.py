"""Synthetic EEG with planted ground-truth effects."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .recording import DEFAULT_CHANNELS, Montage, Recording

__all__ = ["pink_noise", "rwave_template", "synth_cfa", "synth_shortcut", "synth_affect", "band_envelope"]


def pink_noise(rng: np.random.Generator, n_channels: int, n_samples: int) -> np.ndarray:
    """Unit-variance noise with a 1/f power spectrum, per channel."""
    spec = rng.standard_normal((n_channels, n_samples // 2 + 1)) + 1j * rng.standard_normal((n_channels, n_samples // 2 + 1))
    f = np.arange(n_samples // 2 + 1, dtype=np.float64)
    f[0] = 1.0
    spec /= np.sqrt(f)
    spec[:, 0] = 0.0
    x = np.fft.irfft(spec, n=n_samples, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


def rwave_template(sample_rate: float) -> tuple[np.ndarray, int]:
    """Q-R-S shaped spike with unit R amplitude; returns (template, index of the R peak)."""
    half = int(round(0.06 * sample_rate))
    t = (np.arange(2 * half + 1) - half) / sample_rate
    sd = 0.008
    tmpl = np.exp(-0.5 * (t / sd) ** 2) - 0.2 * np.exp(-0.5 * ((t + 0.025) / sd) ** 2) - 0.3 * np.exp(-0.5 * ((t - 0.025) / sd) ** 2)
    return tmpl / tmpl[half], half


def _montage(n_channels: int, names: Sequence[str] | None) -> Montage:
    if names is None:
        if n_channels != len(DEFAULT_CHANNELS):
            raise ValueError(f"give channel names for a {n_channels}-channel montage")
        names = DEFAULT_CHANNELS
    if len(names) != n_channels:
        raise ValueError("channel name count does not match n_channels")
    return Montage.standard(names)


def synth_cfa(
    seed: int,
    n_channels: int = 8,
    duration_s: float = 60.0,
    planted_channel: str = "Iz",
    mean_hr_bpm: float = 60.0,
    sample_rate: float = 200.0,
    channel_names: Sequence[str] | None = None,
    noise_uv: float = 10.0,
    peak_uv: float = 100.0,
    leak: tuple[float, float] = (0.0, 0.08),
    jitter: float = 0.08,
    subject: str = "S00",
) -> Recording:
    """Pink-noise EEG with a heartbeat artifact planted on one channel.

    Beats are spaced ``60 / mean_hr_bpm`` s apart with Gaussian jitter of
    relative sd ``jitter``. The planted channel carries the R-wave with
    amplitude ``peak_uv``; every other channel carries it scaled by a
    per-channel factor drawn from ``leak``. R-peak samples are returned as
    ``"R"`` events.
    """
    montage = _montage(n_channels, channel_names)
    planted = montage.index(planted_channel)
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    data = noise_uv * pink_noise(rng, n_channels, n)
    tmpl, center = rwave_template(sample_rate)
    period = 60.0 / mean_hr_bpm
    gains = rng.uniform(*leak, size=n_channels)
    gains[planted] = 1.0
    peaks = []
    t = rng.uniform(0.3, 1.0) * period
    while t < duration_s - 0.1:
        peaks.append(int(round(t * sample_rate)))
        t += period * max(1.0 + jitter * rng.standard_normal(), 0.3)
    wave = np.zeros(n)
    for p in peaks:
        lo, hi = p - center, p - center + len(tmpl)
        a, b = max(lo, 0), min(hi, n)
        wave[a:b] += tmpl[a - lo : b - lo]
    data += peak_uv * gains[:, None] * wave[None, :]
    return Recording(data, sample_rate, montage, events=[(p, "R") for p in peaks], subject=subject)


def synth_shortcut(
    seed: int,
    n_channels: int = 8,
    drift_channels: tuple[Sequence[str], Sequence[str]] = (("Fp1",), ("Fp2",)),
    n_trials: int = 40,
    shortcut_snr: float = 4.0,
    genuine_snr: float = 0.0,
    genuine_channels: tuple[str, str] = ("C3", "C4"),
    trial_s: float = 4.0,
    gap_s: float = 1.0,
    sample_rate: float = 200.0,
    channel_names: Sequence[str] | None = None,
    noise_uv: float = 10.0,
    subject: str = "S00",
) -> Recording:
    """Two-class trials with a planted frontal shortcut and an optional genuine signal.

    Trial ``k`` of class ``c`` (``"left"`` = 0, ``"right"`` = 1) gets a slow
    (1-3 Hz) drift of amplitude ``shortcut_snr * noise_uv`` on the channels
    in ``drift_channels[c]``, and a 10 Hz oscillation of amplitude
    ``genuine_snr * noise_uv`` on ``genuine_channels[c]``. Events mark every
    trial onset with its class label.
    """
    montage = _montage(n_channels, channel_names)
    sets = [set(montage.indices(list(s))) for s in drift_channels]
    if sets[0] & sets[1]:
        raise ValueError("drift channel sets of the two classes overlap")
    genuine = montage.indices(list(genuine_channels))
    rng = np.random.default_rng(seed)
    w, g = int(round(trial_s * sample_rate)), int(round(gap_s * sample_rate))
    n = n_trials * (w + g) + g
    data = noise_uv * pink_noise(rng, n_channels, n)
    t = np.arange(w) / sample_rate
    taper = np.sin(np.pi * np.arange(w) / (w - 1))  # smooth onset and offset inside the trial
    labels = rng.permutation(np.arange(n_trials) % 2)
    events = []
    for k, c in enumerate(labels):
        onset = g + k * (w + g)
        events.append((onset, ("left", "right")[c]))
        f = rng.uniform(1.0, 3.0)
        drift = np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) * taper
        for ch in sorted(sets[c]):
            data[ch, onset : onset + w] += shortcut_snr * noise_uv * drift
        if genuine_snr > 0:
            osc = np.sin(2 * np.pi * 10.0 * t + rng.uniform(0, 2 * np.pi)) * taper
            data[genuine[c], onset : onset + w] += genuine_snr * noise_uv * osc
    return Recording(data, sample_rate, montage, events=events, subject=subject)


def band_envelope(x: np.ndarray, sample_rate: float, band=(8.0, 12.0)) -> np.ndarray:
    """Per-second mean power of ``x`` in ``band`` (zero-phase Butterworth, 4th order)."""
    from scipy import signal as sps

    sos = sps.butter(4, band, btype="bandpass", fs=sample_rate, output="sos")
    y = sps.sosfiltfilt(sos, x, axis=-1)
    step = int(round(sample_rate))
    n = x.shape[-1] // step
    return (y[..., : n * step] ** 2).reshape(*x.shape[:-1], n, step).mean(axis=-1)


def synth_affect(
    seed: int,
    n_channels: int = 8,
    duration_s: float = 120.0,
    driver_channels: Sequence[str] = ("C3", "C4"),
    sample_rate: float = 200.0,
    channel_names: Sequence[str] | None = None,
    noise_uv: float = 10.0,
    alpha_uv: float = 10.0,
    modulation: float = 1.0,
    target_name: str = "arousal",
    subject: str = "S00",
) -> Recording:
    """Pink noise plus 10 Hz activity on ``driver_channels`` whose amplitude follows a 1 Hz target.

    The target is a smoothed random walk scaled to [0, 1]; the oscillation
    amplitude is ``alpha_uv * (1 + modulation * (2 * target - 1))`` (linear
    interpolation between seconds).
    """
    if duration_s < 8:
        raise ValueError("affect recordings need at least 8 s")
    montage = _montage(n_channels, channel_names)
    drivers = montage.indices(list(driver_channels))
    rng = np.random.default_rng(seed)
    n_sec = int(duration_s)
    n = int(round(n_sec * sample_rate))
    walk = np.cumsum(rng.standard_normal(n_sec + 20))
    kernel = np.hanning(11)
    smooth = np.convolve(walk, kernel / kernel.sum(), mode="valid")[:n_sec]
    target = (smooth - smooth.min()) / max(smooth.max() - smooth.min(), 1e-12)
    data = noise_uv * pink_noise(rng, n_channels, n)
    secs = (np.arange(n) / sample_rate) - 0.5
    amp = alpha_uv * (1.0 + modulation * (2.0 * np.interp(secs, np.arange(n_sec), target) - 1.0))
    t = np.arange(n) / sample_rate
    for ch in drivers:
        data[ch] += amp * np.sin(2 * np.pi * 10.0 * t + rng.uniform(0, 2 * np.pi))
    return Recording(data, sample_rate, montage, continuous_target=target, target_name=target_name, subject=subject)

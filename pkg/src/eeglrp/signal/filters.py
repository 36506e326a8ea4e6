"""Preprocessing: FIR band-pass, IIR notch, re-referencing and resampling."""
from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .recording import Recording

__all__ = [
    "design_bandpass",
    "fir_bandpass",
    "notch_filter",
    "average_rereference",
    "resample",
    "preprocess",
    "DEFAULT_BAND",
    "DEFAULT_NOTCH",
    "DEFAULT_RATE",
]

DEFAULT_BAND = (0.1, 75.0)
DEFAULT_NOTCH = 50.0
DEFAULT_RATE = 200.0


def design_bandpass(low: float, high: float, sample_rate: float, transition: float = 0.25) -> np.ndarray:
    """Hamming-windowed sinc band-pass taps with a transition band of ``transition * low`` Hz.

    The tap count follows the usual Hamming estimate ``3.3 / (width / fs)``,
    rounded up to an odd number so the group delay is an integer.
    """
    nyq = sample_rate / 2.0
    if not 0.0 < low < high < nyq:
        raise ValueError(f"band ({low}, {high}) Hz is invalid at {sample_rate} Hz sampling")
    width = transition * low
    numtaps = int(np.ceil(3.3 * sample_rate / width)) | 1
    return sps.firwin(numtaps, [low, high], pass_zero=False, window="hamming", fs=sample_rate)


def fir_bandpass(rec: Recording, low: float = DEFAULT_BAND[0], high: float = DEFAULT_BAND[1]) -> Recording:
    """Zero-phase-delay FIR band-pass per channel; output length equals input length.

    The signal is mirror-padded by half the filter length and only the fully
    overlapped part of the convolution is kept, which removes the group delay.
    """
    taps = design_bandpass(low, high, rec.sample_rate)
    half = len(taps) // 2
    padded = np.pad(rec.data, ((0, 0), (half, half)), mode="reflect")
    out = sps.fftconvolve(padded, taps[None, :], mode="valid", axes=-1)
    return rec.replace(data=out)


def _ar_extend(x: np.ndarray, padlen: int, order: int = 16, fit_len: int = 400) -> np.ndarray:
    """Continue each row of ``x`` past its end by least-squares autoregressive prediction.

    A mirrored pad breaks the phase of an oscillation at the edge, and a
    narrow notch then rings for many samples; an AR continuation extends
    sinusoids exactly. Rows whose prediction blows up fall back to mirroring.
    """
    seg = x[:, -min(fit_len, x.shape[1]) :]
    out = np.empty((x.shape[0], padlen))
    for c, s in enumerate(seg):
        lags = np.lib.stride_tricks.sliding_window_view(s[:-1], order)[:, ::-1]
        coef, *_ = np.linalg.lstsq(lags, s[order:], rcond=None)
        a = np.concatenate([[1.0], -coef])
        zi = sps.lfiltic([1.0], a, s[::-1][:order])
        ext, _ = sps.lfilter([1.0], a, np.zeros(padlen), zi=zi)
        if not np.all(np.isfinite(ext)) or np.abs(ext).max() > 10.0 * np.abs(s).max():
            ext = np.pad(s, (0, padlen), mode="reflect")[-padlen:]
        out[c] = ext
    return out


def notch_filter(rec: Recording, freq: float = DEFAULT_NOTCH, quality: float = 30.0) -> Recording:
    """Second-order IIR notch run forward and backward (zero phase).

    Both ends are extended by AR prediction over several decay times of the
    notch before filtering, then cropped back.
    """
    if not 0.0 < freq < rec.sample_rate / 2.0:
        raise ValueError(f"notch frequency {freq} Hz must lie in (0, {rec.sample_rate / 2}) Hz")
    b, a = sps.iirnotch(freq, quality, fs=rec.sample_rate)
    # decay time of the notch poles is about Q / (pi f0) seconds
    padlen = int(6 * quality * rec.sample_rate / freq)
    x = rec.data
    if x.shape[1] < 64:
        return rec.replace(data=sps.filtfilt(b, a, x, axis=-1, padtype="odd", padlen=x.shape[1] - 1))
    right = _ar_extend(x, padlen)
    left = _ar_extend(x[:, ::-1], padlen)[:, ::-1]
    ext = np.concatenate([left, x, right], axis=1)
    out = sps.filtfilt(b, a, ext, axis=-1, padtype=None)[:, padlen:-padlen]
    return rec.replace(data=np.ascontiguousarray(out))


def average_rereference(rec: Recording) -> Recording:
    if rec.n_channels < 2:
        raise ValueError("average re-reference needs at least two channels")
    return rec.replace(data=rec.data - rec.data.mean(axis=0, keepdims=True))


def resample(rec: Recording, target: float) -> Recording:
    """Polyphase resampling to ``target`` Hz.

    New length is ``round(n_samples * target / rate)``; event indices are
    rescaled by the same ratio and the 1 Hz target is trimmed to whole seconds.
    """
    if not target > 0:
        raise ValueError("target rate must be positive")
    if target == rec.sample_rate:
        return rec.replace(data=rec.data.copy())
    ratio = Fraction(target / rec.sample_rate).limit_denominator(1000)
    n_new = int(round(rec.n_samples * target / rec.sample_rate))
    out = sps.resample_poly(rec.data, ratio.numerator, ratio.denominator, axis=-1, padtype="line")
    if out.shape[1] < n_new:
        out = np.pad(out, ((0, 0), (0, n_new - out.shape[1])), mode="edge")
    out = out[:, :n_new]
    scale = target / rec.sample_rate
    events = [(min(int(round(i * scale)), n_new - 1), lab) for i, lab in rec.events]
    tgt = rec.continuous_target
    if tgt is not None:
        tgt = tgt[: int(n_new // target)]
    return rec.replace(data=out, sample_rate=float(target), events=events, continuous_target=tgt)


def preprocess(
    rec: Recording,
    band: tuple[float, float] = DEFAULT_BAND,
    notch: float | None = DEFAULT_NOTCH,
    target_rate: float = DEFAULT_RATE,
) -> Recording:
    """Band-pass, notch, average re-reference, then resample; the one fixed pipeline order."""
    out = fir_bandpass(rec, *band)
    if notch is not None:
        out = notch_filter(out, notch)
    out = average_rereference(out)
    return resample(out, target_rate)

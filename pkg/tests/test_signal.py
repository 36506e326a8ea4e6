import numpy as np
import pytest

from eeglrp.datasets import DatasetSpec, build_dataset
from eeglrp.signal.filters import average_rereference, fir_bandpass, notch_filter, preprocess, resample
from eeglrp.signal.recording import DEFAULT_CHANNELS, Montage, Recording, load_recording, save_recording
from eeglrp.signal.synth import band_envelope, pink_noise, synth_affect, synth_cfa, synth_shortcut
from eeglrp.signal.tasks import (
    epoch_windows,
    make_rpeak_target,
    median_binarize,
    rolling_windows,
    split_subjects,
)


def _rec(data, fs=200.0, **kw):
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    return Recording(data, fs, Montage.standard(DEFAULT_CHANNELS[: data.shape[0]]), **kw)


def _sine(freq, fs=200.0, seconds=20.0, n_ch=1):
    t = np.arange(int(seconds * fs)) / fs
    return np.tile(np.sin(2 * np.pi * freq * t), (n_ch, 1))


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


# -- filters ------------------------------------------------------------------------


def test_bandpass_preserves_10hz_and_length():
    x = _sine(10.0)
    y = fir_bandpass(_rec(x), 0.1, 75.0).data
    assert y.shape == x.shape
    assert abs(_rms(y) / _rms(x) - 1.0) <= 0.05


def test_bandpass_attenuates_dc():
    x = np.full((1, 4000), 5.0)
    y = fir_bandpass(_rec(x), 0.1, 75.0).data
    assert 20 * np.log10(abs(y.mean()) / 5.0 + 1e-300) <= -20.0


@pytest.mark.parametrize("band", [(0.0, 10.0), (10.0, 5.0), (1.0, 100.0)])
def test_bandpass_invalid_band(band):
    with pytest.raises(ValueError):
        fir_bandpass(_rec(np.zeros((1, 400))), *band)


def test_notch_examples():
    x50, x10, x40 = _sine(50.0), _sine(10.0), _sine(40.0)
    assert _rms(notch_filter(_rec(x50), 50.0).data) <= 0.03 * _rms(x50)
    assert abs(_rms(notch_filter(_rec(x10), 50.0).data) / _rms(x10) - 1) <= 0.05
    assert abs(_rms(notch_filter(_rec(x40), 50.0).data) / _rms(x40) - 1) <= 0.05
    assert np.all(notch_filter(_rec(np.zeros((2, 1000))), 50.0).data == 0.0)
    with pytest.raises(ValueError):
        notch_filter(_rec(x10), 100.0)


def test_resample_examples():
    rec = _rec(np.zeros((2, 640)), fs=160.0, events=[(320, "left")])
    out = resample(rec, 200.0)
    assert out.n_samples == 800 and out.sample_rate == 200.0
    assert out.events == [(400, "left")]
    same = resample(rec, 160.0)
    np.testing.assert_array_equal(same.data, rec.data)
    t_in, t_out = np.arange(640) / 160.0, np.arange(800) / 200.0
    y = resample(_rec(np.sin(2 * np.pi * 5 * t_in), fs=160.0), 200.0).data[0]
    assert np.corrcoef(y, np.sin(2 * np.pi * 5 * t_out))[0, 1] > 0.999
    with pytest.raises(ValueError):
        resample(rec, 0.0)


def test_rereference_examples(rng):
    same = np.tile(rng.standard_normal(100), (3, 1))
    np.testing.assert_allclose(average_rereference(_rec(same)).data, 0.0, atol=1e-12)
    x = rng.standard_normal((5, 300)) * 20
    once = average_rereference(_rec(x))
    assert np.max(np.abs(once.data.sum(axis=0))) <= 1e-9
    np.testing.assert_allclose(average_rereference(once).data, once.data, atol=1e-12)
    with pytest.raises(ValueError):
        average_rereference(_rec(x[:1]))


def test_preprocessing_preserves_channels_and_is_deterministic(rng):
    rec = _rec(10 * pink_noise(rng, 4, 2000))
    for f in (lambda r: fir_bandpass(r), lambda r: notch_filter(r), average_rereference, lambda r: resample(r, 128.0)):
        a, b = f(rec), f(rec)
        assert a.n_channels == 4
        np.testing.assert_array_equal(a.data, b.data)


def test_pipeline_near_idempotent():
    rec = synth_cfa(3, duration_s=30.0)
    once = preprocess(rec)
    twice = preprocess(once)
    assert abs(_rms(twice.data) / _rms(once.data) - 1.0) < 0.01


# -- targets and windows ---------------------------------------------------------------


def test_rpeak_target_examples():
    rec = _rec(np.zeros((1, 400)))
    tgt = make_rpeak_target(rec, [100])
    assert set(np.flatnonzero(tgt)) == {98, 99, 100, 101}
    assert not make_rpeak_target(rec, []).any()
    merged = np.flatnonzero(make_rpeak_target(rec, [100, 102]))
    assert merged.tolist() == list(range(98, 104))


def test_median_binarize_examples():
    assert median_binarize([1, 2, 3, 4, 5]).tolist() == [0, 0, 0, 1, 1]
    assert median_binarize([7, 7, 7]).tolist() == [0, 0, 0]
    assert median_binarize([1, 1, 2, 2]).tolist() == [0, 0, 1, 1]
    with pytest.raises(ValueError):
        median_binarize([])


@pytest.mark.parametrize("seconds,count", [(10, 7), (4, 1), (4.5, 1), (60, 57)])
def test_rolling_window_counts(seconds, count):
    n = int(seconds * 200)
    rec = _rec(np.zeros((2, n)))
    assert len(rolling_windows(rec, per_sample_target=np.zeros(n))) == count


def test_rolling_windows_overlap_and_labels():
    n = 2000
    data = np.arange(n, dtype=float)[None].repeat(2, 0)
    target = np.arange(10.0)  # strictly increasing: median 4.5
    ds = rolling_windows(_rec(data, continuous_target=target))
    assert ds.windows.shape == (7, 2, 800)
    np.testing.assert_array_equal(ds.windows[0, :, 200:], ds.windows[1, :, :600])
    # label at the last whole second covered: window k ends at second k + 4
    assert ds.labels.tolist() == [int(k + 3 > 4.5) for k in range(7)]


def test_rolling_windows_too_short_warns():
    with pytest.warns(UserWarning):
        ds = rolling_windows(_rec(np.zeros((2, 500))), per_sample_target=np.zeros(500))
    assert len(ds) == 0


# -- generators ---------------------------------------------------------------------


def test_pink_noise_slope(rng):
    x = pink_noise(rng, 1, 2**14)[0]
    f = np.fft.rfftfreq(x.size)[1:]
    p = np.abs(np.fft.rfft(x))[1:] ** 2
    slope = np.polyfit(np.log(f), np.log(p), 1)[0]
    assert -1.2 < slope < -0.8


def test_synth_cfa_peaks_and_rms():
    rec = synth_cfa(0, duration_s=60.0, mean_hr_bpm=60.0)
    peaks = rec.event_indices("R")
    assert abs(len(peaks) - 60) <= 3
    iz = rec.montage.index("Iz")
    near = np.zeros(rec.n_samples, dtype=bool)
    for p in peaks:
        near[max(p - 2, 0) : p + 2] = True
    x = rec.data[iz]
    assert _rms(x[near]) >= 5 * _rms(x[~near])
    # the heartbeat is at least ten times weaker on every other channel
    tmpl_amp = x[peaks].mean()
    for ch in range(rec.n_channels):
        if ch != iz:
            clean = rec.data[ch][peaks] - rec.data[ch][np.clip(peaks - 40, 0, None)]
            assert abs(clean.mean()) <= tmpl_amp / 10 + 3.0
    np.testing.assert_array_equal(synth_cfa(0, duration_s=60.0).data, rec.data)


def _trial_features(rec):
    ds = epoch_windows(rec, ("left", "right"))
    idx = rec.montage.indices(["Fp1", "Fp2"])
    feats = np.log(ds.windows[:, idx].var(axis=-1))
    return feats, ds.labels


def _probe_accuracy(feats, labels):
    half = len(labels) // 2
    X = np.column_stack([feats, np.ones(len(feats))])
    w = np.linalg.lstsq(X[:half], 2.0 * labels[:half] - 1.0, rcond=None)[0]
    return float(np.mean((X[half:] @ w > 0) == labels[half:]))


def test_synth_shortcut_probe_detects_shortcut():
    rec = synth_shortcut(0, n_trials=80, shortcut_snr=4.0, genuine_snr=0.0)
    assert _probe_accuracy(*_trial_features(rec)) >= 0.95
    np.testing.assert_array_equal(rec.data, synth_shortcut(0, n_trials=80, shortcut_snr=4.0).data)


def test_synth_shortcut_without_signal_is_chance():
    accs = [_probe_accuracy(*_trial_features(synth_shortcut(s, n_trials=80, shortcut_snr=0.0))) for s in range(5)]
    assert 0.35 <= np.mean(accs) <= 0.65


def test_synth_shortcut_overlapping_sets():
    with pytest.raises(ValueError):
        synth_shortcut(0, drift_channels=(("Fp1",), ("Fp1", "Fp2")))


def test_synth_affect_driver_correlation():
    rec = synth_affect(1, duration_s=600.0)
    env = band_envelope(rec.data, rec.sample_rate)
    tgt = rec.continuous_target
    for ch, name in enumerate(rec.montage.names):
        r = np.corrcoef(env[ch], tgt)[0, 1]
        if name in ("C3", "C4"):
            assert r >= 0.6
        else:
            assert abs(r) <= 0.1
    np.testing.assert_array_equal(synth_affect(1, duration_s=600.0).data, rec.data)
    with pytest.raises(ValueError):
        synth_affect(0, duration_s=6.0)


# -- recordings and splits -----------------------------------------------------------


def test_recording_invariants():
    with pytest.raises(ValueError):
        _rec(np.zeros((2, 100)), events=[(100, "R")])
    with pytest.raises(ValueError):
        _rec(np.zeros((2, 400)), continuous_target=np.zeros(3))
    with pytest.raises(ValueError):
        Montage(("A", "A"), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Montage(("A",), np.array([[1.0, 1.0]]))


def test_recording_round_trip(tmp_path):
    rec = synth_affect(2, duration_s=10.0)
    save_recording(tmp_path / "r.rec", rec)
    back = load_recording(tmp_path / "r.rec")
    np.testing.assert_array_equal(back.data, rec.data.astype(np.float32).astype(np.float64))
    assert back.montage == rec.montage
    np.testing.assert_array_equal(back.continuous_target, rec.continuous_target)
    assert (back.target_name, back.subject, back.sample_rate) == (rec.target_name, rec.subject, rec.sample_rate)


def test_split_subjects():
    subs = [f"S{i:02d}" for i in range(10)]
    m = split_subjects(subs, seed=4)
    counts = {k: list(m.values()).count(k) for k in ("train", "val", "test")}
    assert counts == {"train": 8, "val": 1, "test": 1}
    assert split_subjects(subs, seed=4) == m
    assert split_subjects(subs[::-1], seed=4) == m


def test_dataset_splits_disjoint_and_label_shapes():
    ds = build_dataset(DatasetSpec(task="rpeak", n_subjects=5, duration_s=8.0))
    assert ds.segmentation and ds.labels.shape == (len(ds), 800)
    by_split = {s: set(ds.subjects[ds.splits == s]) for s in ("train", "val", "test")}
    assert not (by_split["train"] & by_split["val"]) and not (by_split["train"] & by_split["test"])
    assert not (by_split["val"] & by_split["test"])
    sc = build_dataset(DatasetSpec(task="shortcut_lr", n_subjects=2, n_trials=6, planted_channels=(("Fp1",), ("Fp2",))))
    assert not sc.segmentation and sc.labels.shape == (12,)

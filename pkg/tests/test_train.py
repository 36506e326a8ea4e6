import dataclasses
import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eeglrp import tensor as T
from eeglrp.datasets import DatasetSpec, build_dataset
from eeglrp.model import LabramMini, ModelConfig
from eeglrp.signal.tasks import WindowedDataset
from eeglrp.train.experiment import RunError, kfold_assignment, run_experiment, subject_kfold
from eeglrp.train.losses import smooth_targets, smoothed_weighted_ce
from eeglrp.train.metrics import UndefinedMetricError, accuracy, auroc, balanced_accuracy, bootstrap_sd, f1_score, metrics
from eeglrp.train.optim import AdamWState, adamw_step, cosine_lr
from eeglrp.train.pretrain import mask_tokens, masked_pretrain
from eeglrp.train.trainer import EarlyStopping, TrainConfig, fit_loop, predict_scores, train

TINY = ModelConfig(n_channels=8, t_in=800, embed_dim=16, n_layers=1, n_heads=2)


# -- optimizer and schedule ----------------------------------------------------------


def test_adamw_zero_grad_no_decay_is_identity():
    p = {"w": np.array([1.0, -2.0])}
    adamw_step(p, {"w": np.zeros(2)}, AdamWState(), lr=0.1, weight_decay=0.0)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adamw_pure_decay():
    p = {"w": np.array([1.0, -2.0])}
    adamw_step(p, {"w": np.zeros(2)}, AdamWState(), lr=0.1, weight_decay=0.5)
    np.testing.assert_array_equal(p["w"], np.array([1.0, -2.0]) * (1 - 0.1 * 0.5))


def test_adamw_matches_hand_formula():
    p = {"w": np.array(0.7)}
    state = AdamWState()
    grads = [0.3, -1.2, 0.05]
    w, m, v = 0.7, 0.0, 0.0
    lr, wd = 1e-2, 0.1
    for t, g in enumerate(grads, start=1):
        adamw_step(p, {"w": np.array(g)}, state, lr, wd)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - lr * wd * w
        w = w - lr * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert abs(float(p["w"]) - w) <= 1e-12


def test_cosine_examples():
    assert cosine_lr(0, 1e-3, 100) == 1e-3
    assert cosine_lr(99, 1e-3, 100) < 1e-6
    assert abs(cosine_lr(50, 1e-3, 100) - 5e-4) <= 1e-12
    # warmup ramps linearly, annealing starts after it
    assert cosine_lr(0, 1e-3, 100, warmup_epochs=10, warmup_start_lr=1e-5) == 1e-5
    assert abs(cosine_lr(5, 1e-3, 100, 10, 1e-5) - (1e-5 + (1e-3 - 1e-5) / 2)) <= 1e-15
    assert cosine_lr(10, 1e-3, 100, 10, 1e-5) == 1e-3
    with pytest.raises(ValueError):
        cosine_lr(100, 1e-3, 100)


# -- loss ------------------------------------------------------------------------------


def test_smoothed_ce_examples():
    assert float(smoothed_weighted_ce(np.array([50.0, -50.0]), [1, 0], smoothing=0.0).data) < 1e-20
    np.testing.assert_allclose(smooth_targets([1, 0], 0.1), [0.95, 0.05])
    z = np.array([0.4])
    base = float(smoothed_weighted_ce(z, [1]).data)
    assert float(smoothed_weighted_ce(z, [1], pos_weight=6.33).data) == pytest.approx(6.33 * base, rel=1e-14)
    assert float(smoothed_weighted_ce(z, [0], pos_weight=6.33).data) == float(smoothed_weighted_ce(z, [0]).data)


def test_smoothed_ce_closed_form(rng):
    z, y = rng.standard_normal(10), (rng.random(10) > 0.5).astype(int)
    t = y * 0.9 + 0.05
    p = 1 / (1 + np.exp(-z))
    ref = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    assert float(smoothed_weighted_ce(z, y).data) == pytest.approx(ref, rel=1e-12)


# -- early stopping ---------------------------------------------------------------------


def test_grace_values():
    assert TrainConfig(max_epochs=100).grace == 10
    assert TrainConfig(max_epochs=400).grace == 40
    assert TrainConfig(max_epochs=30).grace == 3
    assert TrainConfig(max_epochs=15).grace == 2


def test_injected_loss_sequence_stops_at_epoch_four():
    losses = [3, 2, 2, 2, 2, 2, 2]
    hist, _, stopped = fit_loop(
        len(losses), 2, lambda e: {}, lambda e: (losses[e], 0.5), snapshot=lambda: None, restore=lambda s: None
    )
    assert len(hist) == 4 and stopped


def test_early_stopping_requires_strict_improvement():
    es = EarlyStopping(1)
    assert not es.update(1.0)
    assert es.update(1.0)


def test_best_val_bac_restored():
    bac = [0.5, 0.8, 0.6, 0.8, 0.7]
    restored = []
    current = {"epoch": None}

    def run_epoch(e):
        current["epoch"] = e
        return {}

    hist, best, _ = fit_loop(
        5, 10, run_epoch, lambda e: (1.0 / (e + 1), bac[e]), snapshot=lambda: current["epoch"], restore=restored.append
    )
    assert best == 1 and restored == [1] and len(hist) == 5


def test_train_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(configuration="linear_probe")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(warmup_epochs=5, max_epochs=5)


# -- training -------------------------------------------------------------------------


def _toy_dataset(rng, n=24):
    t = np.arange(200) / 200.0
    labels = np.arange(n) % 2
    sign = np.where(labels == 1, 1.0, -1.0)
    x = 0.1 * rng.standard_normal((n, 2, 200))
    x[:, 0] += sign[:, None] * np.sin(2 * np.pi * 5 * t)
    splits = np.array(["train"] * (n - 8) + ["val"] * 4 + ["test"] * 4)
    subjects = np.array([f"S{0 if s == 'train' else 1 if s == 'val' else 2}" for s in splits])
    return WindowedDataset(x, labels, subjects, 200.0, ("Fp1", "Fp2"), splits)


def test_from_scratch_fits_separable_toy_data(rng):
    ds = _toy_dataset(rng)
    cfg = ModelConfig(n_channels=2, t_in=200, embed_dim=16, n_layers=1, n_heads=2)
    model = LabramMini(cfg, seed=0)
    res = train(model, ds, TrainConfig(max_epochs=50, learning_rate=3e-3, batch_size=8, weight_decay=0.0, grace_fraction=1.0))
    assert res.epochs_run <= 50
    tr = ds.split("train")
    assert accuracy(predict_scores(model, tr.windows), tr.labels) == 1.0


def test_frozen_run_leaves_backbone_unchanged(rng):
    ds = _toy_dataset(rng)
    cfg = ModelConfig(n_channels=2, t_in=200, embed_dim=16, n_layers=1, n_heads=2, head_kind="mlp")
    model = LabramMini(cfg, seed=0)
    before = {n: model.params[n].data.copy() for n in model.backbone_names()}
    feats = model.backbone(ds.windows).data.copy()
    head_before = {n: model.params[n].data.copy() for n in model.head_names()}
    train(model, ds, TrainConfig(max_epochs=3, configuration="frozen", learning_rate=1e-2))
    for n, v in before.items():
        assert model.params[n].data.tobytes() == v.tobytes()
    assert model.backbone(ds.windows).data.tobytes() == feats.tobytes()
    assert any(not np.array_equal(model.params[n].data, v) for n, v in head_before.items())


def test_train_rejects_empty_or_overlapping_splits(rng):
    ds = _toy_dataset(rng)
    model = LabramMini(ModelConfig(n_channels=2, t_in=200, embed_dim=16, n_layers=1, n_heads=2))
    empty = dataclasses.replace(ds, splits=np.full(len(ds), "train"))
    with pytest.raises(ValueError):
        train(model, empty, TrainConfig(max_epochs=1))
    shared = dataclasses.replace(ds, subjects=np.full(len(ds), "S0"))
    with pytest.raises(ValueError):
        train(model, shared, TrainConfig(max_epochs=1))


# -- metrics ----------------------------------------------------------------------------


def _auroc_pairs(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_metric_examples():
    y = np.array([0, 0, 1, 1])
    assert auroc(np.array([-2.0, -1.0, 1.0, 2.0]), y) == 1.0
    neg = -np.ones(4)
    assert balanced_accuracy(neg, y) == 0.5 and f1_score(neg, y) == 0.0
    with pytest.raises(UndefinedMetricError):
        auroc(np.ones(3), np.ones(3))
    m = metrics(np.array([1.0, -1.0]), np.array([1, 1]))
    assert math.isnan(m["auroc"]) and m["balanced_accuracy"] == 0.5


def test_auroc_matches_pair_counting(rng):
    for _ in range(25):
        n = int(rng.integers(2, 101))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = np.round(rng.standard_normal(n), 1)  # ties included
        assert auroc(s, y) == pytest.approx(_auroc_pairs(s, y), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
def test_metrics_invariant_to_positive_scaling(seed, c):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, 30)]
    s = rng.standard_normal(32)
    assert metrics(s, y) == metrics(c * s, y)


def test_bootstrap_examples(rng):
    y = np.arange(50) % 2
    perfect = np.where(y == 1, 1.0, -1.0)
    assert bootstrap_sd(perfect, y, n_boot=200)["balanced_accuracy"][1] == 0.0
    n, p = 1000, 0.8
    y = rng.integers(0, 2, n)
    correct = rng.random(n) < p
    s = np.where(correct, 2 * y - 1, 1 - 2 * y).astype(float)
    boot = bootstrap_sd(s, y, seed=3)
    p_hat = correct.mean()
    analytic = math.sqrt(p_hat * (1 - p_hat) / n)
    assert abs(boot["accuracy"][1] - analytic) <= 0.1 * analytic
    assert bootstrap_sd(s, y, seed=3) == boot
    assert bootstrap_sd.__defaults__[0] == 1000


# -- pretraining --------------------------------------------------------------------------


def test_mask_tokens():
    m = mask_tokens(4, 16, 0.5, np.random.default_rng(0))
    assert m.shape == (4, 16) and np.all(m.sum(axis=1) == 8)
    assert not mask_tokens(4, 16, 0.0, np.random.default_rng(0)).any()


def test_nothing_masked_contributes_nothing(rng):
    pred = T.Tensor(rng.standard_normal((2, 3, 5)), requires_grad=True)
    loss = T.masked_mse(pred, np.zeros((2, 3, 5)), np.zeros((2, 3, 1)))
    assert float(loss.data) == 0.0
    with pytest.raises(ValueError):
        masked_pretrain(LabramMini(TINY), np.zeros((2, 8, 800)), mask_fraction=0.0)


@pytest.fixture(scope="module")
def rpeak_windows():
    ds = build_dataset(DatasetSpec(task="rpeak", seed=0, n_subjects=4, duration_s=20.0))
    return ds.windows[:64]


def test_pretraining_loss_drops(rpeak_windows):
    model = LabramMini(ModelConfig(embed_dim=32, n_layers=2, n_heads=4), seed=0)
    res = masked_pretrain(model, rpeak_windows, epochs=20, seed=0)
    assert res.final_loss <= 0.7 * res.initial_loss


def test_pretraining_deterministic_and_head_untouched(rpeak_windows):
    outs = []
    for _ in range(2):
        model = LabramMini(TINY, seed=1)
        head = {n: model.params[n].data.copy() for n in model.head_names()}
        res = masked_pretrain(model, rpeak_windows[:8], epochs=2, batch_size=4, seed=5)
        for n, v in head.items():
            np.testing.assert_array_equal(model.params[n].data, v)
        outs.append((res.losses, model.state_dict()))
    assert outs[0][0] == outs[1][0]
    for k, v in outs[0][1].items():
        assert v.tobytes() == outs[1][1][k].tobytes()


# -- experiment runner and cross-validation -------------------------------------------------


@pytest.fixture(scope="module")
def small_task():
    return build_dataset(DatasetSpec(task="shortcut_lr", seed=0, n_subjects=5, n_trials=6, planted_channels=(("Fp1",), ("Fp2",))))


QUICK = TrainConfig(max_epochs=2, batch_size=8, learning_rate=1e-3)


def test_run_experiment_single_seed_and_rows(small_task):
    res = run_experiment(small_task, TINY, {"from_scratch": QUICK}, n_seeds=1, keep_models=False)
    assert len(res.rows) == 1
    assert all(v == 0.0 for v in res.rows[0].sd.values())
    lines = res.table().splitlines()
    assert sum(line.startswith("from_scratch") for line in lines) == 1
    assert len(res.csv().strip().splitlines()) == 2


def test_run_experiment_reproducible(small_task):
    a = run_experiment(small_task, TINY, {"from_scratch": QUICK}, n_seeds=2, keep_models=False)
    b = run_experiment(small_task, TINY, {"from_scratch": QUICK}, n_seeds=2, keep_models=False)
    assert [r.seed for r in a.runs["from_scratch"]] == [0, 1]
    for ra, rb in zip(a.runs["from_scratch"], b.runs["from_scratch"]):
        assert ra.test_scores.tobytes() == rb.test_scores.tobytes()
    assert a.table() == b.table() and a.csv() == b.csv()


def test_run_failure_carries_identity(small_task):
    cfg = dataclasses.replace(QUICK, configuration="finetuned", seed=7)
    with pytest.raises(RunError) as err:
        run_experiment(small_task, TINY, {"finetuned": cfg}, n_seeds=1)
    assert err.value.configuration == "finetuned" and err.value.seed == 7


def test_kfold_partition():
    subs = [f"S{i:02d}" for i in range(10)]
    folds = kfold_assignment(subs, k=5, val_subjects=4, seed=0)
    tests = [sorted(s for s, v in f.items() if v == "test") for f in folds]
    assert all(len(t) == 2 for t in tests)
    flat = [s for t in tests for s in t]
    assert sorted(flat) == subs and len(set(flat)) == len(flat)
    for f in folds:
        assert sum(v == "val" for v in f.values()) == 4
        assert set(f) == set(subs)
    assert kfold_assignment(subs, 5, 4, seed=0) == folds
    with pytest.raises(ValueError):
        kfold_assignment(subs[:4], k=5)


def test_subject_kfold_runs_each_fold(small_task):
    cv = subject_kfold(small_task, TINY, dataclasses.replace(QUICK, max_epochs=1), k=5, val_subjects=1, seed=0)
    assert len(cv.fold_metrics) == 5
    assert set(cv.mean) == {"auroc", "balanced_accuracy", "f1"}

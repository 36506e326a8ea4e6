"""Supervised training with early stopping and best-checkpoint restoration."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .. import tensor as T
from ..model import LabramMini
from ..signal.tasks import WindowedDataset
from .losses import smoothed_weighted_ce
from .metrics import balanced_accuracy, metrics
from .optim import AdamWState, adamw_step, cosine_lr

__all__ = ["CONFIGURATIONS", "TrainConfig", "RunResult", "EarlyStopping", "fit_loop", "train", "predict_scores"]

CONFIGURATIONS = ("from_scratch", "finetuned", "frozen")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters for one downstream run.

    ``dropout_p`` overrides the model's hidden-unit dropout when set. In the
    ``frozen`` configuration only the head is optimized; classification
    heads are then an MLP with ``head_layers`` hidden layers of
    ``head_hidden`` units.
    """

    batch_size: int = 32
    dropout_p: float | None = None
    weight_decay: float = 0.05
    positive_class_weight: float | None = None
    learning_rate: float = 5e-4
    warmup_epochs: int = 0
    warmup_start_lr: float = 1e-6
    max_epochs: int = 100
    grace_fraction: float = 0.10
    label_smoothing: float = 0.10
    seed: int = 0
    configuration: str = "from_scratch"
    head_hidden: int = 64
    head_layers: int = 2

    def __post_init__(self):
        if self.configuration not in CONFIGURATIONS:
            raise ValueError(f"configuration must be one of {CONFIGURATIONS}, got {self.configuration!r}")
        for name in ("batch_size", "max_epochs", "learning_rate", "grace_fraction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.warmup_epochs < 0 or self.warmup_epochs >= self.max_epochs:
            raise ValueError("warmup_epochs must lie in [0, max_epochs)")
        if self.positive_class_weight is not None and not self.positive_class_weight > 0:
            raise ValueError("positive_class_weight must be positive")

    @property
    def grace(self) -> int:
        # round first so that e.g. 0.1 * 30 does not ceil to 4
        return max(1, math.ceil(round(self.grace_fraction * self.max_epochs, 9)))

    def lr(self, epoch: int) -> float:
        return cosine_lr(epoch, self.learning_rate, self.max_epochs, self.warmup_epochs, self.warmup_start_lr)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


class EarlyStopping:
    """Stop once validation loss has not strictly improved for ``grace`` consecutive epochs."""

    def __init__(self, grace: int):
        self.grace = grace
        self.best = math.inf
        self.bad_epochs = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.grace


def fit_loop(
    max_epochs: int,
    grace: int,
    run_epoch: Callable[[int], dict],
    evaluate: Callable[[int], tuple[float, float]],
    snapshot: Callable[[], Any],
    restore: Callable[[Any], None],
    log: Callable[[dict], None] | None = None,
) -> tuple[list[dict], int, bool]:
    """Epoch loop shared by all configurations.

    Returns ``(history, best_epoch, stopped_early)``; ``best_epoch`` is the
    first epoch with the highest validation balanced accuracy, and its
    snapshot is restored before returning.
    """
    stopper = EarlyStopping(grace)
    history: list[dict] = []
    best_epoch, best_bac, best_state = -1, -math.inf, None
    stopped = False
    for epoch in range(max_epochs):
        record = dict(run_epoch(epoch))
        val_loss, val_bac = evaluate(epoch)
        record.update(epoch=epoch, val_loss=float(val_loss), val_bac=float(val_bac))
        history.append(record)
        if log is not None:
            log(record)
        if val_bac > best_bac:
            best_epoch, best_bac, best_state = epoch, val_bac, snapshot()
        if stopper.update(val_loss):
            stopped = epoch < max_epochs - 1
            break
    if best_state is not None:
        restore(best_state)
    return history, best_epoch, stopped


@dataclass
class RunResult:
    configuration: str
    seed: int
    history: list[dict]
    best_epoch: int
    stopped_early: bool
    test_metrics: dict[str, float]
    test_scores: np.ndarray = field(repr=False)
    test_labels: np.ndarray = field(repr=False)
    model: LabramMini | None = field(default=None, repr=False)

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def best_val_bac(self) -> float:
        return self.history[self.best_epoch]["val_bac"] if self.history else float("nan")


def _batches(n: int, size: int, rng: np.random.Generator | None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for lo in range(0, n, size):
        yield order[lo : lo + size]


def predict_scores(model: LabramMini, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode logits for a stack of windows."""
    out = [model.forward(windows[i : i + batch_size]).data for i in range(0, len(windows), batch_size)]
    return np.concatenate(out) if out else np.zeros((0,))


def _head_inputs(model: LabramMini, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = [model.head_input(model.backbone(windows[i : i + batch_size])).data for i in range(0, len(windows), batch_size)]
    return np.concatenate(out)


def train(
    model: LabramMini,
    dataset: WindowedDataset,
    cfg: TrainConfig,
    log: Callable[[dict], None] | None = None,
) -> RunResult:
    """Train ``model`` in place on the ``train`` split; select on ``val``; report on ``test``.

    The model ends at the parameters of its best validation epoch. In the
    ``frozen`` configuration backbone features are computed once and only
    head parameters are updated.
    """
    tr, va, te = dataset.split("train"), dataset.split("val"), dataset.split("test")
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("train and val splits must be nonempty")
    if set(tr.subjects) & set(va.subjects):
        raise ValueError("train and val splits share subjects")
    if cfg.dropout_p is not None:
        model.config = dataclasses.replace(model.config, dropout_p=cfg.dropout_p)
    rng = np.random.default_rng(cfg.seed)
    frozen = cfg.configuration == "frozen"
    names = model.head_names() if frozen else list(model.params)
    state = AdamWState()
    loss_kw = dict(smoothing=cfg.label_smoothing, pos_weight=cfg.positive_class_weight)

    if frozen:
        feats = {k: _head_inputs(model, d.windows) for k, d in (("train", tr), ("val", va), ("test", te)) if len(d)}

        def logits_of(split, idx, train_mode):
            return model.apply_head(T.Tensor(feats[split][idx]))
    else:
        data = {"train": tr.windows, "val": va.windows, "test": te.windows}

        def logits_of(split, idx, train_mode):
            return model.forward(data[split][idx], train=train_mode, rng=rng if train_mode else None)

    def run_epoch(epoch):
        lr = cfg.lr(epoch)
        total, count, scores = 0.0, 0, np.empty(tr.labels.shape)
        for idx in _batches(len(tr), cfg.batch_size, rng):
            logits = logits_of("train", idx, True)
            loss = smoothed_weighted_ce(logits, tr.labels[idx], **loss_kw)
            scores[idx] = logits.data
            leaves = [model.params[n] for n in names]
            grads = T.backward(loss, inputs=leaves)
            adamw_step(
                {n: model.params[n].data for n in names},
                {n: grads[model.params[n]] for n in names},
                state,
                lr,
                cfg.weight_decay,
            )
            total += float(loss.data) * len(idx)
            count += len(idx)
        return {"lr": lr, "train_loss": total / count, "train_bac": balanced_accuracy(scores, tr.labels)}

    def eval_split(split, ds):
        losses, scores = [], []
        for idx in _batches(len(ds), 64, None):
            logits = logits_of(split, idx, False)
            losses.append(float(smoothed_weighted_ce(logits, ds.labels[idx], **loss_kw).data) * len(idx))
            scores.append(logits.data)
        return float(np.sum(losses) / len(ds)), np.concatenate(scores)

    def evaluate(epoch):
        val_loss, scores = eval_split("val", va)
        return val_loss, balanced_accuracy(scores, va.labels)

    history, best_epoch, stopped = fit_loop(
        cfg.max_epochs,
        cfg.grace,
        run_epoch,
        evaluate,
        snapshot=lambda: {n: model.params[n].data.copy() for n in names},
        restore=lambda s: model.load_state_dict(s),
        log=log,
    )
    if len(te):
        _, test_scores = eval_split("test", te)
        test_metrics = metrics(test_scores, te.labels)
    else:
        test_scores, test_metrics = np.zeros((0,)), {}
    return RunResult(
        configuration=cfg.configuration,
        seed=cfg.seed,
        history=history,
        best_epoch=best_epoch,
        stopped_early=stopped,
        test_metrics=test_metrics,
        test_scores=test_scores,
        test_labels=te.labels,
        model=model,
    )

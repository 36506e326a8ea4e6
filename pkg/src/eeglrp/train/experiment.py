"""Multi-seed experiment grid, results tables and subject-level cross-validation."""
from __future__ import annotations

import csv
import dataclasses
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..model import LabramMini, ModelConfig
from ..signal.tasks import WindowedDataset, assign_splits
from .metrics import bootstrap_sd
from .trainer import RunResult, TrainConfig, train

__all__ = [
    "METRIC_NAMES",
    "RunError",
    "ResultRow",
    "ExperimentResult",
    "build_run_model",
    "run_experiment",
    "format_table",
    "table_csv",
    "kfold_assignment",
    "CVResult",
    "subject_kfold",
]

METRIC_NAMES = ("auroc", "balanced_accuracy", "f1")


class RunError(RuntimeError):
    """A single training run failed; carries the run identity."""

    def __init__(self, configuration: str, seed: int, cause: BaseException):
        super().__init__(f"run configuration={configuration} seed={seed} failed: {type(cause).__name__}: {cause}")
        self.configuration = configuration
        self.seed = seed
        self.cause = cause


@dataclass
class ResultRow:
    configuration: str
    n_runs: int
    mean: dict[str, float]
    sd: dict[str, float]
    bootstrap: bool = False


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    runs: dict[str, list[RunResult]] = field(repr=False)

    def table(self) -> str:
        return format_table(self.rows)

    def csv(self) -> str:
        return table_csv(self.rows)


def build_run_model(
    model_cfg: ModelConfig, cfg: TrainConfig, seed: int, pretrained: Mapping[str, np.ndarray] | None = None
) -> LabramMini:
    """Fresh model for one run.

    ``from_scratch`` initializes everything from ``seed``. ``finetuned`` and
    ``frozen`` copy the backbone from ``pretrained``; a frozen
    classification run gets an MLP head of the configured size.
    """
    if cfg.configuration == "from_scratch":
        return LabramMini(model_cfg, seed=seed)
    if pretrained is None:
        raise ValueError(f"configuration {cfg.configuration!r} needs a pretrained backbone")
    head_kw = {}
    head_kind = model_cfg.head_kind
    if cfg.configuration == "frozen" and head_kind != "segmentation":
        head_kind, head_kw = "mlp", {"head_hidden": cfg.head_hidden, "head_layers": cfg.head_layers}
    base = LabramMini(model_cfg, seed=seed)
    for name in base.backbone_names():
        base.params[name].data[...] = pretrained[name]
    return base.with_head(head_kind, seed=seed, **head_kw)


def _one_run(args) -> RunResult:
    dataset, model_cfg, cfg, pretrained, keep_model = args
    try:
        model = build_run_model(model_cfg, cfg, cfg.seed, pretrained)
        res = train(model, dataset, cfg)
    except Exception as exc:  # noqa: BLE001 - rewrapped with identity
        raise RunError(cfg.configuration, cfg.seed, exc) from exc
    if not keep_model:
        res.model = None
    return res


def _summarize(name: str, runs: Sequence[RunResult], bootstrap: bool, n_boot: int) -> ResultRow:
    vals = {m: np.array([r.test_metrics.get(m, np.nan) for r in runs], dtype=float) for m in METRIC_NAMES}
    mean = {m: float(np.mean(v)) for m, v in vals.items()}
    if len(runs) > 1:
        sd = {m: float(np.std(v, ddof=1)) for m, v in vals.items()}
        return ResultRow(name, len(runs), mean, sd)
    if bootstrap:
        r = runs[0]
        boot = bootstrap_sd(r.test_scores, r.test_labels, n_boot=n_boot, seed=r.seed)
        return ResultRow(name, 1, mean, {m: float(boot[m][1]) for m in METRIC_NAMES}, bootstrap=True)
    return ResultRow(name, 1, mean, {m: 0.0 for m in METRIC_NAMES})


def run_experiment(
    dataset: WindowedDataset,
    model_cfg: ModelConfig,
    configs: Mapping[str, TrainConfig],
    n_seeds: int = 5,
    pretrained: Mapping[str, np.ndarray] | None = None,
    jobs: int = 1,
    bootstrap: bool = False,
    n_boot: int = 1000,
    keep_models: bool = True,
    on_run: Callable[[RunResult], None] | None = None,
) -> ExperimentResult:
    """Train every configuration with ``n_seeds`` seeds and tabulate test metrics.

    Run ``i`` of a configuration uses seed ``cfg.seed + i`` for both model
    initialization and training. Rows report mean and sample standard
    deviation over seeds (0 for a single run, or a bootstrap estimate when
    ``bootstrap`` is set). ``jobs > 1`` spreads runs over processes; results
    do not depend on it.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    tasks = []
    for name, cfg in configs.items():
        for i in range(n_seeds):
            tasks.append((name, (dataset, model_cfg, dataclasses.replace(cfg, seed=cfg.seed + i), pretrained, keep_models)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, [t[1] for t in tasks]))
    else:
        results = [_one_run(t[1]) for t in tasks]
    runs: dict[str, list[RunResult]] = {name: [] for name in configs}
    for (name, _), res in zip(tasks, results):
        runs[name].append(res)
        if on_run is not None:
            on_run(res)
    rows = [_summarize(name, rs, bootstrap, n_boot) for name, rs in runs.items()]
    return ExperimentResult(rows=rows, runs=runs)


def _cell(mean: float, sd: float, star: bool) -> str:
    return f"{100 * mean:.1f} ± {100 * sd:.1f}" + ("*" if star else "")


def format_table(rows: Sequence[ResultRow]) -> str:
    """Aligned plain-text table, percent units, one row per configuration."""
    header = ["configuration", "runs", "AUROC", "B. Acc.", "F1"]
    body = [
        [r.configuration, str(r.n_runs)] + [_cell(r.mean[m], r.sd[m], r.bootstrap) for m in METRIC_NAMES] for r in rows
    ]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    fmt = lambda line: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths)))
    out = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(line) for line in body]
    return "\n".join(out) + "\n"


def table_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["configuration", "n_runs", "bootstrap"] + [f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "sd")])
    for r in rows:
        w.writerow(
            [r.configuration, r.n_runs, int(r.bootstrap)] + [f"{v:.6f}" for m in METRIC_NAMES for v in (r.mean[m], r.sd[m])]
        )
    return buf.getvalue()


# -- cross-validation --------------------------------------------------------


def kfold_assignment(
    subjects: Sequence[str], k: int = 5, val_subjects: int = 4, seed: int = 0
) -> list[dict[str, str]]:
    """Subject-to-split maps for each of ``k`` folds.

    Subjects are shuffled and cut into ``k`` near-equal folds. Fold ``i``
    is the test set of split ``i``; ``val_subjects`` validation subjects are
    drawn from the remaining folds and the rest train.
    """
    uniq = sorted(set(subjects))
    if len(uniq) < k:
        raise ValueError(f"need at least k={k} subjects, got {len(uniq)}")
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(uniq), k)
    out = []
    for i, test in enumerate(folds):
        rest = np.concatenate([f for j, f in enumerate(folds) if j != i])
        n_val = min(val_subjects, len(rest) - 1)
        if n_val < 1:
            raise ValueError("too few subjects to hold out validation subjects")
        val = set(rng.choice(rest, size=n_val, replace=False).tolist())
        mapping = {s: "test" for s in test.tolist()}
        mapping.update({s: ("val" if s in val else "train") for s in rest.tolist()})
        out.append(mapping)
    return out


@dataclass
class CVResult:
    folds: list[dict[str, str]]
    fold_metrics: list[dict[str, float]]
    mean: dict[str, float]
    sd: dict[str, float]


def subject_kfold(
    dataset: WindowedDataset,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    k: int = 5,
    val_subjects: int = 4,
    seed: int = 0,
    pretrained: Mapping[str, np.ndarray] | None = None,
) -> CVResult:
    """Train once per fold and average test metrics over folds."""
    folds = kfold_assignment(dataset.subjects.tolist(), k, val_subjects, seed)
    fold_metrics = []
    for i, mapping in enumerate(folds):
        ds = assign_splits(dataset.select(np.ones(len(dataset), dtype=bool)), mapping)
        run_cfg = dataclasses.replace(cfg, seed=cfg.seed + i)
        res = _one_run((ds, model_cfg, run_cfg, pretrained, False))
        fold_metrics.append(dict(res.test_metrics))
    vals = {m: np.array([fm.get(m, np.nan) for fm in fold_metrics]) for m in METRIC_NAMES}
    mean = {m: float(np.mean(v)) for m, v in vals.items()}
    sd = {m: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for m, v in vals.items()}
    return CVResult(folds=folds, fold_metrics=fold_metrics, mean=mean, sd=sd)

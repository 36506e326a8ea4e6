"""Command-line entry point: ``eeglrp <verb> --spec experiment.json``.

Verbs share one JSON experiment file (``schema_version`` 1) and one output
directory::

    <out>/data/manifest.json          subject -> split, dataset parameters
    <out>/data/recordings/S00.rec     raw synthetic recordings
    <out>/data/preprocessed/S00.rec   after ``preprocess``
    <out>/checkpoints/*.ckpt          pretrained and per-run models
    <out>/logs/*.jsonl                one record per training epoch
    <out>/results/*.txt|csv           results tables
    <out>/attribution/                per-window maps, aggregate, figures

Exit codes: 0 success, 2 invalid spec or arguments, 3 missing input,
1 anything else.
"""
from __future__ import annotations

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
from dataclasses import dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import Any  # noqa: E402

import numpy as np  # noqa: E402

from . import csp  # noqa: E402
from .datasets import DatasetSpec, make_recordings, recordings_to_dataset  # noqa: E402
from .lrp import RuleConfig, attribute_batch, save_attribution, select_logits  # noqa: E402
from .model import ConfigError, LabramMini, ModelConfig, load_checkpoint, save_checkpoint  # noqa: E402
from .report import (  # noqa: E402
    aggregate,
    load_aggregate,
    render_figures,
    save_aggregate,
    shortcut_score,
    spatial_aggregate,
)
from .signal.filters import preprocess  # noqa: E402
from .signal.recording import Montage, load_recording, save_recording  # noqa: E402
from .signal.tasks import assign_splits, split_subjects  # noqa: E402
from .train.experiment import run_experiment, subject_kfold  # noqa: E402
from .train.metrics import metrics  # noqa: E402
from .train.pretrain import masked_pretrain  # noqa: E402
from .train.trainer import CONFIGURATIONS, TrainConfig  # noqa: E402

SCHEMA_VERSION = 1
OUT_ENV = "EEGLRP_OUT"
VERBS = ("synth", "preprocess", "pretrain", "train", "baseline", "attribute", "cv", "report")

EXIT_OK, EXIT_INTERNAL, EXIT_VALIDATION, EXIT_MISSING = 0, 1, 2, 3


class SpecError(ValueError):
    """Invalid experiment file or arguments (exit code 2)."""


class MissingInputError(FileNotFoundError):
    """A required input file is absent (exit code 3)."""


@dataclass(frozen=True)
class AttributionSpec:
    k_pos: int = 2
    k_neg: int = 2
    split: str = "test"
    max_windows: int | None = None
    batch_size: int = 16
    configuration: str | None = None


@dataclass(frozen=True)
class PretrainSpec:
    mask_fraction: float = 0.5
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 32
    weight_decay: float = 0.05


@dataclass(frozen=True)
class CVSpec:
    k: int = 5
    val_subjects: int = 4
    configuration: str = "from_scratch"


@dataclass(frozen=True)
class BaselineSpec:
    candidates: tuple[int, ...] = (2, 4, 6, 8)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment needs, parsed and validated up front."""

    dataset: DatasetSpec
    model: ModelConfig
    train: dict[str, TrainConfig]
    rules: RuleConfig
    seed: int = 0
    n_seeds: int = 5
    bootstrap: bool = False
    n_boot: int = 1000
    attribution: AttributionSpec = AttributionSpec()
    pretrain: PretrainSpec = PretrainSpec()
    cv: CVSpec = CVSpec()
    baseline: BaselineSpec = BaselineSpec()
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def task(self) -> str:
        return self.dataset.task


def _build(cls, d: Any, what: str):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise SpecError(f"{what} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise SpecError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError, ConfigError) as exc:
        raise SpecError(f"invalid {what}: {exc}") from exc


def _derived_model(ds: DatasetSpec, model: dict) -> ModelConfig:
    derived = {
        "n_channels": len(ds.channel_names),
        "sample_rate": ds.sample_rate,
        "t_in": int(round(ds.window_s * ds.sample_rate)),
        "head_kind": "segmentation" if ds.task == "rpeak" else "linear",
    }
    merged = dict(model)
    for k, v in derived.items():
        if k in merged and k != "head_kind" and merged[k] != v:
            raise SpecError(f"model.{k}={merged[k]!r} conflicts with the dataset ({v!r})")
        merged.setdefault(k, v)
    if ds.task == "rpeak" and merged["head_kind"] != "segmentation":
        raise SpecError("the rpeak task needs a segmentation head")
    if ds.task != "rpeak" and merged["head_kind"] == "segmentation":
        raise SpecError(f"the {ds.task} task needs a classification head")
    try:
        return ModelConfig.from_dict(merged)
    except (TypeError, ValueError, ConfigError) as exc:
        raise SpecError(f"invalid model: {exc}") from exc


def parse_spec(raw: dict, seed: int | None = None, out: str | None = None) -> ExperimentSpec:
    """Validate a decoded experiment file; ``seed`` and ``out`` override the file."""
    if not isinstance(raw, dict):
        raise SpecError("the experiment file must hold a JSON object")
    allowed = {
        "schema_version", "task", "seed", "dataset", "model", "train", "rules", "n_seeds", "bootstrap",
        "n_boot", "attribution", "pretrain", "cv", "baseline", "output_dir",
    }
    unknown = set(raw) - allowed
    if unknown:
        raise SpecError(f"unknown top-level keys: {sorted(unknown)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise SpecError(f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    if "task" not in raw:
        raise SpecError("missing required key 'task'")
    master = int(raw.get("seed", 0)) if seed is None else int(seed)
    ds_raw = dict(raw.get("dataset") or {})
    if "task" in ds_raw and ds_raw["task"] != raw["task"]:
        raise SpecError("dataset.task disagrees with task")
    ds_raw["task"] = raw["task"]
    ds_raw.setdefault("seed", master)
    if raw["task"] == "rpeak":
        ds_raw.setdefault("planted_channels", ["Iz"])
    elif raw["task"] == "shortcut_lr":
        ds_raw.setdefault("planted_channels", [["Fp1"], ["Fp2"]])
    else:
        ds_raw.setdefault("planted_channels", ["C3", "C4"])
    try:
        dataset = DatasetSpec.from_dict(ds_raw)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"invalid dataset: {exc}") from exc
    model = _derived_model(dataset, raw.get("model") or {})
    train_raw = raw.get("train") or {"from_scratch": {}}
    if not isinstance(train_raw, dict) or not train_raw:
        raise SpecError("train must map configuration names to train settings")
    train = {}
    for name, cfg in train_raw.items():
        if name not in CONFIGURATIONS:
            raise SpecError(f"unknown configuration {name!r}; expected one of {CONFIGURATIONS}")
        cfg = dict(cfg or {})
        if cfg.get("configuration", name) != name:
            raise SpecError(f"train.{name}.configuration disagrees with its key")
        cfg["configuration"] = name
        cfg.setdefault("seed", master)
        train[name] = _build(TrainConfig, cfg, f"train.{name}")
    rules = _build(RuleConfig, raw.get("rules"), "rules")
    attribution = _build(AttributionSpec, raw.get("attribution"), "attribution")
    if attribution.configuration is not None and attribution.configuration not in train:
        raise SpecError(f"attribution.configuration {attribution.configuration!r} is not trained")
    if attribution.split not in ("train", "val", "test"):
        raise SpecError("attribution.split must be train, val or test")
    pre = _build(PretrainSpec, raw.get("pretrain"), "pretrain")
    if not 0.0 < pre.mask_fraction < 1.0:
        raise SpecError("pretrain.mask_fraction must lie in (0, 1)")
    cv = _build(CVSpec, raw.get("cv"), "cv")
    if cv.configuration not in train:
        raise SpecError(f"cv.configuration {cv.configuration!r} has no train settings")
    base_raw = dict(raw.get("baseline") or {})
    if "candidates" in base_raw:
        base_raw["candidates"] = tuple(base_raw["candidates"])
    baseline = _build(BaselineSpec, base_raw, "baseline")
    if any(c % 2 or c < 2 or c > model.n_channels for c in baseline.candidates):
        raise SpecError("baseline.candidates must be even counts between 2 and the channel count")
    n_seeds = int(raw.get("n_seeds", 5))
    if n_seeds < 1:
        raise SpecError("n_seeds must be at least 1")
    return ExperimentSpec(
        dataset=dataset,
        model=model,
        train=train,
        rules=rules,
        seed=master,
        n_seeds=n_seeds,
        bootstrap=bool(raw.get("bootstrap", False)),
        n_boot=int(raw.get("n_boot", 1000)),
        attribution=attribution,
        pretrain=pre,
        cv=cv,
        baseline=baseline,
        output_dir=out if out is not None else raw.get("output_dir"),
        raw=raw,
    )


def load_spec(path: str | Path, seed: int | None = None, out: str | None = None) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"experiment file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: not valid JSON ({exc})") from exc
    return parse_spec(raw, seed=seed, out=out)


# -- paths and shared helpers --------------------------------------------------


@dataclass(frozen=True)
class Layout:
    root: Path

    @property
    def data(self) -> Path:
        return self.root / "data"

    @property
    def manifest(self) -> Path:
        return self.data / "manifest.json"

    @property
    def recordings(self) -> Path:
        return self.data / "recordings"

    @property
    def preprocessed(self) -> Path:
        return self.data / "preprocessed"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def pretrained(self) -> Path:
        return self.checkpoints / "pretrained.ckpt"

    @property
    def logs(self) -> Path:
        return self.root / "logs"

    @property
    def results(self) -> Path:
        return self.root / "results"

    @property
    def attribution(self) -> Path:
        return self.root / "attribution"

    def run_checkpoint(self, configuration: str, seed: int) -> Path:
        return self.checkpoints / f"{configuration}_seed{seed}.ckpt"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _require(path: Path, what: str):
    if not path.exists():
        raise MissingInputError(f"{what} not found: {path} (run the earlier pipeline step first)")


def _read_manifest(lay: Layout) -> dict:
    _require(lay.manifest, "dataset manifest")
    return json.loads(lay.manifest.read_text(encoding="utf-8"))


def _load_dataset(spec: ExperimentSpec, lay: Layout):
    """Windowed dataset from the stored recordings, with the manifest's split."""
    manifest = _read_manifest(lay)
    use_pre = spec.dataset.preprocess
    folder = lay.preprocessed if use_pre else lay.recordings
    files = [folder / f"{s}.rec" for s in manifest["subjects"]]
    for f in files:
        _require(f, "preprocessed recording" if use_pre else "recording")
    recs = [load_recording(f) for f in files]
    ds = recordings_to_dataset(recs, dataclasses.replace(spec.dataset, preprocess=False))
    return assign_splits(ds, manifest["splits"])


def _pretrained_state(spec: ExperimentSpec, lay: Layout):
    if not any(c in ("finetuned", "frozen") for c in spec.train):
        return None
    _require(lay.pretrained, "pretrained checkpoint")
    model, _ = load_checkpoint(lay.pretrained)
    return model.state_dict()


# -- verbs -------------------------------------------------------------------


def cmd_synth(spec: ExperimentSpec, lay: Layout, args) -> int:
    recs = make_recordings(spec.dataset)
    # keyed on the dataset seed, exactly as in build_dataset
    mapping = split_subjects([r.subject for r in recs], spec.dataset.seed, spec.dataset.split_ratios)
    lay.recordings.mkdir(parents=True, exist_ok=True)
    for rec in recs:
        save_recording(lay.recordings / f"{rec.subject}.rec", rec)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "task": spec.task,
        "dataset": spec.dataset.to_dict(),
        "subjects": [r.subject for r in recs],
        "splits": mapping,
        "files": [f"recordings/{r.subject}.rec" for r in recs],
    }
    _write(lay.manifest, _dump(manifest))
    print(f"wrote {len(recs)} recording(s) and {lay.manifest}")
    return EXIT_OK


def cmd_preprocess(spec: ExperimentSpec, lay: Layout, args) -> int:
    manifest = _read_manifest(lay)
    files = [lay.recordings / f"{s}.rec" for s in manifest["subjects"]]
    for f in files:
        _require(f, "recording")
    lay.preprocessed.mkdir(parents=True, exist_ok=True)
    for f in files:
        save_recording(lay.preprocessed / f.name, preprocess(load_recording(f)))
    print(f"preprocessed {len(files)} recording(s) into {lay.preprocessed}")
    return EXIT_OK


def cmd_pretrain(spec: ExperimentSpec, lay: Layout, args) -> int:
    ds = _load_dataset(spec, lay)
    windows = ds.split("train").windows
    if len(windows) == 0:
        raise SpecError("the train split is empty")
    model = LabramMini(spec.model, seed=spec.seed)
    log_path = lay.logs / "pretrain.jsonl"
    records = []
    p = spec.pretrain
    res = masked_pretrain(
        model, windows, p.mask_fraction, p.epochs, p.learning_rate, p.batch_size, p.weight_decay, seed=spec.seed,
        log=records.append,
    )
    lay.checkpoints.mkdir(parents=True, exist_ok=True)
    save_checkpoint(lay.pretrained, res.model, {"kind": "masked_pretrain", "seed": spec.seed, **dataclasses.asdict(p)})
    _write(log_path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    print(f"pretraining loss {res.losses[0]:.4f} -> {res.losses[-1]:.4f}; wrote {lay.pretrained}")
    return EXIT_OK


def cmd_train(spec: ExperimentSpec, lay: Layout, args) -> int:
    ds = _load_dataset(spec, lay)
    pretrained = _pretrained_state(spec, lay)
    lay.checkpoints.mkdir(parents=True, exist_ok=True)
    lay.logs.mkdir(parents=True, exist_ok=True)

    def on_run(res):
        name = f"{res.configuration}_seed{res.seed}"
        save_checkpoint(lay.run_checkpoint(res.configuration, res.seed), res.model, {
            "configuration": res.configuration, "seed": res.seed, "best_epoch": res.best_epoch, "task": spec.task,
            "epochs_run": res.epochs_run, "best_val_bac": res.best_val_bac,
        })
        _write(lay.logs / f"{name}.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n" for r in res.history))

    result = run_experiment(
        ds, spec.model, spec.train, n_seeds=spec.n_seeds, pretrained=pretrained, jobs=args.jobs,
        bootstrap=spec.bootstrap, n_boot=spec.n_boot, on_run=on_run,
    )
    _write(lay.results / "results.txt", result.table())
    _write(lay.results / "results.csv", result.csv())
    print(result.table(), end="")
    return EXIT_OK


def cmd_baseline(spec: ExperimentSpec, lay: Layout, args) -> int:
    if spec.task == "rpeak":
        raise SpecError("the CSP-LDA baseline applies to window classification tasks, not rpeak")
    ds = _load_dataset(spec, lay)
    tr, va, te = ds.split("train"), ds.split("val"), ds.split("test")
    n = csp.grid_search_components((tr.windows, tr.labels), (va.windows, va.labels), spec.baseline.candidates)
    filt, lda = csp.fit_csp_lda(tr.windows, tr.labels, n)
    scores = csp.predict(lda, csp.csp_features(filt, te.windows))
    m = metrics(scores, te.labels)
    lines = ["metric             value", "-----------------  ------"]
    lines += [f"n_components       {n:6d}"]
    lines += [f"{k:<17}  {100 * v:6.1f}" for k, v in m.items()]
    text = "\n".join(lines) + "\n"
    _write(lay.results / "baseline.txt", text)
    _write(lay.results / "baseline.csv", "metric,value\nn_components,%d\n" % n + "".join(f"{k},{v:.6f}\n" for k, v in m.items()))
    print(text, end="")
    return EXIT_OK


def _attribution_checkpoint(spec: ExperimentSpec, lay: Layout, args) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    conf = spec.attribution.configuration or next(iter(spec.train))
    return lay.run_checkpoint(conf, spec.train[conf].seed)


def cmd_attribute(spec: ExperimentSpec, lay: Layout, args) -> int:
    ckpt = _attribution_checkpoint(spec, lay, args)
    _require(ckpt, "checkpoint")
    ds = _load_dataset(spec, lay)
    model, _ = load_checkpoint(ckpt)
    part = ds.split(spec.attribution.split)
    if len(part) == 0:
        raise SpecError(f"the {spec.attribution.split} split is empty")
    n = len(part) if spec.attribution.max_windows is None else min(len(part), spec.attribution.max_windows)
    rng = np.random.default_rng(spec.seed)
    if part.segmentation:
        indices = [select_logits(part.labels[i], spec.attribution.k_pos, spec.attribution.k_neg, rng) for i in range(n)]
    else:
        indices = [[0] for _ in range(n)]
    out = lay.attribution
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    results = []
    bs = spec.attribution.batch_size
    for lo in range(0, n, bs):
        hi = min(n, lo + bs)
        labels = part.labels[lo:hi] if part.segmentation else part.labels[lo:hi, None]
        batch = attribute_batch(model, part.windows[lo:hi], indices[lo:hi], spec.rules, labels, list(range(lo, hi)))
        for r in batch:
            save_attribution(maps_dir / f"window_{r.window_id:05d}.attr", r)
        results.extend(batch)
    montage = Montage.standard(ds.channel_names)
    meta = {"task": spec.task, "checkpoint": ckpt.name, "split": spec.attribution.split, "rules": spec.rules.to_dict()}
    pattern = aggregate(results, montage.names, meta)
    save_aggregate(out / "aggregate.agg", pattern)
    render_figures(pattern, montage, ds.sample_rate, out / "figures")
    sa = spatial_aggregate(pattern)
    summary = {
        "n_windows": n,
        "n_maps": pattern.n_maps,
        "spatial_absolute": dict(zip(montage.names, [round(float(v), 12) for v in sa.absolute])),
        "spatial_signed": dict(zip(montage.names, [round(float(v), 12) for v in sa.signed])),
        "argmax_channel": montage.names[int(np.argmax(sa.absolute))],
    }
    planted = spec.dataset.all_planted()
    if planted:
        score, degenerate = shortcut_score(sa, planted)
        summary.update(planted_channels=planted, shortcut_score=round(score, 12), degenerate=degenerate,
                       uniform_baseline=len(set(planted)) / len(montage))
    _write(out / "summary.json", _dump(summary))
    print(_dump(summary), end="")
    return EXIT_OK


def cmd_cv(spec: ExperimentSpec, lay: Layout, args) -> int:
    ds = _load_dataset(spec, lay)
    cfg = spec.train[spec.cv.configuration]
    pretrained = _pretrained_state(spec, lay) if spec.cv.configuration != "from_scratch" else None
    res = subject_kfold(ds, spec.model, cfg, spec.cv.k, spec.cv.val_subjects, seed=spec.seed, pretrained=pretrained)
    lines = ["fold  auroc  balanced_accuracy  f1"]
    for i, m in enumerate(res.fold_metrics):
        lines.append(f"{i:4d}  {m['auroc']:.4f}  {m['balanced_accuracy']:.4f}  {m['f1']:.4f}")
    lines.append("mean  " + "  ".join(f"{res.mean[k]:.4f}" for k in ("auroc", "balanced_accuracy", "f1")))
    lines.append("sd    " + "  ".join(f"{res.sd[k]:.4f}" for k in ("auroc", "balanced_accuracy", "f1")))
    text = "\n".join(lines) + "\n"
    _write(lay.results / "cv.txt", text)
    rows = ["fold,auroc,balanced_accuracy,f1"] + [
        f"{i},{m['auroc']:.6f},{m['balanced_accuracy']:.6f},{m['f1']:.6f}" for i, m in enumerate(res.fold_metrics)
    ]
    _write(lay.results / "cv.csv", "\n".join(rows) + "\n")
    _write(lay.results / "cv_folds.json", _dump(res.folds))
    print(text, end="")
    return EXIT_OK


def cmd_report(spec: ExperimentSpec, lay: Layout, args) -> int:
    agg_path = lay.attribution / "aggregate.agg"
    _require(agg_path, "aggregate")
    pattern = load_aggregate(agg_path)
    montage = Montage.standard(pattern.channel_names)
    figs = lay.root / "report" / "figures"
    render_figures(pattern, montage, spec.dataset.sample_rate, figs)
    render_figures(pattern.normalized(), montage, spec.dataset.sample_rate, figs / "normalized")
    parts = [f"task: {spec.task}", f"maps aggregated: {pattern.n_maps}", ""]
    for name in ("results.txt", "baseline.txt", "cv.txt"):
        f = lay.results / name
        if f.exists():
            parts += [f"[{name}]", f.read_text(encoding="utf-8").rstrip(), ""]
    summary = lay.attribution / "summary.json"
    if summary.exists():
        parts += ["[attribution]", summary.read_text(encoding="utf-8").rstrip(), ""]
    text = "\n".join(parts) + "\n"
    _write(lay.root / "report" / "report.txt", text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "baseline": cmd_baseline,
    "attribute": cmd_attribute,
    "cv": cmd_cv,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eeglrp", description="Synthetic EEG pipeline with relevance attribution.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--spec", required=True, help="JSON experiment file")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes across seeds (train)")
        p.add_argument("--out", default=None, help=f"output root (default: spec output_dir, then ${OUT_ENV})")
        if verb == "attribute":
            p.add_argument("--checkpoint", default=None, help="model to explain (default: first configuration)")
    return parser


def _output_root(spec: ExperimentSpec) -> Path:
    root = spec.output_dir or os.environ.get(OUT_ENV) or "eeglrp_out"
    return Path(root)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        if args.jobs < 1:
            raise SpecError("--jobs must be at least 1")
        spec = load_spec(args.spec, seed=args.seed, out=args.out)
        lay = Layout(_output_root(spec))
        if lay.root.exists() and not lay.root.is_dir():
            raise SpecError(f"output root {lay.root} is not a directory")
        return COMMANDS[args.verb](spec, lay, args)
    except SpecError as exc:
        print(f"eeglrp: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MissingInputError as exc:
        print(f"eeglrp: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except OSError as exc:
        print(f"eeglrp: I/O error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"eeglrp: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

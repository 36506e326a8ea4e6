"""Catching a model that solves the task for the wrong reason.

The left/right imagery recordings come in two flavours. In the first, only an
ocular-like drift on Fp1/Fp2 tracks the class label. In the second, only the
sensorimotor rhythm on C3/C4 does. Both are easy to classify, so accuracy
alone cannot tell them apart. The shortcut score computed from the
relevance maps can: it is the share of absolute relevance that falls on the
frontal pair, against a uniform baseline of 2/8.

A CSP-LDA baseline is fitted on the same data for comparison.

One seed per condition; roughly four minutes in total.

Usage: python demos/shortcut_detection.py [seed]
"""
import sys

from eeglrp import csp
from eeglrp.datasets import DatasetSpec, build_dataset
from eeglrp.lrp import RuleConfig, attribute_batch
from eeglrp.model import LabramMini, ModelConfig
from eeglrp.report import aggregate, shortcut_score, spatial_aggregate
from eeglrp.train.trainer import TrainConfig, train


def run(seed: int, shortcut_snr: float, genuine_snr: float):
    spec = DatasetSpec(
        task="shortcut_lr", seed=seed, n_subjects=20, n_trials=40, planted_channels=(("Fp1",), ("Fp2",)),
        shortcut_snr=shortcut_snr, genuine_snr=genuine_snr,
    )
    ds = build_dataset(spec)
    tr, va, te = ds.split("train"), ds.split("val"), ds.split("test")

    n = csp.grid_search_components((tr.windows, tr.labels), (va.windows, va.labels), (2, 4, 6, 8))
    filt, lda = csp.fit_csp_lda(tr.windows, tr.labels, n)
    base = csp.balanced_accuracy(csp.predict(lda, csp.csp_features(filt, te.windows)), te.labels)

    model = LabramMini(ModelConfig(embed_dim=32, n_layers=2, n_heads=4, channel_encoding_std=0.5), seed=seed)
    cfg = TrainConfig(max_epochs=30, learning_rate=3e-4, warmup_epochs=3, batch_size=16, weight_decay=0.0, grace_fraction=1.0, seed=seed)
    res = train(model, ds, cfg)

    results = []
    for lo in range(0, len(te), 16):
        hi = min(len(te), lo + 16)
        results += attribute_batch(res.model, te.windows[lo:hi], [[0]] * (hi - lo), RuleConfig())
    sa = spatial_aggregate(aggregate(results, ds.channel_names))
    score, _ = shortcut_score(sa, spec.all_planted())
    return base, res.test_metrics["balanced_accuracy"], score


def main(seed: int = 0):
    print("condition        CSP-LDA BAC  model BAC  shortcut score (uniform 0.25)")
    for label, sc, gs in (("shortcut only", 4.0, 0.0), ("genuine only", 0.0, 2.0)):
        base, bac, score = run(seed, sc, gs)
        print(f"{label:15s}  {base:11.3f}  {bac:9.3f}  {score:.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)

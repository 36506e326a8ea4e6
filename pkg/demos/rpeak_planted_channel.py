"""Does a heartbeat detector look at the electrode that carries the heartbeat?

The synthetic cardiac-field recordings put a sharp R-peak template on the Iz
electrode only. A segmentation model is trained to mark the samples around
each peak, then two positive and two negative output samples per test window
are explained and aggregated. If the model learned the right thing, Iz
dominates the absolute spatial aggregate.

This is a reduced run (one seed, fewer subjects and epochs) that finishes in
a couple of minutes. Figures land in ``demo_out/rpeak``.

Usage: python demos/rpeak_planted_channel.py [seed]
"""
import sys
from pathlib import Path

import numpy as np

from eeglrp.datasets import DatasetSpec, build_dataset
from eeglrp.lrp import RuleConfig, attribute_batch, select_logits
from eeglrp.model import LabramMini, ModelConfig
from eeglrp.report import aggregate, render_figures, spatial_aggregate
from eeglrp.signal.recording import Montage
from eeglrp.train.trainer import TrainConfig, train


def main(seed: int = 0):
    ds = build_dataset(DatasetSpec(task="rpeak", seed=seed, n_subjects=10, duration_s=40))
    print(f"{len(ds)} windows of shape {ds.windows.shape[1:]}, channels {ds.channel_names}")

    model = LabramMini(ModelConfig(embed_dim=32, n_layers=2, n_heads=4, head_kind="segmentation"), seed=seed)
    cfg = TrainConfig(max_epochs=20, learning_rate=2e-3, positive_class_weight=10, batch_size=16, weight_decay=0.01, seed=seed)
    res = train(model, ds, cfg, log=lambda r: print(f"  epoch {r['epoch']:2d}  val BAC {r['val_bac']:.3f}"))
    print("test metrics:", {k: round(v, 3) for k, v in res.test_metrics.items()})

    te = ds.split("test")
    rng = np.random.default_rng(seed)
    idx = [select_logits(te.labels[i], 2, 2, rng) for i in range(len(te))]
    results = []
    for lo in range(0, len(te), 16):
        hi = min(len(te), lo + 16)
        results += attribute_batch(res.model, te.windows[lo:hi], idx[lo:hi], RuleConfig(), te.labels[lo:hi])

    pattern = aggregate(results, ds.channel_names)
    sa = spatial_aggregate(pattern)
    share = sa.absolute / sa.absolute.sum()
    for name, s in sorted(zip(ds.channel_names, share), key=lambda t: -t[1]):
        print(f"  {name:4s} {s:.3f}")
    out = Path("demo_out/rpeak")
    render_figures(pattern, Montage.standard(ds.channel_names), ds.sample_rate, out)
    print(f"figures written to {out}/")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)

"""Relevance bookkeeping on a small untrained model.

Runs in a few seconds. Three things are shown:

* a bias-free, norm-free model hands (almost) all of its logit to the input
  when attention is passed along the value path;
* the default rule set (gamma on the stem, w-square on the raw signal,
  gradient-times-input through the softmax) leaks or gains some relevance,
  which is expected because those rules are not conservative;
* flipping the head negates the relevance map exactly.

Usage: python demos/conservation_and_rules.py
"""
import math

import numpy as np

from eeglrp.lrp import RuleConfig, attribute
from eeglrp.model import LabramMini, ModelConfig


def unit_scaled(model):
    # keep activations O(1) once biases and norms are gone
    for name, p in model.params.items():
        if name.endswith("weight"):
            fan_in = p.data.shape[0] if p.data.ndim == 2 else p.data.shape[1] * p.data.shape[2]
            p.data[...] *= 1.0 / (p.data.std() * math.sqrt(fan_in))
    for k in ("cls_token", "channel_enc", "temporal_enc"):
        model.params[k].data[...] = 0.0
    return model


def main():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 800))

    cfg = ModelConfig(embed_dim=16, n_layers=2, n_heads=2, use_bias=False, use_norm=False)
    lean = unit_scaled(LabramMini(cfg, seed=0))
    exact = RuleConfig(epsilon=1e-12, gamma=0.0, input_rule="epsilon", softmax_rule="value-path-identity")
    r = attribute(lean, x, rules=exact)
    print(f"bias-free model: logit {r.logit_values[0]:+.6f}, relevance sum {r.maps.sum():+.6f}")

    full = LabramMini(ModelConfig(embed_dim=16, n_layers=2, n_heads=2), seed=0)
    r = attribute(full, x)
    print(f"default rules:   logit {r.logit_values[0]:+.6f}, relevance sum {r.maps.sum():+.6f}")
    per_channel = np.abs(r.maps[0]).mean(axis=1)
    print("mean |R| per channel:", np.round(per_channel / per_channel.sum(), 3))

    head = max(n for n in full.head_names() if n.endswith("weight"))
    full.params[head].data[...] *= -1
    flipped = attribute(full, x).maps
    print("negated head gives negated map:", bool(np.array_equal(flipped, -r.maps)))


if __name__ == "__main__":
    main()

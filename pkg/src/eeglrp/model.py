"""A miniature LaBraM-style EEG Transformer built from :mod:`eeglrp.tensor` ops.

Pipeline: channel-wise 1 s patches -> three temporal conv blocks shared over
all (channel, patch) tokens -> linear patch projection -> learned channel and
temporal encodings plus a CLS token -> pre-norm Transformer encoder -> a
classification head on CLS or a segmentation head over patch tokens.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import tensor as T
from .io import read_container, write_container
from .tensor import Tensor

__all__ = [
    "ConfigError",
    "ModelConfig",
    "LabramMini",
    "save_checkpoint",
    "load_checkpoint",
    "truncated_normal",
]

HEAD_KINDS = ("linear", "mlp", "segmentation")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    Parameter count (``b`` = 1 if ``use_bias`` else 0, ``n`` = 1 if
    ``use_norm`` else 0, ``C1`` = stem channels, ``k1..k3`` stem kernels,
    ``T3`` stem output length, ``D`` embed dim, ``H = int(mlp_ratio * D)``)::

        stem    = C1*k1 + C1*C1*(k2 + k3) + 3*b*C1 + 6*n*C1 + C1*T3*D + b*D
        tokens  = 2*D + n_channels*D + max_patches*D      (cls, mask, encodings)
        block   = 4*D*D + 2*D*H + b*(4*D + H + D) + 4*n*D
        final   = 2*n*D
        head    = linear: D + b
                  mlp:    D*h + b*h + (m-1)*(h*h + b*h) + h + b   (h hidden, m layers)
                  segmentation: D*L + b*L                         (L = patch_len)

        total   = stem + tokens + n_layers*block + final + head
    """

    n_channels: int = 8
    sample_rate: int = 200
    patch_seconds: float = 1.0
    t_in: int = 800
    max_patches: int = 16
    embed_dim: int = 64
    n_layers: int = 4
    n_heads: int = 4
    mlp_ratio: float = 4.0
    dropout_p: float = 0.0
    attn_dropout_p: float = 0.0
    stochastic_depth_max: float = 0.0
    head_kind: str = "linear"
    head_hidden: int = 64
    head_layers: int = 2
    stem_channels: int = 8
    stem_kernels: tuple[int, int, int] = (15, 3, 3)
    stem_strides: tuple[int, int, int] = (8, 1, 1)
    use_norm: bool = True
    use_bias: bool = True
    channel_encoding_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "stem_kernels", tuple(int(k) for k in self.stem_kernels))
        object.__setattr__(self, "stem_strides", tuple(int(s) for s in self.stem_strides))
        if self.embed_dim % self.n_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")
        for name in ("dropout_p", "attn_dropout_p", "stochastic_depth_max"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {p}")
        if self.head_kind not in HEAD_KINDS:
            raise ConfigError(f"head_kind must be one of {HEAD_KINDS}, got {self.head_kind!r}")
        if self.t_in % self.patch_len:
            raise ConfigError(f"t_in {self.t_in} is not a multiple of patch_len {self.patch_len}")
        if self.n_patches > self.max_patches:
            raise ConfigError(f"{self.n_patches} patches exceed the temporal encoding table ({self.max_patches})")
        if len(self.stem_kernels) != 3 or len(self.stem_strides) != 3:
            raise ConfigError("the conv stem has exactly three blocks")
        if self.stem_lengths[-1] < 1:
            raise ConfigError("conv stem kernels are too long for the patch")

    @property
    def patch_len(self) -> int:
        return int(round(self.sample_rate * self.patch_seconds))

    @property
    def n_patches(self) -> int:
        return self.t_in // self.patch_len

    @property
    def n_tokens(self) -> int:
        return 1 + self.n_channels * self.n_patches

    @property
    def mlp_hidden(self) -> int:
        return int(self.mlp_ratio * self.embed_dim)

    @property
    def stem_lengths(self) -> tuple[int, int, int]:
        t = self.patch_len
        out = []
        for k, s in zip(self.stem_kernels, self.stem_strides):
            t = (t - k) // s + 1
            out.append(t)
        return tuple(out)

    def expected_param_count(self) -> int:
        b, n = int(self.use_bias), int(self.use_norm)
        c1, (k1, k2, k3), t3, d, h = (
            self.stem_channels,
            self.stem_kernels,
            self.stem_lengths[-1],
            self.embed_dim,
            self.mlp_hidden,
        )
        stem = c1 * k1 + c1 * c1 * (k2 + k3) + 3 * b * c1 + 6 * n * c1 + c1 * t3 * d + b * d
        tokens = 2 * d + self.n_channels * d + self.max_patches * d
        block = 4 * d * d + 2 * d * h + b * (4 * d + h + d) + 4 * n * d
        final = 2 * n * d
        if self.head_kind == "linear":
            head = d + b
        elif self.head_kind == "mlp":
            hh, m = self.head_hidden, self.head_layers
            head = d + b if m == 0 else d * hh + b * hh + (m - 1) * (hh * hh + b * hh) + hh + b
        else:
            head = d * self.patch_len + b * self.patch_len
        return stem + tokens + self.n_layers * block + final + head

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["stem_kernels"] = list(self.stem_kernels)
        d["stem_strides"] = list(self.stem_strides)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std) samples redrawn until within ``bound`` standard deviations."""
    z = rng.standard_normal(shape)
    bad = np.abs(z) > bound
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > bound
    return z * std


@dataclass
class _Spec:
    name: str
    shape: tuple[int, ...]
    init: str  # "normal" | "encoding" | "zeros" | "ones"


def _param_specs(cfg: ModelConfig) -> list[_Spec]:
    b, n = cfg.use_bias, cfg.use_norm
    c1, d, h = cfg.stem_channels, cfg.embed_dim, cfg.mlp_hidden
    specs: list[_Spec] = []
    ci = 1
    for i, k in enumerate(cfg.stem_kernels, start=1):
        specs.append(_Spec(f"stem.conv{i}.weight", (c1, ci, k), "normal"))
        if b:
            specs.append(_Spec(f"stem.conv{i}.bias", (c1,), "zeros"))
        if n:
            specs.append(_Spec(f"stem.norm{i}.gain", (c1, 1), "ones"))
            specs.append(_Spec(f"stem.norm{i}.bias", (c1, 1), "zeros"))
        ci = c1
    specs.append(_Spec("stem.proj.weight", (c1 * cfg.stem_lengths[-1], d), "normal"))
    if b:
        specs.append(_Spec("stem.proj.bias", (d,), "zeros"))
    specs += [
        _Spec("cls_token", (d,), "normal"),
        _Spec("mask_token", (d,), "normal"),
        _Spec("channel_enc", (cfg.n_channels, d), "encoding"),
        _Spec("temporal_enc", (cfg.max_patches, d), "normal"),
    ]
    for layer in range(cfg.n_layers):
        p = f"blocks.{layer}"
        if n:
            specs += [_Spec(f"{p}.norm1.gain", (d,), "ones"), _Spec(f"{p}.norm1.bias", (d,), "zeros")]
        specs.append(_Spec(f"{p}.attn.qkv.weight", (d, 3 * d), "normal"))
        if b:
            specs.append(_Spec(f"{p}.attn.qkv.bias", (3 * d,), "zeros"))
        specs.append(_Spec(f"{p}.attn.proj.weight", (d, d), "normal"))
        if b:
            specs.append(_Spec(f"{p}.attn.proj.bias", (d,), "zeros"))
        if n:
            specs += [_Spec(f"{p}.norm2.gain", (d,), "ones"), _Spec(f"{p}.norm2.bias", (d,), "zeros")]
        specs.append(_Spec(f"{p}.mlp.fc1.weight", (d, h), "normal"))
        if b:
            specs.append(_Spec(f"{p}.mlp.fc1.bias", (h,), "zeros"))
        specs.append(_Spec(f"{p}.mlp.fc2.weight", (h, d), "normal"))
        if b:
            specs.append(_Spec(f"{p}.mlp.fc2.bias", (d,), "zeros"))
    if n:
        specs += [_Spec("norm.gain", (d,), "ones"), _Spec("norm.bias", (d,), "zeros")]
    specs += _head_specs(cfg)
    return specs


def _head_specs(cfg: ModelConfig) -> list[_Spec]:
    b, d = cfg.use_bias, cfg.embed_dim
    if cfg.head_kind == "segmentation":
        dims = [(d, cfg.patch_len)]
    elif cfg.head_kind == "mlp" and cfg.head_layers > 0:
        widths = [d] + [cfg.head_hidden] * cfg.head_layers + [1]
        dims = list(zip(widths[:-1], widths[1:]))
    else:
        dims = [(d, 1)]
    specs = []
    for i, (fan_in, fan_out) in enumerate(dims):
        specs.append(_Spec(f"head.{i}.weight", (fan_in, fan_out), "normal"))
        if b:
            specs.append(_Spec(f"head.{i}.bias", (fan_out,), "zeros"))
    return specs


def _init_array(spec: _Spec, rng: np.random.Generator, cfg: ModelConfig) -> np.ndarray:
    if spec.init == "normal":
        return truncated_normal(rng, spec.shape)
    if spec.init == "encoding":
        return truncated_normal(rng, spec.shape, std=cfg.channel_encoding_std)
    if spec.init == "ones":
        return np.ones(spec.shape)
    return np.zeros(spec.shape)


class LabramMini:
    """Parameters plus the forward pass.

    ``params`` maps names to leaf tensors; training mutates their ``data``
    in place. Forward methods accept a leading batch axis.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, params: dict[str, np.ndarray] | None = None):
        self.config = config
        specs = _param_specs(config)
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        for spec in specs:
            if params is not None:
                if spec.name not in params:
                    raise ConfigError(f"missing parameter {spec.name}")
                arr = np.asarray(params[spec.name], dtype=np.float64)
                if arr.shape != spec.shape:
                    raise ConfigError(f"parameter {spec.name} has shape {arr.shape}, expected {spec.shape}")
            else:
                arr = _init_array(spec, rng, config)
            self.params[spec.name] = Tensor(arr, requires_grad=True, name=spec.name)
        if params is not None:
            extra = set(params) - set(self.params)
            if extra:
                raise ConfigError(f"unexpected parameters: {sorted(extra)}")

    # -- bookkeeping -------------------------------------------------------

    def p(self, name: str) -> Tensor | None:
        return self.params.get(name)

    def n_params(self) -> int:
        return int(np.sum([t.size for t in self.params.values()]))

    def head_names(self) -> list[str]:
        return [k for k in self.params if k.startswith("head.")]

    def backbone_names(self) -> list[str]:
        return [k for k in self.params if not k.startswith("head.")]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for k, v in state.items():
            self.params[k].data[...] = v

    def with_head(self, head_kind: str, seed: int, **head_kw) -> "LabramMini":
        """Copy of this backbone with a freshly initialized head."""
        cfg = dataclasses.replace(self.config, head_kind=head_kind, **head_kw)
        fresh = LabramMini(cfg, seed=seed)
        for k in self.backbone_names():
            fresh.params[k].data[...] = self.params[k].data
        return fresh

    # -- forward pieces ----------------------------------------------------

    def patchify(self, window) -> Tensor:
        """(..., n_channels, t_in) -> (..., n_channels, n_patches, patch_len)."""
        window = T.as_tensor(window)
        L = self.config.patch_len
        t = window.shape[-1]
        if t % L:
            raise T.DimensionError(f"window length {t} is not a multiple of patch_len {L}")
        return window.reshape(*window.shape[:-1], t // L, L)

    def conv_stem(self, patches) -> Tensor:
        """(B, C, P, L) patches -> (B, C*P, D) token embeddings, channel-major."""
        cfg = self.config
        patches = T.as_tensor(patches)
        lead = patches.shape[:-1]
        x = patches.reshape(*lead, 1, cfg.patch_len)
        rules = ("input", "gamma", "gamma")
        for i, (stride, rule) in enumerate(zip(cfg.stem_strides, rules), start=1):
            x = T.conv1d(x, self.params[f"stem.conv{i}.weight"], self.p(f"stem.conv{i}.bias"), stride, rule=rule)
            if cfg.use_norm:
                c, t = x.shape[-2:]
                x = T.layer_norm(x.reshape(*lead, c * t)).reshape(*lead, c, t)
                x = x * self.params[f"stem.norm{i}.gain"] + self.params[f"stem.norm{i}.bias"]
            x = T.gelu(x)
        x = x.reshape(*lead, x.shape[-2] * x.shape[-1])
        x = T.linear(x, self.params["stem.proj.weight"], self.p("stem.proj.bias"))
        b = lead[:-2]
        return x.reshape(*b, lead[-2] * lead[-1], cfg.embed_dim)

    def add_cls_and_encodings(self, tokens, n_patches: int | None = None) -> Tensor:
        """Add channel + temporal encodings to (B, C*P, D) tokens and prepend CLS."""
        cfg = self.config
        tokens = T.as_tensor(tokens)
        if n_patches is None:
            n_patches = tokens.shape[-2] // cfg.n_channels
        if n_patches > cfg.max_patches:
            raise ConfigError(f"patch index {n_patches - 1} beyond temporal encoding table ({cfg.max_patches})")
        chan = self.params["channel_enc"].reshape(cfg.n_channels, 1, cfg.embed_dim)
        temp = self.params["temporal_enc"][:n_patches].reshape(1, n_patches, cfg.embed_dim)
        enc = (chan + temp).reshape(cfg.n_channels * n_patches, cfg.embed_dim)
        x = tokens + enc
        batch = x.shape[:-2]
        cls = T.broadcast_to(self.params["cls_token"], (*batch, 1, cfg.embed_dim))
        return T.concat([cls, x], axis=-2)

    def _dropout(self, x: Tensor, p: float, rng) -> Tensor:
        if p <= 0.0:
            return x
        keep = rng.random(x.shape) >= p
        return x * (keep / (1.0 - p))

    def _drop_path(self, branch: Tensor, keep_mask: np.ndarray | None) -> Tensor:
        return branch if keep_mask is None else branch * keep_mask

    def attention(self, x: Tensor, layer: int, train: bool, rng) -> Tensor:
        cfg = self.config
        pre = f"blocks.{layer}.attn"
        *batch, n, d = x.shape
        nh, hd = cfg.n_heads, d // cfg.n_heads
        qkv = T.linear(x, self.params[f"{pre}.qkv.weight"], self.p(f"{pre}.qkv.bias"))
        qkv = qkv.reshape(*batch, n, 3, nh, hd)
        nb = len(batch)
        qkv = qkv.transpose(nb + 1, *range(nb), nb + 2, nb, nb + 3)  # (3, *batch, heads, n, hd)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = T.matmul(q * (1.0 / np.sqrt(hd)), T.transpose(k, (*range(nb + 1), nb + 2, nb + 1)))
        attn = T.softmax(scores, axis=-1)
        if train:
            attn = self._dropout(attn, cfg.attn_dropout_p, rng)
        out = T.matmul(attn, v, rule="attention_value")  # (*batch, heads, n, hd)
        out = out.transpose(*range(nb), nb + 1, nb, nb + 2).reshape(*batch, n, d)
        out = T.linear(out, self.params[f"{pre}.proj.weight"], self.p(f"{pre}.proj.bias"))
        if train:
            out = self._dropout(out, cfg.dropout_p, rng)
        return out

    def mlp(self, x: Tensor, layer: int, train: bool, rng) -> Tensor:
        pre = f"blocks.{layer}.mlp"
        h = T.gelu(T.linear(x, self.params[f"{pre}.fc1.weight"], self.p(f"{pre}.fc1.bias")))
        if train:
            h = self._dropout(h, self.config.dropout_p, rng)
        h = T.linear(h, self.params[f"{pre}.fc2.weight"], self.p(f"{pre}.fc2.bias"))
        if train:
            h = self._dropout(h, self.config.dropout_p, rng)
        return h

    def _norm(self, x: Tensor, prefix: str) -> Tensor:
        if not self.config.use_norm:
            return x
        return T.layer_norm(x, self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"])

    def drop_path_probs(self) -> list[float]:
        L = self.config.n_layers
        return [self.config.stochastic_depth_max * (layer + 1) / L for layer in range(L)]

    def encoder_forward(self, tokens, train: bool = False, rng=None, drop_path_probs=None) -> Tensor:
        """Pre-norm attention + MLP blocks with residual connections.

        In train mode dropout is applied, and layer ``l`` (1-based) of ``L``
        is bypassed per sample with probability
        ``stochastic_depth_max * l / L``. ``drop_path_probs`` overrides the
        per-layer probabilities (values up to 1 are accepted here).
        """
        x = T.as_tensor(tokens)
        if train and rng is None:
            raise ValueError("train mode needs an rng")
        probs = self.drop_path_probs() if drop_path_probs is None else list(drop_path_probs)
        batch = x.shape[:-2]
        for layer in range(self.config.n_layers):
            keep = None
            if train and probs[layer] > 0.0:
                p = probs[layer]
                alive = rng.random((*batch, 1, 1)) >= p
                keep = alive / (1.0 - p) if p < 1.0 else np.zeros((*batch, 1, 1))
            x = x + self._drop_path(self.attention(self._norm(x, f"blocks.{layer}.norm1"), layer, train, rng), keep)
            x = x + self._drop_path(self.mlp(self._norm(x, f"blocks.{layer}.norm2"), layer, train, rng), keep)
        return x

    def _head_layers(self) -> list[tuple[Tensor, Tensor | None]]:
        n = sum(1 for k in self.params if k.startswith("head.") and k.endswith(".weight"))
        return [(self.params[f"head.{i}.weight"], self.p(f"head.{i}.bias")) for i in range(n)]

    def head_features(self, tokens) -> Tensor:
        """Final-normed CLS representation, (B, D)."""
        x = self._norm(T.as_tensor(tokens), "norm")
        return x[..., 0, :]

    def apply_classifier(self, features) -> Tensor:
        layers = self._head_layers()
        h = T.as_tensor(features)
        for i, (w, b) in enumerate(layers):
            h = T.linear(h, w, b)
            if i < len(layers) - 1:
                h = T.gelu(h)
        return h.reshape(*h.shape[:-1])

    def classify(self, tokens) -> Tensor:
        """One logit per window from the CLS token."""
        if self.config.head_kind == "segmentation":
            raise ConfigError("classify() needs a linear or mlp head; this model has a segmentation head")
        return self.apply_classifier(self.head_features(tokens))

    def segment(self, tokens) -> Tensor:
        """t_in logits: per-patch tokens averaged over channels, then a shared linear map to patch_len logits."""
        if self.config.head_kind != "segmentation":
            raise ConfigError("segment() needs a segmentation head")
        return self.apply_head(self.head_input(tokens))

    def pooled_patches(self, tokens) -> Tensor:
        """Final-normed patch tokens averaged over channels, (B, n_patches, D)."""
        cfg = self.config
        x = self._norm(T.as_tensor(tokens), "norm")
        *batch, n, d = x.shape
        n_patches = (n - 1) // cfg.n_channels
        return T.mean(x[..., 1:, :].reshape(*batch, cfg.n_channels, n_patches, d), axis=-3)

    def head_input(self, tokens) -> Tensor:
        """What the head consumes: pooled patch tokens (segmentation) or the CLS feature."""
        if self.config.head_kind == "segmentation":
            return self.pooled_patches(tokens)
        return self.head_features(tokens)

    def apply_head(self, features) -> Tensor:
        if self.config.head_kind != "segmentation":
            return self.apply_classifier(features)
        features = T.as_tensor(features)
        (w, b), = self._head_layers()
        logits = T.linear(features, w, b)
        return logits.reshape(*logits.shape[:-2], logits.shape[-2] * logits.shape[-1])

    def embed(self, windows) -> Tensor:
        """Raw windows -> encoder input tokens (CLS + encoded patch tokens)."""
        return self.add_cls_and_encodings(self.conv_stem(self.patchify(windows)))

    def backbone(self, windows, train: bool = False, rng=None) -> Tensor:
        return self.encoder_forward(self.embed(windows), train=train, rng=rng)

    def forward(self, windows, train: bool = False, rng=None) -> Tensor:
        """Logits for (B, C, T) windows: shape (B,) or (B, t_in). A single (C, T) window is accepted."""
        windows = T.as_tensor(windows)
        single = windows.ndim == 2
        if single:
            windows = windows.reshape(1, *windows.shape)
        if windows.shape[-2] != self.config.n_channels:
            raise T.DimensionError(f"expected {self.config.n_channels} channels, got {windows.shape[-2]}")
        tokens = self.backbone(windows, train=train, rng=rng)
        out = self.segment(tokens) if self.config.head_kind == "segmentation" else self.classify(tokens)
        return out[0] if single else out

    __call__ = forward


def save_checkpoint(path: str | Path, model: LabramMini, provenance: dict[str, Any] | None = None) -> None:
    meta = {"config": model.config.to_dict(), "provenance": provenance or {}}
    write_container(path, "checkpoint", meta, {k: v.data for k, v in model.params.items()})


def load_checkpoint(path: str | Path) -> tuple[LabramMini, dict[str, Any]]:
    meta, tensors = read_container(path, kind="checkpoint")
    cfg = ModelConfig.from_dict(meta["config"])
    return LabramMini(cfg, params=tensors), meta.get("provenance", {})


def config_json(cfg: ModelConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)

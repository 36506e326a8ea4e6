import dataclasses

import numpy as np
import pytest

from eeglrp import tensor as T
from eeglrp.model import ConfigError, LabramMini, ModelConfig, load_checkpoint, save_checkpoint

SMALL = ModelConfig(n_channels=3, t_in=400, embed_dim=16, n_layers=2, n_heads=2)


@pytest.fixture(scope="module")
def model():
    return LabramMini(SMALL, seed=3)


def test_config_invariants():
    with pytest.raises(ConfigError):
        ModelConfig(embed_dim=30, n_heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(dropout_p=1.0)
    with pytest.raises(ConfigError):
        ModelConfig(t_in=810)
    with pytest.raises(ConfigError):
        ModelConfig(head_kind="pooling")
    assert ModelConfig().patch_len == 200
    assert ModelConfig().n_patches == 4


@pytest.mark.parametrize(
    "cfg",
    [
        ModelConfig(),
        ModelConfig(head_kind="mlp"),
        ModelConfig(head_kind="segmentation", use_bias=False),
        ModelConfig(embed_dim=32, n_layers=1, n_heads=4, use_norm=False, head_kind="mlp", head_layers=3),
    ],
)
def test_parameter_count_formula(cfg):
    assert LabramMini(cfg).n_params() == cfg.expected_param_count()


def test_patchify(rng):
    m1 = LabramMini(dataclasses.replace(SMALL, n_channels=1))
    w = rng.standard_normal((1, 400))
    p = m1.patchify(w)
    assert p.shape == (1, 2, 200)
    np.testing.assert_array_equal(p.data.reshape(1, 400), w)
    assert LabramMini(ModelConfig()).patchify(np.zeros((8, 800))).shape == (8, 4, 200)
    with pytest.raises(T.DimensionError):
        m1.patchify(np.zeros((1, 450)))


def test_conv_stem_zero_input_tokens_identical(model):
    tok = model.conv_stem(model.patchify(np.zeros((1, 3, 400)))).data
    assert tok.shape == (1, 6, 16)
    np.testing.assert_allclose(tok[0], np.broadcast_to(tok[0, :1], tok[0].shape), atol=0)


def test_conv_stem_channel_permutation(model, rng):
    x = rng.standard_normal((1, 3, 400))
    tok = model.conv_stem(model.patchify(x)).data.reshape(3, 2, 16)
    tok_p = model.conv_stem(model.patchify(x[:, [1, 0, 2]])).data.reshape(3, 2, 16)
    np.testing.assert_allclose(tok_p, tok[[1, 0, 2]], atol=1e-13)


def test_add_cls_and_encodings(model, rng):
    tokens = model.conv_stem(model.patchify(np.zeros((1, 3, 400))))
    enc = model.add_cls_and_encodings(tokens).data
    assert enc.shape[1] == tokens.shape[1] + 1
    np.testing.assert_array_equal(enc[0, 0], model.params["cls_token"].data)
    # same channel, patches 0 and 1: difference is the temporal encoding difference
    te = model.params["temporal_enc"].data
    np.testing.assert_allclose(enc[0, 2] - enc[0, 1], te[1] - te[0], atol=1e-14)
    zeroed = LabramMini(SMALL, seed=3)
    for k in ("channel_enc", "temporal_enc"):
        zeroed.params[k].data[...] = 0.0
    x = T.Tensor(rng.standard_normal((1, 6, 16)))
    np.testing.assert_array_equal(zeroed.add_cls_and_encodings(x).data[0, 1:], x.data[0])


def test_encoding_table_bound():
    m = LabramMini(dataclasses.replace(SMALL, max_patches=2))
    with pytest.raises(ConfigError):
        m.add_cls_and_encodings(T.Tensor(np.zeros((1, 9, 16))), n_patches=3)


def test_encoder_train_eval_identical_without_regularization(model, rng):
    toks = model.embed(rng.standard_normal((2, 3, 400)))
    a = model.encoder_forward(toks, train=False).data
    b = model.encoder_forward(toks, train=True, rng=np.random.default_rng(0)).data
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, model.encoder_forward(toks).data)


def test_encoder_full_bypass(model, rng):
    toks = model.embed(rng.standard_normal((2, 3, 400)))
    out = model.encoder_forward(toks, train=True, rng=np.random.default_rng(0), drop_path_probs=[1.0, 1.0])
    np.testing.assert_array_equal(out.data, toks.data)


def test_train_mode_reproducible_with_seed(rng):
    cfg = dataclasses.replace(SMALL, dropout_p=0.2, attn_dropout_p=0.1, stochastic_depth_max=0.5)
    m = LabramMini(cfg, seed=1)
    x = rng.standard_normal((2, 3, 400))
    a = m.forward(x, train=True, rng=np.random.default_rng(7)).data
    b = m.forward(x, train=True, rng=np.random.default_rng(7)).data
    c = m.forward(x, train=False).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stochastic_depth_schedule():
    m = LabramMini(dataclasses.replace(SMALL, n_layers=4, stochastic_depth_max=0.2))
    np.testing.assert_allclose(m.drop_path_probs(), [0.05, 0.1, 0.15, 0.2])


def test_classify_zero_weights_gives_bias(rng):
    m = LabramMini(SMALL, seed=0)
    m.params["head.0.weight"].data[...] = 0.0
    m.params["head.0.bias"].data[...] = 0.7
    np.testing.assert_allclose(m.forward(rng.standard_normal((3, 3, 400))).data, 0.7)


def test_linear_head_hand_computation(model, rng):
    x = rng.standard_normal((2, 3, 400))
    cls = model.head_features(model.backbone(x)).data
    w, b = model.params["head.0.weight"].data, model.params["head.0.bias"].data
    np.testing.assert_allclose(model.forward(x).data, cls @ w[:, 0] + b[0], atol=1e-13)


def test_mlp_head_reduces_to_linear(rng):
    lin = LabramMini(SMALL, seed=0)
    mlp = lin.with_head("mlp", seed=1, head_hidden=2 * SMALL.embed_dim, head_layers=1)
    d = SMALL.embed_dim
    w = lin.params["head.0.weight"].data
    # gelu(h) - gelu(-h) == h, so [I, -I] followed by [w; -w] is linear
    mlp.params["head.0.weight"].data[...] = np.hstack([np.eye(d), -np.eye(d)])
    mlp.params["head.0.bias"].data[...] = 0.0
    mlp.params["head.1.weight"].data[...] = np.vstack([w, -w])
    mlp.params["head.1.bias"].data[...] = lin.params["head.0.bias"].data
    x = rng.standard_normal((2, 3, 400))
    np.testing.assert_allclose(mlp.forward(x).data, lin.forward(x).data, atol=1e-12)


def test_segmentation_head_shapes_and_bias(rng):
    cfg = ModelConfig(embed_dim=16, n_layers=1, n_heads=2, head_kind="segmentation")
    m = LabramMini(cfg, seed=0)
    x = rng.standard_normal((2, 8, 800))
    assert m.forward(x).shape == (2, 800)
    m.params["head.0.weight"].data[...] = 0.0
    np.testing.assert_allclose(m.forward(x).data, np.tile(m.params["head.0.bias"].data, 4)[None].repeat(2, 0))
    with pytest.raises(ConfigError):
        m.classify(m.backbone(x))


def test_segmentation_logits_local_to_patch(rng):
    cfg = ModelConfig(embed_dim=16, n_layers=1, n_heads=2, head_kind="segmentation")
    m = LabramMini(cfg, seed=0)
    feats = rng.standard_normal((1, 4, 16))
    base = m.apply_head(T.Tensor(feats)).data
    feats2 = feats.copy()
    feats2[0, 2] += rng.standard_normal(16)
    after = m.apply_head(T.Tensor(feats2)).data
    changed = np.flatnonzero(base[0] != after[0])
    assert changed.min() >= 400 and changed.max() < 600


def test_channel_permutation_with_encodings(model, rng):
    x = rng.standard_normal((1, 3, 400))
    perm = [2, 0, 1]
    m2 = LabramMini(SMALL, params=model.state_dict())
    m2.params["channel_enc"].data[...] = model.params["channel_enc"].data[perm]
    a = model.embed(x).data[0, 1:].reshape(3, 2, 16)
    b = m2.embed(x[:, perm]).data[0, 1:].reshape(3, 2, 16)
    np.testing.assert_allclose(b, a[perm], atol=1e-13)


def test_eval_forward_deterministic(model, rng):
    x = rng.standard_normal((2, 3, 400))
    np.testing.assert_array_equal(model.forward(x).data, model.forward(x).data)


def test_checkpoint_round_trip(tmp_path, model, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, {"seed": 3, "epochs_run": 5, "best_val_bac": 0.75})
    loaded, prov = load_checkpoint(path)
    assert prov == {"seed": 3, "epochs_run": 5, "best_val_bac": 0.75}
    assert loaded.config == model.config
    for k, v in model.params.items():
        assert loaded.params[k].data.tobytes() == v.data.tobytes()
    x = rng.standard_normal((1, 3, 400))
    assert loaded.forward(x).data.tobytes() == model.forward(x).data.tobytes()


def test_missing_or_misshaped_parameters_rejected(model):
    state = model.state_dict()
    state.pop("cls_token")
    with pytest.raises(ConfigError):
        LabramMini(SMALL, params=state)
    state = model.state_dict()
    state["cls_token"] = np.zeros(3)
    with pytest.raises(ConfigError):
        LabramMini(SMALL, params=state)

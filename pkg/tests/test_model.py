import numpy as np
import pytest

from stmix import reference as R
from stmix._validation import ConfigError
from stmix.attention import MIXING, SPATIAL, AttentionVariant, mix_allocation
from stmix.checks import end_to_end_gradcheck, receptive_field
from stmix.gradcheck import grad_check
from stmix.model import (
    ModelConfig,
    TrainingDiverged,
    forward,
    init_params,
    load_params,
    loss_fn,
    preset,
    save_params,
    temporal_attention_aggregate,
    temporal_average_aggregate,
    train_step,
    transformer_layer,
)
from stmix.rng import Rng
from stmix.tensor import Tensor

from conftest import rel


def _jitter(params, rng, std=0.2):
    for t in params.values():
        t.data = t.data + rng.normal(t.shape, std=std)
    return params


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(image_size=30)
    with pytest.raises(ConfigError):
        ModelConfig(aggregation="max")
    with pytest.raises(ConfigError):
        ModelConfig(sa_position=(True, False))
    with pytest.raises(ConfigError):
        preset("nope")


def test_sa_position_masks():
    c = lambda pos: preset("desk", sa_position=pos).sa_mask
    assert c("all") == (True,) * 4 and c("none") == (False,) * 4
    assert c("first_half") == (True, True, False, False)
    assert c("second_half") == (False, False, True, True)
    assert c("odd") == (False, True, False, True)
    cfg = preset("desk", sa_position="odd")
    assert cfg.layer_variant(0).kind == SPATIAL and cfg.layer_variant(1).kind == MIXING


def test_config_roundtrip():
    cfg = preset("desk", variant=AttentionVariant(MIXING, t_w=2, rho=0.25, summary=True), sa_position=(True, False, True, False))
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"bogus": 1})


def test_zero_weight_layer_is_identity(rng):
    cfg = preset("tiny")
    params = init_params(cfg, 0)
    for name in ("attn.wo", "attn.bo", "mlp.w2", "mlp.b2"):
        params[f"layer0.{name}"].data[:] = 0
    z = Tensor(rng.normal((2, 5, 16)))
    for v in (AttentionVariant(SPATIAL), AttentionVariant(MIXING), AttentionVariant("full")):
        out = transformer_layer(z, params, "layer0", cfg, v).data
        assert np.array_equal(out, z.data) and out.shape == z.shape


def test_layer_gradient(rng):
    cfg = preset("tiny")
    params = _jitter(init_params(cfg, 1), rng)
    z = Tensor(rng.normal((2, 5, 16)))
    w = rng.normal((2, 5, 16))
    names = [k for k in params if k.startswith("layer0.")]
    rep = grad_check(lambda: (transformer_layer(z, params, "layer0", cfg, cfg.variant) * w).sum(),
                     [z] + [params[k] for k in names])
    assert rep.max_rel_error < 1e-5


def test_forward_shapes_and_errors(rng):
    cfg = preset("tiny")
    params = init_params(cfg, 0)
    assert forward(rng.normal((3, 2, 16, 16, 3)), cfg, params).shape == (3, 2)
    assert forward(rng.normal((2, 16, 16, 3)), cfg, params).shape == (1, 2)
    with pytest.raises(ConfigError):
        forward(rng.normal((1, 3, 16, 16, 3)), cfg, params)
    with pytest.raises(ConfigError):
        forward(rng.normal((1, 2, 24, 24, 3)), cfg, params)


def test_baseline_is_frame_permutation_invariant(rng):
    cfg = preset("desk", variant=AttentionVariant(SPATIAL), aggregation="average")
    params = init_params(cfg, 0)
    clip = rng.normal((8, 32, 32, 3))
    base = forward(clip, cfg, params).data
    for _ in range(3):
        assert np.array_equal(forward(clip[rng.permutation(8)], cfg, params).data, base)


def test_mixing_model_sees_frame_order(rng):
    cfg = preset("desk", aggregation="average")
    params = init_params(cfg, 0)
    clip = rng.normal((8, 32, 32, 3))
    assert np.linalg.norm(forward(clip[::-1], cfg, params).data - forward(clip, cfg, params).data) > 0


@pytest.mark.parametrize("variant,agg", [(AttentionVariant(SPATIAL), "average"), (AttentionVariant(MIXING), "attention")])
def test_tiny_model_matches_straight_line_oracle(variant, agg, rng):
    cfg = preset("tiny", variant=variant, aggregation=agg)
    cfg = ModelConfig(**{**cfg.to_dict(), "variant": variant, "image_size": 16, "num_frames": 2})
    params = _jitter(init_params(cfg, 2), rng)
    clip = rng.normal((2, 16, 16, 3))
    P = {k: v.data for k, v in params.items()}
    budget = None if variant.kind == SPATIAL else mix_allocation(cfg.head_dim, variant.t_w, variant.rho).budget
    expect = R.model_logits(clip, P, num_layers=cfg.num_layers, num_heads=cfg.num_heads,
                            patch_size=cfg.patch_size, budget=budget, aggregation=agg)
    assert rel(forward(clip, cfg, params).data[0], expect) < 1e-9


def test_temporal_average_examples():
    assert temporal_average_aggregate(Tensor([[1.0], [3.0]])).data.tolist() == [2.0]
    x = np.array([[0.5, -1.0]])
    assert np.array_equal(temporal_average_aggregate(Tensor(x)).data, x[0])


def test_ta_zero_weights_passes_query_through(rng):
    cfg = preset("tiny", num_frames=1)
    params = init_params(cfg, 0)
    for k in params:
        if k.startswith("ta0.") and not k.endswith(".g"):
            params[k].data[:] = 0
    params["ta.offset"].data[:] = rng.normal(16)
    c = Tensor(rng.normal((1, 16)))
    out = temporal_attention_aggregate(c, params, cfg).data
    assert np.allclose(out, c.data[0] + params["ta.offset"].data, atol=1e-15)


def test_ta_uniform_logits_average_values(rng):
    cfg = preset("tiny", num_frames=4)
    params = _jitter(init_params(cfg, 0), rng)
    params["ta0.attn.wq"].data[:] = 0  # all logits 0 -> uniform weights
    for k in ("ta0.mlp.w2", "ta0.mlp.b2"):
        params[k].data[:] = 0
    c = rng.normal((4, 16))
    out = temporal_attention_aggregate(Tensor(c), params, cfg).data
    ln = R.layer_norm(c, params["ta0.ln1.g"].data, params["ta0.ln1.b"].data)
    v = (ln @ params["ta0.attn.wv"].data).mean(0)
    expect = c.mean(0) + params["ta.offset"].data + v @ params["ta0.attn.wo"].data + params["ta0.attn.bo"].data
    assert rel(out, expect) < 1e-12


def test_receptive_field_growth():
    for k, t_w in ((1, 1), (2, 1), (4, 1), (1, 2), (3, 2)):
        res = receptive_field(k, t_w, 8, seed=5)
        assert res["violations"] == [], (k, t_w)
    reach = receptive_field(4, 1, 8, seed=5)["reach"]
    assert reach[4] == [0, 1, 2, 3, 4, 5, 6, 7] and reach[0] == [0, 1, 2, 3, 4]


def test_end_to_end_gradient_tiny():
    assert end_to_end_gradcheck(0, max_coords=10) < 1e-4


def test_forward_deterministic(rng):
    cfg = preset("tiny")
    clip = rng.normal((2, 16, 16, 3))
    assert np.array_equal(forward(clip, cfg, init_params(cfg, 3)).data, forward(clip, cfg, init_params(cfg, 3)).data)


def test_zero_lr_leaves_params_unchanged(rng):
    cfg = preset("tiny")
    params = init_params(cfg, 0)
    before = {k: v.data.copy() for k, v in params.items()}
    train_step(rng.normal((2, 2, 16, 16, 3)), [0, 1], cfg, params, {}, lr=0.0)
    assert all(np.array_equal(before[k], params[k].data) for k in params)


def test_frozen_temporal_position(rng):
    cfg = preset("tiny", learn_temporal_pos=False)
    params = init_params(cfg, 0)
    train_step(rng.normal((2, 2, 16, 16, 3)), [0, 1], cfg, params, {}, lr=0.1)
    assert np.all(params["embed.pos_time"].data == 0)


def test_repeated_single_example_loss_decreases(rng):
    cfg = preset("tiny")
    params = init_params(cfg, 0)
    clip, label = rng.normal((1, 2, 16, 16, 3)), [1]
    velocity: dict = {}
    losses = [train_step(clip, label, cfg, params, velocity, lr=0.01) for _ in range(15)]
    tail = losses[3:]
    assert all(b < a for a, b in zip(tail, tail[1:])), losses


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(rng):
    cfg = preset("tiny")
    params = init_params(cfg, 0)
    params["head.w"].data[:] = 1e308
    with pytest.raises(TrainingDiverged):
        train_step(rng.normal((1, 2, 16, 16, 3)), [0], cfg, params, {}, lr=0.1)


def test_params_roundtrip(tmp_path):
    cfg = preset("tiny", aggregation="attention")
    params = init_params(cfg, 0)
    save_params(params, tmp_path / "p.bin")
    loaded = load_params(tmp_path / "p.bin")
    assert list(loaded) == list(params)
    assert all(np.array_equal(loaded[k].data, params[k].data) for k in params)

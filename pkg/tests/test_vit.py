"""Toy ViT host: attention arithmetic, adaptor insertion and accounting."""

import numpy as np
import pytest

from adanca.errors import ConfigError, RangeError, ShapeError
from adanca.nca import AdaNCA, AdaNCAConfig, adaptor_flops
from adanca.numerics import functional as F
from adanca.numerics.gradcheck import finite_difference_check
from adanca.numerics.rng import Rng
from adanca.numerics.tensor import Tensor
from adanca.vit import (Attention, Block, HostModel, VitConfig, activation_dump, attention_block,
                        count_params_flops, forward_classify, insert_adanca)

SMALL = dict(image_size=8, patch_size=2, embed_dim=8, depth=2, heads=2, drop_path_rate=0.0)


def rand(shape, seed=0):
    return np.random.default_rng(seed).normal(size=shape)


def images(n, size=32, seed=0):
    return np.random.default_rng(seed).random((n, 3, size, size)).astype(np.float32)


def perturb(module, seed=0, scale=0.2):
    g = np.random.default_rng(seed)
    for p in module.parameters():
        p.data = p.data + g.normal(0, scale, p.shape).astype(p.data.dtype)


# -- attention -------------------------------------------------------------------

def attention64(dim=4, heads=1, seed=0):
    a = Attention(dim, heads, Rng(seed))
    a.astype(np.float64)
    perturb(a, seed)
    return a


def test_single_token_attention_is_value_projection():
    a = attention64()
    x = rand((1, 1, 4))
    out, w = a(Tensor(x), return_weights=True)
    assert np.all(w.data == 1.0)
    v = (x @ a.qkv.weight.data + a.qkv.bias.data)[..., 8:]
    np.testing.assert_allclose(out.data, v @ a.proj.weight.data + a.proj.bias.data, atol=1e-12)


def test_zero_query_key_gives_uniform_attention():
    a = attention64(seed=1)
    a.qkv.weight.data[:, :8] = 0
    a.qkv.bias.data[:8] = 0
    x = rand((1, 5, 4), 2)
    out, w = a(Tensor(x), return_weights=True)
    np.testing.assert_allclose(w.data, 0.2, atol=1e-12)
    v = (x @ a.qkv.weight.data + a.qkv.bias.data)[..., 8:]
    ref = v.mean(axis=1, keepdims=True) @ a.proj.weight.data + a.proj.bias.data
    np.testing.assert_allclose(out.data, np.broadcast_to(ref, out.shape), atol=1e-12)


def test_attention_matches_matrix_oracle():
    a = attention64(seed=3)
    x = rand((3, 4), 4)
    qkv = x @ a.qkv.weight.data + a.qkv.bias.data
    q, k, v = qkv[:, :4], qkv[:, 4:8], qkv[:, 8:]
    s = q @ k.T / np.sqrt(4)
    p = np.exp(s - s.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    ref = (p @ v) @ a.proj.weight.data + a.proj.bias.data
    np.testing.assert_allclose(a(Tensor(x[None])).data[0], ref, atol=1e-5)


def test_attention_rows_sum_to_one():
    a = Attention(16, 4, Rng(0))
    perturb(a, 5, 1.0)
    _, w = a(Tensor(rand((2, 9, 16), 6).astype(np.float32)), return_weights=True)
    np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-6)


def test_attention_block_preserves_shape():
    blk = Block(8, 2, 16, 0.0, Rng(0))
    blk.eval()
    assert attention_block(blk, rand((5, 8)).astype(np.float32)).shape == (5, 8)
    assert attention_block(blk, rand((2, 5, 8)).astype(np.float32)).shape == (2, 5, 8)
    with pytest.raises(ShapeError):
        blk(Tensor(rand((5, 8))))


# -- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(image_size=30), dict(embed_dim=66), dict(drop_path_schedule=(0.1,))])
def test_vit_config_validation(bad):
    with pytest.raises(ConfigError):
        VitConfig(**bad)


def test_drop_path_schedule_linear():
    sched = VitConfig(depth=6, drop_path_rate=0.1).drop_path_schedule
    np.testing.assert_allclose(sched, np.linspace(0, 0.1, 6))


# -- host model ------------------------------------------------------------------

def test_zero_head_gives_zero_logits():
    m = HostModel(VitConfig(), Rng(0))
    assert not forward_classify(m, images(2)).any()


def test_identical_images_identical_rows():
    m = HostModel(VitConfig(**SMALL), Rng(0))
    perturb(m, 1)
    x = np.repeat(images(1, 8), 2, axis=0)
    logits = forward_classify(m, x)
    np.testing.assert_array_equal(logits[0], logits[1])


def test_batch_permutation_equivariance():
    m = HostModel(VitConfig(**SMALL), Rng(0))
    perturb(m, 2)
    m.insert_adanca(1, AdaNCAConfig(channels=8))
    x = images(5, 8, 3)
    perm = np.array([3, 0, 4, 1, 2])
    np.testing.assert_allclose(forward_classify(m, x[perm]), forward_classify(m, x)[perm], atol=1e-6)


def test_wrong_image_shape():
    m = HostModel(VitConfig(**SMALL), Rng(0))
    with pytest.raises(ShapeError):
        forward_classify(m, images(1, 16))


def test_test_mode_bit_identical_across_runs():
    out = []
    for _ in range(2):
        m = HostModel(VitConfig(), Rng(7))
        perturb(m, 3, 0.05)
        m.insert_adanca(3, AdaNCAConfig(channels=64), Rng(8))
        perturb(m.adaptors["3"], 4, 0.05)
        out.append(forward_classify(m, images(4, seed=9)))
    assert out[0].tobytes() == out[1].tobytes()


def test_train_mode_is_stochastic_and_seeded():
    m = HostModel(VitConfig(**SMALL, ), Rng(0))
    m = HostModel(VitConfig(image_size=8, patch_size=2, embed_dim=8, depth=2, heads=2, drop_path_rate=0.5), Rng(0))
    perturb(m, 5)
    x = images(4, 8)
    a = forward_classify(m, x, "train", Rng(1))
    b = forward_classify(m, x, "train", Rng(1))
    c = forward_classify(m, x, "train", Rng(2))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# -- adaptor insertion -------------------------------------------------------------

@pytest.mark.parametrize("position", [0, 1, 2])
def test_identity_adaptor_leaves_logits_unchanged(position):
    m = HostModel(VitConfig(**SMALL), Rng(0))
    perturb(m, 6)
    x = images(3, 8, 4)
    before = forward_classify(m, x)
    insert_adanca(m, position, AdaNCAConfig(channels=8))
    np.testing.assert_array_equal(forward_classify(m, x), before)


def test_insert_remove_parameter_accounting():
    m = HostModel(VitConfig(), Rng(0))
    host = m.num_parameters()
    cfg = AdaNCAConfig(channels=64)
    standalone = AdaNCA(cfg, Rng(1)).num_parameters()
    m.insert_adanca(3, cfg)
    assert m.num_parameters() == host + standalone
    m.remove_adanca(3)
    assert m.num_parameters() == host


def test_insert_errors():
    m = HostModel(VitConfig(**SMALL), Rng(0))
    m.insert_adanca(1, AdaNCAConfig(channels=8))
    with pytest.raises(ConfigError):
        m.insert_adanca(1, AdaNCAConfig(channels=8))
    with pytest.raises(RangeError):
        m.insert_adanca(3, AdaNCAConfig(channels=8))
    with pytest.raises(ConfigError):
        m.insert_adanca(2, AdaNCAConfig(channels=4))
    with pytest.raises(RangeError):
        m.remove_adanca(0)


def test_adaptors_kept_in_position_order():
    m = HostModel(VitConfig(**SMALL), Rng(0))
    for p in (2, 0, 1):
        m.insert_adanca(p, AdaNCAConfig(channels=8))
    assert m.adaptor_positions == [0, 1, 2]


def test_default_adaptor_overhead_below_five_percent():
    m = HostModel(VitConfig(), Rng(0))
    host, _ = count_params_flops(m)
    m.insert_adanca(3, AdaNCAConfig(channels=64, kernel_count=4, scale_count=2))
    total, _ = count_params_flops(m)
    assert (total - host) / host < 0.05


def test_linear_parameter_count():
    from adanca.numerics.module import Linear
    assert Linear(7, 5, Rng(0)).num_parameters() == 7 * 5 + 5


def test_flops_additive_and_linear_in_steps():
    m = HostModel(VitConfig(), Rng(0))
    _, host_flops = count_params_flops(m)
    m.insert_adanca(2, AdaNCAConfig(channels=64, step_range=(2, 4), test_step=2))
    _, f2 = count_params_flops(m)
    m.remove_adanca(2)
    m.insert_adanca(2, AdaNCAConfig(channels=64, step_range=(2, 4), test_step=4))
    _, f4 = count_params_flops(m)
    assert f4 - host_flops == 2 * (f2 - host_flops)
    assert f2 - host_flops == adaptor_flops(AdaNCAConfig(channels=64, step_range=(2, 4), test_step=2), 8, 8)


def test_host_flops_hand_count():
    c = VitConfig()
    N, C, Hd = 64, 64, c.hidden_dim
    per_block = 2 * N * (C * 3 * C + C * C + 2 * C * Hd) + 2 * 2 * N * N * C
    expected = 2 * N * 48 * C + 6 * per_block + 2 * C * 10
    assert count_params_flops(HostModel(c, Rng(0)))[1] == expected


# -- gradients and dumps -------------------------------------------------------------

def test_host_with_adaptor_gradient_check():
    m = HostModel(VitConfig(**SMALL), Rng(0))
    m.insert_adanca(1, AdaNCAConfig(channels=8, step_range=(2, 2)))
    m.astype(np.float64)
    perturb(m, 7, 0.1)
    m.eval()
    labels = np.array([1, 3])
    f = lambda x: F.cross_entropy(m(x), labels)  # noqa: E731
    worst = 0.0
    for k in range(10):
        x = np.random.default_rng(50 + k).random((2, 3, 8, 8))
        coords = np.random.default_rng(k).choice(x.size, 24, replace=False)
        worst = max(worst, finite_difference_check(f, x, step=1e-5, coords=coords))
    assert worst < 1e-3


def test_activation_dump_shapes_and_batching():
    m = HostModel(VitConfig(**SMALL), Rng(0))
    perturb(m, 8)
    x = images(5, 8)
    dump = activation_dump(m, x, batch_size=2)
    assert sorted(dump) == ["block.1.out", "block.2.out"]
    assert dump["block.1.out"].shape == (5, 16, 8)
    np.testing.assert_allclose(activation_dump(m, x, batch_size=5)["block.2.out"], dump["block.2.out"], atol=1e-6)

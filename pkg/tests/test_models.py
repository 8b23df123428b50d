import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brsr.autodiff import Tensor, no_grad
from brsr.autodiff import functional as F
from brsr.models import (Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, ResDownBlock, ResUpBlock,
                         config_from_dict, count_parameters)


@pytest.fixture(scope="module")
def gen():
    g = Generator(seed=0)
    g.eval()
    return g


@pytest.fixture(scope="module")
def disc():
    return Discriminator(seed=0)


def _x(rng, b=2, length=1024):
    return Tensor(rng.uniform(-1, 1, (b, 2, length)).astype(np.float32))


def test_generator_shapes(gen, rng):
    x = _x(rng)
    with no_grad():
        out = gen(x)
        feats = gen.encode(x)
    assert out.shape == (2, 2, 1024)
    assert [f.shape[-1] for f in feats] == [1024, 512, 256, 128, 64, 32]
    assert len(gen.encoder) == 5 and len(gen.decoder) == 5


@settings(max_examples=6)
@given(st.integers(5, 11))
def test_shape_round_trip(gen, k):
    x = Tensor(np.zeros((1, 2, 2 ** k), np.float32))
    with no_grad():
        assert gen(x).shape == (1, 2, 2 ** k)


def test_bad_shapes(gen, disc):
    with pytest.raises(ValueError):
        gen(Tensor(np.zeros((1, 3, 1024), np.float32)))
    with pytest.raises(ValueError):
        gen(Tensor(np.zeros((1, 2, 1000), np.float32)))
    with pytest.raises(ValueError):
        disc(Tensor(np.zeros((2, 1024), np.float32)))
    with pytest.raises(ValueError):
        ResDownBlock(2, 4, rng=np.random.default_rng(0))(Tensor(np.zeros((1, 2, 7))))


def test_block_lengths(rng):
    x = _x(rng, 1)
    assert ResDownBlock(2, 4, rng=rng)(x).shape == (1, 4, 512)
    assert ResUpBlock(2, 4, rng=rng)(x).shape == (1, 4, 2048)


def test_parameter_counts():
    g, d = count_parameters(Generator()), count_parameters(Discriminator())
    assert abs(g - 275_520) <= 0.2 * 275_520
    assert abs(d - 82_610) <= 0.2 * 82_610


def _selfonn_parts(model):
    """(Self-ONN weight scalars, everything else) for a model."""
    onn = sum(p.data.size for n, p in model.named_parameters() if p.data.ndim == 4)
    return onn, count_parameters(model) - onn


def test_q1_count_structure():
    for cls, cfg in ((Generator, GeneratorConfig), (Discriminator, DiscriminatorConfig)):
        w3, rest3 = _selfonn_parts(cls(cfg(q=3)))
        w1, rest1 = _selfonn_parts(cls(cfg(q=1)))
        assert w3 == 3 * w1
        assert rest3 == rest1


def test_zero_weight_identity_shortcut(rng):
    blk = ResDownBlock(3, 3, rng=rng, dtype=np.float64)
    assert blk.shortcut is None
    blk.main.weight.data[:] = 0.0
    x = Tensor(rng.uniform(-1, 1, (2, 3, 16)))
    expected = F.tanh(F.instance_norm(F.subsample(x, 2))).data
    np.testing.assert_allclose(blk(x).data, expected, atol=1e-12)
    up = ResUpBlock(3, 3, rng=rng, dtype=np.float64)
    up.main.weight.data[:] = 0.0
    expected = F.tanh(F.instance_norm(F.upsample_nearest(x, 2))).data
    np.testing.assert_allclose(up(x).data, expected, atol=1e-12)


def test_fused_shortcut_matches_separate_paths(rng):
    blk = ResDownBlock(2, 5, rng=rng, dtype=np.float64)
    blk.main.bias.data[:] = rng.standard_normal(5)
    blk.shortcut.bias.data[:] = rng.standard_normal(5)
    x = Tensor(rng.uniform(-1, 1, (2, 2, 16)))
    separate = F.tanh(F.instance_norm(blk.main(x) + blk.shortcut(x))).data
    np.testing.assert_allclose(blk(x).data, separate, atol=1e-12)


def test_discriminator_output_and_permutation(disc, rng):
    x = _x(rng, 4)
    with no_grad():
        s = disc(x).data
        perm = np.array([2, 0, 3, 1])
        sp = disc(Tensor(x.data[perm])).data
    assert s.shape == (4, 1)
    np.testing.assert_allclose(sp, s[perm], rtol=1e-5, atol=1e-6)


def test_determinism(rng):
    x = _x(rng)
    a, b = Generator(seed=4), Generator(seed=4)
    a.eval()
    b.eval()
    with no_grad():
        np.testing.assert_array_equal(a(x).data, b(x).data)
    assert not np.array_equal(Generator(seed=5).head.weight.data, a.head.weight.data)
    np.testing.assert_array_equal(Discriminator(seed=1)(x).data, Discriminator(seed=1)(x).data)


def test_untrained_output_bounded(gen, rng):
    with no_grad():
        out = gen(_x(rng)).data
    w = gen.head.weight.data
    # features entering the head are tanh outputs or the input, all in [-1, 1]
    bound = np.abs(w).sum(axis=(1, 2)).max() + np.abs(gen.head.bias.data).max()
    assert np.all(np.isfinite(out))
    assert np.abs(out).max() <= bound


def test_skips_alone_carry_signal(rng):
    g = Generator(seed=2)
    g.eval()
    for blk in g.decoder:
        blk.main.weight.data[:] = 0.0
        blk.main.bias.data[:] = 0.0
        if blk.shortcut is not None:
            blk.shortcut.weight.data[:] = 0.0
            blk.shortcut.bias.data[:] = 0.0
    x = _x(rng)
    with no_grad():
        out = g(x).data
        zero = g(Tensor(np.zeros_like(x.data))).data
    assert np.all(np.isfinite(out))
    assert np.abs(out - zero).max() > 1e-3


def test_dropout_train_vs_eval(rng):
    g = Generator(seed=3)
    x = _x(rng, 1)
    g.train()
    with no_grad():
        t1, t2 = g(x).data, g(x).data
    g.eval()
    with no_grad():
        e1, e2 = g(x).data, g(x).data
    assert not np.array_equal(t1, t2)
    np.testing.assert_array_equal(e1, e2)


def test_config_round_trip():
    for cfg in (GeneratorConfig(q=2), DiscriminatorConfig(channels=[4, 4, 4, 4, 4, 4])):
        assert config_from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        GeneratorConfig(encoder_channels=[8, 8, 8])
    with pytest.raises(ValueError):
        DiscriminatorConfig(channels=[8])

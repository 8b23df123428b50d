import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brsr.autodiff import Tensor
from brsr.losses import (LossWeights, SpectrogramConfig, discriminator_loss, generator_loss, hann,
                         power_spectrogram, spectrogram, stft)


def naive_stft(x, window, hop):
    """O(N^2) DFT of each frame of I + jQ, phase referenced to the frame start."""
    z = x[0] + 1j * x[1]
    n = len(window)
    frames = []
    for s in range(0, len(z) - n + 1, hop):
        seg = z[s:s + n] * window
        frames.append([sum(seg[m] * np.exp(-2j * np.pi * k * m / n) for m in range(n)) for k in range(n)])
    return np.array(frames)


def _complex(t):
    d = t.data
    return d[:, 0] + 1j * d[:, 1]


def test_window():
    w = hann(64)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w[1:], w[1:][::-1], atol=1e-15)
    with pytest.raises(ValueError):
        SpectrogramConfig(n_fft=16, hop=32)
    with pytest.raises(ValueError):
        LossWeights(-1.0, 0.0)


def test_default_frame_count():
    assert SpectrogramConfig().n_frames(1024) == 61
    assert stft(np.zeros((2, 1024))).shape == (1, 2, 61, 64)


def test_matches_naive_dft(rng):
    x = rng.standard_normal((2, 40))
    cfg = SpectrogramConfig(n_fft=16, hop=8)
    np.testing.assert_allclose(_complex(stft(x, cfg))[0], naive_stft(x, cfg.window_array(), 8), atol=1e-10)


def test_zero_signal():
    z = np.zeros((2, 128))
    assert not stft(z).data.any()
    s = spectrogram(z).data
    assert np.all(np.isfinite(s)) and not s.any()


def test_constant_rect_window_dc_only():
    x = np.stack([np.full(128, 0.3), np.full(128, -0.7)])
    spec = power_spectrogram(x, SpectrogramConfig(64, 16, window="rect")).data[0]
    assert np.all(spec[:, 1:] < 1e-20)
    np.testing.assert_allclose(spec[:, 0], (64 * 0.3) ** 2 + (64 * 0.7) ** 2)


@given(st.integers(0, 2**16))
@settings(max_examples=10)
def test_parseval(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 256))
    cfg = SpectrogramConfig()
    power = power_spectrogram(x, cfg).data[0]
    w = cfg.window_array()
    z = x[0] + 1j * x[1]
    for f in range(power.shape[0]):
        energy = np.sum(np.abs(z[16 * f:16 * f + 64] * w) ** 2)
        assert abs(power[f].sum() / 64 - energy) < 1e-6 * max(1.0, energy)


@given(st.integers(0, 2**16), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=15)
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 2, 128))
    np.testing.assert_allclose(stft(a * u + b * v).data, a * stft(u).data + b * stft(v).data, atol=1e-6)


@given(st.integers(0, 2**16), st.floats(1e-3, 1e3))
@settings(max_examples=15)
def test_scale_invariance(seed, c):
    x = np.random.default_rng(seed).standard_normal((2, 256))
    np.testing.assert_allclose(power_spectrogram(c * x).data, c * c * power_spectrogram(x).data, rtol=1e-9)
    np.testing.assert_allclose(spectrogram(c * x).data, spectrogram(x).data, rtol=1e-9, atol=1e-15)
    assert spectrogram(x).data.max() == pytest.approx(1.0)


def test_single_tone_dominant_row():
    n = np.arange(512)
    z = np.exp(2j * np.pi * 10 / 64 * n)
    s = spectrogram(np.stack([z.real, z.imag])).data[0]
    assert np.all(s.argmax(axis=1) == 10)
    # on-bin tone under Hann: neighbours hold a quarter of the peak, the rest nothing
    np.testing.assert_allclose(s[:, [9, 11]], 0.25, rtol=1e-9)
    assert np.delete(s, [9, 10, 11], axis=1).max() < 1e-20


# -- objectives ---------------------------------------------------------------

def test_generator_loss_trivial_cases(rng):
    x = rng.uniform(-1, 1, (3, 2, 128))
    assert generator_loss(Tensor(x), x, Tensor(np.ones((3, 1)))).total.item() == 0.0
    assert generator_loss(Tensor(x), x, Tensor(np.zeros((3, 1)))).total.item() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        generator_loss(Tensor(x), x[:, :, :64], Tensor(np.ones((3, 1))))


def _brute_force_lg(xt, x, d, lt, lf, n, hop):
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    adv = np.mean([(v - 1.0) ** 2 for v in d.ravel()])
    time = np.mean(np.abs(xt - x))
    diffs = []
    for b in range(x.shape[0]):
        sa = np.abs(naive_stft(xt[b], win, hop)) ** 2
        sb = np.abs(naive_stft(x[b], win, hop)) ** 2
        diffs.append(np.abs(sa / max(sa.max(), 1e-12) - sb / max(sb.max(), 1e-12)))
    return adv + lt * time + lf * np.mean(diffs)


def test_generator_loss_hand_sized(rng):
    xt = rng.uniform(-1, 1, (2, 2, 8))
    x = rng.uniform(-1, 1, (2, 2, 8))
    d = rng.standard_normal((2, 1))
    cfg = SpectrogramConfig(n_fft=4, hop=2)
    got = generator_loss(Tensor(xt), x, Tensor(d), LossWeights(100.0, 200.0), cfg)
    assert got.total.item() == pytest.approx(_brute_force_lg(xt, x, d, 100.0, 200.0, 4, 2), rel=1e-12)
    assert got.total.item() == pytest.approx(got.adv + 100 * got.time + 200 * got.freq, rel=1e-12)


@given(st.integers(0, 2**16))
@settings(max_examples=15)
def test_loss_terms_nonnegative(seed):
    rng = np.random.default_rng(seed)
    xt, x = rng.uniform(-1, 1, (2, 2, 2, 64))
    out = generator_loss(Tensor(xt), x, Tensor(rng.standard_normal((2, 1))), spec_config=SpectrogramConfig(16, 8))
    assert out.adv >= 0 and out.time > 0 and out.freq >= 0


def test_time_only_skips_spectrogram(rng):
    x = rng.uniform(-1, 1, (1, 2, 64))
    out = generator_loss(Tensor(x + 0.1), x, Tensor(np.ones((1, 1))), LossWeights(100.0, 0.0))
    assert out.freq == 0.0
    assert out.total.item() == pytest.approx(10.0)


def test_discriminator_loss(rng):
    assert discriminator_loss(Tensor(np.ones((4, 1))), Tensor(np.zeros((4, 1)))).item() == 0.0
    assert discriminator_loss(Tensor(np.zeros((4, 1))), Tensor(np.ones((4, 1)))).item() == 2.0
    r, f = rng.standard_normal((2, 5, 1))
    expected = sum((v - 1) ** 2 for v in r.ravel()) / 5 + sum(v * v for v in f.ravel()) / 5
    assert discriminator_loss(Tensor(r), Tensor(f)).item() == pytest.approx(expected, rel=1e-12)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brsr.autodiff import Tensor, gradient_check
from brsr.autodiff import functional as F
from brsr.selfonn import Conv1d, SelfOnn1d, SelfOnnLayerConfig, selfonn_forward, selfonn_param_count


def naive_selfonn(x, w, b, stride=1):
    """Direct loop over output position, channel, tap and power."""
    bsz, cin, length = x.shape
    cout, _, k, q = w.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    n_out = (length + 2 * pad - k) // stride + 1
    out = np.zeros((bsz, cout, n_out))
    for n in range(bsz):
        for o in range(cout):
            for t in range(n_out):
                acc = 0.0 if b is None else b[o]
                for c in range(cin):
                    for r in range(k):
                        v = xp[n, c, t * stride + r]
                        for p in range(q):
                            acc += w[o, c, r, p] * v ** (p + 1)
                out[n, o, t] = acc
    return out


layer_dims = st.tuples(st.integers(1, 3), st.integers(1, 3), st.sampled_from([1, 3, 5]), st.integers(1, 4),
                       st.sampled_from([1, 2]), st.integers(3, 12))


def _draw(dims, seed):
    cin, cout, k, q, stride, length = dims
    rng = np.random.default_rng(seed)
    cfg = SelfOnnLayerConfig(cin, cout, k, q, stride)
    x = rng.uniform(-1, 1, (2, cin, length))
    return cfg, x, rng.standard_normal(cfg.weight_shape), rng.standard_normal(cout)


@given(dims=layer_dims, seed=st.integers(0, 2**16))
def test_matches_naive_loop(dims, seed):
    cfg, x, w, b = _draw(dims, seed)
    out = selfonn_forward(Tensor(x), cfg, Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(out, naive_selfonn(x, w, b, cfg.stride), atol=1e-10)


@given(dims=layer_dims, seed=st.integers(0, 2**16))
def test_q1_is_plain_convolution(dims, seed):
    cfg, x, w, b = _draw(dims, seed)
    cfg1 = SelfOnnLayerConfig(cfg.in_channels, cfg.out_channels, cfg.kernel_size, 1, cfg.stride)
    w1 = w[..., :1]
    out = selfonn_forward(Tensor(x), cfg1, Tensor(w1), Tensor(b)).data
    ref = F.conv1d(Tensor(x), Tensor(w1[..., 0]), Tensor(b), stride=cfg.stride).data
    assert np.max(np.abs(out - ref)) < 1e-6


@given(dims=layer_dims, seed=st.integers(0, 2**16))
def test_linear_in_weights(dims, seed):
    cfg, x, wa, _ = _draw(dims, seed)
    wb = np.random.default_rng(seed + 1).standard_normal(cfg.weight_shape)
    zero = Tensor(np.zeros(cfg.out_channels))
    f = lambda w: selfonn_forward(Tensor(x), cfg, Tensor(w), zero).data  # noqa: E731
    np.testing.assert_allclose(f(wa + wb), f(wa) + f(wb), atol=1e-6)


@given(dims=layer_dims, seed=st.integers(0, 2**16))
def test_zeroing_higher_powers_gives_q1(dims, seed):
    cfg, x, w, b = _draw(dims, seed)
    w0 = w.copy()
    w0[..., 1:] = 0.0
    cfg1 = SelfOnnLayerConfig(cfg.in_channels, cfg.out_channels, cfg.kernel_size, 1, cfg.stride)
    full = selfonn_forward(Tensor(x), cfg, Tensor(w0), Tensor(b)).data
    q1 = selfonn_forward(Tensor(x), cfg1, Tensor(w0[..., :1].copy()), Tensor(b)).data
    np.testing.assert_allclose(full, q1, atol=1e-12)


def test_hand_example():
    cfg = SelfOnnLayerConfig(1, 1, 1, 2)
    w = Tensor(np.array([1.0, 0.5]).reshape(1, 1, 1, 2))
    out = selfonn_forward(Tensor(np.full((1, 1, 4), 0.2)), cfg, w, Tensor(np.zeros(1)))
    np.testing.assert_allclose(out.data, 0.22, atol=1e-15)


def test_zero_input_gives_bias(rng):
    cfg = SelfOnnLayerConfig(3, 4, 3, 3)
    b = rng.standard_normal(4)
    out = selfonn_forward(Tensor(np.zeros((2, 3, 10))), cfg, Tensor(rng.standard_normal(cfg.weight_shape)), Tensor(b))
    np.testing.assert_array_equal(out.data, np.broadcast_to(b[None, :, None], out.shape))


def test_param_count():
    assert selfonn_param_count(SelfOnnLayerConfig(2, 16, 3, 3)) == 304
    layer = SelfOnn1d(SelfOnnLayerConfig(2, 16, 3, 3), np.random.default_rng(0))
    assert sum(p.data.size for p in layer.parameters()) == 304
    conv = Conv1d(2, 16, 3, np.random.default_rng(0))
    assert selfonn_param_count(SelfOnnLayerConfig(2, 16, 3, 1)) == sum(p.data.size for p in conv.parameters())
    assert selfonn_param_count(SelfOnnLayerConfig(2, 16, 3, 3, has_bias=False)) == 288


def test_config_errors(rng):
    with pytest.raises(ValueError):
        SelfOnnLayerConfig(1, 1, 3, 0)
    with pytest.raises(ValueError):
        SelfOnnLayerConfig(1, 1, 0, 3)
    cfg = SelfOnnLayerConfig(2, 2, 3, 3)
    with pytest.raises(ValueError):
        selfonn_forward(Tensor(np.zeros((1, 2, 8))), cfg, Tensor(np.zeros((2, 2, 3, 2))))


def test_xavier_bounds_use_powers_as_fan_in():
    cfg = SelfOnnLayerConfig(16, 32, 3, 3)
    w = SelfOnn1d(cfg, np.random.default_rng(0), np.float64).weight.data
    bound = np.sqrt(6.0 / (16 * 9 + 32 * 9))
    assert np.abs(w).max() <= bound
    assert np.abs(w).max() > 0.95 * bound
    assert w.std() == pytest.approx(bound / np.sqrt(3), rel=0.05)


def test_untrained_layer_does_not_saturate():
    layer = SelfOnn1d(SelfOnnLayerConfig(16, 16, 3, 3), np.random.default_rng(0), np.float64)
    x = np.random.default_rng(1).uniform(-1, 1, (4, 16, 256))
    y = np.tanh(layer(Tensor(x)).data)
    assert np.mean(np.abs(y) > 0.99) < 0.01


@pytest.mark.parametrize("q", [1, 2, 3])
def test_weight_slices_gradcheck(q):
    rng = np.random.default_rng(q)
    layer = SelfOnn1d(SelfOnnLayerConfig(2, 3, 3, q, 2), rng, np.float64)
    x = Tensor(rng.uniform(-1, 1, (2, 2, 9)), requires_grad=True)
    r = rng.standard_normal((2, 3, 5))
    rep = gradient_check(lambda: F.sum(F.mul(layer(x), Tensor(r))), [x, layer.weight, layer.bias])
    assert rep.passed, rep


def test_serialized_names():
    from brsr.models import Generator
    names = [n for n, _ in Generator().named_parameters()]
    assert all(n.endswith((".weight", ".bias")) for n in names)
    assert len(set(names)) == len(names)

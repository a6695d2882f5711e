"""Layer forward identities and finite-difference gradient verification."""

import numpy as np
import pytest

from depthnav.errors import ShapeError
from depthnav.nn import (
    Activation,
    Conv2d,
    Deconv2d,
    Dense,
    Flatten,
    GRUCell,
    Reshape,
    Sequential,
    backward,
    conv_out_hw,
    forward,
    max_param_error,
    sample_latent,
    sample_latent_backward,
)

F64 = np.float64


def test_identity_dense_layer_passes_vector_through():
    layer = Dense(4, 4, name="d")
    layer.params["weight"][...] = np.eye(4, dtype=np.float32)
    layer.params["bias"][...] = 0.0
    x = np.array([[1.0, -2.0, 3.0, 0.5]], dtype=np.float32)
    assert np.allclose(layer.forward(x), x)


def test_one_by_one_conv_is_pixelwise_linear():
    layer = Conv2d(1, 1, kernel=(1, 1), stride=1, name="c")
    layer.params["weight"][...] = 2.0
    layer.params["bias"][...] = 0.0
    x = np.full((1, 1, 5, 7), 3.0, dtype=np.float32)
    y = layer.forward(x)
    assert np.allclose(y, 6.0)
    assert y.shape == x.shape


def test_two_layer_composition_matches_hand_arithmetic():
    # dense [ [1, 2], [-1, 0] ] + b [0.5, -0.5], then dense [ [2], [1] ] + b [1]
    l1 = Dense(2, 2, name="l1")
    l1.params["weight"][...] = np.array([[1.0, 2.0], [-1.0, 0.0]], np.float32)
    l1.params["bias"][...] = np.array([0.5, -0.5], np.float32)
    l2 = Dense(2, 1, name="l2")
    l2.params["weight"][...] = np.array([[2.0], [1.0]], np.float32)
    l2.params["bias"][...] = np.array([1.0], np.float32)
    net = Sequential([l1, l2])
    x = np.array([[3.0, -2.0]], np.float32)
    # h = [3*1 + (-2)(-1) + 0.5, 3*2 + 0 - 0.5] = [5.5, 5.5]
    # y = 2*5.5 + 1*5.5 + 1 = 17.5
    assert abs(float(net.forward(x)[0, 0]) - 17.5) < 1e-6


def test_forward_rejects_channel_mismatch_with_axis_diagnostics():
    layer = Conv2d(3, 4, name="c3")
    with pytest.raises(ShapeError, match="axis 1"):
        layer.forward(np.zeros((1, 2, 8, 8), np.float32))


def test_backward_before_forward_rejected():
    layer = Dense(3, 3)
    with pytest.raises(ShapeError, match="backward"):
        layer.backward(np.zeros((1, 3), np.float32))


def test_conv_then_matched_deconv_restores_spatial_dims():
    rng = np.random.default_rng(0)
    for hw in [(60, 80), (15, 20), (7, 9), (5, 5)]:
        for stride in (1, 2):
            conv = Conv2d(1, 3, (3, 3), stride, rng=rng)
            out_hw = conv_out_hw(hw, (3, 3), stride, 1)
            deconv = Deconv2d(3, 1, out_hw=hw, kernel=(3, 3), stride=stride, rng=rng)
            x = rng.standard_normal((2, 1, *hw)).astype(np.float32)
            y = deconv.forward(conv.forward(x))
            assert y.shape == x.shape


def test_forward_is_deterministic():
    rng = np.random.default_rng(3)
    net = Sequential([Conv2d(1, 4, (3, 3), 2, rng=rng, name="c"),
                      Activation("lrelu", name="a"), Flatten(name="f")])
    x = rng.standard_normal((2, 1, 10, 12)).astype(np.float32)
    assert np.array_equal(forward(net, x), forward(net, x))


def _loss_grads(layer, x, probe):
    """Scalar loss sum(out * probe); returns (loss, param grad copies)."""
    def fn():
        layer.zero_grad()
        if isinstance(layer, GRUCell):
            layer.reset()
            h0 = np.zeros((x.shape[0], layer.hidden))
            h1 = layer.forward(x, h0)
            h2 = layer.forward(x * 0.5, h1)
            loss = float((h2 * probe).sum())
            _, dh = layer.backward(probe.astype(F64))
            layer.backward(dh)
        else:
            y = layer.forward(x)
            loss = float((y * probe).sum())
            layer.backward(probe.astype(F64))
        return loss, {k: v.copy() for k, v in layer.grads.items()}
    return fn


LAYER_CASES = [
    ("dense", lambda rng: Dense(6, 5, rng=rng, dtype=F64), (3, 6)),
    ("conv_s1", lambda rng: Conv2d(2, 3, (3, 3), 1, rng=rng, dtype=F64), (2, 2, 6, 7)),
    ("conv_s2", lambda rng: Conv2d(2, 4, (3, 3), 2, rng=rng, dtype=F64), (2, 2, 9, 8)),
    ("deconv_s2", lambda rng: Deconv2d(3, 2, out_hw=(9, 8), kernel=(3, 3), stride=2,
                                       rng=rng, dtype=F64), (2, 3, 5, 4)),
    ("gru", lambda rng: GRUCell(4, 5, rng=rng, dtype=F64), (3, 4)),
]


@pytest.mark.parametrize("name,factory,x_shape", LAYER_CASES)
def test_layer_gradients_match_finite_differences(name, factory, x_shape):
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        layer = factory(rng)
        x = rng.standard_normal(x_shape)
        if isinstance(layer, GRUCell):
            probe = rng.standard_normal((x_shape[0], layer.hidden))
        else:
            layer._cache = None
            probe = rng.standard_normal(layer.forward(x).shape)
            layer._cache = None
        err = max_param_error(_loss_grads(layer, x, probe), layer.params)
        worst = max(worst, err)
    assert worst < 1e-4, f"{name}: max relative error {worst}"


@pytest.mark.parametrize("fn", ["lrelu", "sigmoid", "tanh"])
def test_activation_gradients_match_finite_differences(fn):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        act = Activation(fn, dtype=F64)
        # keep inputs away from the lrelu kink so central differences are clean
        x = rng.standard_normal((4, 6))
        x = np.where(np.abs(x) < 0.05, 0.3, x)
        probe = rng.standard_normal(x.shape)

        def loss():
            return float((act.forward(x) * probe).sum())

        act.forward(x)
        analytic = act.backward(probe)
        h = 1e-3
        numeric = np.zeros_like(x)
        for i in np.ndindex(x.shape):
            orig = x[i]
            x[i] = orig + h
            lp = loss()
            x[i] = orig - h
            lm = loss()
            x[i] = orig
            numeric[i] = (lp - lm) / (2 * h)
        err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-8)
        assert err.max() < 1e-4


def test_weight_gradient_of_dense_matches_closed_form():
    # y = w x with x = 2, dL/dy = 1 -> dL/dw = x = 2
    layer = Dense(1, 1, name="d")
    layer.params["weight"][...] = 5.0
    layer.params["bias"][...] = 0.0
    layer.forward(np.array([[2.0]], np.float32))
    layer.backward(np.array([[1.0]], np.float32))
    assert abs(float(layer.grads["weight"][0, 0]) - 2.0) < 1e-6


def test_flatten_reshape_are_exact_inverses():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 2, 4, 5)).astype(np.float32)
    flat = Flatten()
    resh = Reshape((2, 4, 5))
    y = resh.forward(flat.forward(x))
    assert np.array_equal(x, y)
    dy = rng.standard_normal(y.shape).astype(np.float32)
    assert np.array_equal(flat.backward(resh.backward(dy)), dy)


def test_sample_latent_formula_and_gradients():
    mu = np.array([1.0, 0.0])
    logvar = np.array([2 * np.log(2.0), 0.0])
    eps = np.array([0.5, 0.0])
    z = sample_latent(mu, logvar, eps)
    assert abs(z[0] - 2.0) < 1e-12  # mu=1, sigma=2, eps=0.5 -> 2
    assert np.allclose(sample_latent(mu, logvar, np.zeros(2)), mu)  # eps = 0 -> mu
    # deeply negative logvar clamps to -10, i.e. sigma = e^-5: z collapses to mu
    z0 = sample_latent(mu, np.full(2, -1e9), np.array([3.0, -4.0]))
    assert np.allclose(z0, mu, atol=4.0 * np.exp(-5.0) + 1e-12)
    with pytest.raises(ShapeError):
        sample_latent(mu, logvar, np.zeros(3))
    dmu, dlv = sample_latent_backward(np.ones(2), logvar, eps)
    assert np.allclose(dmu, 1.0)
    assert abs(dlv[0] - 0.5 * 2.0 * 0.5) < 1e-12


def test_network_level_forward_backward_wrappers():
    rng = np.random.default_rng(2)
    net = Sequential([Dense(4, 3, rng=rng, name="a"), Activation("tanh", name="t")])
    x = rng.standard_normal((2, 4)).astype(np.float32)
    y = forward(net, x)
    dx = backward(net, np.ones_like(y))
    assert dx.shape == x.shape

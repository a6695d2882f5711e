"""Dense-tensor layer library with analytically derived gradients.

Tensors are C-contiguous numpy arrays, float32 by default (float64 is used
by the gradient checker as a shadow mode).  Layers cache their forward
intermediates and consume them in ``backward``; parameter gradients
accumulate in ``layer.grads`` until ``zero_grad`` is called.  There is no
general autodiff tape: every backward pass below is hand-derived.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, TrainingError

DTYPE = np.float32

LOGVAR_CLAMP = 10.0  # log-variance is clamped to [-10, 10] before exp


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description; concrete layers are built from these.

    kernel/stride are ignored for dense/activation/flatten/reshape kinds.
    """

    kind: str  # conv | deconv | dense | activation | flatten | reshape
    channels: int = 0
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    activation: str = ""

    def __post_init__(self):
        if self.kind in ("conv", "deconv"):
            if self.stride < 1:
                raise ShapeError(f"{self.kind}: stride must be >= 1, got {self.stride}")
            if min(self.kernel) < 1:
                raise ShapeError(f"{self.kind}: kernel dims must be >= 1, got {self.kernel}")


class Layer:
    """Base layer: holds named parameters and their gradient accumulators."""

    name = "layer"
    kind = "layer"
    stride = 1

    def __init__(self, dtype=DTYPE):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def _register(self, **arrays) -> None:
        for key, value in arrays.items():
            self.params[key] = np.ascontiguousarray(value, dtype=self.dtype)
            self.grads[key] = np.zeros_like(self.params[key])

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise ShapeError(f"{self.name}: backward called before forward")
        cache, self._cache = self._cache, None
        return cache


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """Unfold (N,C,H,W) into patch columns of shape (N, C*kh*kw, Ho*Wo)."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv: kernel {kh}x{kw} larger than padded input {h}x{w}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: fold patch columns back, summing overlaps."""
    n, c, h, w = x_shape
    howo = cols.shape[2]
    ho = (h + 2 * pad - kh) // stride + 1
    wo = howo // ho
    cols6 = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols6[:, :, i, j]
    if pad:
        return xp[:, :, pad:-pad, pad:-pad]
    return xp


def conv_out_hw(hw, kernel, stride, pad):
    h, w = hw
    kh, kw = kernel
    return ((h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1)


class Conv2d(Layer):
    """Strided 2D convolution with zero padding (pad = k//2, "same" at stride 1)."""

    kind = "conv"

    def __init__(self, in_ch, out_ch, kernel=(3, 3), stride=1, rng=None, name="conv", dtype=DTYPE):
        super().__init__(dtype)
        self.name = name
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel = tuple(kernel)
        self.stride = stride
        self.pad = self.kernel[0] // 2
        fan_in = in_ch * self.kernel[0] * self.kernel[1]
        scale = np.sqrt(2.0 / fan_in)
        rng = rng or np.random.default_rng(0)
        self._register(
            weight=rng.standard_normal((out_ch, in_ch, *self.kernel)) * scale,
            bias=np.zeros(out_ch),
        )

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(
                f"{self.name}: expected (N,{self.in_ch},H,W), got {tuple(x.shape)} (axis 1 mismatch)"
            )
        kh, kw = self.kernel
        cols, ho, wo = _im2col(x, kh, kw, self.stride, self.pad)
        w_mat = self.params["weight"].reshape(self.out_ch, -1)
        y = np.matmul(w_mat[None], cols)  # (N, out_ch, Ho*Wo)
        y += self.params["bias"][None, :, None]
        self._cache = (x.shape, cols)
        return np.ascontiguousarray(y.reshape(x.shape[0], self.out_ch, ho, wo))

    def backward(self, dy):
        x_shape, cols = self._take_cache()
        n = dy.shape[0]
        dy_mat = dy.reshape(n, self.out_ch, -1)
        w_mat = self.params["weight"].reshape(self.out_ch, -1)
        self.grads["weight"] += np.matmul(dy_mat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(
            self.params["weight"].shape
        )
        self.grads["bias"] += dy_mat.sum(axis=(0, 2))
        dcols = np.matmul(w_mat.T[None], dy_mat)
        kh, kw = self.kernel
        return _col2im(dcols, x_shape, kh, kw, self.stride, self.pad)


class Deconv2d(Layer):
    """Transposed convolution; the target output H,W is fixed at build time
    so decoder stacks can mirror encoder shapes exactly."""

    kind = "deconv"

    def __init__(self, in_ch, out_ch, out_hw, kernel=(3, 3), stride=1, rng=None, name="deconv", dtype=DTYPE):
        super().__init__(dtype)
        self.name = name
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel = tuple(kernel)
        self.stride = stride
        self.pad = self.kernel[0] // 2
        self.out_hw = tuple(out_hw)
        fan_in = in_ch * self.kernel[0] * self.kernel[1]
        scale = np.sqrt(2.0 / fan_in)
        rng = rng or np.random.default_rng(0)
        # Weight uses the layout of the matching forward conv (in_ch plays
        # the filter axis): deconv forward == conv input-gradient.
        self._register(
            weight=rng.standard_normal((in_ch, out_ch, *self.kernel)) * scale,
            bias=np.zeros(out_ch),
        )

    def _check_geometry(self, in_hw):
        expect = conv_out_hw(self.out_hw, self.kernel, self.stride, self.pad)
        if expect != tuple(in_hw):
            raise ShapeError(
                f"{self.name}: input {in_hw} cannot deconvolve to {self.out_hw} "
                f"(stride {self.stride} would need input {expect})"
            )

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(
                f"{self.name}: expected (N,{self.in_ch},H,W), got {tuple(x.shape)} (axis 1 mismatch)"
            )
        self._check_geometry(x.shape[2:])
        n = x.shape[0]
        kh, kw = self.kernel
        w_mat = self.params["weight"].reshape(self.in_ch, -1)  # (in_ch, out_ch*kh*kw)
        x_mat = x.reshape(n, self.in_ch, -1)
        cols = np.matmul(w_mat.T[None], x_mat)  # (N, out_ch*kh*kw, Hi*Wi)
        y = _col2im(cols, (n, self.out_ch, *self.out_hw), kh, kw, self.stride, self.pad)
        y += self.params["bias"][None, :, None, None]
        self._cache = (x,)
        return y

    def backward(self, dy):
        (x,) = self._take_cache()
        n = x.shape[0]
        kh, kw = self.kernel
        cols_dy, ho, wo = _im2col(dy, kh, kw, self.stride, self.pad)
        w_mat = self.params["weight"].reshape(self.in_ch, -1)
        dx = np.matmul(w_mat[None], cols_dy).reshape(x.shape)
        x_mat = x.reshape(n, self.in_ch, -1)
        self.grads["weight"] += np.matmul(x_mat, cols_dy.transpose(0, 2, 1)).sum(axis=0).reshape(
            self.params["weight"].shape
        )
        self.grads["bias"] += dy.sum(axis=(0, 2, 3))
        return dx


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim, out_dim, rng=None, name="dense", dtype=DTYPE):
        super().__init__(dtype)
        self.name = name
        self.in_dim, self.out_dim = in_dim, out_dim
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt(2.0 / in_dim)
        self._register(
            weight=rng.standard_normal((in_dim, out_dim)) * scale,
            bias=np.zeros(out_dim),
        )

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"{self.name}: expected (N,{self.in_dim}), got {tuple(x.shape)} (axis 1 mismatch)"
            )
        self._cache = (x,)
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dy):
        (x,) = self._take_cache()
        self.grads["weight"] += x.T @ dy
        self.grads["bias"] += dy.sum(axis=0)
        return dy @ self.params["weight"].T


class Activation(Layer):
    """Elementwise nonlinearity: lrelu | sigmoid | tanh | linear."""

    kind = "activation"

    def __init__(self, fn="lrelu", slope=0.1, name=None, dtype=DTYPE):
        super().__init__(dtype)
        if fn not in ("lrelu", "sigmoid", "tanh", "linear"):
            raise ShapeError(f"unknown activation {fn!r}")
        self.fn = fn
        self.slope = slope
        self.name = name or fn
        self.last_signs = None  # branch pattern of the latest lrelu forward

    def forward(self, x):
        if self.fn == "lrelu":
            y = leaky_relu(x, self.slope)
            self.last_signs = np.packbits(x >= 0)
        elif self.fn == "sigmoid":
            y = sigmoid(x)
        elif self.fn == "tanh":
            y = np.tanh(x)
        else:
            y = x
        self._cache = (x, y)
        return y

    def backward(self, dy):
        x, y = self._take_cache()
        if self.fn == "lrelu":
            return dy * np.where(x >= 0, 1.0, self.slope).astype(dy.dtype)
        if self.fn == "sigmoid":
            return dy * y * (1.0 - y)
        if self.fn == "tanh":
            return dy * (1.0 - y * y)
        return dy


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, name="flatten", dtype=DTYPE):
        super().__init__(dtype)
        self.name = name

    def forward(self, x):
        self._cache = (x.shape,)
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        (shape,) = self._take_cache()
        return dy.reshape(shape)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, target, name="reshape", dtype=DTYPE):
        super().__init__(dtype)
        self.name = name
        self.target = tuple(target)  # per-sample shape, batch axis excluded

    def forward(self, x):
        if int(np.prod(x.shape[1:])) != int(np.prod(self.target)):
            raise ShapeError(f"{self.name}: cannot reshape {x.shape[1:]} to {self.target}")
        self._cache = (x.shape,)
        return x.reshape(x.shape[0], *self.target)

    def backward(self, dy):
        (shape,) = self._take_cache()
        return dy.reshape(shape)


class GRUCell(Layer):
    """Single gated recurrent cell.  forward() pushes onto an internal stack
    so an unrolled sequence can be backpropagated by calling backward() in
    reverse step order."""

    kind = "gru"

    def __init__(self, in_dim, hidden, rng=None, name="gru", dtype=DTYPE):
        super().__init__(dtype)
        self.name = name
        self.in_dim, self.hidden = in_dim, hidden
        rng = rng or np.random.default_rng(0)
        sx = np.sqrt(1.0 / in_dim)
        sh = np.sqrt(1.0 / hidden)
        self._register(
            wz=rng.standard_normal((in_dim, hidden)) * sx,
            wr=rng.standard_normal((in_dim, hidden)) * sx,
            wh=rng.standard_normal((in_dim, hidden)) * sx,
            uz=rng.standard_normal((hidden, hidden)) * sh,
            ur=rng.standard_normal((hidden, hidden)) * sh,
            uh=rng.standard_normal((hidden, hidden)) * sh,
            bz=np.zeros(hidden),
            br=np.zeros(hidden),
            bh=np.zeros(hidden),
        )
        self._stack = []

    def reset(self):
        self._stack = []

    def forward(self, x, h):
        p = self.params
        z = sigmoid(x @ p["wz"] + h @ p["uz"] + p["bz"])
        r = sigmoid(x @ p["wr"] + h @ p["ur"] + p["br"])
        rh = r * h
        hc = np.tanh(x @ p["wh"] + rh @ p["uh"] + p["bh"])
        h_new = (1.0 - z) * h + z * hc
        self._stack.append((x, h, z, r, rh, hc))
        return h_new

    def backward(self, dh_new):
        if not self._stack:
            raise ShapeError(f"{self.name}: backward called before forward")
        x, h, z, r, rh, hc = self._stack.pop()
        p, g = self.params, self.grads
        dz = dh_new * (hc - h)
        dhc = dh_new * z
        dh = dh_new * (1.0 - z)
        da_h = dhc * (1.0 - hc * hc)
        g["wh"] += x.T @ da_h
        g["uh"] += rh.T @ da_h
        g["bh"] += da_h.sum(axis=0)
        dx = da_h @ p["wh"].T
        drh = da_h @ p["uh"].T
        dr = drh * h
        dh += drh * r
        da_r = dr * r * (1.0 - r)
        g["wr"] += x.T @ da_r
        g["ur"] += h.T @ da_r
        g["br"] += da_r.sum(axis=0)
        dx += da_r @ p["wr"].T
        dh += da_r @ p["ur"].T
        da_z = dz * z * (1.0 - z)
        g["wz"] += x.T @ da_z
        g["uz"] += h.T @ da_z
        g["bz"] += da_z.sum(axis=0)
        dx += da_z @ p["wz"].T
        dh += da_z @ p["uz"].T
        return dx, dh


class Sequential:
    """Plain layer stack.  Parameter names are '<layer.name>.<param>'."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            for key, value in layer.params.items():
                out[f"{layer.name}.{key}"] = value
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            for key, value in layer.grads.items():
                out[f"{layer.name}.{key}"] = value
        return out

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()


def forward(network: Sequential, x: np.ndarray) -> np.ndarray:
    """Run a network forward; output is checked finite."""
    y = network.forward(x)
    if not np.all(np.isfinite(y)):
        raise TrainingError("forward produced non-finite values")
    return y


def backward(network: Sequential, dy: np.ndarray) -> np.ndarray:
    """Backpropagate an output gradient; returns the input gradient."""
    dx = network.backward(dy)
    if not np.all(np.isfinite(dx)):
        raise TrainingError("backward produced non-finite values")
    return dx


def lrelu_fingerprint(layers) -> np.ndarray:
    """Concatenated branch patterns of every lrelu in `layers` (for the
    gradient checker's kink-crossing mask)."""
    parts = [layer.last_signs for layer in layers
             if getattr(layer, "fn", "") == "lrelu" and layer.last_signs is not None]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)


def sample_latent(mu: np.ndarray, logvar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Reparameterized draw z = mu + exp(logvar/2) * eps (logvar clamped)."""
    mu, logvar, eps = np.asarray(mu), np.asarray(logvar), np.asarray(eps)
    if not (mu.shape == logvar.shape == eps.shape):
        raise ShapeError(
            f"sample_latent: mismatched shapes {mu.shape}, {logvar.shape}, {eps.shape}"
        )
    sigma = np.exp(0.5 * np.clip(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP))
    return mu + sigma * eps


def sample_latent_backward(dz: np.ndarray, logvar: np.ndarray, eps: np.ndarray):
    """Gradients of sample_latent w.r.t. mu and logvar."""
    clamped = np.clip(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    sigma = np.exp(0.5 * clamped)
    inside = ((logvar > -LOGVAR_CLAMP) & (logvar < LOGVAR_CLAMP)).astype(dz.dtype)
    dmu = dz
    dlogvar = dz * 0.5 * sigma * eps * inside
    return dmu, dlogvar

"""Small convolutional network with hand-written reverse-mode gradients.

Arrays are plain numpy ``ndarray`` objects. The public layer functions take
NCHW batches and also accept a single un-batched sample (CHW for images, a
flat vector for fully connected input). :class:`Network` runs the same
kernels on channel-first (C, N, H, W) activations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when an array does not have the extents a layer expects."""

    def __init__(self, what, expected, got):
        super().__init__(f"{what}: expected {expected}, got {got}")
        self.what = what
        self.expected = expected
        self.got = got


class StaleCacheError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Layer primitives
# ---------------------------------------------------------------------------

def _as_batch(x, ndim):
    x = np.asarray(x)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError("input rank", f"{ndim - 1} or {ndim}", x.ndim)
    return x, False


def im2col(x, kh, kw):
    """Patch matrix (C*KH*KW, N*H'*W') for a channel-first batch (C, N, H, W)."""
    c, n, h, w = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    for dy in range(kh):
        for dx in range(kw):
            cols[:, dy, dx] = x[:, :, dy:dy + ho, dx:dx + wo]
    return cols.reshape(c * kh * kw, n * ho * wo)


def col2im(cols, shape, kh, kw):
    """Adjoint of :func:`im2col`: scatter-add columns back into (C, N, H, W)."""
    c, n, h, w = shape
    ho, wo = h - kh + 1, w - kw + 1
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    out = np.zeros(shape, dtype=cols.dtype)
    for dy in range(kh):
        for dx in range(kw):
            out[:, :, dy:dy + ho, dx:dx + wo] += cols[:, dy, dx]
    return out


def _check_conv(shape, weights, bias):
    # shape is (C, H, W)
    oc, c, kh, kw = weights.shape
    if shape[0] != c:
        raise ShapeError("conv2d input channels", c, shape[0])
    if shape[1] < kh:
        raise ShapeError("conv2d input height", f">= {kh}", shape[1])
    if shape[2] < kw:
        raise ShapeError("conv2d input width", f">= {kw}", shape[2])
    if bias.shape != (oc,):
        raise ShapeError("conv2d bias", (oc,), bias.shape)


# Samples per im2col block; keeps the patch matrix small enough to stay in cache.
CONV_CHUNK = 4


def conv_cf_forward(x, weights, bias):
    """Convolution on a channel-first batch (C, N, H, W) -> (OC, N, H', W')."""
    _check_conv((x.shape[0],) + x.shape[2:], weights, bias)
    oc, c, kh, kw = weights.shape
    _, n, h, w = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    wm = weights.reshape(oc, -1)
    out = np.empty((oc, n, ho, wo), dtype=np.result_type(x, weights))
    for s in range(0, n, CONV_CHUNK):
        out[:, s:s + CONV_CHUNK] = (wm @ im2col(x[:, s:s + CONV_CHUNK], kh, kw)).reshape(oc, -1, ho, wo)
    out += bias[:, None, None, None]
    return out


def conv_cf_backward(x, weights, grad_out, need_input_grad=True):
    """Gradients for :func:`conv_cf_forward`: (grad_weights, grad_bias, grad_input or None).

    The input gradient is the full correlation of the zero-padded output
    gradient with the spatially flipped kernels.
    """
    oc, c, kh, kw = weights.shape
    n = x.shape[1]
    gw = np.zeros((oc, c * kh * kw), dtype=weights.dtype)
    gx = np.empty(x.shape, dtype=grad_out.dtype) if need_input_grad else None
    if need_input_grad:
        flipped = np.ascontiguousarray(weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)).reshape(c, -1)
    for s in range(0, n, CONV_CHUNK):
        g = grad_out[:, s:s + CONV_CHUNK]
        gw += g.reshape(oc, -1) @ im2col(x[:, s:s + CONV_CHUNK], kh, kw).T
        if need_input_grad:
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gx[:, s:s + CONV_CHUNK] = (flipped @ im2col(gp, kh, kw)).reshape(c, -1, *x.shape[2:])
    gb = grad_out.sum(axis=(1, 2, 3))
    return gw.reshape(weights.shape), gb, gx


def conv2d_forward(x, weights, bias):
    """Valid (no padding), stride-1 cross-correlation plus bias.

    ``x`` is (N, C, H, W) or (C, H, W); ``weights`` is (OC, C, KH, KW).
    """
    x, single = _as_batch(x, 4)
    _check_conv(x.shape[1:], weights, bias)
    out = conv_cf_forward(x.transpose(1, 0, 2, 3), weights, bias)
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    return out[0] if single else out


def conv2d_backward(x, weights, grad_out, need_input_grad=True):
    """Return (grad_weights, grad_bias, grad_input or None)."""
    x, single = _as_batch(x, 4)
    grad_out, _ = _as_batch(grad_out, 4)
    gw, gb, gx = conv_cf_backward(x.transpose(1, 0, 2, 3), weights, grad_out.transpose(1, 0, 2, 3),
                                  need_input_grad)
    if gx is not None:
        gx = np.ascontiguousarray(gx.transpose(1, 0, 2, 3))
        if single:
            gx = gx[0]
    return gw, gb, gx


def _pool_views(x):
    return x[..., 0::2, 0::2], x[..., 0::2, 1::2], x[..., 1::2, 0::2], x[..., 1::2, 1::2]


def maxpool2x2_forward(x):
    """2x2 max pooling with stride 2 over the last two axes.

    Returns the pooled array and the argmax map (index 0..3 inside each
    window, row-major). Ties go to the first element in that order.
    """
    x = np.asarray(x)
    if x.ndim < 2:
        raise ShapeError("maxpool2x2 input rank", ">= 2", x.ndim)
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError("maxpool2x2 spatial extent", "even", (h, w))
    r = x.reshape(x.shape[:-2] + (h // 2, 2, w // 2, 2))
    # compare within rows, then between the two row winners; ">" keeps the first on ties
    right = r[..., 1] > r[..., 0]
    rows = np.maximum(r[..., 0], r[..., 1])
    lower = rows[..., 1, :] > rows[..., 0, :]
    out = np.maximum(rows[..., 0, :], rows[..., 1, :])
    argmax = np.where(lower, 2 + right[..., 1, :], right[..., 0, :]).astype(np.uint8)
    return out, argmax


def maxpool2x2_backward(grad_out, argmax):
    grad_out = np.asarray(grad_out)
    if grad_out.shape != argmax.shape:
        raise ShapeError("maxpool2x2 gradient", argmax.shape, grad_out.shape)
    h2, w2 = grad_out.shape[-2:]
    gx = np.empty(grad_out.shape[:-2] + (2 * h2, 2 * w2), dtype=grad_out.dtype)
    for k, view in enumerate(_pool_views(gx)):
        np.multiply(grad_out, argmax == k, out=view)
    return gx


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(out, grad_out):
    # gradient is 0 wherever the forward output was 0, including x == 0
    return grad_out * (out > 0)


def fully_forward(x, weights, bias):
    """``weights @ x + bias`` for x of shape (N,) or (B, N)."""
    x, single = _as_batch(x, 2)
    m, n = weights.shape
    if x.shape[1] != n:
        raise ShapeError("fully input length", n, x.shape[1])
    if bias.shape != (m,):
        raise ShapeError("fully bias", (m,), bias.shape)
    out = x @ weights.T + bias
    return out[0] if single else out


def fully_backward(x, weights, grad_out):
    x, single = _as_batch(x, 2)
    grad_out, _ = _as_batch(grad_out, 2)
    gw = grad_out.T @ x
    gb = grad_out.sum(axis=0)
    gx = grad_out @ weights
    return gw, gb, gx[0] if single else gx


# ---------------------------------------------------------------------------
# Network description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel_h: int
    kernel_w: int


@dataclass(frozen=True)
class MaxPool2x2:
    pass


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Fully:
    out_dim: int


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    layers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.layer_shapes()  # validates
        if not self.layers or not isinstance(self.layers[-1], Fully):
            raise ValueError("last layer must be Fully (linear output)")

    @property
    def descriptor_dim(self):
        return self.layers[-1].out_dim

    def layer_shapes(self):
        """Output shape after every layer; raises on inconsistent chains."""
        shape = self.input_shape
        shapes = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: Conv after Fully")
                c, h, w = shape
                if h < layer.kernel_h or w < layer.kernel_w:
                    raise ValueError(f"layer {i}: kernel larger than input {shape}")
                shape = (layer.out_channels, h - layer.kernel_h + 1, w - layer.kernel_w + 1)
            elif isinstance(layer, MaxPool2x2):
                if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                    raise ValueError(f"layer {i}: MaxPool2x2 needs even extents, got {shape}")
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif isinstance(layer, ReLU):
                pass
            elif isinstance(layer, Fully):
                shape = (layer.out_dim,)
            else:
                raise TypeError(f"unknown layer {layer!r}")
            shapes.append(shape)
        return shapes


def default_network_spec(channels=1, size=64, descriptor_dim=16,
                         conv1=(16, 9, 9), conv2=(7, 5, 5), hidden=256):
    """Two conv+pool+ReLU stages followed by a ReLU hidden layer and a linear output."""
    return NetworkSpec(
        (channels, size, size),
        (Conv(*conv1), MaxPool2x2(), ReLU(),
         Conv(*conv2), MaxPool2x2(), ReLU(),
         Fully(hidden), ReLU(),
         Fully(descriptor_dim)),
    )


# ---------------------------------------------------------------------------
# Parameters and the composed network
# ---------------------------------------------------------------------------

@dataclass
class Parameters:
    """Flat list of weight/bias arrays, ordered (w0, b0, w1, b1, ...)."""

    tensors: list
    is_bias: list
    velocity: list = field(default=None)

    def __post_init__(self):
        if self.velocity is None:
            self.velocity = [np.zeros_like(t) for t in self.tensors]

    def astype(self, dtype):
        return Parameters([t.astype(dtype) for t in self.tensors], list(self.is_bias),
                          [v.astype(dtype) for v in self.velocity])

    def copy(self):
        return self.astype(self.tensors[0].dtype)


def init_parameters(spec, rng, dtype=np.float32):
    """Glorot-uniform weights, zero biases."""
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = np.random.default_rng(rng)
    tensors, is_bias = [], []
    shape = spec.input_shape
    for layer, out_shape in zip(spec.layers, spec.layer_shapes()):
        if isinstance(layer, Conv):
            c = shape[0]
            fan_in = c * layer.kernel_h * layer.kernel_w
            fan_out = layer.out_channels * layer.kernel_h * layer.kernel_w
            wshape = (layer.out_channels, c, layer.kernel_h, layer.kernel_w)
            nb = layer.out_channels
        elif isinstance(layer, Fully):
            n_in = int(np.prod(shape))
            fan_in, fan_out = n_in, layer.out_dim
            wshape = (layer.out_dim, n_in)
            nb = layer.out_dim
        else:
            shape = out_shape
            continue
        a = np.sqrt(6.0 / (fan_in + fan_out))
        tensors.append(rng.uniform(-a, a, size=wshape).astype(dtype))
        tensors.append(np.zeros(nb, dtype=dtype))
        is_bias += [False, True]
        shape = out_shape
    return Parameters(tensors, is_bias)


@dataclass
class ForwardCache:
    inputs: list            # conv layers: their input; other layers: the input shape
    outputs: list
    aux: list
    params_version: int


class Network:
    """A :class:`NetworkSpec` bound to concrete :class:`Parameters`."""

    def __init__(self, spec, params):
        self.spec = spec
        self.params = params
        self.version = 0
        self.forward_calls = 0

    @classmethod
    def initialize(cls, spec, seed=0, dtype=np.float32):
        return cls(spec, init_parameters(spec, np.random.default_rng(seed), dtype))

    @property
    def dtype(self):
        return self.params.tensors[0].dtype

    def astype(self, dtype):
        return Network(self.spec, self.params.astype(dtype))

    def _param_index(self):
        idx, out = 0, []
        for layer in self.spec.layers:
            if isinstance(layer, (Conv, Fully)):
                out.append(idx)
                idx += 2
            else:
                out.append(None)
        return out

    def forward(self, images, keep_cache=True):
        """Descriptors for a batch (N, C, H, W) or a single image (C, H, W).

        Activations are kept channel-first (C, N, H, W) internally so that
        the convolution matrices need no transposes.
        """
        x, single = _as_batch(np.asarray(images), 4)
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError("network input", self.spec.input_shape, x.shape[1:])
        n = x.shape[0]
        x = np.ascontiguousarray(x.transpose(1, 0, 2, 3), dtype=self.dtype)
        self.forward_calls += n
        p = self.params.tensors
        inputs, aux, outputs = [], [], []
        for layer, pi in zip(self.spec.layers, self._param_index()):
            inputs.append(x if isinstance(layer, Conv) else x.shape)
            a = None
            if isinstance(layer, Conv):
                x = conv_cf_forward(x, p[pi], p[pi + 1])
            elif isinstance(layer, MaxPool2x2):
                x, a = maxpool2x2_forward(x)
            elif isinstance(layer, ReLU):
                x = relu_forward(x)
            else:
                if x.ndim > 2:
                    x = x.transpose(1, 0, 2, 3).reshape(n, -1)
                a = x
                x = fully_forward(x, p[pi], p[pi + 1])
            outputs.append(x if isinstance(layer, ReLU) else None)
            aux.append(a)
        cache = ForwardCache(inputs, outputs, aux, self.version) if keep_cache else None
        return (x[0] if single else x), cache

    def __call__(self, images):
        return self.forward(images, keep_cache=False)[0]

    def backward(self, cache, grad_out, input_grad=False):
        """Parameter gradients, plus the image gradient (N, C, H, W) if ``input_grad``."""
        if cache is None or cache.params_version != self.version:
            raise StaleCacheError("forward cache does not match current parameters")
        g = np.asarray(grad_out, dtype=self.dtype)
        single = g.ndim == 1
        if single:
            g = g[None]
        p = self.params.tensors
        grads = [None] * len(p)
        layers = list(zip(self.spec.layers, self._param_index()))
        for li in range(len(layers) - 1, -1, -1):
            layer, pi = layers[li]
            xin, a = cache.inputs[li], cache.aux[li]
            if isinstance(layer, Conv):
                gw, gb, g = conv_cf_backward(xin, p[pi], g, need_input_grad=li > 0 or input_grad)
                grads[pi], grads[pi + 1] = gw, gb
            elif isinstance(layer, MaxPool2x2):
                g = maxpool2x2_backward(g, a)
            elif isinstance(layer, ReLU):
                g = relu_backward(cache.outputs[li], g)
            else:
                gw, gb, g = fully_backward(a, p[pi], g)
                grads[pi], grads[pi + 1] = gw, gb
                if len(xin) == 4:
                    c, n, h, w = xin
                    g = np.ascontiguousarray(g.reshape(n, c, h, w).transpose(1, 0, 2, 3))
        if g is not None:
            g = g.transpose(1, 0, 2, 3)
            if single:
                g = g[0]
        return grads, g

    def mark_updated(self):
        """Invalidate outstanding forward caches after a parameter update."""
        self.version += 1

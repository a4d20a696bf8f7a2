"""Neural-network layers over the autodiff tensor core.

Layers are built from :class:`LayerSpec` descriptions. Convolution, pooling
and batch-norm use fused backward rules for speed; everything is recorded on
the active tape like any other tensor operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import AutodiffError, Tensor, _record


class ShapeError(AutodiffError):
    """Input shape incompatible with a layer."""


VALID_KINDS = (
    "conv2d",
    "fc",
    "batch_norm",
    "relu",
    "max_pool",
    "global_avg_pool",
    "dropout",
)


@dataclass
class LayerSpec:
    """Declarative description of one layer.

    kind-specific fields: conv2d uses (kernel_size, channels, stride,
    padding), fc uses units, max_pool uses (pool_size, stride), dropout
    uses prob.
    """

    kind: str
    kernel_size: int = 3
    channels: int = 1
    stride: int = 1
    padding: str = "none"  # "none" (valid) or "zero" (half padding)
    pool_size: int = 2
    prob: float = 0.5
    units: int = 1

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d":
            if self.kernel_size <= 0 or self.channels <= 0 or self.stride <= 0:
                raise ValueError("conv2d kernel_size, channels, stride must be positive")
            if self.padding not in ("none", "zero"):
                raise ValueError(f"unknown padding mode {self.padding!r}")
        if self.kind == "fc" and self.units <= 0:
            raise ValueError("fc units must be positive")
        if self.kind == "max_pool" and (self.pool_size <= 0 or self.stride <= 0):
            raise ValueError("max_pool pool_size and stride must be positive")
        if self.kind == "dropout" and not 0.0 <= self.prob < 1.0:
            raise ValueError("dropout prob must be in [0, 1)")


def conv_output_size(extent: int, kernel: int, stride: int, pad: int) -> int:
    """Closed-form spatial size: floor((extent + 2*pad - kernel)/stride) + 1."""
    out = (extent + 2 * pad - kernel) // stride + 1
    return out


class Layer:
    """Base class; layers expose forward(x, train) and named parameters."""

    def params(self):
        return []

    def buffers(self):
        return []

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        return self.forward(x, train=train)


class Conv2d(Layer):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding="none", rng: Optional[np.random.Generator] = None,
                 dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.pad = kernel_size // 2 if padding == "zero" else 0
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                       size=(out_channels, in_channels, kernel_size, kernel_size))
        self.weight = Tensor(w.astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        n, c, h, w = _expect_4d(x, "conv2d")
        if c != self.in_channels:
            raise ShapeError(
                f"conv2d expects {self.in_channels} input channels, got {c} (dim 1)"
            )
        k, s, p = self.kernel_size, self.stride, self.pad
        if h + 2 * p < k or w + 2 * p < k:
            raise ShapeError(
                f"conv2d kernel {k} exceeds padded input extent "
                f"{h + 2 * p}x{w + 2 * p} (dims 2, 3)"
            )
        xd = x.data
        if p:
            xd = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p)))
        windows = sliding_window_view(xd, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        oh, ow = windows.shape[2], windows.shape[3]
        # (n, oh, ow, c*k*k)
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
        wmat = self.weight.data.reshape(self.out_channels, c * k * k)
        out_data = (cols @ wmat.T + self.bias.data).reshape(n, oh, ow, -1)
        out = Tensor(np.ascontiguousarray(out_data.transpose(0, 3, 1, 2)))

        hp, wp = h + 2 * p, w + 2 * p

        def bwd(g):
            gmat = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_channels)
            gw = (gmat.T @ cols).reshape(self.weight.shape)
            gb = gmat.sum(axis=0)
            dcols = (gmat @ wmat).reshape(n, oh, ow, c, k, k)
            dxp = np.zeros((n, c, hp * wp), dtype=g.dtype)
            idx = _col2im_indices(oh, ow, k, s, wp)
            np.add.at(dxp, (slice(None), slice(None), idx.ravel()),
                      dcols.transpose(0, 3, 1, 2, 4, 5).reshape(n, c, -1))
            dx = dxp.reshape(n, c, hp, wp)
            if p:
                dx = dx[:, :, p:-p, p:-p]
            return np.ascontiguousarray(dx), gw, gb

        _record((x, self.weight, self.bias), out, bwd)
        return out


def _col2im_indices(oh, ow, k, s, wp):
    hh = (np.arange(oh)[:, None] * s + np.arange(k)[None, :])  # (oh, k)
    ww = (np.arange(ow)[:, None] * s + np.arange(k)[None, :])  # (ow, k)
    # flat spatial index for (oh, ow, kh, kw)
    return (hh[:, None, :, None] * wp + ww[None, :, None, :])


class Linear(Layer):
    def __init__(self, in_features, out_features,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng(0)
        w = rng.normal(0.0, np.sqrt(2.0 / in_features), size=(in_features, out_features))
        self.weight = Tensor(w.astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        if x.ndim != 2:
            raise ShapeError(f"fc expects 2D input (batch, features), got {x.shape}")
        if x.shape[1] != self.in_features:
            raise ShapeError(
                f"fc expects {self.in_features} input features, got {x.shape[1]} (dim 1)"
            )
        from .tensor import add, matmul

        return add(matmul(x, self.weight), self.bias)


class BatchNorm(Layer):
    """Batch normalization over all axes except channel axis 1.

    Running statistics use an exponential moving average with momentum 0.1.
    """

    def __init__(self, num_features, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(num_features, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        if x.ndim not in (2, 4):
            raise ShapeError(f"batch_norm expects 2D or 4D input, got {x.shape}")
        if x.shape[1] != self.num_features:
            raise ShapeError(
                f"batch_norm expects {self.num_features} channels, got {x.shape[1]} (dim 1)"
            )
        axes = (0,) if x.ndim == 2 else (0, 2, 3)
        bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
        if train:
            mean = x.data.mean(axis=axes)
            var = x.data.var(axis=axes)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean, var = self.running_mean, self.running_var
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mean.reshape(bshape)) * invstd.reshape(bshape)
        out = Tensor(self.gamma.data.reshape(bshape) * xhat
                     + self.beta.data.reshape(bshape))
        m = x.data.size // self.num_features

        def bwd(g):
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            scale = (self.gamma.data * invstd).reshape(bshape)
            if train:
                dx = scale / m * (
                    m * g
                    - dbeta.reshape(bshape)
                    - xhat * dgamma.reshape(bshape)
                )
            else:
                dx = scale * g
            return dx.astype(g.dtype, copy=False), dgamma, dbeta

        _record((x, self.gamma, self.beta), out, bwd)
        return out


class ReLU(Layer):
    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        from .tensor import relu

        return relu(x)


class MaxPool2d(Layer):
    def __init__(self, pool_size=2, stride=None):
        self.pool_size = pool_size
        self.stride = stride if stride is not None else pool_size

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        n, c, h, w = _expect_4d(x, "max_pool")
        k, s = self.pool_size, self.stride
        if h < k or w < k:
            raise ShapeError(f"max_pool window {k} exceeds input extent {h}x{w} (dims 2, 3)")
        windows = sliding_window_view(x.data, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        oh, ow = windows.shape[2], windows.shape[3]
        flat = windows.reshape(n, c, oh, ow, k * k)
        arg = flat.argmax(axis=-1)
        out = Tensor(np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0])

        def bwd(g):
            dx = np.zeros((n, c, h * w), dtype=g.dtype)
            kh, kw = arg // k, arg % k
            hh = np.arange(oh)[None, None, :, None] * s + kh
            ww = np.arange(ow)[None, None, None, :] * s + kw
            idx = (hh * w + ww).reshape(n, c, -1)
            np.add.at(
                dx,
                (np.arange(n)[:, None, None], np.arange(c)[None, :, None], idx),
                g.reshape(n, c, -1),
            )
            return (dx.reshape(n, c, h, w),)

        _record((x,), out, bwd)
        return out


class GlobalAvgPool(Layer):
    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        n, c, h, w = _expect_4d(x, "global_avg_pool")
        out = Tensor(x.data.mean(axis=(2, 3)))

        def bwd(g):
            return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape)
                    .astype(g.dtype, copy=False),)

        _record((x,), out, bwd)
        return out


class Dropout(Layer):
    def __init__(self, prob=0.5, rng: Optional[np.random.Generator] = None):
        self.prob = prob
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        from .tensor import dropout

        return dropout(x, self.prob, self.rng, train)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params():
                out.append((f"{i}.{name}", p))
        return out

    def buffers(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, b in layer.buffers():
                out.append((f"{i}.{name}", b))
        return out

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x


def build_layer(spec: LayerSpec, in_channels: int,
                rng: Optional[np.random.Generator] = None,
                dtype=np.float32) -> Layer:
    """Instantiate a layer from its spec given the incoming channel count."""
    if spec.kind == "conv2d":
        return Conv2d(in_channels, spec.channels, spec.kernel_size,
                      stride=spec.stride, padding=spec.padding, rng=rng, dtype=dtype)
    if spec.kind == "fc":
        return Linear(in_channels, spec.units, rng=rng, dtype=dtype)
    if spec.kind == "batch_norm":
        return BatchNorm(in_channels, dtype=dtype)
    if spec.kind == "relu":
        return ReLU()
    if spec.kind == "max_pool":
        return MaxPool2d(spec.pool_size, spec.stride)
    if spec.kind == "global_avg_pool":
        return GlobalAvgPool()
    if spec.kind == "dropout":
        return Dropout(spec.prob, rng=np.random.default_rng(rng.integers(2**32)) if rng else None)
    raise ValueError(f"unknown layer kind {spec.kind!r}")


def _expect_4d(x: Tensor, opname: str):
    if x.ndim != 4:
        raise ShapeError(f"{opname} expects 4D input (n, c, h, w), got {x.shape}")
    return x.shape

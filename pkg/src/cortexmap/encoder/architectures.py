"""Patch encoder architectures.

Two conv stacks are supported: "base" (plain convolutions, no padding) and
"res" (pre-activation residual blocks, zero padding). The embedding network
f ends at global average pooling; the projection head g is two fully
connected layers and is discarded after contrastive training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..autodiff import (
    BatchNorm,
    Conv2d,
    GlobalAvgPool,
    Layer,
    Linear,
    MaxPool2d,
    ReLU,
    Sequential,
    ShapeError,
    Tensor,
    conv_output_size,
    relu,
)


@dataclass
class EncoderConfig:
    architecture: str = "res"  # "base" or "res"
    width_multiplier: int = 1  # 2 for the wide "[w]" variants
    patch_size: int = 64
    projection_dim: int = 128
    temperature: float = 0.07
    batch_norm: Optional[bool] = None  # None: architecture default (res yes, base no)
    dtype: str = "float32"

    def __post_init__(self):
        if self.architecture not in ("base", "res"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.width_multiplier < 1:
            raise ValueError("width_multiplier must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.patch_size < 1:
            raise ValueError("patch_size must be positive")

    @property
    def use_batch_norm(self) -> bool:
        if self.batch_norm is None:
            return self.architecture == "res"
        return self.batch_norm

    @property
    def embedding_dim(self) -> int:
        return 128 * self.width_multiplier

    @property
    def np_dtype(self):
        return np.dtype(self.dtype).type


# Channel plan shared by both stacks (per stage, before width multiplier).
_STAGE_CHANNELS = (16, 32, 64, 64, 128, 128)


class ResidualBlock(Layer):
    """Pre-activation residual block: x + conv(relu(bn(conv(relu(bn(x)))))).

    A 1x1 projection shortcut is used when stride or channel count changes.
    """

    def __init__(self, in_channels, out_channels, stride, rng, dtype):
        self.bn1 = BatchNorm(in_channels, dtype=dtype)
        self.conv1 = Conv2d(in_channels, out_channels, 3, stride=stride,
                            padding="zero", rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(out_channels, dtype=dtype)
        self.conv2 = Conv2d(out_channels, out_channels, 3, stride=1,
                            padding="zero", rng=rng, dtype=dtype)
        if stride != 1 or in_channels != out_channels:
            self.shortcut = Conv2d(in_channels, out_channels, 1, stride=stride,
                                   padding="none", rng=rng, dtype=dtype)
        else:
            self.shortcut = None

    def params(self):
        named = [("bn1", self.bn1), ("conv1", self.conv1),
                 ("bn2", self.bn2), ("conv2", self.conv2)]
        if self.shortcut is not None:
            named.append(("shortcut", self.shortcut))
        out = []
        for prefix, layer in named:
            out.extend((f"{prefix}.{n}", p) for n, p in layer.params())
        return out

    def buffers(self):
        out = []
        for prefix, layer in (("bn1", self.bn1), ("bn2", self.bn2)):
            out.extend((f"{prefix}.{n}", b) for n, b in layer.buffers())
        return out

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        h = relu(self.bn1.forward(x, train=train))
        h = self.conv1.forward(h, train=train)
        h = relu(self.bn2.forward(h, train=train))
        h = self.conv2.forward(h, train=train)
        skip = x if self.shortcut is None else self.shortcut.forward(x, train=train)
        return skip + h


def _conv_unit(in_c, out_c, kernel, stride, padding, use_bn, rng, dtype):
    layers = [Conv2d(in_c, out_c, kernel, stride=stride, padding=padding,
                     rng=rng, dtype=dtype)]
    if use_bn:
        layers.append(BatchNorm(out_c, dtype=dtype))
    layers.append(ReLU())
    return layers


def build_encoder(config: EncoderConfig, rng: Optional[np.random.Generator] = None):
    """Build (f, g): embedding network and projection head.

    Raises ShapeError naming the first failing layer when the patch side is
    too small for the conv stack.
    """
    rng = rng or np.random.default_rng(0)
    dtype = config.np_dtype
    m = config.width_multiplier
    ch = [c * m for c in _STAGE_CHANNELS]
    use_bn = config.use_batch_norm
    pad = "zero" if config.architecture == "res" else "none"

    layers: list[Layer] = []
    # conv_1_x: conv 5/c16/s4, conv 3/c16/s1, maxpool 2/2
    layers += _conv_unit(1, ch[0], 5, 4, pad, use_bn, rng, dtype)
    layers += _conv_unit(ch[0], ch[0], 3, 1, pad, use_bn, rng, dtype)
    layers.append(MaxPool2d(2, 2))

    if config.architecture == "base":
        in_c = ch[0]
        for stage, out_c in enumerate(ch[1:], start=2):
            layers += _conv_unit(in_c, out_c, 3, 1, pad, use_bn, rng, dtype)
            layers += _conv_unit(out_c, out_c, 3, 1, pad, use_bn, rng, dtype)
            if stage < 6:
                layers.append(MaxPool2d(2, 2))
            in_c = out_c
    else:
        # conv_2_x .. conv_5_x: two pre-activation blocks each, stages 3-5
        # downsample with their first conv
        in_c = ch[0]
        for stage, out_c in enumerate(ch[1:5], start=2):
            stride = 1 if stage == 2 else 2
            layers.append(ResidualBlock(in_c, out_c, stride, rng, dtype))
            layers.append(ResidualBlock(out_c, out_c, 1, rng, dtype))
            in_c = out_c
    layers.append(GlobalAvgPool())

    _validate_patch_size(config, layers)

    f = Sequential(layers)
    g = Sequential([
        Linear(config.embedding_dim, config.projection_dim, rng=rng, dtype=dtype),
        ReLU(),
        Linear(config.projection_dim, config.projection_dim, rng=rng, dtype=dtype),
    ])
    return f, g


def _validate_patch_size(config: EncoderConfig, layers):
    side = config.patch_size
    for i, layer in enumerate(layers):
        name = type(layer).__name__
        if isinstance(layer, Conv2d):
            side_p = side + 2 * layer.pad
            if side_p < layer.kernel_size:
                raise ShapeError(
                    f"patch size {config.patch_size} too small: layer {i} ({name}, "
                    f"kernel {layer.kernel_size}) sees extent {side}"
                )
            side = conv_output_size(side, layer.kernel_size, layer.stride, layer.pad)
        elif isinstance(layer, MaxPool2d):
            if side < layer.pool_size:
                raise ShapeError(
                    f"patch size {config.patch_size} too small: layer {i} ({name}) "
                    f"sees extent {side}"
                )
            side = conv_output_size(side, layer.pool_size, layer.stride, 0)
        elif isinstance(layer, ResidualBlock):
            s = layer.conv1.stride
            new_side = conv_output_size(side + 2, 3, s, 0)
            if side < 1 or new_side < 1:
                raise ShapeError(
                    f"patch size {config.patch_size} too small: layer {i} ({name}) "
                    f"sees extent {side}"
                )
            side = new_side
    if side < 1:
        raise ShapeError(f"patch size {config.patch_size} collapses before pooling")


def stage_channel_plan(config: EncoderConfig):
    """Per-stage channel counts after applying the width multiplier."""
    return [c * config.width_multiplier for c in _STAGE_CHANNELS]

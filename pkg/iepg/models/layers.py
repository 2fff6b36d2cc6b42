"""Learnable layers shared by the generators and discriminators."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import ops
from ..core.module import Module, parameter, uniform_init
from ..core.tensor import Tensor


class Linear(Module):
    """``y = x @ weight + bias`` with weight shaped (in, out)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
    ):
        self.weight = parameter(
            uniform_init(rng, (in_features, out_features), in_features)
        )
        self.bias: Optional[Tensor] = (
            parameter(uniform_init(rng, (out_features,), in_features)) if bias else None
        )

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: Optional[int] = None,
        bias: bool = True,
    ):
        fan_in = in_channels * kernel * kernel
        self.weight = parameter(
            uniform_init(rng, (out_channels, in_channels, kernel, kernel), fan_in)
        )
        self.bias: Optional[Tensor] = (
            parameter(uniform_init(rng, (out_channels,), fan_in)) if bias else None
        )
        self._stride = stride
        # same padding unless told otherwise
        self._pad = (kernel - 1) // 2 if pad is None else pad

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self._stride, pad=self._pad)


def down_conv(in_channels: int, out_channels: int, rng: np.random.Generator) -> Conv2d:
    """Kernel 4, stride 2, pad 1: halves H and W exactly for even sizes."""
    return Conv2d(in_channels, out_channels, 4, rng, stride=2, pad=1)


class Conv1d(Module):
    """Temporal convolution over (C, T) sequences with same padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
    ):
        fan_in = in_channels * kernel
        self.weight = parameter(
            uniform_init(rng, (out_channels, in_channels, kernel), fan_in)
        )
        self.bias = parameter(uniform_init(rng, (out_channels,), fan_in))
        self._pad = (kernel - 1) // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias, pad=self._pad)


class ConvTranspose2d(Module):
    """Kernel 4, stride 2, pad 1 upsampling: doubles H and W."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel: int = 4,
        stride: int = 2,
        pad: int = 1,
    ):
        fan_in = in_channels * kernel * kernel // (stride * stride)
        self.weight = parameter(
            uniform_init(rng, (in_channels, out_channels, kernel, kernel), fan_in)
        )
        self.bias = parameter(uniform_init(rng, (out_channels,), fan_in))
        self._stride = stride
        self._pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(
            x, self.weight, self.bias, stride=self._stride, pad=self._pad
        )

"""Incremental evolution constraints from previously generated intermediates.

The most recent ``capacity`` images are stacked channel-wise (oldest first,
zero-padded when fewer exist) and passed through a stack of IE blocks. Each
block fuses 3x3, 5x5 and 7x7 convolution branches with a softmax over one
learnable logit per branch, applies a leaky rectifier and then a projection:

- ``stem``: 1x1 projection to the base width C0, spatial size kept
- ``down``: kernel 4, stride 2, pad 1 projection; halves H, W, doubles channels
- ``keep``: 1x1 projection, shape preserved

Stacks of depth >= 3 are stem, down, down, then keep blocks, giving
(C0, H, W) -> (2C0, H/2, W/2) -> (4C0, H/4, W/4).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..core import ops
from ..core.module import Module, parameter
from ..core.tensor import Tensor
from ..errors import ConfigurationError, ContractError
from .layers import Conv2d, down_conv

SCALE_KERNELS: Tuple[int, ...] = (3, 5, 7)
DEFAULT_CAPACITY = 4
DEFAULT_BASE_CHANNELS = 16
BLOCK_KINDS = ("stem", "down", "keep")


# =============================================================================
# Queue
# =============================================================================


@dataclass(frozen=True)
class IntermediateQueue:
    """Most recent generated images, oldest first."""

    capacity: int = DEFAULT_CAPACITY
    images: Tuple[np.ndarray, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigurationError(
                "queue capacity must be positive", key="queue_capacity"
            )
        if len(self.images) > self.capacity:
            raise ContractError("IntermediateQueue", "more images than capacity")

    def __len__(self) -> int:
        return len(self.images)


def update_queue(queue: IntermediateQueue, image) -> IntermediateQueue:
    """Append a detached copy of ``image``; the oldest entry drops at capacity.

    Raises:
        ContractError: If the image is not (3, H, W) or differs in size from
            the queued images
    """
    raw = image.data if isinstance(image, Tensor) else image
    data = np.array(raw, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] != 3:
        raise ContractError(
            "update_queue", f"expected a (3, H, W) image, got {data.shape}"
        )
    if queue.images and queue.images[0].shape != data.shape:
        raise ContractError(
            "update_queue",
            f"image shape {data.shape} differs from queued {queue.images[0].shape}",
        )
    images = (queue.images + (data,))[-queue.capacity :]
    return IntermediateQueue(capacity=queue.capacity, images=images)


def assemble_input(queue: IntermediateQueue) -> Tensor:
    """(3·capacity, H, W) stack: real images oldest to newest, then zeros."""
    if not queue.images:
        raise ContractError("assemble_input", "queue is empty")
    _, h, w = queue.images[0].shape
    pad = [np.zeros((3, h, w))] * (queue.capacity - len(queue.images))
    return Tensor(np.concatenate(list(queue.images) + pad, axis=0))


# =============================================================================
# IE blocks
# =============================================================================


class IeBlock(Module):
    """Multi-scale branches with scale attention followed by a projection."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kind: str,
        rng: np.random.Generator,
        kernels: Sequence[int] = SCALE_KERNELS,
    ):
        if kind not in BLOCK_KINDS:
            raise ConfigurationError(f"unknown IE block kind '{kind}'", key="kind")
        if kind == "down" and out_channels != 2 * in_channels:
            raise ConfigurationError(
                "a down block doubles its channels", key="out_channels"
            )
        self.kind = kind
        self.kernels = tuple(kernels)
        self.branches = [Conv2d(in_channels, in_channels, s, rng) for s in self.kernels]
        self.scale_logits = parameter(np.zeros(len(self.kernels)))
        if kind == "down":
            self.project = down_conv(in_channels, out_channels, rng)
        else:
            self.project = Conv2d(in_channels, out_channels, 1, rng)

    def scale_weights(self) -> Tensor:
        return ops.softmax(self.scale_logits)

    def __call__(self, x: Tensor) -> Tensor:
        return ie_block_forward(x, self)


def ie_block_forward(x: Tensor, block: IeBlock) -> Tensor:
    """leaky(sum_s a_s · conv_s(x)) followed by the block's projection.

    Raises:
        ConfigurationError: If a down block receives odd spatial dimensions
    """
    if block.kind == "down" and (x.shape[1] % 2 or x.shape[2] % 2):
        raise ConfigurationError(
            f"IE down block needs even spatial dims, got {x.shape[1:]}",
            key="image_size",
        )
    a = block.scale_weights()
    fused = None
    for i, branch in enumerate(block.branches):
        term = branch(x) * a[i]
        fused = term if fused is None else fused + term
    return block.project(ops.leaky_relu(fused))


def block_schedule(depth: int) -> List[str]:
    if depth < 3:
        raise ConfigurationError(
            f"IE depth must be at least 3, got {depth}", key="ie_depth"
        )
    return ["stem", "down", "down"] + ["keep"] * (depth - 3)


class IecEncoder(Module):
    """Stack of IE blocks over the assembled queue."""

    def __init__(
        self,
        capacity: int = DEFAULT_CAPACITY,
        base_channels: int = DEFAULT_BASE_CHANNELS,
        depth: int = 3,
        multi_scale: bool = True,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.capacity = capacity
        self.base_channels = base_channels
        kernels = SCALE_KERNELS if multi_scale else (3,)
        blocks: List[IeBlock] = []
        channels = 3 * capacity
        for kind in block_schedule(depth):
            out = {"stem": base_channels, "down": 2 * channels, "keep": channels}[kind]
            blocks.append(IeBlock(channels, out, kind, rng, kernels))
            channels = out
        self.blocks = blocks

    @property
    def out_channels(self) -> int:
        return 4 * self.base_channels

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = ie_block_forward(x, block)
        return x


def iec_forward(queue: IntermediateQueue, encoder: IecEncoder) -> Tensor:
    """(4·C0, H/4, W/4) features of the queued intermediates.

    Raises:
        ConfigurationError: If H or W is not divisible by 4, or the queue
            capacity differs from the encoder's
    """
    x = assemble_input(queue)
    _, h, w = x.shape
    if h % 4 or w % 4:
        raise ConfigurationError(
            f"image dims {h}x{w} are not divisible by 4", key="image_size"
        )
    if queue.capacity != encoder.capacity:
        raise ConfigurationError(
            f"queue capacity {queue.capacity} != encoder capacity {encoder.capacity}",
            key="queue_capacity",
        )
    return encoder(x)

"""Single-image patch discriminator."""

from __future__ import annotations

import numpy as np

from ..core import ops
from ..core.module import Module
from ..core.tensor import Tensor
from .layers import Conv2d, down_conv

LOGIT_CLIP = 30.0


class ImageDiscriminator(Module):
    """Two stride-2 stages and a 3x3 scoring conv over image + condition.

    Each output cell sees a bounded receptive field, so the mean of the
    per-patch sigmoid scores is the image score.
    """

    def __init__(self, in_channels: int, channels: int, rng: np.random.Generator):
        self.down1 = down_conv(in_channels, channels, rng)
        self.down2 = down_conv(channels, 2 * channels, rng)
        self.score = Conv2d(2 * channels, 1, 3, rng)

    def patch_scores(self, x: Tensor) -> Tensor:
        h = ops.leaky_relu(self.down1(x))
        h = ops.leaky_relu(self.down2(h))
        return ops.sigmoid(ops.clip(self.score(h), -LOGIT_CLIP, LOGIT_CLIP))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.mean(self.patch_scores(x))

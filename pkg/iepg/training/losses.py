"""Training objectives for both stages.

Sequence stage (GEC):
    L_GEC = λ_sadv·L_sadv + λ_ncons·L_ncons + λ_pose·L_pose

Synthesis stage:
    L_es  = Σ_t (λ_siadv·L_siadv + λ_style·L_style + λ_per·L_per + λ_img·L_img)
    L_PIS = L_es + L_sr,   L_sr = L_img + λ_per·L_per on the source reconstruction

Adversarial terms: ``loss_sadv`` is the discriminator's objective
E[log(1 - D(fake))] + E[log D(real)]; generators are trained with the
non-saturating -E[log D(fake)].

Averaging conventions: skeleton losses take the mean over coordinates of
keypoints visible in both skeletons; ``loss_ncons`` averages over consecutive
pairs as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import ops
from ..core.canon import digest
from ..core.module import Module
from ..core.tensor import Tensor, as_tensor
from ..errors import ContractError
from ..models.layers import down_conv
from ..pose.skeleton import K, PoseSkeleton
from .config import LossWeights

Scalar = Union[Tensor, float]
SkeletonLike = Union[PoseSkeleton, Tensor]


def _scores(op: str, scores) -> Tensor:
    t = as_tensor(scores)
    if t.size == 0 or not np.all((t.data > 0.0) & (t.data < 1.0)):
        raise ContractError(op, "scores must lie strictly inside (0, 1)")
    return t


# =============================================================================
# Sequence stage
# =============================================================================


def loss_sadv(fake_scores, real_scores) -> Tensor:
    """E[log(1 - D_S(fake))] + E[log D_S(real)], maximized by D_S."""
    fake = _scores("loss_sadv", fake_scores)
    real = _scores("loss_sadv", real_scores)
    return ops.mean(ops.log(1.0 - fake)) + ops.mean(ops.log(real))


def loss_sadv_generator(fake_scores) -> Tensor:
    """Non-saturating generator form: -E[log D_S(fake)]."""
    return -ops.mean(ops.log(_scores("loss_sadv_generator", fake_scores)))


def _coords_and_mask(s: SkeletonLike) -> Tuple[Tensor, Optional[np.ndarray]]:
    if isinstance(s, PoseSkeleton):
        return Tensor(s.flat()), np.repeat(s.visibility, 2)
    return s, None


def loss_pose(pred: SkeletonLike, target: SkeletonLike) -> Tensor:
    """Mean squared coordinate error over keypoints visible in both.

    Either argument may be a skeleton or a 2K coordinate tensor; tensors
    count as fully visible.

    Raises:
        ContractError: If the keypoint counts differ
    """
    a, mask_a = _coords_and_mask(pred)
    b, mask_b = _coords_and_mask(target)
    if a.shape != (2 * K,) or b.shape != (2 * K,):
        raise ContractError(
            "loss_pose",
            f"expected {2 * K} coordinates, got {a.shape} and {b.shape}",
        )
    mask = np.ones(2 * K, dtype=bool)
    if mask_a is not None:
        mask &= mask_a
    if mask_b is not None:
        mask &= mask_b
    if not mask.any():
        return Tensor(0.0)
    diff = a - b
    return ops.sum(diff * diff * mask.astype(np.float64)) * (1.0 / mask.sum())


def loss_ncons(sequence: Union[Sequence[PoseSkeleton], Tensor]) -> Tensor:
    """Mean over consecutive pairs of the per-coordinate squared difference.

    Accepts a list of skeletons or a (T, 2K) coordinate tensor.

    Raises:
        ContractError: If the sequence has fewer than two frames
    """
    steps = sequence.shape[0] if isinstance(sequence, Tensor) else len(sequence)
    if steps < 2:
        raise ContractError("loss_ncons", f"need at least 2 frames, got {steps}")
    if isinstance(sequence, Tensor):
        frames = [sequence[t] for t in range(steps)]
    else:
        frames = list(sequence)
    total: Scalar = 0.0
    for prev, nxt in zip(frames[:-1], frames[1:]):
        total = total + loss_pose(nxt, prev)
    return as_tensor(total) * (1.0 / (steps - 1))


def loss_visibility(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean squared error between visibility probabilities and 0/1 targets."""
    diff = probs - np.asarray(targets, dtype=np.float64)
    return ops.mean(diff * diff)


@dataclass(frozen=True)
class GecComponents:
    sadv: Scalar = 0.0
    ncons: Scalar = 0.0
    pose: Scalar = 0.0


def loss_gec(components: GecComponents, weights: LossWeights = LossWeights()) -> Scalar:
    return (
        weights.sadv * components.sadv
        + weights.ncons * components.ncons
        + weights.pose * components.pose
    )


# =============================================================================
# Synthesis stage
# =============================================================================


class FeaturePyramid(Module):
    """Three frozen stride-2 conv stages (3 -> 8 -> 16 -> 32 channels).

    Weights come from a seeded generator and never require gradients.
    """

    CHANNELS = (3, 8, 16, 32)

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.stages = [
            down_conv(cin, cout, rng)
            for cin, cout in zip(self.CHANNELS[:-1], self.CHANNELS[1:])
        ]
        for stage in self.stages:
            for _, p in stage.named_parameters():
                p.requires_grad = False

    def weight_hash(self) -> str:
        return digest(*[t.data for s in self.stages for t in (s.weight, s.bias)])

    def taps(self, image: Tensor) -> List[Tensor]:
        out = []
        h = image
        for stage in self.stages:
            h = ops.leaky_relu(stage(h))
            out.append(h)
        return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ContractError(op, f"shape mismatch {a.shape} vs {b.shape}")


def loss_img(gen: Tensor, gt) -> Tensor:
    """Mean absolute pixel difference."""
    gt = as_tensor(gt)
    _same_shape("loss_img", gen, gt)
    return ops.mean(ops.abs(gen - gt))


def loss_per(gen: Tensor, gt, pyramid: FeaturePyramid) -> Tensor:
    """Mean over the three taps of the mean absolute activation difference."""
    gt = as_tensor(gt)
    _same_shape("loss_per", gen, gt)
    pairs = zip(pyramid.taps(gen), pyramid.taps(gt))
    terms = [ops.mean(ops.abs(a - b)) for a, b in pairs]
    return _average(terms)


def gram(features: Tensor) -> Tensor:
    """(C, C) channel Gram matrix F·F^T / (h·w) of a (C, h, w) map."""
    c, h, w = features.shape
    flat = ops.reshape(features, (c, h * w))
    return ops.matmul(flat, ops.transpose(flat)) * (1.0 / (h * w))


def loss_style(gen: Tensor, gt, pyramid: FeaturePyramid) -> Tensor:
    """Mean over taps of the mean squared Gram-matrix difference."""
    gt = as_tensor(gt)
    _same_shape("loss_style", gen, gt)
    terms = []
    for a, b in zip(pyramid.taps(gen), pyramid.taps(gt)):
        diff = gram(a) - gram(b)
        terms.append(ops.mean(diff * diff))
    return _average(terms)


def _average(terms: Sequence[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def loss_siadv(fake_scores, real_scores) -> Tuple[Tensor, Tensor]:
    """(discriminator loss, generator loss) for the single-image discriminator.

    D: -[E log real + E log(1 - fake)];  G: -E log fake.
    """
    fake = _scores("loss_siadv", fake_scores)
    real = _scores("loss_siadv", real_scores)
    d_loss = -(ops.mean(ops.log(real)) + ops.mean(ops.log(1.0 - fake)))
    g_loss = -ops.mean(ops.log(fake))
    return d_loss, g_loss


def loss_sr(
    reconstruction: Tensor,
    src_image,
    pyramid: FeaturePyramid,
    per_weight: float = LossWeights().per,
) -> Tensor:
    """Source self-reconstruction: L_img + λ_per·L_per."""
    return loss_img(reconstruction, src_image) + per_weight * loss_per(
        reconstruction, src_image, pyramid
    )


@dataclass(frozen=True)
class IterationComponents:
    siadv: Scalar = 0.0
    style: Scalar = 0.0
    per: Scalar = 0.0
    img: Scalar = 0.0


def loss_es(
    iterations: Sequence[IterationComponents], weights: LossWeights = LossWeights()
) -> Scalar:
    total: Scalar = 0.0
    for c in iterations:
        total = (
            total
            + weights.siadv * c.siadv
            + weights.style * c.style
            + weights.per * c.per
            + weights.img * c.img
        )
    return total


def loss_pis(
    iterations: Sequence[IterationComponents],
    sr: Scalar,
    weights: LossWeights = LossWeights(),
) -> Scalar:
    return loss_es(iterations, weights) + sr

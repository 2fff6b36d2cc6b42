"""Global evolution constraints: the guiding skeleton and semantics sequence.

Pipeline for a (source, target) skeleton pair:

1. ``pose_encode`` maps each skeleton (2K coordinates, sentinel for hidden
   keypoints) to a 512-d feature through three fully connected layers.
2. ``evolve_sequence`` builds the starter [f_s, z, mix(f_s, f_t)], projects
   it once and tiles it over T steps, then runs three stacked bidirectional
   recurrent layers. Each step's output concatenates both directions.
3. ``pose_decode`` maps every step's output to 2K coordinates plus a K-dim
   visibility head thresholded at 0.5.
4. ``gen_semantic_sequence`` renders part labels for each decoded skeleton.

The sequence discriminator scores a whole skeleton sequence with temporal
convolutions, global average pooling and a sigmoid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import ops
from ..core.module import Module
from ..core.tensor import Tensor
from ..errors import ConfigurationError, ContractError
from ..pose.render import DEFAULT_IMAGE_SIZE, SemanticMap, render_semantics
from ..pose.skeleton import K, PoseSkeleton
from .layers import Conv1d, Linear
from .recurrent import CELL_TYPES, BiRecurrentLayer

LOGIT_CLIP = 30.0
VISIBILITY_THRESHOLD = 0.5


@dataclass(frozen=True)
class GecConfig:
    feature_dim: int = 512
    hidden_dim: int = 256
    noise_dim: int = 512
    layers: int = 3
    cell: str = "gru"
    disc_channels: int = 64
    disc_kernel: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.cell not in CELL_TYPES:
            raise ConfigurationError(f"unknown cell type '{self.cell}'", key="cell")
        for name in (
            "feature_dim",
            "hidden_dim",
            "noise_dim",
            "layers",
            "disc_channels",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive", key=name)
        if self.feature_dim % 2:
            raise ConfigurationError("feature_dim must be even", key="feature_dim")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GecConfig":
        return cls(**d)


@dataclass
class GeneratedSequence:
    """Differentiable decoder outputs for T steps plus their skeletons."""

    coords: Tensor  # (T, 2K)
    visibility: Tensor  # (T, K) probabilities
    skeletons: List[PoseSkeleton]

    def __len__(self) -> int:
        return len(self.skeletons)


class PoseEncoder(Module):
    def __init__(self, feature_dim: int, rng: np.random.Generator):
        self.fc1 = Linear(2 * K, feature_dim // 2, rng)
        self.fc2 = Linear(feature_dim // 2, feature_dim, rng)
        self.fc3 = Linear(feature_dim, feature_dim, rng)

    def __call__(self, flat: Tensor) -> Tensor:
        h = ops.leaky_relu(self.fc1(flat))
        h = ops.leaky_relu(self.fc2(h))
        return self.fc3(h)


class PoseDecoder(Module):
    def __init__(self, in_dim: int, rng: np.random.Generator):
        self.fc1 = Linear(in_dim, 512, rng)
        self.fc2 = Linear(512, 256, rng)
        self.fc3 = Linear(256, 2 * K, rng)
        self.vis = Linear(256, K, rng)

    def __call__(self, f: Tensor) -> Tuple[Tensor, Tensor]:
        h = ops.leaky_relu(self.fc1(f))
        h = ops.leaky_relu(self.fc2(h))
        return ops.sigmoid(self.fc3(h)), ops.sigmoid(self.vis(h))


class SequenceDiscriminator(Module):
    """Temporal conv net over per-frame (coords·vis, vis) features."""

    def __init__(self, channels: int, kernel: int, rng: np.random.Generator):
        self.conv1 = Conv1d(3 * K, channels, kernel, rng)
        self.conv2 = Conv1d(channels, channels, kernel, rng)
        self.head = Linear(channels, 1, rng)

    def __call__(self, coords: Tensor, visibility: Tensor) -> Tensor:
        h = ops.leaky_relu(self.conv1(sequence_features(coords, visibility)))
        h = ops.leaky_relu(self.conv2(h))
        pooled = ops.mean(h, axis=1)
        logit = ops.clip(self.head(pooled), -LOGIT_CLIP, LOGIT_CLIP)
        return ops.sigmoid(ops.reshape(logit, ()))


def sequence_features(coords: Tensor, visibility: Tensor) -> Tensor:
    """(T, 2K) coords and (T, K) visibility to (3K, T) channels-first features."""
    steps = coords.shape[0]
    vis_pairs = ops.reshape(
        ops.reshape(visibility, (steps, K, 1)) * np.ones((1, 1, 2)), (steps, 2 * K)
    )
    feats = ops.concat([coords * vis_pairs, visibility], axis=1)
    return ops.transpose(feats)


def skeleton_arrays(skeletons: Sequence[PoseSkeleton]) -> Tuple[np.ndarray, np.ndarray]:
    """(T, 2K) coordinates with hidden keypoints zeroed and (T, K) visibility."""
    coords = np.stack([s.flat() for s in skeletons])
    vis = np.stack([s.visibility.astype(np.float64) for s in skeletons])
    coords = coords * np.repeat(vis, 2, axis=1)
    return coords, vis


class GecModel(Module):
    """Pose encoder, starter mixer, recurrent stack, decoder and D_S."""

    def __init__(self, config: Optional[GecConfig] = None):
        self.config = config or GecConfig()
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        f = cfg.feature_dim
        self.encoder = PoseEncoder(f, rng)
        self.mix1 = Linear(2 * f, f, rng)
        self.mix2 = Linear(f, f, rng)
        self.starter = Linear(2 * f + cfg.noise_dim, f, rng)
        self.layers = [
            BiRecurrentLayer(
                f if i == 0 else 2 * cfg.hidden_dim, cfg.hidden_dim, rng, cfg.cell
            )
            for i in range(cfg.layers)
        ]
        self.decoder = PoseDecoder(2 * cfg.hidden_dim, rng)
        self.discriminator = SequenceDiscriminator(
            cfg.disc_channels, cfg.disc_kernel, rng
        )

    def generator_parameters(self) -> Dict[str, Tensor]:
        return {
            n: p
            for n, p in self.named_parameters()
            if not n.startswith("discriminator.")
        }

    def discriminator_parameters(self) -> Dict[str, Tensor]:
        return {
            n: p for n, p in self.named_parameters() if n.startswith("discriminator.")
        }

    def sample_noise(self, seed: int) -> Tensor:
        rng = np.random.default_rng(seed)
        return Tensor(rng.standard_normal(self.config.noise_dim))

    def generate(
        self,
        source: PoseSkeleton,
        target: PoseSkeleton,
        steps: int,
        z: Optional[Tensor] = None,
    ) -> GeneratedSequence:
        """Encode, evolve and decode a ``steps``-frame sequence."""
        if z is None:
            z = self.sample_noise(self.config.seed)
        f_s = pose_encode(self, source)
        f_t = pose_encode(self, target)
        outputs = evolve_sequence(self, f_s, f_t, z, steps)
        decoded = [self.decoder(o) for o in outputs]
        coords = ops.stack([c for c, _ in decoded])
        vis = ops.stack([v for _, v in decoded])
        skeletons = [
            PoseSkeleton.from_flat(c.data, v.data >= VISIBILITY_THRESHOLD)
            for c, v in decoded
        ]
        return GeneratedSequence(coords=coords, visibility=vis, skeletons=skeletons)


# =============================================================================
# Operations
# =============================================================================


def pose_encode(model: GecModel, skeleton: PoseSkeleton) -> Tensor:
    """512-d feature of a skeleton (hidden keypoints as the sentinel)."""
    return model.encoder(Tensor(skeleton.flat()))


def evolve_sequence(
    model: GecModel, f_s: Tensor, f_t: Tensor, z: Tensor, steps: int
) -> List[Tensor]:
    """Three bidirectional layers over the tiled starter; ``steps`` outputs.

    Raises:
        ContractError: If steps < 2
    """
    if steps < 2:
        raise ContractError("evolve_sequence", f"need at least 2 steps, got {steps}")
    mix = model.mix2(ops.leaky_relu(model.mix1(ops.concat([f_s, f_t]))))
    x = model.starter(ops.concat([f_s, z, mix]))
    xs: List[Tensor] = [x] * steps
    for layer in model.layers:
        xs = layer(xs)
    return xs


def pose_decode(model: GecModel, feature: Tensor) -> PoseSkeleton:
    """Decode one feature to a skeleton; visibility is the head thresholded at 0.5."""
    coords, vis = model.decoder(feature)
    return PoseSkeleton.from_flat(coords.data, vis.data >= VISIBILITY_THRESHOLD)


def seq_discriminate(model: GecModel, sequence: Sequence[PoseSkeleton]) -> float:
    """Realness score in (0, 1) of a skeleton sequence."""
    if not sequence:
        raise ContractError("seq_discriminate", "empty sequence")
    coords, vis = skeleton_arrays(sequence)
    return model.discriminator(Tensor(coords), Tensor(vis)).item()


def seq_discriminate_batch(
    model: GecModel, sequences: Sequence[Sequence[PoseSkeleton]]
) -> List[float]:
    return [seq_discriminate(model, s) for s in sequences]


def gen_semantic_sequence(
    skeletons: Sequence[PoseSkeleton], size: int = DEFAULT_IMAGE_SIZE
) -> List[SemanticMap]:
    """Part labels for every guiding skeleton."""
    return [render_semantics(s, size) for s in skeletons]

"""Triple-path knowledge fusion: the per-iteration image synthesizer.

Three information paths meet in every iteration:

1. IEC path: features of the previously generated intermediates
2. Source path: source image, pose heatmaps and semantics, encoded and
   refined by SFE (self-attention) blocks into f_S
3. Fusion path: source image with the current guiding pose and semantics,
   refined by TPKF blocks that attend with queries from the fusion path,
   keys from f_S and values from the IEC path, closed by AdaIN

Feature maps of shape (d, h, w) become (h·w, d) tokens inside the blocks.
Residual links are additions.

``synthesize_full`` chains iterations: every output joins the intermediate
queue and conditions the next step. Queued images are detached, so gradients
never flow from one iteration into an earlier one.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import ops
from ..core.module import Module, parameter
from ..core.tensor import Tensor, no_grad
from ..errors import ConfigurationError, ContractError
from ..pose.render import NUM_LABELS, SemanticMap, render_heatmaps, render_semantics
from ..pose.skeleton import K, PoseSkeleton
from .attention import MultiHeadAttention, TokenFCN, adain, token_norm
from .discriminator import ImageDiscriminator
from .gec import GecModel, gen_semantic_sequence
from .iec import IecEncoder, IntermediateQueue, iec_forward, update_queue
from .layers import Conv2d, ConvTranspose2d, down_conv

logger = logging.getLogger(__name__)

VARIANT_DEPTHS: Dict[str, int] = {"S": 2, "B": 4, "L": 6}
CONDITION_CHANNELS = 3 + K + NUM_LABELS


@dataclass(frozen=True)
class FusionConfig:
    """Synthesizer shape and ablation switches.

    ``depth`` overrides the variant's block count when set (0 disables both
    stacks).
    """

    image_size: int = 64
    width: int = 128
    heads: int = 2
    variant: str = "S"
    depth: Optional[int] = None
    iec_base: int = 16
    queue_capacity: int = 4
    ie_depth: int = 3
    disc_channels: int = 32
    no_tpkf: bool = False
    no_iec: bool = False
    no_msc: bool = False
    no_eada: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANT_DEPTHS:
            raise ConfigurationError(
                f"unknown variant '{self.variant}', expected S, B or L", key="variant"
            )
        if self.depth is not None and self.depth < 0:
            raise ConfigurationError("depth must be non-negative", key="depth")
        if self.width % 4 or self.width < 4:
            raise ConfigurationError(
                f"width {self.width} must be a multiple of 4", key="width"
            )
        if self.heads < 1 or self.width % self.heads:
            raise ConfigurationError(
                f"width {self.width} is not divisible by {self.heads} heads",
                key="heads",
            )
        if self.image_size % 4:
            raise ConfigurationError(
                f"image size {self.image_size} is not divisible by 4", key="image_size"
            )

    @property
    def blocks(self) -> int:
        return VARIANT_DEPTHS[self.variant] if self.depth is None else self.depth

    @property
    def tokens(self) -> int:
        return (self.image_size // 4) ** 2

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "FusionConfig":
        return cls(**d)


# =============================================================================
# Bundles
# =============================================================================


@dataclass(frozen=True, eq=False)
class TargetBundle:
    """Guiding pose heatmaps (K, H, W) and one-hot semantics (7, H, W)."""

    heatmaps: np.ndarray
    semantics: np.ndarray

    def __post_init__(self) -> None:
        if self.heatmaps.shape[1:] != self.semantics.shape[1:]:
            raise ContractError("TargetBundle", "heatmap and semantics sizes differ")

    @classmethod
    def from_skeleton(
        cls, skeleton: PoseSkeleton, size: int, semantics: Optional[SemanticMap] = None
    ) -> "TargetBundle":
        sem = semantics if semantics is not None else render_semantics(skeleton, size)
        return cls(render_heatmaps(skeleton, size), sem.one_hot())

    def condition(self) -> np.ndarray:
        return np.concatenate([self.heatmaps, self.semantics], axis=0)


@dataclass(frozen=True, eq=False)
class SourceBundle:
    """Source image (3, H, W), pose heatmaps and one-hot semantics."""

    image: np.ndarray
    heatmaps: np.ndarray
    semantics: np.ndarray

    def __post_init__(self) -> None:
        sizes = {
            self.image.shape[1:],
            self.heatmaps.shape[1:],
            self.semantics.shape[1:],
        }
        if len(sizes) != 1:
            raise ContractError(
                "SourceBundle", f"spatial sizes differ: {sorted(sizes)}"
            )

    @classmethod
    def from_frame(
        cls,
        image: np.ndarray,
        skeleton: PoseSkeleton,
        semantics: Optional[SemanticMap] = None,
    ) -> "SourceBundle":
        size = image.shape[-1]
        sem = semantics if semantics is not None else render_semantics(skeleton, size)
        return cls(
            np.asarray(image, dtype=np.float64),
            render_heatmaps(skeleton, size),
            sem.one_hot(),
        )

    @property
    def size(self) -> int:
        return self.image.shape[-1]

    def as_target(self) -> TargetBundle:
        return TargetBundle(self.heatmaps, self.semantics)

    def tensor(self) -> Tensor:
        stacked = np.concatenate([self.image, self.heatmaps, self.semantics], axis=0)
        return Tensor(stacked)


# =============================================================================
# Token helpers and encoders
# =============================================================================


def to_tokens(x: Tensor) -> Tensor:
    """(d, h, w) map to (h·w, d) tokens, row-major over positions."""
    d, h, w = x.shape
    return ops.transpose(ops.reshape(x, (d, h * w)))


def from_tokens(t: Tensor, h: int, w: int) -> Tensor:
    n, d = t.shape
    if n != h * w:
        raise ConfigurationError(f"{n} tokens cannot form a {h}x{w} map", key="tokens")
    return ops.reshape(ops.transpose(t), (d, h, w))


class ConvEncoder(Module):
    """3x3 conv then two stride-2 stages; tokens plus a learned position embedding."""

    def __init__(
        self, in_channels: int, width: int, tokens: int, rng: np.random.Generator
    ):
        self.stem = Conv2d(in_channels, width // 4, 3, rng)
        self.down1 = down_conv(width // 4, width // 2, rng)
        self.down2 = down_conv(width // 2, width, rng)
        self.position = parameter(rng.normal(0.0, 0.02, size=(tokens, width)))

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.leaky_relu(self.stem(x))
        h = ops.leaky_relu(self.down1(h))
        return to_tokens(self.down2(h)) + self.position


class FusionDecoder(Module):
    """Two transposed stride-2 stages, a 3x3 conv and a sigmoid."""

    def __init__(self, width: int, rng: np.random.Generator):
        self.up1 = ConvTranspose2d(width, width // 2, rng)
        self.up2 = ConvTranspose2d(width // 2, width // 4, rng)
        self.out = Conv2d(width // 4, 3, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.leaky_relu(self.up1(x))
        h = ops.leaky_relu(self.up2(h))
        return ops.sigmoid(self.out(h))


# =============================================================================
# Blocks
# =============================================================================


class SfeBlock(Module):
    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        self.attn = MultiHeadAttention(width, heads, rng)
        self.fcn = TokenFCN(width, rng)

    def __call__(self, f: Tensor) -> Tensor:
        return sfe_block(f, self)


class TpkfBlock(Module):
    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(width, heads, rng)
        self.cross_attn = MultiHeadAttention(width, heads, rng)
        self.fcn = TokenFCN(width, rng)


def _closure(x: Tensor, fcn: TokenFCN) -> Tensor:
    return token_norm(fcn(x) + x)


def sfe_block(f: Tensor, block: SfeBlock) -> Tensor:
    """IN[f + MHA(f)] followed by IN[FCN(x) + x]."""
    f_hat = token_norm(f + block.attn(f, f, f))
    return _closure(f_hat, block.fcn)


def tpkf_block(
    f_prev: Tensor,
    f_s: Tensor,
    iec: Tensor,
    block: TpkfBlock,
    use_adain: bool = True,
) -> Tensor:
    """Self-attention, cross-attention (Q fusion, K source, V IEC), AdaIN, FCN.

    Raises:
        ConfigurationError: If the source, fusion and IEC token counts differ
    """
    if f_s.shape[0] != f_prev.shape[0] or iec.shape[0] != f_prev.shape[0]:
        raise ConfigurationError(
            f"token counts differ: fusion {f_prev.shape[0]}, source {f_s.shape[0]}, "
            f"iec {iec.shape[0]}",
            key="tokens",
        )
    f_hat = token_norm(f_prev + block.self_attn(f_prev, f_prev, f_prev))
    f_bar = block.cross_attn(f_hat, f_s, iec) + f_hat
    fused = adain(f_bar, f_hat) if use_adain else f_bar
    return _closure(fused, block.fcn)


# =============================================================================
# Model
# =============================================================================


class FusionModel(Module):
    def __init__(self, config: Optional[FusionConfig] = None):
        self.config = config or FusionConfig()
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        d = cfg.width
        # source path and IEC only feed TPKF cross-attention
        self.source_encoder: Optional[ConvEncoder] = None
        if not cfg.no_tpkf:
            self.source_encoder = ConvEncoder(CONDITION_CHANNELS, d, cfg.tokens, rng)
        self.fusion_encoder = ConvEncoder(CONDITION_CHANNELS, d, cfg.tokens, rng)
        self.sfe_blocks: List[SfeBlock] = []
        if not cfg.no_tpkf:
            self.sfe_blocks = [SfeBlock(d, cfg.heads, rng) for _ in range(cfg.blocks)]
        block = SfeBlock if cfg.no_tpkf else TpkfBlock
        self.fusion_blocks = [block(d, cfg.heads, rng) for _ in range(cfg.blocks)]
        self.iec_encoder: Optional[IecEncoder] = None
        self.iec_proj: Optional[Conv2d] = None
        if not (cfg.no_iec or cfg.no_tpkf):
            self.iec_encoder = IecEncoder(
                capacity=cfg.queue_capacity,
                base_channels=cfg.iec_base,
                depth=cfg.ie_depth,
                multi_scale=not cfg.no_msc,
                seed=cfg.seed + 1,
            )
            self.iec_proj = Conv2d(self.iec_encoder.out_channels, d, 1, rng)
        self.decoder = FusionDecoder(d, rng)
        self.discriminator = ImageDiscriminator(
            CONDITION_CHANNELS, cfg.disc_channels, rng
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


def count_parameters(model: Module, include_discriminator: bool = False) -> int:
    """Number of learnable scalars (generator side unless asked otherwise)."""
    return sum(
        p.size
        for name, p in model.named_parameters()
        if include_discriminator or not name.startswith("discriminator.")
    )


def source_path(model: FusionModel, src: SourceBundle) -> Tensor:
    """f_S: encoded source tokens refined by the SFE stack."""
    if model.source_encoder is None:
        raise ContractError("source_path", "source path disabled by no_tpkf")
    f = model.source_encoder(src.tensor())
    for block in model.sfe_blocks:
        f = sfe_block(f, block)
    return f


def iec_tokens(model: FusionModel, iec: Optional[Tensor]) -> Tensor:
    cfg = model.config
    if iec is None or model.iec_proj is None:
        return Tensor(np.zeros((cfg.tokens, cfg.width)))
    return to_tokens(model.iec_proj(iec))


def synthesize_step(
    model: FusionModel,
    src: SourceBundle,
    tgt: TargetBundle,
    iec: Optional[Tensor],
    f_s: Optional[Tensor] = None,
) -> Tensor:
    """One evolution iteration: (3, H, W) image in [0, 1].

    ``iec`` may be None (IEC path disabled); ``f_s`` may be passed to reuse a
    source path computed earlier in the same evolution.
    """
    cfg = model.config
    cross = not cfg.no_tpkf
    if cross and f_s is None:
        f_s = source_path(model, src)
    fusion_in = Tensor(np.concatenate([src.image, tgt.heatmaps, tgt.semantics], axis=0))
    f = model.fusion_encoder(fusion_in)
    values = iec_tokens(model, iec) if cross else None
    for block in model.fusion_blocks:
        if isinstance(block, TpkfBlock):
            f = tpkf_block(f, f_s, values, block, use_adain=not cfg.no_eada)
        else:
            f = sfe_block(f, block)
    side = cfg.image_size // 4
    return model.decoder(from_tokens(f, side, side))


def image_discriminate(model: FusionModel, image: Tensor, cond: TargetBundle) -> Tensor:
    """Mean patch realness in (0, 1) of ``image`` under the pose condition."""
    x = ops.concat([image, Tensor(cond.condition())], axis=0)
    return model.discriminator(x)


# =============================================================================
# Evolution
# =============================================================================


@dataclass(frozen=True, eq=False)
class EvolutionFrame:
    skeleton: PoseSkeleton
    semantics: SemanticMap
    image: Tensor


@dataclass(frozen=True, eq=False)
class EvolutionSequence:
    """Frame 0 is the source; frames 1..T are the generated iterations."""

    frames: Tuple[EvolutionFrame, ...]

    def __post_init__(self) -> None:
        if not self.frames:
            raise ContractError("EvolutionSequence", "sequence is empty")
        shapes = {f.image.shape for f in self.frames}
        if len(shapes) != 1:
            raise ContractError(
                "EvolutionSequence", f"image shapes differ: {sorted(shapes)}"
            )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def generated(self) -> Tuple[EvolutionFrame, ...]:
        return self.frames[1:]

    @property
    def final(self) -> EvolutionFrame:
        return self.frames[-1]


def guiding_skeletons(
    gec: Optional[GecModel],
    source: PoseSkeleton,
    target: PoseSkeleton,
    n_increments: int,
) -> List[PoseSkeleton]:
    """Source, ``n_increments`` GEC intermediates and the exact target.

    With no increments the GEC is bypassed and the list is [source, target].
    """
    if n_increments < 0:
        raise ConfigurationError("increments must be non-negative", key="n_increments")
    if n_increments == 0:
        return [source, target]
    if gec is None:
        raise ContractError(
            "guiding_skeletons", "a GEC model is required for increments"
        )
    with no_grad():
        generated = gec.generate(source, target, n_increments + 2)
    return [source] + generated.skeletons[1:-1] + [target]


def remove_intermediates(
    guides: Sequence[PoseSkeleton], k: int, rng: np.random.Generator
) -> List[PoseSkeleton]:
    """Drop ``k`` randomly chosen interior guiding frames; endpoints stay."""
    interior = len(guides) - 2
    if k < 0 or k > interior:
        raise ContractError(
            "remove_intermediates", f"cannot remove {k} of {interior} intermediates"
        )
    if k == 0:
        return list(guides)
    dropped = set(int(i) + 1 for i in rng.choice(interior, size=k, replace=False))
    return [g for i, g in enumerate(guides) if i not in dropped]


def synthesize_full(
    model: FusionModel,
    gec: Optional[GecModel],
    src: SourceBundle,
    source_skeleton: PoseSkeleton,
    target_skeleton: PoseSkeleton,
    n_increments: int = 5,
    guides: Optional[Sequence[PoseSkeleton]] = None,
    remove: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, EvolutionSequence]:
    """Run every evolution iteration from the source to the target.

    Args:
        guides: explicit guiding skeletons (source first, target last); the
                GEC is used when omitted
        remove: interior guiding frames to drop before synthesis
        rng: generator for the removal draw (seed 0 when omitted)

    Returns:
        The final image and the evolution sequence (source at index 0, one
        frame per iteration after it).
    """
    if guides is None:
        guides = guiding_skeletons(gec, source_skeleton, target_skeleton, n_increments)
    guides = list(guides)
    if len(guides) < 2:
        raise ContractError("synthesize_full", "need at least source and target guides")
    if remove:
        guides = remove_intermediates(guides, remove, rng or np.random.default_rng(0))

    cfg = model.config
    semantics = gen_semantic_sequence(guides, src.size)
    queue = update_queue(IntermediateQueue(capacity=cfg.queue_capacity), src.image)
    f_s = None if cfg.no_tpkf else source_path(model, src)
    frames = [EvolutionFrame(guides[0], semantics[0], Tensor(src.image))]
    for t in range(1, len(guides)):
        tgt = TargetBundle.from_skeleton(guides[t], src.size, semantics[t])
        iec = None
        if model.iec_encoder is not None:
            iec = iec_forward(queue, model.iec_encoder)
        image = synthesize_step(model, src, tgt, iec, f_s)
        queue = update_queue(queue, image)
        frames.append(EvolutionFrame(guides[t], semantics[t], image))
    logger.debug("synthesized %d iterations", len(frames) - 1)
    return frames[-1].image, EvolutionSequence(tuple(frames))

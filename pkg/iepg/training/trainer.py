"""Two-stage training driver.

Stage ``gec`` trains the guiding-sequence generator and its sequence
discriminator on ground-truth turning paths. Stage ``pis`` trains the fusion
model and the image discriminator with the GEC frozen.

Core Invariants:
- One generator update then one discriminator update per step (1:1)
- Sample order, noise and model initialisation derive from ``cfg.seed`` only,
  so the same config replays the same loss values
- ``train_pis`` never updates GEC parameters (checked by parameter hash)
- A non-finite loss aborts the stage with TrainingDivergedError; the last
  periodic checkpoint on disk stays valid
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.module import Module
from ..core.optim import Adam, AdamState
from ..core.tensor import Tape, Tensor, backward, no_grad
from ..errors import CheckpointError, ContractError, TrainingDivergedError
from ..models.fusion import (
    FusionConfig,
    FusionModel,
    SourceBundle,
    TargetBundle,
    guiding_skeletons,
    image_discriminate,
    synthesize_full,
    synthesize_step,
)
from ..models.gec import GecConfig, GecModel, skeleton_arrays
from ..models.iec import IntermediateQueue, iec_forward, update_queue
from ..pose.dataset import Dataset, Frame
from ..pose.skeleton import PoseSkeleton, yaw_progression_monotone
from ..storage.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..version import IEPG_VERSION
from .config import RunConfig, TrainConfig
from .losses import (
    FeaturePyramid,
    GecComponents,
    IterationComponents,
    loss_gec,
    loss_img,
    loss_ncons,
    loss_per,
    loss_pis,
    loss_pose,
    loss_sadv,
    loss_sadv_generator,
    loss_siadv,
    loss_sr,
    loss_style,
    loss_visibility,
)
from .losslog import LossLog
from .pairs import FramePair, sample_pair

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

GEC_CHECKPOINT = "gec.ckpt"
PIS_CHECKPOINT = "pis.ckpt"
GEC_LOSS_LOG = "gec_losses.txt"
PIS_LOSS_LOG = "pis_losses.txt"
DECAY_FRACTION = 1.0 / 3.0
MONOTONE_MAX_TURN = 90.0


@dataclass
class StageResult:
    stage: str
    model: Module
    checkpoint: Path
    loss_log: Path
    steps: int
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def final_losses(self) -> Dict[str, float]:
        return self.history[-1] if self.history else {}


# =============================================================================
# Schedule and bookkeeping
# =============================================================================


def learning_rate(step: int, total: int, base: float) -> float:
    """Constant, then linear decay towards zero over the final third."""
    decay_start = total - int(total * DECAY_FRACTION)
    if step < decay_start or total == decay_start:
        return base
    return base * (total - step) / (total - decay_start)


def _check_finite(stage: str, step: int, values: Mapping[str, float]) -> None:
    for name in sorted(values):
        if not math.isfinite(values[name]):
            raise TrainingDivergedError(stage, step, name, values[name])


def _checkpoint_tensors(
    model: Module, optimizers: Mapping[str, Adam]
) -> Dict[str, np.ndarray]:
    tensors = {f"model.{n}": arr for n, arr in model.state_dict().items()}
    for name, opt in optimizers.items():
        tensors.update(opt.state.tensors(f"adam.{name}"))
    return tensors


def _metadata(stage: str, cfg: TrainConfig, step: int, **extra: Any) -> Dict[str, Any]:
    return {
        "stage": stage,
        "seed": cfg.seed,
        "step": step,
        "iepg_version": IEPG_VERSION,
        "config": cfg.to_dict(),
        **extra,
    }


def _value(x) -> float:
    return x.item() if isinstance(x, Tensor) else float(x)


# =============================================================================
# Stage 1: global evolution
# =============================================================================


def _gec_targets(path: Sequence[Frame]) -> List[PoseSkeleton]:
    return [f.skeleton for f in path]


def gec_generator_loss(
    gec: GecModel,
    path: Sequence[Frame],
    z: Tensor,
    cfg: TrainConfig,
) -> Tuple[Tensor, Dict[str, float], Any]:
    """Weighted L_GEC for one ground-truth path (generator side)."""
    targets = _gec_targets(path)
    seq = gec.generate(targets[0], targets[-1], len(targets), z)
    pose: Any = 0.0
    for t, skel in enumerate(targets):
        pose = pose + loss_pose(seq.coords[t], skel)
    pose = pose * (1.0 / len(targets))
    _, vis_gt = skeleton_arrays(targets)
    vis = loss_visibility(seq.visibility, vis_gt)
    ncons = loss_ncons(seq.coords)
    sadv = loss_sadv_generator(gec.discriminator(seq.coords, seq.visibility))
    components = GecComponents(sadv=sadv, ncons=ncons, pose=pose + vis)
    total = loss_gec(components, cfg.weights)
    parts = {
        "gec.pose": _value(pose),
        "gec.visibility": _value(vis),
        "gec.ncons": _value(ncons),
        "gec.sadv_g": _value(sadv),
    }
    return total, parts, seq


def gec_discriminator_loss(gec: GecModel, path: Sequence[Frame], seq) -> Tensor:
    """-L_sadv: minimizing it maximizes E[log(1 - D(fake))] + E[log D(real)]."""
    coords, vis = skeleton_arrays(_gec_targets(path))
    real = gec.discriminator(Tensor(coords), Tensor(vis))
    fake = gec.discriminator(Tensor(seq.coords.data), Tensor(seq.visibility.data))
    return -loss_sadv(fake, real)


def train_gec(
    dataset: Dataset,
    cfg: TrainConfig,
    out_dir: PathLike,
    steps: Optional[int] = None,
) -> StageResult:
    """Train the GEC stage; writes ``gec.ckpt`` and ``gec_losses.txt``."""
    out = Path(out_dir)
    total_steps = cfg.gec_steps if steps is None else steps
    rng = np.random.default_rng(cfg.seed)
    gec = GecModel(cfg.gec_config())
    g_opt = Adam(gec.generator_parameters(), cfg.lr)
    d_opt = Adam(gec.discriminator_parameters(), cfg.lr)
    ckpt_path = out / GEC_CHECKPOINT
    history: List[Dict[str, float]] = []
    logger.info(
        "gec: %d steps, %d generator parameters, n_increments=%d",
        total_steps,
        sum(p.size for p in g_opt.params.values()),
        cfg.n_increments,
    )

    def save(step: int) -> None:
        save_checkpoint(
            ckpt_path,
            _checkpoint_tensors(gec, {"generator": g_opt, "discriminator": d_opt}),
            _metadata("gec", cfg, step, gec_config=gec.config.to_dict()),
        )

    with LossLog(out / GEC_LOSS_LOG, cfg.to_dict(), restart=True) as log:
        for step in range(total_steps):
            lr = learning_rate(step, total_steps, cfg.lr)
            batch = [
                _sample_path(dataset, rng, cfg.n_increments)
                for _ in range(cfg.batch_size)
            ]
            noise = [Tensor(rng.standard_normal(gec.config.noise_dim)) for _ in batch]

            with Tape() as tape:
                g_total: Any = 0.0
                parts: Dict[str, float] = {}
                generated = []
                for (_, path), z in zip(batch, noise):
                    loss, p, seq = gec_generator_loss(gec, path, z, cfg)
                    g_total = g_total + loss * (1.0 / len(batch))
                    generated.append(seq)
                    for k, v in p.items():
                        parts[k] = parts.get(k, 0.0) + v / len(batch)
            values = {"gec.total": _value(g_total), **parts}
            _check_finite("gec", step, values)
            g_opt.step(backward(g_total, tape, g_opt.params.values()), lr)

            with Tape() as tape:
                d_total: Any = 0.0
                for (_, path), seq in zip(batch, generated):
                    d_loss = gec_discriminator_loss(gec, path, seq)
                    d_total = d_total + d_loss * (1.0 / len(batch))
            values["gec.d"] = _value(d_total)
            _check_finite("gec", step, values)
            d_opt.step(backward(d_total, tape, d_opt.params.values()), lr)

            log.record_all(step, values)
            history.append(values)
            if step % cfg.log_every == 0 or step == total_steps - 1:
                logger.info(
                    "gec step %d/%d total=%.5f pose=%.5f d=%.5f lr=%.2e",
                    step + 1,
                    total_steps,
                    values["gec.total"],
                    values["gec.pose"],
                    values["gec.d"],
                    lr,
                )
            if (step + 1) % cfg.checkpoint_every == 0:
                save(step + 1)
    save(total_steps)
    log_path = out / GEC_LOSS_LOG
    return StageResult("gec", gec, ckpt_path, log_path, total_steps, history)


def _sample_path(
    dataset: Dataset, rng: np.random.Generator, n_increments: int
) -> Tuple[FramePair, List[Frame]]:
    pair = sample_pair(dataset, dataset.train_ids, rng)
    path = dataset.ground_truth_path(
        pair.person_id, pair.src_index, pair.tgt_index, n_increments
    )
    return pair, path


def evaluate_gec(
    gec: GecModel,
    dataset: Dataset,
    pairs: Sequence[FramePair],
    n_increments: int,
) -> Dict[str, float]:
    """Mean pose loss, mean endpoint keypoint error and monotone-yaw fraction.

    The endpoint error is the mean Euclidean distance of visible keypoints
    between the first/last decoded frames and the true source/target.
    ``monotone`` is the fraction of pairs at most 90 degrees apart whose
    decoded sequence turns one way; only pairs whose ground-truth path passes
    the same check count. It is NaN when no pair qualifies.
    """
    if not pairs:
        raise ContractError("evaluate_gec", "no pairs to evaluate")
    pose_total = 0.0
    endpoint_total = 0.0
    monotone_hits = 0
    monotone_pairs = 0
    with no_grad():
        for pair in pairs:
            path = dataset.ground_truth_path(
                pair.person_id, pair.src_index, pair.tgt_index, n_increments
            )
            targets = _gec_targets(path)
            seq = gec.generate(targets[0], targets[-1], len(targets))
            pose_total += float(
                np.mean(
                    [loss_pose(seq.coords[t], s).item() for t, s in enumerate(targets)]
                )
            )
            endpoint_total += 0.5 * (
                _keypoint_error(seq.coords.data[0], targets[0])
                + _keypoint_error(seq.coords.data[-1], targets[-1])
            )
            within_turn = _turn_degrees(dataset, pair) <= MONOTONE_MAX_TURN
            if within_turn and yaw_progression_monotone(targets):
                monotone_pairs += 1
                monotone_hits += yaw_progression_monotone(seq.skeletons)
    monotone = monotone_hits / monotone_pairs if monotone_pairs else math.nan
    return {
        "pose": pose_total / len(pairs),
        "endpoint": endpoint_total / len(pairs),
        "monotone": monotone,
    }


def _turn_degrees(dataset: Dataset, pair: FramePair) -> float:
    delta = (pair.tgt_index - pair.src_index) * dataset.yaw_step
    return abs((delta + 180.0) % 360.0 - 180.0)


def _keypoint_error(coords: np.ndarray, target: PoseSkeleton) -> float:
    vis = target.visibility
    if not vis.any():
        return 0.0
    pred = coords.reshape(-1, 2)[vis]
    return float(np.mean(np.linalg.norm(pred - target.keypoints[vis], axis=1)))


def load_gec(path: PathLike) -> GecModel:
    """Rebuild a GEC model from a ``gec`` checkpoint.

    Raises:
        CheckpointError: If the file is not a GEC checkpoint
    """
    ckpt = load_checkpoint(path)
    _expect_stage(ckpt, "gec", path)
    gec = GecModel(GecConfig.from_dict(ckpt.metadata["gec_config"]))
    gec.load_state_dict(ckpt.subset("model"), source=str(path))
    return gec


def _expect_stage(ckpt: Checkpoint, stage: str, path: PathLike) -> None:
    if ckpt.stage != stage:
        raise CheckpointError(
            str(path), f"expected a '{stage}' checkpoint, got '{ckpt.stage}'"
        )


# =============================================================================
# Stage 2: pose image synthesis
# =============================================================================


def source_bundle(frame: Frame) -> SourceBundle:
    return SourceBundle.from_frame(frame.image, frame.skeleton, frame.semantics)


def reconstruct_source(model: FusionModel, src: SourceBundle) -> Tensor:
    """Source-to-source branch: the source pose as target, only the source queued."""
    iec = None
    if model.iec_encoder is not None:
        empty = IntermediateQueue(capacity=model.config.queue_capacity)
        queue = update_queue(empty, src.image)
        iec = iec_forward(queue, model.iec_encoder)
    return synthesize_step(model, src, src.as_target(), iec)


def pis_generator_loss(
    model: FusionModel,
    gec: Optional[GecModel],
    path: Sequence[Frame],
    pyramid: FeaturePyramid,
    cfg: RunConfig,
) -> Tuple[Tensor, Dict[str, float], List[Tuple[Tensor, TargetBundle, Frame]]]:
    """Weighted L_PIS over one evolution toward the path's last frame.

    Guiding frames are the ground-truth path when ``cfg.teacher_frames`` is
    set and the GEC output otherwise. Every iteration t is scored against the
    ground-truth frame t of the path.
    """
    src_frame, tgt_frame = path[0], path[-1]
    src = source_bundle(src_frame)
    if cfg.teacher_frames:
        guides = [f.skeleton for f in path]
    else:
        guides = guiding_skeletons(
            gec, src_frame.skeleton, tgt_frame.skeleton, cfg.n_increments
        )
    _, sequence = synthesize_full(
        model,
        gec,
        src,
        src_frame.skeleton,
        tgt_frame.skeleton,
        cfg.n_increments,
        guides=guides,
    )
    iterations = []
    scored: List[Tuple[Tensor, TargetBundle, Frame]] = []
    sums = {"siadv_g": 0.0, "style": 0.0, "per": 0.0, "img": 0.0}
    for frame, gt in zip(sequence.generated, path[1:]):
        cond = TargetBundle.from_skeleton(frame.skeleton, src.size, frame.semantics)
        with no_grad():
            gt_cond = _frame_condition(gt, src.size)
            real = image_discriminate(model, Tensor(gt.image), gt_cond)
        _, g_adv = loss_siadv(image_discriminate(model, frame.image, cond), real)
        comp = IterationComponents(
            siadv=g_adv,
            style=loss_style(frame.image, gt.image, pyramid),
            per=loss_per(frame.image, gt.image, pyramid),
            img=loss_img(frame.image, gt.image),
        )
        iterations.append(comp)
        scored.append((frame.image, cond, gt))
        for key, term in zip(sums, (comp.siadv, comp.style, comp.per, comp.img)):
            sums[key] += _value(term)
    sr = loss_sr(reconstruct_source(model, src), src.image, pyramid, cfg.weights.per)
    total = loss_pis(iterations, sr, cfg.weights)
    parts = {f"pis.{k}": v / len(iterations) for k, v in sums.items()}
    parts["pis.sr"] = _value(sr)
    return total, parts, scored


def _frame_condition(frame: Frame, size: int) -> TargetBundle:
    return TargetBundle.from_skeleton(frame.skeleton, size, frame.semantics)


def pis_discriminator_loss(
    model: FusionModel, scored: Sequence[Tuple[Tensor, TargetBundle, Frame]]
) -> Tensor:
    """Mean D_SI loss over the iterations of one evolution."""
    total: Any = 0.0
    for image, cond, gt in scored:
        fake = image_discriminate(model, Tensor(image.data), cond)
        gt_cond = _frame_condition(gt, image.shape[-1])
        real = image_discriminate(model, Tensor(gt.image), gt_cond)
        d_loss, _ = loss_siadv(fake, real)
        total = total + d_loss
    return total * (1.0 / len(scored))


def train_pis(
    dataset: Dataset,
    gec: Union[GecModel, PathLike, None],
    cfg: RunConfig,
    out_dir: PathLike,
    steps: Optional[int] = None,
) -> StageResult:
    """Train the synthesis stage with the GEC frozen.

    ``gec`` may be a model, a checkpoint path, or None when
    ``cfg.n_increments`` is 0 or ``cfg.teacher_frames`` is set.

    Raises:
        ContractError: If a GEC is needed but missing, or if its parameters
            changed during training
    """
    out = Path(out_dir)
    if isinstance(gec, (str, os.PathLike)):
        gec = load_gec(gec)
    if gec is None and cfg.n_increments > 0 and not cfg.teacher_frames:
        raise ContractError("train_pis", "a GEC model is required for increments")
    gec_hash = gec.parameter_hash() if gec is not None else None

    total_steps = cfg.pis_steps if steps is None else steps
    rng = np.random.default_rng(cfg.seed)
    model = FusionModel(cfg.fusion_config(dataset.image_size))
    pyramid = FeaturePyramid(seed=0)
    g_opt = Adam(model.generator_parameters(), cfg.lr)
    d_opt = Adam(model.discriminator_parameters(), cfg.lr)
    ckpt_path = out / PIS_CHECKPOINT
    history: List[Dict[str, float]] = []
    logger.info(
        "pis: %d steps, variant %s (%d blocks), teacher_frames=%s",
        total_steps,
        model.config.variant,
        model.config.blocks,
        cfg.teacher_frames,
    )

    def save(step: int) -> None:
        save_checkpoint(
            ckpt_path,
            _checkpoint_tensors(model, {"generator": g_opt, "discriminator": d_opt}),
            _metadata(
                "pis",
                cfg,
                step,
                fusion_config=model.config.to_dict(),
                gec_hash=gec_hash,
                pyramid_hash=pyramid.weight_hash(),
            ),
        )

    with LossLog(out / PIS_LOSS_LOG, cfg.to_dict(), restart=True) as log:
        for step in range(total_steps):
            lr = learning_rate(step, total_steps, cfg.lr)
            batch = [
                _sample_path(dataset, rng, cfg.n_increments)[1]
                for _ in range(cfg.batch_size)
            ]

            with Tape() as tape:
                g_total: Any = 0.0
                parts: Dict[str, float] = {}
                scored = []
                for path in batch:
                    loss, p, s = pis_generator_loss(model, gec, path, pyramid, cfg)
                    g_total = g_total + loss * (1.0 / len(batch))
                    scored.extend(s)
                    for k, v in p.items():
                        parts[k] = parts.get(k, 0.0) + v / len(batch)
            values = {"pis.total": _value(g_total), **parts}
            _check_finite("pis", step, values)
            g_opt.step(backward(g_total, tape, g_opt.params.values()), lr)

            with Tape() as tape:
                d_total = pis_discriminator_loss(model, scored)
            values["pis.d"] = _value(d_total)
            _check_finite("pis", step, values)
            d_opt.step(backward(d_total, tape, d_opt.params.values()), lr)

            log.record_all(step, values)
            history.append(values)
            if step % cfg.log_every == 0 or step == total_steps - 1:
                logger.info(
                    "pis step %d/%d total=%.5f img=%.5f sr=%.5f d=%.5f lr=%.2e",
                    step + 1,
                    total_steps,
                    values["pis.total"],
                    values["pis.img"],
                    values["pis.sr"],
                    values["pis.d"],
                    lr,
                )
            if (step + 1) % cfg.checkpoint_every == 0:
                save(step + 1)
    save(total_steps)

    if gec is not None and gec.parameter_hash() != gec_hash:
        raise ContractError(
            "train_pis", "GEC parameters changed during synthesis training"
        )
    log_path = out / PIS_LOSS_LOG
    return StageResult("pis", model, ckpt_path, log_path, total_steps, history)


def load_fusion(path: PathLike) -> FusionModel:
    """Rebuild a fusion model from a ``pis`` checkpoint."""
    ckpt = load_checkpoint(path)
    _expect_stage(ckpt, "pis", path)
    model = FusionModel(FusionConfig.from_dict(ckpt.metadata["fusion_config"]))
    model.load_state_dict(ckpt.subset("model"), source=str(path))
    return model


def load_optimizer_state(path: PathLike, name: str) -> AdamState:
    """Adam moments stored under ``adam.<name>`` in a checkpoint."""
    return AdamState.from_tensors(load_checkpoint(path).tensors, f"adam.{name}")

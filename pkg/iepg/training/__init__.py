from .config import SEED_ENV_VAR, LossWeights, RunConfig, TrainConfig
from .losses import (
    FeaturePyramid,
    GecComponents,
    IterationComponents,
    gram,
    loss_es,
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
from .losslog import LossCurve, LossLog, read_loss_log
from .pairs import FramePair, enumerate_pairs, sample_pair
from .trainer import (
    StageResult,
    evaluate_gec,
    learning_rate,
    load_fusion,
    load_gec,
    load_optimizer_state,
    source_bundle,
    train_gec,
    train_pis,
)

__all__ = [
    # Configuration
    "LossWeights",
    "TrainConfig",
    "RunConfig",
    "SEED_ENV_VAR",
    # Losses
    "FeaturePyramid",
    "GecComponents",
    "IterationComponents",
    "gram",
    "loss_sadv",
    "loss_sadv_generator",
    "loss_ncons",
    "loss_pose",
    "loss_visibility",
    "loss_gec",
    "loss_img",
    "loss_per",
    "loss_style",
    "loss_siadv",
    "loss_sr",
    "loss_es",
    "loss_pis",
    # Pairs and logs
    "FramePair",
    "sample_pair",
    "enumerate_pairs",
    "LossLog",
    "LossCurve",
    "read_loss_log",
    # Driver
    "StageResult",
    "train_gec",
    "train_pis",
    "evaluate_gec",
    "learning_rate",
    "load_gec",
    "load_fusion",
    "load_optimizer_state",
    "source_bundle",
]

from .core import (
    # Autodiff
    Adam,
    Module,
    Tape,
    Tensor,
    backward,
    grad_check,
    no_grad,
    # Canonicalization
    digest,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    DimensionError,
    IepgError,
    NonFiniteError,
    TrainingDivergedError,
)
from .evaluation import MetricReport, eval_report, psnr, run_ablation, ssim
from .models import (
    EvolutionSequence,
    FusionConfig,
    FusionModel,
    GecConfig,
    GecModel,
    IecEncoder,
    IntermediateQueue,
    synthesize_full,
)
from .pose import Dataset, PoseSkeleton, gen_dataset, load_dataset, write_dataset
from .storage import Checkpoint, load_checkpoint, save_checkpoint
from .training import (
    LossWeights,
    RunConfig,
    TrainConfig,
    load_fusion,
    load_gec,
    train_gec,
    train_pis,
)
from .version import CHECKPOINT_FORMAT_VERSION, DATASET_SCHEMA_VERSION, IEPG_VERSION

__all__ = [
    # Version
    "IEPG_VERSION",
    "CHECKPOINT_FORMAT_VERSION",
    "DATASET_SCHEMA_VERSION",
    # Errors
    "IepgError",
    "DimensionError",
    "ConfigurationError",
    "ContractError",
    "NonFiniteError",
    "TrainingDivergedError",
    "CheckpointError",
    # Autodiff
    "Tensor",
    "Tape",
    "Module",
    "Adam",
    "backward",
    "no_grad",
    "grad_check",
    # Canonicalization
    "digest",
    # Pose domain
    "PoseSkeleton",
    "Dataset",
    "gen_dataset",
    "load_dataset",
    "write_dataset",
    # Models
    "GecConfig",
    "GecModel",
    "IntermediateQueue",
    "IecEncoder",
    "FusionConfig",
    "FusionModel",
    "EvolutionSequence",
    "synthesize_full",
    # Training
    "LossWeights",
    "TrainConfig",
    "RunConfig",
    "train_gec",
    "train_pis",
    "load_gec",
    "load_fusion",
    # Storage
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    # Evaluation
    "ssim",
    "psnr",
    "MetricReport",
    "eval_report",
    "run_ablation",
]

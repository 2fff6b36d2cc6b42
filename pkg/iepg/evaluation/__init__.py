from .ablation import (
    ARMS,
    INCREMENT_COUNTS,
    KNOCKOUTS,
    AblationRow,
    ablation_table,
    arm_rows,
    run_ablation,
)
from .metrics import gaussian_window, psnr, ssim, ssim_map
from .report import MetricReport, PairRecord, eval_report, format_table

__all__ = [
    # Metrics
    "ssim",
    "ssim_map",
    "psnr",
    "gaussian_window",
    # Reports
    "MetricReport",
    "PairRecord",
    "eval_report",
    "format_table",
    # Ablation
    "ARMS",
    "INCREMENT_COUNTS",
    "KNOCKOUTS",
    "AblationRow",
    "ablation_table",
    "arm_rows",
    "run_ablation",
]

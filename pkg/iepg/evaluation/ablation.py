"""Ablation studies.

Arms:
    increments  synthesis trained and evaluated with 0, 1, 2 and 5 increments
    removal     one model, k = 0..n-1 interior guiding frames dropped at inference
    knockouts   full model against no_tpkf, no_iec, no_msc, no_eada, ie6, ie9
    variants    S/B/L fusion depths, with generator parameter counts

Every row of every arm uses the same dataset, the same GEC and the same seed,
so rows differ only in the knob under study.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from ..core.canon import canon_json
from ..errors import ConfigurationError
from ..models.fusion import VARIANT_DEPTHS, count_parameters
from ..models.gec import GecModel
from ..pose.dataset import Dataset
from ..training.config import RunConfig
from ..training.pairs import FramePair
from ..training.trainer import train_gec, train_pis
from .report import MetricReport, eval_report, format_table

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

INCREMENT_COUNTS = (0, 1, 2, 5)
KNOCKOUTS: Dict[str, Dict[str, Any]] = {
    "no_tpkf": {"no_tpkf": True},
    "no_iec": {"no_iec": True},
    "no_msc": {"no_msc": True},
    "no_eada": {"no_eada": True},
    "ie6": {"ie_depth": 6},
    "ie9": {"ie_depth": 9},
}
ARMS = ("increments", "removal", "knockouts", "variants")


@dataclass(frozen=True)
class AblationRow:
    """One trained configuration and how it is evaluated."""

    label: str
    config: RunConfig
    remove: int = 0


def arm_rows(arm: str, cfg: RunConfig) -> List[AblationRow]:
    """Rows of ``arm`` derived from the base config.

    Raises:
        ConfigurationError: On an unknown arm name
    """
    if arm == "increments":
        return [
            AblationRow(f"increments={n}", cfg.replace(n_increments=n))
            for n in INCREMENT_COUNTS
        ]
    if arm == "removal":
        return [
            AblationRow(f"remove={k}", cfg, remove=k)
            for k in range(max(cfg.n_increments, 1))
        ]
    if arm == "knockouts":
        rows = [AblationRow("full", cfg)]
        rows += [
            AblationRow(name, cfg.replace(**flags)) for name, flags in KNOCKOUTS.items()
        ]
        return rows
    if arm == "variants":
        return [
            AblationRow(f"variant={v}", cfg.replace(variant=v)) for v in VARIANT_DEPTHS
        ]
    raise ConfigurationError(
        f"unknown ablation arm '{arm}' (expected one of {', '.join(ARMS)})", key="arm"
    )


def run_ablation(
    arm: str,
    dataset: Dataset,
    cfg: RunConfig,
    out_dir: PathLike,
    pairs: Optional[Sequence[FramePair]] = None,
    gec: Optional[GecModel] = None,
) -> List[MetricReport]:
    """Train and evaluate every row of ``arm``; writes ``ablation_<arm>.json``.

    The GEC is trained once (unless given) and shared by all rows. Rows
    with the same training config share one synthesis run.
    """
    rows = arm_rows(arm, cfg)
    out = Path(out_dir)
    if gec is None:
        gec = train_gec(dataset, cfg, out / "gec").model

    trained: Dict[str, Tuple[Any, int]] = {}
    reports: List[MetricReport] = []
    for i, row in enumerate(rows):
        key = canon_json(row.config.to_dict())
        if key not in trained:
            logger.info("ablation %s: training row %s", arm, row.label)
            result = train_pis(dataset, gec, row.config, out / f"{arm}_{i:02d}")
            trained[key] = (result.model, count_parameters(result.model))
        model, n_params = trained[key]
        report = eval_report(
            model,
            gec,
            dataset,
            n_increments=row.config.n_increments,
            pairs=pairs,
            remove=row.remove,
            seed=row.config.seed,
            config={"parameters": n_params, "blocks": model.config.blocks},
            label=row.label,
        )
        reports.append(report)

    summary = {
        "arm": arm,
        "base_config": cfg.to_dict(),
        "rows": [r.to_dict() for r in reports],
    }
    path = out / f"ablation_{arm}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canon_json(summary) + "\n")
    logger.info("wrote %s", path)
    return reports


def ablation_table(arm: str, reports: Sequence[MetricReport]) -> str:
    extra: List[str] = ["parameters", "blocks"] if arm == "variants" else []
    return format_table(reports, extra)

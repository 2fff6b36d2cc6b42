"""Training and run configuration.

Configs are frozen dataclasses with the published defaults. A run config is
read from a flat JSON object (loss weights nested under ``"weights"``);
unknown keys are rejected so that every ablation arm is an exact,
reproducible document. ``IEPG_SEED`` in the environment overrides ``seed``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from ..errors import ConfigurationError
from ..models.fusion import VARIANT_DEPTHS, FusionConfig
from ..models.gec import GecConfig
from ..models.recurrent import CELL_TYPES

SEED_ENV_VAR = "IEPG_SEED"


@dataclass(frozen=True)
class LossWeights:
    siadv: float = 2.0
    style: float = 500.0
    per: float = 0.5
    img: float = 5.0
    sadv: float = 1.0
    ncons: float = 0.01
    pose: float = 10.0

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(
                    f"loss weight '{f.name}' must be non-negative",
                    key=f"weights.{f.name}",
                )

    def to_dict(self) -> Dict[str, float]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LossWeights":
        _reject_unknown(cls, d, prefix="weights.")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch_size: int = 1
    gec_steps: int = 2000
    pis_steps: int = 2000
    seed: int = 0
    n_increments: int = 5
    variant: str = "S"
    queue_capacity: int = 4
    deterministic: bool = True
    log_every: int = 50
    checkpoint_every: int = 500
    teacher_frames: bool = False
    # model shape
    width: int = 128
    heads: int = 2
    iec_base: int = 16
    gec_feature_dim: int = 512
    gec_hidden_dim: int = 256
    cell: str = "gru"
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}", key="lr")
        for name in (
            "batch_size",
            "gec_steps",
            "pis_steps",
            "queue_capacity",
            "log_every",
            "checkpoint_every",
            "width",
            "heads",
            "iec_base",
            "gec_feature_dim",
            "gec_hidden_dim",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive", key=name)
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative", key="seed")
        if self.n_increments < 0:
            raise ConfigurationError(
                "n_increments must be non-negative", key="n_increments"
            )
        if self.variant not in VARIANT_DEPTHS:
            raise ConfigurationError(f"unknown variant '{self.variant}'", key="variant")
        if self.cell not in CELL_TYPES:
            raise ConfigurationError(f"unknown cell '{self.cell}'", key="cell")

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["weights"] = self.weights.to_dict()
        return d

    def gec_config(self) -> GecConfig:
        return GecConfig(
            feature_dim=self.gec_feature_dim,
            noise_dim=self.gec_feature_dim,
            hidden_dim=self.gec_hidden_dim,
            cell=self.cell,
            seed=self.seed,
        )


@dataclass(frozen=True)
class RunConfig(TrainConfig):
    dataset: Optional[str] = None
    output_dir: str = "runs"
    no_tpkf: bool = False
    no_iec: bool = False
    no_msc: bool = False
    no_eada: bool = False
    ie_depth: int = 3

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.ie_depth < 3:
            raise ConfigurationError(
                f"ie_depth must be at least 3, got {self.ie_depth}", key="ie_depth"
            )

    def fusion_config(self, image_size: int) -> FusionConfig:
        return FusionConfig(
            image_size=image_size,
            width=self.width,
            heads=self.heads,
            variant=self.variant,
            iec_base=self.iec_base,
            queue_capacity=self.queue_capacity,
            ie_depth=self.ie_depth,
            no_tpkf=self.no_tpkf,
            no_iec=self.no_iec,
            no_msc=self.no_msc,
            no_eada=self.no_eada,
            seed=self.seed,
        )

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        """Build from a flat mapping; unknown keys raise ConfigurationError."""
        _reject_unknown(cls, d)
        values = dict(d)
        if "weights" in values:
            values["weights"] = LossWeights.from_dict(values["weights"])
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigurationError(f"invalid config: {exc}") from exc

    @classmethod
    def from_json(cls, path: Union[str, os.PathLike]) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def with_env(self, environ: Optional[Mapping[str, str]] = None) -> "RunConfig":
        """Apply the IEPG_SEED override, if set."""
        env = os.environ if environ is None else environ
        raw = env.get(SEED_ENV_VAR)
        if raw is None or raw == "":
            return self
        try:
            seed = int(raw)
        except ValueError as exc:
            raise ConfigurationError(
                f"{SEED_ENV_VAR}={raw!r} is not an integer", key="seed"
            ) from exc
        return self.replace(seed=seed)


def _reject_unknown(cls: type, d: Mapping[str, Any], prefix: str = "") -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigurationError(
            f"unknown config key(s): {', '.join(prefix + k for k in unknown)}",
            key=prefix + unknown[0],
        )

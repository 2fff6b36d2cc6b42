"""Exception hierarchy for IEPG.

Every error raised on purpose by the library derives from ``IepgError`` and
carries the context needed to locate the failure (op name, shapes, config
key, training step, file path).
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple


class IepgError(Exception):
    """Base exception for all IEPG errors."""

    pass


class DimensionError(IepgError):
    """Raised when operand shapes are incompatible for an op."""

    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        self.detail = detail
        super().__init__(str(self))

    def __str__(self) -> str:
        shapes = " vs ".join(str(s) for s in self.shapes)
        msg = f"{self.op}: incompatible shapes {shapes}"
        if self.detail:
            msg += f" ({self.detail})"
        return msg


class ConfigurationError(IepgError):
    """Raised when a configuration value cannot produce a valid computation."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.key = key

    def __str__(self) -> str:
        if self.key:
            return f"{self.message} [key={self.key}]"
        return self.message


class ContractError(IepgError):
    """Raised when an operation's pre-condition is violated by its caller."""

    def __init__(self, op: str, message: str):
        super().__init__(message)
        self.op = op
        self.message = message

    def __str__(self) -> str:
        return f"{self.op}: {self.message}"


class NonFiniteError(IepgError):
    """Raised when an op produces NaN or Inf while it is being verified."""

    def __init__(self, op: str, message: str = "produced a non-finite value"):
        super().__init__(message)
        self.op = op
        self.message = message

    def __str__(self) -> str:
        return f"op '{self.op}' {self.message}"


class TrainingDivergedError(IepgError):
    """Raised when a training loss becomes NaN or Inf."""

    def __init__(self, stage: str, step: int, loss_name: str, value: float):
        super().__init__(f"{stage} diverged")
        self.stage = stage
        self.step = step
        self.loss_name = loss_name
        self.value = value

    def __str__(self) -> str:
        return (
            f"training stage '{self.stage}' diverged at step {self.step}: "
            f"{self.loss_name}={self.value}"
        )


class CheckpointError(IepgError):
    """Raised when a checkpoint file is missing, truncated or malformed."""

    def __init__(self, path: str, message: str):
        super().__init__(message)
        self.path = path
        self.message = message

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"

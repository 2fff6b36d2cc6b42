"""
Append-only loss-curve log.

One plain-text line per recorded value:

    # config {"lr": 0.0002, ...}
    step 0 gec.pose 0.1834
    step 0 gec.sadv -1.3862

The header line carries the config echo so the file is self-describing.
Lines are flushed as they are written; an interrupted run leaves every
completed line readable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, TextIO, Tuple, Union

from ..core.canon import canon_json
from ..errors import ContractError

PathLike = Union[str, os.PathLike]

HEADER_PREFIX = "# config "


@dataclass
class LossLog:
    """Explicit, append-only writer. Open, record, close.

    ``restart`` truncates an existing file first; a training stage always
    restarts its log so the header matches the run that wrote the lines.
    """

    path: Path
    config: Mapping[str, Any] = field(default_factory=dict)
    restart: bool = False
    _fh: Optional[TextIO] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.path = Path(self.path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = (
            self.restart
            or not self.path.exists()
            or self.path.stat().st_size == 0
        )
        mode = "w" if self.restart else "a"
        self._fh = self.path.open(mode, encoding="utf-8")
        if fresh:
            self._fh.write(HEADER_PREFIX + canon_json(dict(self.config)) + "\n")
            self._fh.flush()

    def record(self, step: int, name: str, value: float) -> None:
        if self._fh is None:
            raise ContractError("LossLog.record", "log is closed")
        if " " in name:
            raise ContractError(
                "LossLog.record", f"loss name may not contain spaces: {name!r}"
            )
        self._fh.write(f"step {step} {name} {float(value)!r}\n")
        self._fh.flush()

    def record_all(self, step: int, values: Mapping[str, float]) -> None:
        for name in sorted(values):
            self.record(step, name, values[name])

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "LossLog":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


@dataclass
class LossCurve:
    config: Dict[str, Any]
    entries: List[Tuple[int, str, float]]

    def series(self, name: str) -> List[Tuple[int, float]]:
        return [(s, v) for s, n, v in self.entries if n == name]

    def names(self) -> List[str]:
        return sorted({n for _, n, _ in self.entries})


def read_loss_log(path: PathLike) -> LossCurve:
    """Parse a loss log; malformed lines raise ContractError."""
    config: Dict[str, Any] = {}
    entries: List[Tuple[int, str, float]] = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, 1):
        if not line:
            continue
        if line.startswith(HEADER_PREFIX):
            config = json.loads(line[len(HEADER_PREFIX) :])
            continue
        parts = line.split(" ")
        if len(parts) != 4 or parts[0] != "step":
            raise ContractError(
                "read_loss_log", f"{path}:{lineno}: malformed line {line!r}"
            )
        entries.append((int(parts[1]), parts[2], float(parts[3])))
    return LossCurve(config=config, entries=entries)

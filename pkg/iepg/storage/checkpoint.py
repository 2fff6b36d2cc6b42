"""Binary named-tensor checkpoints.

Layout (all integers little-endian):

    magic            4 bytes  b"IEPG"
    format version   u32
    metadata length  u32, then that many bytes of UTF-8 canonical JSON
    tensor count     u32
    per tensor:
        name length  u32, then UTF-8 name
        rank         u32
        dims         rank x u32
        payload      prod(dims) x f64

Guarantees:
- load(save(x)) reproduces every tensor bit for bit
- Writes go to a temporary file in the same directory and are renamed into
  place, so an interrupted save never leaves a partial checkpoint
- Identical inputs produce byte-identical files (tensors sorted by name,
  metadata canonical)
"""

from __future__ import annotations

import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, ClassVar, Dict, Mapping, Union

import numpy as np

from ..core.canon import canon_json
from ..errors import CheckpointError
from ..version import CHECKPOINT_FORMAT_VERSION

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

CHECKPOINT_MAGIC = b"IEPG"


@dataclass
class Checkpoint:
    """Metadata (stage, seed, config echo) plus a name -> array table."""

    metadata: Dict[str, Any] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    u32: ClassVar[struct.Struct] = struct.Struct("<I")

    @property
    def stage(self) -> str:
        return str(self.metadata.get("stage", ""))

    def subset(self, prefix: str) -> Dict[str, np.ndarray]:
        """Tensors under ``prefix.`` with the prefix stripped."""
        cut = len(prefix) + 1
        return {
            k[cut:]: v for k, v in self.tensors.items() if k.startswith(prefix + ".")
        }

    def to_bytes(self) -> bytes:
        meta = canon_json(self.metadata).encode("utf-8")
        parts = [
            CHECKPOINT_MAGIC,
            self.u32.pack(CHECKPOINT_FORMAT_VERSION),
            self.u32.pack(len(meta)),
            meta,
            self.u32.pack(len(self.tensors)),
        ]
        for name in sorted(self.tensors):
            arr = np.asarray(self.tensors[name], dtype="<f8")
            encoded = name.encode("utf-8")
            parts.append(self.u32.pack(len(encoded)))
            parts.append(encoded)
            parts.append(self.u32.pack(arr.ndim))
            parts.extend(self.u32.pack(d) for d in arr.shape)
            parts.append(np.ascontiguousarray(arr).tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> "Checkpoint":
        reader = _Reader(data, source)
        if reader.take(4) != CHECKPOINT_MAGIC:
            raise CheckpointError(source, "bad magic, not an IEPG checkpoint")
        version = reader.u32()
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                source,
                f"unsupported format version {version} "
                f"(expected {CHECKPOINT_FORMAT_VERSION})",
            )
        try:
            metadata = json.loads(reader.take(reader.u32()).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(source, f"corrupt metadata: {exc}") from exc
        tensors: Dict[str, np.ndarray] = {}
        for _ in range(reader.u32()):
            name = reader.take(reader.u32()).decode("utf-8")
            dims = tuple(reader.u32() for _ in range(reader.u32()))
            count = int(np.prod(dims)) if dims else 1
            payload = reader.take(8 * count)
            flat = np.frombuffer(payload, dtype="<f8")
            tensors[name] = flat.reshape(dims).astype(np.float64)
        if reader.remaining():
            raise CheckpointError(source, f"{reader.remaining()} trailing bytes")
        return cls(metadata=metadata, tensors=tensors)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self._data = data
        self._pos = 0
        self._source = source

    def take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise CheckpointError(self._source, "truncated checkpoint")
        chunk = self._data[self._pos : end]
        self._pos = end
        return chunk

    def u32(self) -> int:
        return Checkpoint.u32.unpack(self.take(4))[0]

    def remaining(self) -> int:
        return len(self._data) - self._pos


def save_checkpoint(
    path: PathLike,
    tensors: Mapping[str, np.ndarray],
    metadata: Mapping[str, Any],
) -> Path:
    """Atomically write a checkpoint to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = Checkpoint(dict(metadata), dict(tensors)).to_bytes()
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info("saved checkpoint %s (%d tensors)", path, len(tensors))
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    """Read a checkpoint.

    Raises:
        CheckpointError: If the file is missing, truncated or malformed
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(str(path), "checkpoint not found") from exc
    ckpt = Checkpoint.from_bytes(data, source=str(path))
    logger.info("loaded checkpoint %s (stage %s)", path, ckpt.stage or "?")
    return ckpt

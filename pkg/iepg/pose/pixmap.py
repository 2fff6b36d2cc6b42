"""Binary portable pixmap (P6) I/O and by-product visualisations."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import ContractError
from .render import NUM_LABELS, SemanticMap
from .skeleton import LIMBS, PoseSkeleton

PathLike = Union[str, os.PathLike]

# RGB per part label, background white
LABEL_COLORS = np.array(
    [
        [1.00, 1.00, 1.00],
        [0.90, 0.75, 0.20],
        [0.80, 0.20, 0.20],
        [0.20, 0.60, 0.90],
        [0.10, 0.30, 0.70],
        [0.30, 0.80, 0.30],
        [0.10, 0.50, 0.10],
    ]
)


def quantize(image: np.ndarray) -> np.ndarray:
    """(3, H, W) floats in [0, 1] to (H, W, 3) uint8."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)


def dequantize(pixels: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 to (3, H, W) floats in [0, 1]."""
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def encode_ppm(image: np.ndarray) -> bytes:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractError("encode_ppm", f"expected (3, H, W), got {image.shape}")
    pixels = quantize(image)
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse a P6 file with maxval 255; header comments are skipped."""
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ContractError("decode_ppm", "truncated header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if fields[0] != b"P6" or fields[3] != b"255":
        raise ContractError("decode_ppm", f"unsupported pixmap header {fields!r}")
    w, h = int(fields[1]), int(fields[2])
    payload = data[pos : pos + w * h * 3]
    if len(payload) != w * h * 3:
        raise ContractError(
            "decode_ppm", f"expected {w * h * 3} payload bytes, got {len(payload)}"
        )
    return dequantize(np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3))


def write_ppm(path: PathLike, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(np.asarray(image)))


def read_ppm(path: PathLike) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def colorize_semantics(semantics: SemanticMap) -> np.ndarray:
    """(3, H, W) colour-coded part map."""
    labels = np.clip(semantics.labels, 0, NUM_LABELS - 1)
    return LABEL_COLORS[labels].transpose(2, 0, 1)


def overlay_skeleton(image: np.ndarray, skeleton: PoseSkeleton) -> np.ndarray:
    """Copy of ``image`` with visible limbs drawn in black and joints in red."""
    out = np.array(image, dtype=np.float64, copy=True)
    _, h, w = out.shape
    px = skeleton.keypoints * np.array([w, h]) - 0.5
    vis = skeleton.visibility
    for a, b in LIMBS:
        if not (vis[a] and vis[b]):
            continue
        steps = int(np.ceil(np.hypot(*(px[b] - px[a])))) + 1
        for t in np.linspace(0.0, 1.0, steps):
            x, y = np.round(px[a] + t * (px[b] - px[a])).astype(int)
            if 0 <= x < w and 0 <= y < h:
                out[:, y, x] = 0.0
    for k in np.flatnonzero(vis):
        x, y = np.round(px[k]).astype(int)
        if 0 <= x < w and 0 <= y < h:
            out[:, y, x] = (1.0, 0.0, 0.0)
    return out

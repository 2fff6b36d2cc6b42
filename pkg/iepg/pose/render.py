"""Rasterization of skeletons into images, part labels and keypoint heatmaps.

Body parts are capsules or dilated convex hulls whose geometry depends only on
the skeleton; the person contributes colours and texture. ``render_image`` and
``render_semantics`` therefore cover exactly the same pixels: a pixel carries a
part label iff its centre lies within the part radius, and the image blends
the part colour with coverage ``clip(r - d + 0.5, 0, 1)``.

Pixel convention: pixel (i, j) has its centre at normalized coordinate
((j + 0.5) / S, (i + 0.5) / S), so a normalized coordinate c maps to the pixel
coordinate c·S - 0.5.

Draw order (later parts overwrite): legs, torso, arms, head.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.tensor import Tensor
from ..errors import ConfigurationError
from .skeleton import K, Person, PoseSkeleton

BACKGROUND = 0
HEAD = 1
TORSO = 2
LEFT_ARM = 3
RIGHT_ARM = 4
LEFT_LEG = 5
RIGHT_LEG = 6
NUM_LABELS = 7

LABEL_NAMES: Dict[int, str] = {
    BACKGROUND: "background",
    HEAD: "head",
    TORSO: "torso",
    LEFT_ARM: "left_arm",
    RIGHT_ARM: "right_arm",
    LEFT_LEG: "left_leg",
    RIGHT_LEG: "right_leg",
}

DEFAULT_IMAGE_SIZE = 64
DEFAULT_HEATMAP_SIGMA = 1.5
FALLBACK_SCALE = 0.22
SKIN = (0.80, 0.62, 0.50)
PATTERN_CELL = 3  # pixels

_LEG_SEGMENTS = {LEFT_LEG: ((11, 12), (12, 13)), RIGHT_LEG: ((8, 9), (9, 10))}
_ARM_SEGMENTS = {LEFT_ARM: ((5, 6), (6, 7)), RIGHT_ARM: ((2, 3), (3, 4))}
_TORSO_JOINTS = (1, 2, 5, 8, 11)
_FACE_JOINTS = (0, 14, 15, 16, 17)


@dataclass(frozen=True)
class BodyPart:
    """One drawable shape: the convex hull of ``points`` dilated by ``radius``.

    Points and radius are in pixel units.
    """

    label: int
    points: Tuple[Tuple[float, float], ...]
    radius: float


@dataclass(frozen=True, eq=False)
class SemanticMap:
    """Per-pixel part labels over {0..6}."""

    labels: np.ndarray

    def one_hot(self) -> np.ndarray:
        """(7, H, W) float indicator planes."""
        planes = np.arange(NUM_LABELS)[:, None, None] == self.labels[None]
        return planes.astype(np.float64)

    def histogram(self) -> np.ndarray:
        return np.bincount(self.labels.reshape(-1), minlength=NUM_LABELS)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape


# =============================================================================
# Geometry
# =============================================================================


def body_scale(skeleton: PoseSkeleton) -> float:
    """Vertical neck to mid-hip distance, or a fixed fallback when unavailable."""
    vis = skeleton.visibility
    hips = [i for i in (8, 11) if vis[i]]
    if not vis[1] or not hips:
        return FALLBACK_SCALE
    mid_y = float(np.mean([skeleton.keypoints[i, 1] for i in hips]))
    scale = abs(mid_y - float(skeleton.keypoints[1, 1]))
    return scale if scale > 1e-6 else FALLBACK_SCALE


def convex_hull(points: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Monotone-chain hull, counter-clockwise, collinear points dropped."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b) -> float:
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: List[Tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def body_parts(skeleton: PoseSkeleton, size: int) -> List[BodyPart]:
    """Drawable parts in draw order, omitting parts with hidden endpoints."""
    scale = body_scale(skeleton) * size
    vis = skeleton.visibility
    px = skeleton.keypoints * size - 0.5

    def point(i: int) -> Tuple[float, float]:
        return (float(px[i, 0]), float(px[i, 1]))

    parts: List[BodyPart] = []
    for label, segments in _LEG_SEGMENTS.items():
        for a, b in segments:
            if vis[a] and vis[b]:
                parts.append(BodyPart(label, (point(a), point(b)), 0.15 * scale))

    torso = [point(i) for i in _TORSO_JOINTS if vis[i]]
    if torso:
        parts.append(BodyPart(TORSO, tuple(convex_hull(torso)), 0.1 * scale))

    for label, segments in _ARM_SEGMENTS.items():
        for a, b in segments:
            if vis[a] and vis[b]:
                parts.append(BodyPart(label, (point(a), point(b)), 0.12 * scale))

    face = [i for i in _FACE_JOINTS if vis[i]]
    center: Optional[Tuple[float, float]] = None
    if face:
        center = (float(px[face, 0].mean()), float(px[face, 1].mean()))
    elif vis[1]:
        neck = point(1)
        center = (neck[0], neck[1] - 0.06 * size)
    if center is not None:
        parts.append(BodyPart(HEAD, (center,), 0.2 * scale))
    return parts


def _segment_distance(
    gx: np.ndarray, gy: np.ndarray, a: Tuple[float, float], b: Tuple[float, float]
) -> np.ndarray:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    length2 = dx * dx + dy * dy
    if length2 <= 0.0:
        return np.hypot(gx - ax, gy - ay)
    t = np.clip(((gx - ax) * dx + (gy - ay) * dy) / length2, 0.0, 1.0)
    return np.hypot(gx - (ax + t * dx), gy - (ay + t * dy))


def distance_field(part: BodyPart, size: int) -> np.ndarray:
    """(size, size) distance in pixels from each pixel centre to the part hull."""
    gy, gx = np.mgrid[0:size, 0:size].astype(np.float64)
    pts = part.points
    if len(pts) == 1:
        return np.hypot(gx - pts[0][0], gy - pts[0][1])
    n = len(pts)
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n if n > 2 else 1)]
    dist = np.min([_segment_distance(gx, gy, a, b) for a, b in edges], axis=0)
    if n > 2:
        inside = np.ones((size, size), dtype=bool)
        for a, b in edges:
            cross = (b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0])
            inside &= cross >= 0
        dist = np.where(inside, 0.0, dist)
    return dist


def coverage(part: BodyPart, size: int) -> np.ndarray:
    """Anti-aliased coverage in [0, 1]."""
    return np.clip(part.radius - distance_field(part, size) + 0.5, 0.0, 1.0)


# =============================================================================
# Renderers
# =============================================================================


def _pattern_fill(person: Person, size: int) -> np.ndarray:
    a = np.array(person.color_a)[:, None, None]
    b = np.array(person.color_b)[:, None, None]
    rows, cols = np.mgrid[0:size, 0:size]
    if person.pattern == "stripe":
        mask = (rows // PATTERN_CELL) % 2 == 0
    elif person.pattern == "checker":
        mask = ((rows // PATTERN_CELL) + (cols // PATTERN_CELL)) % 2 == 0
    else:
        mask = np.ones((size, size), dtype=bool)
    return np.where(mask[None], a, b)


def render_image(
    person: Person, skeleton: PoseSkeleton, size: int = DEFAULT_IMAGE_SIZE
) -> Tensor:
    """(3, size, size) image on a white background, values in [0, 1]."""
    img = np.ones((3, size, size))
    body = _pattern_fill(person, size)
    legs = np.broadcast_to(np.array(person.leg_color)[:, None, None], img.shape)
    skin = np.broadcast_to(np.array(SKIN)[:, None, None], img.shape)
    fills = {
        HEAD: skin,
        TORSO: body,
        LEFT_ARM: body,
        RIGHT_ARM: body,
        LEFT_LEG: legs,
        RIGHT_LEG: legs,
    }
    for part in body_parts(skeleton, size):
        alpha = coverage(part, size)[None]
        img = img * (1.0 - alpha) + fills[part.label] * alpha
    return Tensor(np.clip(img, 0.0, 1.0))


def render_semantics(
    skeleton: PoseSkeleton, size: int = DEFAULT_IMAGE_SIZE
) -> SemanticMap:
    """Part labels with the same geometry and draw order as ``render_image``."""
    labels = np.zeros((size, size), dtype=np.int64)
    for part in body_parts(skeleton, size):
        labels[distance_field(part, size) <= part.radius] = part.label
    return SemanticMap(labels)


def render_heatmaps(
    skeleton: PoseSkeleton,
    size: int = DEFAULT_IMAGE_SIZE,
    sigma: float = DEFAULT_HEATMAP_SIGMA,
) -> np.ndarray:
    """(K, size, size) Gaussian bumps of peak 1; hidden keypoints give zeros."""
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}", key="sigma")
    grid = np.arange(size, dtype=np.float64)
    maps = np.zeros((K, size, size))
    for k in range(K):
        if not skeleton.visibility[k]:
            continue
        cx, cy = skeleton.keypoints[k] * size - 0.5
        gx = np.exp(-((grid - cx) ** 2) / (2.0 * sigma * sigma))
        gy = np.exp(-((grid - cy) ** 2) / (2.0 * sigma * sigma))
        maps[k] = gy[:, None] * gx[None, :]
    return maps

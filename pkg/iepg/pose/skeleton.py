"""Articulated turning figures and their 2D skeletons.

A ``Person`` fixes limb lengths and appearance. ``skeleton_at_yaw`` places the
person's canonical 3D joints in a body frame, rotates them about the vertical
axis and projects orthographically onto the unit image square.

Body frame:
- X is lateral, the person's left is +X
- Y points down the image
- Z points toward the camera at yaw 0

Core Invariants:
- Keypoint order follows the 18-point body layout (nose, neck, right arm,
  left arm, right leg, left leg, eyes, ears)
- Invisible keypoints carry the sentinel (-1, -1)
- Visible coordinates lie in [0, 1]^2
- The canonical figure is left/right symmetric, so skeleton_at_yaw(p, 360-y)
  is the mirror image of skeleton_at_yaw(p, y) with sides swapped
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, DimensionError

K = 18

KEYPOINT_NAMES: Tuple[str, ...] = (
    "nose",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_eye",
    "l_eye",
    "r_ear",
    "l_ear",
)

# Index of the same joint on the other side of the body
MIRROR_INDEX: Tuple[int, ...] = (
    0, 1, 5, 6, 7, 2, 3, 4, 11, 12, 13, 8, 9, 10, 15, 14, 17, 16
)  # fmt: skip

LIMBS: Tuple[Tuple[int, int], ...] = (
    (1, 2), (2, 3), (3, 4), (1, 5), (5, 6), (6, 7),
    (1, 8), (8, 9), (9, 10), (1, 11), (11, 12), (12, 13),
    (1, 0), (0, 14), (14, 16), (0, 15), (15, 17),
)  # fmt: skip

SENTINEL = -1.0

PATTERNS = ("solid", "stripe", "checker")

# Sampling ranges for limb lengths, in units of image height
LIMB_RANGES: Dict[str, Tuple[float, float]] = {
    "torso": (0.20, 0.24),
    "head": (0.10, 0.12),
    "upper_arm": (0.10, 0.12),
    "lower_arm": (0.09, 0.11),
    "upper_leg": (0.15, 0.18),
    "lower_leg": (0.14, 0.17),
}

_OCCLUSION_TOL = 1e-9
_SEPARATION_TOL = 1e-9


# =============================================================================
# Person
# =============================================================================


@dataclass(frozen=True)
class Person:
    """Limb lengths and appearance of one synthetic subject."""

    person_id: int
    torso: float
    head: float
    upper_arm: float
    lower_arm: float
    upper_leg: float
    lower_leg: float
    pattern: str
    color_a: Tuple[float, float, float]
    color_b: Tuple[float, float, float]
    leg_color: Tuple[float, float, float]
    seed: int

    def __post_init__(self) -> None:
        lengths = (
            self.torso,
            self.head,
            self.upper_arm,
            self.lower_arm,
            self.upper_leg,
            self.lower_leg,
        )
        if min(lengths) <= 0:
            raise ConfigurationError(
                f"person {self.person_id}: limb lengths must be positive"
            )
        if self.head + self.torso + self.upper_leg + self.lower_leg >= 1.0:
            raise ConfigurationError(
                f"person {self.person_id}: figure taller than the frame"
            )
        if self.pattern not in PATTERNS:
            raise ConfigurationError(f"unknown pattern '{self.pattern}'", key="pattern")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "person_id": self.person_id,
            "torso": self.torso,
            "head": self.head,
            "upper_arm": self.upper_arm,
            "lower_arm": self.lower_arm,
            "upper_leg": self.upper_leg,
            "lower_leg": self.lower_leg,
            "pattern": self.pattern,
            "color_a": list(self.color_a),
            "color_b": list(self.color_b),
            "leg_color": list(self.leg_color),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Person":
        return cls(
            person_id=int(d["person_id"]),
            torso=float(d["torso"]),
            head=float(d["head"]),
            upper_arm=float(d["upper_arm"]),
            lower_arm=float(d["lower_arm"]),
            upper_leg=float(d["upper_leg"]),
            lower_leg=float(d["lower_leg"]),
            pattern=str(d["pattern"]),
            color_a=tuple(float(c) for c in d["color_a"]),
            color_b=tuple(float(c) for c in d["color_b"]),
            leg_color=tuple(float(c) for c in d["leg_color"]),
            seed=int(d["seed"]),
        )


def random_person(person_id: int, seed: int) -> Person:
    """Sample limb lengths and appearance from a generator seeded by ``seed``."""
    rng = np.random.default_rng(seed)
    lengths = {
        name: float(rng.uniform(lo, hi)) for name, (lo, hi) in LIMB_RANGES.items()
    }

    def color() -> Tuple[float, float, float]:
        return tuple(float(c) for c in rng.uniform(0.05, 0.85, size=3))

    return Person(
        person_id=person_id,
        pattern=PATTERNS[int(rng.integers(len(PATTERNS)))],
        color_a=color(),
        color_b=color(),
        leg_color=color(),
        seed=seed,
        **lengths,
    )


# =============================================================================
# PoseSkeleton
# =============================================================================


@dataclass(frozen=True, eq=False)
class PoseSkeleton:
    """K keypoints in normalized image units plus visibility flags."""

    keypoints: np.ndarray = field(repr=False)
    visibility: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        kp = np.array(self.keypoints, dtype=np.float64).reshape(-1, 2)
        vis = np.array(self.visibility, dtype=bool).reshape(-1)
        if kp.shape != (K, 2) or vis.shape != (K,):
            raise DimensionError(
                "PoseSkeleton",
                [kp.shape, vis.shape],
                f"expected ({K}, 2) and ({K},)",
            )
        kp[~vis] = SENTINEL
        kp.flags.writeable = False
        vis.flags.writeable = False
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "visibility", vis)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseSkeleton):
            return NotImplemented
        return bool(
            np.array_equal(self.keypoints, other.keypoints)
            and np.array_equal(self.visibility, other.visibility)
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def invisible(cls) -> "PoseSkeleton":
        return cls(np.full((K, 2), SENTINEL), np.zeros(K, dtype=bool))

    @classmethod
    def from_flat(cls, coords: np.ndarray, visibility: np.ndarray) -> "PoseSkeleton":
        """Build from a 2K vector; visible coordinates are clipped to [0, 1]."""
        kp = np.clip(np.asarray(coords, dtype=np.float64).reshape(K, 2), 0.0, 1.0)
        return cls(kp, visibility)

    def flat(self) -> np.ndarray:
        """2K vector (x0, y0, x1, y1, ...), invisible keypoints as sentinel."""
        return self.keypoints.reshape(-1).copy()

    def mirrored(self) -> "PoseSkeleton":
        """x-mirror with left/right labels swapped."""
        idx = np.array(MIRROR_INDEX)
        kp = self.keypoints[idx].copy()
        kp[:, 0] = 1.0 - kp[:, 0]
        return PoseSkeleton(kp, self.visibility[idx])

    @property
    def num_visible(self) -> int:
        return int(self.visibility.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "keypoints": [[float(x), float(y)] for x, y in self.keypoints],
            "visibility": [bool(v) for v in self.visibility],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "PoseSkeleton":
        keypoints = np.array(d["keypoints"], dtype=np.float64)
        return cls(keypoints, np.array(d["visibility"]))


# =============================================================================
# Geometry
# =============================================================================


def _unit(x: float, y: float, z: float) -> np.ndarray:
    v = np.array([x, y, z])
    return v / np.linalg.norm(v)


def canonical_joints(person: Person) -> np.ndarray:
    """(K, 3) joint positions in the body frame, figure centred on X = 0."""
    total = person.head + person.torso + person.upper_leg + person.lower_leg
    top = (1.0 - total) / 2.0
    neck_y = top + person.head
    hip_y = neck_y + person.torso
    sw = 0.42 * person.torso
    hw = 0.28 * person.torso
    hr = 0.4 * person.head
    shoulder_y = neck_y + 0.05 * person.torso

    j = np.zeros((K, 3))
    j[0] = (0.0, neck_y - 0.45 * person.head, hr)
    j[1] = (0.0, neck_y, 0.0)
    for side, (sh, el, wr, hip, kn, an, eye, ear) in (
        (-1.0, (2, 3, 4, 8, 9, 10, 14, 16)),
        (1.0, (5, 6, 7, 11, 12, 13, 15, 17)),
    ):
        j[sh] = (side * sw, shoulder_y, 0.0)
        j[el] = j[sh] + person.upper_arm * _unit(side * 0.25, 0.95, 0.15)
        j[wr] = j[el] + person.lower_arm * _unit(side * 0.15, 0.9, 0.4)
        j[hip] = (side * hw, hip_y, 0.0)
        j[kn] = j[hip] + person.upper_leg * _unit(side * 0.03, 1.0, 0.02)
        j[an] = j[kn] + person.lower_leg * _unit(side * 0.02, 1.0, -0.02)
        j[eye] = (side * 0.35 * hr, neck_y - 0.6 * person.head, 0.85 * hr)
        j[ear] = (side * hr, neck_y - 0.55 * person.head, 0.0)
    return j


def occluders(person: Person) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Axis-aligned (lo, hi) boxes in the body frame: torso slab and head."""
    total = person.head + person.torso + person.upper_leg + person.lower_leg
    neck_y = (1.0 - total) / 2.0 + person.head
    hip_y = neck_y + person.torso
    half_w = 0.8 * min(0.42 * person.torso, 0.28 * person.torso)
    half_d = 0.18 * person.torso
    hr = 0.4 * person.head
    torso = (np.array([-half_w, neck_y, -half_d]), np.array([half_w, hip_y, half_d]))
    head_half = 0.8 * hr
    head = (
        np.array([-head_half, neck_y - person.head, -head_half]),
        np.array([head_half, neck_y, head_half]),
    )
    return [torso, head]


def _ray_hits_box(p: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    """True if the ray p + s·d enters the box strictly in front of p."""
    s_in, s_out = -np.inf, np.inf
    for axis in range(3):
        if abs(d[axis]) < 1e-12:
            if p[axis] < lo[axis] or p[axis] > hi[axis]:
                return False
            continue
        t1 = (lo[axis] - p[axis]) / d[axis]
        t2 = (hi[axis] - p[axis]) / d[axis]
        s_in = max(s_in, min(t1, t2))
        s_out = min(s_out, max(t1, t2))
    return s_in <= s_out and s_in > _OCCLUSION_TOL


def project_keypoints(person: Person, yaw_deg: float) -> Tuple[np.ndarray, np.ndarray]:
    """Raw projected (K, 2) coordinates and (K,) visibility at ``yaw_deg``.

    Coordinates are returned for every joint, occluded or not.
    """
    theta = np.deg2rad(yaw_deg)
    c, s = np.cos(theta), np.sin(theta)
    joints = canonical_joints(person)
    x_rot = joints[:, 0] * c + joints[:, 2] * s
    coords = np.stack([0.5 + x_rot, joints[:, 1]], axis=1)

    toward_camera = np.array([-s, 0.0, c])
    boxes = occluders(person)
    visible = np.array(
        [
            not any(_ray_hits_box(joint, toward_camera, lo, hi) for lo, hi in boxes)
            for joint in joints
        ]
    )
    return coords, visible


def skeleton_at_yaw(person: Person, yaw_deg: float) -> PoseSkeleton:
    """Skeleton of ``person`` turned by ``yaw_deg`` about the vertical axis.

    Raises:
        ConfigurationError: If yaw_deg is outside [0, 360)
    """
    if not 0.0 <= yaw_deg < 360.0:
        raise ConfigurationError(f"yaw must lie in [0, 360), got {yaw_deg}", key="yaw")
    coords, visible = project_keypoints(person, yaw_deg)
    return PoseSkeleton(coords, visible)


def estimate_yaw_sign(skeleton: PoseSkeleton) -> float:
    """Signed shoulder separation (left minus right x), 0 when either is hidden.

    Positive while the figure faces the camera, negative when turned away.
    """
    if not (skeleton.visibility[2] and skeleton.visibility[5]):
        return 0.0
    return float(skeleton.keypoints[5, 0] - skeleton.keypoints[2, 0])


def yaw_progression_monotone(skeletons: Sequence[PoseSkeleton]) -> bool:
    """True if the shoulder separation moves one way along ``skeletons``.

    Frames with a hidden shoulder are skipped. Separation follows cos(yaw), so
    the check is only meaningful for turns that stay within one half-turn.
    """
    seps = [
        estimate_yaw_sign(s) for s in skeletons if s.visibility[2] and s.visibility[5]
    ]
    steps = np.diff(seps)
    return bool(np.all(steps <= _SEPARATION_TOL) or np.all(steps >= -_SEPARATION_TOL))

from .dataset import Dataset, Frame, gen_dataset, load_dataset, write_dataset
from .pixmap import colorize_semantics, overlay_skeleton, read_ppm, write_ppm
from .render import (
    NUM_LABELS,
    BodyPart,
    SemanticMap,
    body_parts,
    render_heatmaps,
    render_image,
    render_semantics,
)
from .skeleton import (
    K,
    KEYPOINT_NAMES,
    MIRROR_INDEX,
    Person,
    PoseSkeleton,
    estimate_yaw_sign,
    project_keypoints,
    random_person,
    skeleton_at_yaw,
    yaw_progression_monotone,
)

__all__ = [
    # Skeletons
    "K",
    "KEYPOINT_NAMES",
    "MIRROR_INDEX",
    "Person",
    "PoseSkeleton",
    "estimate_yaw_sign",
    "project_keypoints",
    "random_person",
    "skeleton_at_yaw",
    "yaw_progression_monotone",
    # Rendering
    "NUM_LABELS",
    "BodyPart",
    "SemanticMap",
    "body_parts",
    "render_heatmaps",
    "render_image",
    "render_semantics",
    # Dataset and I/O
    "Dataset",
    "Frame",
    "gen_dataset",
    "load_dataset",
    "write_dataset",
    "colorize_semantics",
    "overlay_skeleton",
    "read_ppm",
    "write_ppm",
]

"""Procedural turning-figure dataset.

Each person is rendered at every multiple of ``yaw_step`` degrees. The split
is by person, never by frame. On disk a dataset is a directory holding
``index.json`` and one sub-directory of P6 frames per person:

    <root>/index.json
    <root>/person_000/yaw_000.ppm
    <root>/person_000/yaw_001.ppm
    ...

Guarantees:
- gen_dataset is deterministic per (n_persons, yaw_step, image_size, seed)
- Images are quantized to 8 bits at generation, so a written and reloaded
  dataset has the same digest as the in-memory one
- Semantic maps are regenerated from skeletons on load
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..core.canon import digest
from ..errors import ConfigurationError
from ..version import DATASET_SCHEMA_VERSION, IEPG_VERSION
from .pixmap import dequantize, quantize, read_ppm, write_ppm
from .render import SemanticMap, render_image, render_semantics
from .skeleton import Person, PoseSkeleton, random_person, skeleton_at_yaw

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

DEFAULT_PERSONS = 28
DEFAULT_YAW_STEP = 15.0
TRAIN_FRACTION = 23 / 28
MIN_IMAGE_SIZE = 16
MAX_IMAGE_SIZE = 128
INDEX_FILE = "index.json"


@dataclass(frozen=True, eq=False)
class Frame:
    """One (skeleton, semantics, image) triple of a person at a yaw."""

    person_id: int
    yaw_index: int
    yaw: float
    skeleton: PoseSkeleton
    semantics: SemanticMap
    image: np.ndarray = field(repr=False)


@dataclass
class Dataset:
    persons: List[Person]
    frames: Dict[Tuple[int, int], Frame]
    train_ids: List[int]
    test_ids: List[int]
    yaw_step: float
    image_size: int
    seed: int

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def n_yaws(self) -> int:
        return int(round(360.0 / self.yaw_step))

    def person(self, person_id: int) -> Person:
        for p in self.persons:
            if p.person_id == person_id:
                return p
        raise KeyError(person_id)

    def frame(self, person_id: int, yaw_index: int) -> Frame:
        return self.frames[(person_id, yaw_index % self.n_yaws)]

    def frames_of(self, person_id: int) -> List[Frame]:
        return [self.frame(person_id, i) for i in range(self.n_yaws)]

    def split_of(self, person_id: int) -> str:
        return "train" if person_id in self.train_ids else "test"

    def nearest_yaw_index(self, yaw: float) -> int:
        return int(round((yaw % 360.0) / self.yaw_step)) % self.n_yaws

    def ground_truth_path(
        self, person_id: int, src_index: int, tgt_index: int, n_increments: int
    ) -> List[Frame]:
        """Source, ``n_increments`` intermediates and target along the shorter arc.

        Intermediate frames are the grid frames nearest to the linearly
        interpolated yaw.
        """
        src_yaw = src_index * self.yaw_step
        tgt_yaw = tgt_index * self.yaw_step
        delta = (tgt_yaw - src_yaw + 180.0) % 360.0 - 180.0
        n = n_increments + 1
        path = [self.frame(person_id, src_index)]
        for i in range(1, n):
            yaw = src_yaw + delta * i / n
            path.append(self.frame(person_id, self.nearest_yaw_index(yaw)))
        path.append(self.frame(person_id, tgt_index))
        return path

    def index(self) -> Dict[str, Any]:
        """The JSON index, as written to ``index.json``."""
        persons = []
        for p in self.persons:
            entry = p.to_dict()
            entry["split"] = self.split_of(p.person_id)
            entry["frames"] = [
                {
                    "yaw_index": f.yaw_index,
                    "yaw": f.yaw,
                    "file": f"{_person_dir(p.person_id)}/{_frame_file(f.yaw_index)}",
                    **f.skeleton.to_dict(),
                }
                for f in self.frames_of(p.person_id)
            ]
            persons.append(entry)
        return {
            "schema": DATASET_SCHEMA_VERSION,
            "iepg_version": IEPG_VERSION,
            "seed": self.seed,
            "image_size": self.image_size,
            "yaw_step": self.yaw_step,
            "persons": persons,
        }

    def digest(self) -> str:
        """SHA-256 over the index and every frame's 8-bit pixels."""
        pixels = [quantize(self.frames[key].image) for key in sorted(self.frames)]
        return digest(self.index(), *pixels)


def _person_dir(person_id: int) -> str:
    return f"person_{person_id:03d}"


def _frame_file(yaw_index: int) -> str:
    return f"yaw_{yaw_index:03d}.ppm"


def split_persons(
    n_persons: int, rng: np.random.Generator
) -> Tuple[List[int], List[int]]:
    """Seeded by-person split, about 23:5, at least one test person."""
    n_train = min(int(round(n_persons * TRAIN_FRACTION)), n_persons - 1)
    order = rng.permutation(n_persons)
    train = sorted(int(i) for i in order[:n_train])
    test = sorted(int(i) for i in order[n_train:])
    return train, test


def make_frame(
    person: Person, yaw_index: int, yaw_step: float, image_size: int
) -> Frame:
    yaw = yaw_index * yaw_step
    skeleton = skeleton_at_yaw(person, yaw)
    image = dequantize(quantize(render_image(person, skeleton, image_size).data))
    return Frame(
        person_id=person.person_id,
        yaw_index=yaw_index,
        yaw=yaw,
        skeleton=skeleton,
        semantics=render_semantics(skeleton, image_size),
        image=image,
    )


def _validate(n_persons: int, yaw_step: float, image_size: int) -> None:
    if n_persons < 2:
        raise ConfigurationError(
            f"need at least 2 persons, got {n_persons}", key="persons"
        )
    if yaw_step <= 0 or abs(360.0 / yaw_step - round(360.0 / yaw_step)) > 1e-9:
        raise ConfigurationError(
            f"360 is not divisible by yaw step {yaw_step}", key="yaw_step"
        )
    if not MIN_IMAGE_SIZE <= image_size <= MAX_IMAGE_SIZE or image_size % 4:
        raise ConfigurationError(
            f"image size must be a multiple of 4 in "
            f"[{MIN_IMAGE_SIZE}, {MAX_IMAGE_SIZE}], "
            f"got {image_size}",
            key="image_size",
        )


def gen_dataset(
    n_persons: int = DEFAULT_PERSONS,
    yaw_step: float = DEFAULT_YAW_STEP,
    image_size: int = 64,
    seed: int = 0,
) -> Dataset:
    """Generate every person at every yaw.

    Raises:
        ConfigurationError: If 360 is not a multiple of yaw_step, the image
            size is out of range, or fewer than two persons are requested
    """
    _validate(n_persons, yaw_step, image_size)
    rng = np.random.default_rng(seed)
    person_seeds = rng.integers(0, 2**31 - 1, size=n_persons)
    persons = [random_person(i, int(s)) for i, s in enumerate(person_seeds)]
    train_ids, test_ids = split_persons(n_persons, rng)
    n_yaws = int(round(360.0 / yaw_step))
    frames = {
        (p.person_id, i): make_frame(p, i, yaw_step, image_size)
        for p in persons
        for i in range(n_yaws)
    }
    logger.info(
        "generated %d persons x %d yaws at %dpx (seed %d)",
        n_persons,
        n_yaws,
        image_size,
        seed,
    )
    return Dataset(
        persons=persons,
        frames=frames,
        train_ids=train_ids,
        test_ids=test_ids,
        yaw_step=float(yaw_step),
        image_size=image_size,
        seed=seed,
    )


def write_dataset(dataset: Dataset, root: PathLike) -> Path:
    """Write frames and the index under ``root``; returns the index path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for p in dataset.persons:
        pdir = root / _person_dir(p.person_id)
        pdir.mkdir(exist_ok=True)
        for f in dataset.frames_of(p.person_id):
            write_ppm(pdir / _frame_file(f.yaw_index), f.image)
    index_path = root / INDEX_FILE
    index_path.write_text(json.dumps(dataset.index(), indent=2, sort_keys=True) + "\n")
    logger.info("wrote %d frames to %s", len(dataset), root)
    return index_path


def load_dataset(root: PathLike) -> Dataset:
    """Read a dataset written by ``write_dataset``.

    Raises:
        FileNotFoundError: If the index or a frame file is missing
        ConfigurationError: If the index schema is not recognised
    """
    root = Path(root)
    index = json.loads((root / INDEX_FILE).read_text())
    if index.get("schema") != DATASET_SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported dataset schema {index.get('schema')!r}", key="schema"
        )
    size = int(index["image_size"])
    persons: List[Person] = []
    frames: Dict[Tuple[int, int], Frame] = {}
    train_ids: List[int] = []
    test_ids: List[int] = []
    for entry in index["persons"]:
        person = Person.from_dict(entry)
        persons.append(person)
        (train_ids if entry["split"] == "train" else test_ids).append(person.person_id)
        for fd in entry["frames"]:
            skeleton = PoseSkeleton.from_dict(fd)
            frames[(person.person_id, int(fd["yaw_index"]))] = Frame(
                person_id=person.person_id,
                yaw_index=int(fd["yaw_index"]),
                yaw=float(fd["yaw"]),
                skeleton=skeleton,
                semantics=render_semantics(skeleton, size),
                image=read_ppm(root / fd["file"]),
            )
    logger.info("loaded %d frames from %s", len(frames), root)
    return Dataset(
        persons=persons,
        frames=frames,
        train_ids=sorted(train_ids),
        test_ids=sorted(test_ids),
        yaw_step=float(index["yaw_step"]),
        image_size=size,
        seed=int(index["seed"]),
    )

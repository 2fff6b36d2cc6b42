"""(source, target) frame pairs of the same person.

Pairs are ordered and never mix persons. Exhaustive enumeration yields
``persons x yaws x (yaws - 1)`` pairs (identity pairs excluded by default);
sampled enumeration draws ``n`` of them without replacement from a seeded
generator, keeping the exhaustive order among the drawn pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, ContractError
from ..pose.dataset import Dataset

PAIR_MODES = ("exhaustive", "sampled")


@dataclass(frozen=True)
class FramePair:
    person_id: int
    src_index: int
    tgt_index: int

    def to_dict(self) -> dict:
        return {
            "person_id": self.person_id,
            "src_index": self.src_index,
            "tgt_index": self.tgt_index,
        }


def sample_pair(
    dataset: Dataset, person_ids: Sequence[int], rng: np.random.Generator
) -> FramePair:
    """One random ordered pair with distinct yaws."""
    if not person_ids:
        raise ContractError("sample_pair", "no persons to sample from")
    if dataset.n_yaws < 2:
        raise ContractError("sample_pair", "dataset has a single yaw")
    pid = int(person_ids[int(rng.integers(len(person_ids)))])
    src, tgt = (int(i) for i in rng.choice(dataset.n_yaws, size=2, replace=False))
    return FramePair(pid, src, tgt)


def enumerate_pairs(
    dataset: Dataset,
    person_ids: Sequence[int],
    mode: str = "exhaustive",
    n: Optional[int] = None,
    seed: int = 0,
    include_identity: bool = False,
) -> List[FramePair]:
    """All ordered pairs, or ``n`` of them in sampled mode.

    Raises:
        ConfigurationError: On an unknown mode or a missing/invalid ``n``
    """
    if mode not in PAIR_MODES:
        raise ConfigurationError(f"unknown pair mode '{mode}'", key="pairs")
    pairs = [
        FramePair(int(pid), s, t)
        for pid in person_ids
        for s in range(dataset.n_yaws)
        for t in range(dataset.n_yaws)
        if include_identity or s != t
    ]
    if mode == "exhaustive":
        return pairs
    if n is None or n < 1:
        raise ConfigurationError(
            "sampled mode needs a positive pair count", key="pairs"
        )
    if n >= len(pairs):
        return pairs
    picked = np.random.default_rng(seed).choice(len(pairs), size=n, replace=False)
    return [pairs[i] for i in sorted(int(i) for i in picked)]

"""Parameter containers.

A ``Module`` owns learnable tensors as attributes and may nest other modules,
either directly or in lists. ``named_parameters`` walks attributes in
definition order, so parameter names and their order are stable across runs
and match the checkpoint tensor table.
"""

from __future__ import annotations

from typing import Dict, Iterator, List, Tuple

import numpy as np

from ..errors import CheckpointError, DimensionError
from .canon import digest
from .tensor import Tensor


def parameter(data: np.ndarray, name: str = "") -> Tensor:
    """A learnable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def uniform_init(
    rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int
) -> np.ndarray:
    """Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]."""
    bound = float(np.sqrt(1.0 / max(fan_in, 1)))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class for everything that carries parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            path = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{path}.{i}", item

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_dict(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], source: str = "") -> None:
        """Copy arrays into the matching parameters.

        Raises:
            CheckpointError: If a parameter is missing or unexpected
            DimensionError: If a stored array has the wrong shape
        """
        own = self.parameter_dict()
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise CheckpointError(
                source or "<state>",
                f"parameter mismatch: missing={missing[:5]} unexpected={extra[:5]}",
            )
        for name, param in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != param.shape:
                raise DimensionError(
                    f"load_state_dict[{name}]", [param.shape, arr.shape]
                )
            param.data = arr.copy()

    def parameter_hash(self) -> str:
        """SHA-256 over names and values, used to prove a model was not updated."""
        items = [item for name, p in self.named_parameters() for item in (name, p.data)]
        return digest(*items)

"""Recurrent cells and the bidirectional layer used by the evolution network.

GRU update, per step:

    r_t = sigmoid(x_t W_xr + h_{t-1} W_hr + b_r)
    u_t = sigmoid(x_t W_xu + h_{t-1} W_hu + b_u)
    c_t = tanh(x_t W_xc + r_t * (h_{t-1} W_hc) + b_c)
    h_t = (1 - u_t) * h_{t-1} + u_t * c_t

The plain cell is h_t = tanh(x_t W_x + h_{t-1} W_h + b).
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from ..core import ops
from ..core.module import Module
from ..core.tensor import Tensor
from ..errors import ConfigurationError
from .layers import Linear

CELL_TYPES = ("gru", "tanh")


class TanhCell(Module):
    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.x_proj = Linear(in_dim, hidden, rng)
        self.h_proj = Linear(hidden, hidden, rng, bias=False)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return ops.tanh(self.x_proj(x) + self.h_proj(h))


class GRUCell(Module):
    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        # reset, update and candidate gates stacked along the output axis
        self.x_proj = Linear(in_dim, 3 * hidden, rng)
        self.h_proj = Linear(hidden, 3 * hidden, rng, bias=False)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        d = self.hidden
        xg = self.x_proj(x)
        hg = self.h_proj(h)
        r = ops.sigmoid(xg[0:d] + hg[0:d])
        u = ops.sigmoid(xg[d : 2 * d] + hg[d : 2 * d])
        c = ops.tanh(xg[2 * d :] + r * hg[2 * d :])
        return (1.0 - u) * h + u * c


def make_cell(kind: str, in_dim: int, hidden: int, rng: np.random.Generator) -> Module:
    if kind == "gru":
        return GRUCell(in_dim, hidden, rng)
    if kind == "tanh":
        return TanhCell(in_dim, hidden, rng)
    raise ConfigurationError(
        f"unknown cell type '{kind}', expected one of {CELL_TYPES}", key="cell"
    )


class BiRecurrentLayer(Module):
    """Runs a forward and a backward cell over a sequence.

    The output at step t is the concatenation of the forward state after
    consuming steps 0..t and the backward state after consuming steps t..T-1.
    """

    def __init__(
        self, in_dim: int, hidden: int, rng: np.random.Generator, cell: str = "gru"
    ):
        self.hidden = hidden
        self.forward_cell = make_cell(cell, in_dim, hidden, rng)
        self.backward_cell = make_cell(cell, in_dim, hidden, rng)

    def __call__(self, xs: Sequence[Tensor]) -> List[Tensor]:
        steps = len(xs)
        h = Tensor(np.zeros(self.hidden))
        fwd: List[Tensor] = []
        for t in range(steps):
            h = self.forward_cell(xs[t], h)
            fwd.append(h)
        h = Tensor(np.zeros(self.hidden))
        bwd: List[Tensor] = [h] * steps
        for t in reversed(range(steps)):
            h = self.backward_cell(xs[t], h)
            bwd[t] = h
        return [ops.concat([f, b]) for f, b in zip(fwd, bwd)]

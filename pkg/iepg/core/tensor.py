"""
Dense float64 tensors and the reverse-mode gradient tape.

Every learnable computation in IEPG is built from the ops in ``ops.py``. An op
computes its forward value eagerly with numpy and, when a ``Tape`` is active
and at least one input requires a gradient, appends a ``Node`` holding the
inputs, the output and the local backward rule.

Core Invariants:
- Tape nodes are appended in execution order, so the tape is topologically
  sorted: every node's inputs were produced before it
- ``backward`` replays the tape in reverse and visits each node exactly once
- Gradients are exact reverse-mode derivatives in 64-bit reals
- Evaluation is sequential; identical inputs give bit-identical results

Usage:
    with Tape() as tape:
        loss = ops.sum(ops.matmul(x, w))
    grads = backward(loss, tape)
"""

from __future__ import annotations

import contextvars
import itertools
from contextlib import contextmanager
from dataclasses import dataclass
from typing import (
    Callable,
    Dict,
    Generator,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from ..errors import ContractError, NonFiniteError

# Backward rule: maps the output gradient to one gradient (or None) per input
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_uids = itertools.count()

# The innermost active tape; ops record into it
_active_tape: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "active_tape", default=None
)


class Tensor:
    """An n-dimensional float64 array that may participate in a gradient tape.

    Attributes:
        data: numpy float64 array (row-major)
        requires_grad: whether gradients are tracked for this tensor
        grad: gradient array set by ``backward`` for leaf tensors
        uid: process-unique id, the key of the gradient map
        name: optional label (parameter name)
    """

    __slots__ = ("data", "requires_grad", "grad", "uid", "name")

    # numpy defers binary operators to Tensor's reflected methods
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.uid = next(_uids)
        self.name = name

    # *** properties ***

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item", f"tensor of shape {self.shape} is not scalar")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # *** operators ***

    def __add__(self, other):
        return _ops.add(self, other)

    def __radd__(self, other):
        return _ops.add(other, self)

    def __sub__(self, other):
        return _ops.sub(self, other)

    def __rsub__(self, other):
        return _ops.sub(other, self)

    def __mul__(self, other):
        return _ops.mul(self, other)

    def __rmul__(self, other):
        return _ops.mul(other, self)

    def __truediv__(self, other):
        return _ops.div(self, other)

    def __rtruediv__(self, other):
        return _ops.div(other, self)

    def __neg__(self):
        return _ops.neg(self)

    def __pow__(self, exponent: float):
        return _ops.power(self, exponent)

    def __matmul__(self, other):
        return _ops.matmul(self, other)

    def __getitem__(self, index):
        return _ops.getitem(self, index)

    # *** method forms ***

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def transpose(self, axes: Optional[Sequence[int]] = None) -> "Tensor":
        return _ops.transpose(self, axes)

    @property
    def T(self) -> "Tensor":
        return _ops.transpose(self)


@dataclass(frozen=True)
class Node:
    """One recorded operation on the tape."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of differentiable operations.

    A tape is activated with ``with Tape() as tape:``; nested tapes shadow
    outer ones until they exit.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def check_finite(self) -> None:
        """Raise NonFiniteError naming the first op whose output is not finite."""
        for node in self.nodes:
            if not np.all(np.isfinite(node.output.data)):
                raise NonFiniteError(node.op)


def active_tape() -> Optional[Tape]:
    """Return the innermost active tape, or None."""
    return _active_tape.get()


@contextmanager
def no_grad() -> Generator[None, None, None]:
    """Suspend recording: ops inside the block never reach any tape."""
    token = _active_tape.set(None)
    try:
        yield
    finally:
        _active_tape.reset(token)


def as_tensor(value) -> Tensor:
    """Wrap constants as non-differentiable tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def record(
    op: str,
    data: np.ndarray,
    inputs: Iterable[Tensor],
    backward_fn: BackwardFn,
) -> Tensor:
    """Create the output tensor of an op and record it on the active tape."""
    inputs = tuple(inputs)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    tape = _active_tape.get()
    if requires and tape is not None:
        tape.record(Node(op=op, inputs=inputs, output=out, backward=backward_fn))
    return out


def backward(
    loss: Tensor,
    tape: Tape,
    params: Optional[Iterable[Tensor]] = None,
) -> Dict[int, np.ndarray]:
    """Reverse-mode gradients of a scalar loss over a recorded tape.

    Args:
        loss: scalar tensor produced under ``tape``
        tape: the tape the forward pass was recorded on
        params: optional tensors that must appear in the result; those that do
                not influence the loss receive a zero gradient

    Returns:
        Map of tensor uid to gradient array, for every leaf tensor requiring a
        gradient that the tape touched, plus every tensor in ``params``.
        Each such tensor's ``grad`` attribute is set as well.

    Raises:
        ContractError: If the loss is not a scalar
    """
    if loss.data.size != 1:
        raise ContractError("backward", f"loss must be scalar, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {loss.uid: np.ones_like(loss.data)}
    produced = set()
    for node in reversed(tape.nodes):
        produced.add(node.output.uid)
        g = grads.pop(node.output.uid, None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            prev = grads.get(inp.uid)
            grads[inp.uid] = gi if prev is None else prev + gi

    leaves: Dict[int, Tensor] = {}
    for node in tape.nodes:
        for inp in node.inputs:
            if inp.requires_grad and inp.uid not in produced:
                leaves.setdefault(inp.uid, inp)
    if params is not None:
        for p in params:
            leaves.setdefault(p.uid, p)

    result: Dict[int, np.ndarray] = {}
    for uid, leaf in leaves.items():
        g = grads.get(uid)
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g
        result[uid] = g
    return result


from . import ops as _ops  # noqa: E402

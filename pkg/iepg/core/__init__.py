from . import ops
from .canon import canon_json, digest
from .gradcheck import grad_check
from .module import Module, parameter, uniform_init
from .optim import Adam, AdamState, adam_step
from .tensor import Node, Tape, Tensor, active_tape, as_tensor, backward, no_grad

__all__ = [
    "Tensor",
    "Tape",
    "Node",
    "active_tape",
    "as_tensor",
    "backward",
    "no_grad",
    "ops",
    "Module",
    "parameter",
    "uniform_init",
    "Adam",
    "AdamState",
    "adam_step",
    "grad_check",
    "canon_json",
    "digest",
]

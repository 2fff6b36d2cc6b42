"""Adam optimizer with explicit, serializable state."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from ..errors import ConfigurationError, ContractError
from .tensor import Tensor


DEFAULT_BETA1 = 0.5
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-5


@dataclass
class AdamState:
    """First and second moment estimates keyed by parameter name."""

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def tensors(self, prefix: str) -> Dict[str, np.ndarray]:
        """Flatten into checkpoint entries under ``prefix``."""
        out: Dict[str, np.ndarray] = {f"{prefix}.step": np.array([float(self.step)])}
        for name in sorted(self.m):
            out[f"{prefix}.m.{name}"] = self.m[name]
            out[f"{prefix}.v.{name}"] = self.v[name]
        return out

    @classmethod
    def from_tensors(
        cls, entries: Mapping[str, np.ndarray], prefix: str
    ) -> "AdamState":
        state = cls()
        key = f"{prefix}.step"
        if key in entries:
            state.step = int(entries[key][0])
        for name, arr in entries.items():
            if name.startswith(f"{prefix}.m."):
                state.m[name[len(prefix) + 3 :]] = np.array(arr)
            elif name.startswith(f"{prefix}.v."):
                state.v[name[len(prefix) + 3 :]] = np.array(arr)
        return state


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    eps: float = DEFAULT_EPS,
) -> AdamState:
    """Apply one bias-corrected Adam update in place.

    Parameters without an entry in ``grads`` are treated as having a zero
    gradient; their moments still decay.

    Raises:
        ConfigurationError: If lr is not positive
        ContractError: If a gradient's shape differs from its parameter
    """
    if lr <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}", key="lr")
    for name, grad in grads.items():
        if name in params and np.shape(grad) != params[name].shape:
            raise ContractError(
                "adam_step",
                f"gradient for '{name}' has shape {np.shape(grad)}, "
                f"parameter has {params[name].shape}",
            )

    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(param.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / c1
        v_hat = v / c2
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


class Adam:
    """Binds a parameter dict to an ``AdamState``."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float,
        beta1: float = DEFAULT_BETA1,
        beta2: float = DEFAULT_BETA2,
        eps: float = DEFAULT_EPS,
        state: AdamState | None = None,
    ):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = state if state is not None else AdamState()

    def step(
        self, grads_by_uid: Mapping[int, np.ndarray], lr: float | None = None
    ) -> None:
        """Update from a ``backward`` result (uid-keyed gradient map)."""
        grads = {
            name: grads_by_uid[p.uid]
            for name, p in self.params.items()
            if p.uid in grads_by_uid
        }
        adam_step(
            self.params,
            grads,
            self.state,
            self.lr if lr is None else lr,
            self.beta1,
            self.beta2,
            self.eps,
        )

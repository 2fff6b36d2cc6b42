"""Finite-difference verification of recorded gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, NonFiniteError
from .tensor import Tensor, Tape, backward, no_grad

MIN_EPS = 1e-7
MAX_EPS = 1e-3


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(1, |a|, |n|) elementwise."""
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / scale


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Compare reverse-mode gradients of ``f(*inputs)`` with central differences.

    ``f`` must return a tensor; non-scalar outputs are reduced with a fixed
    random projection so every output coordinate contributes.

    Returns:
        Maximum relative error over every coordinate of every input.

    Raises:
        ConfigurationError: If eps lies outside [1e-7, 1e-3]
        NonFiniteError: If any intermediate value is NaN or Inf (names the op)
    """
    if not MIN_EPS <= eps <= MAX_EPS:
        raise ConfigurationError(
            f"grad_check eps must lie in [{MIN_EPS}, {MAX_EPS}], got {eps}", key="eps"
        )
    for t in inputs:
        t.data = np.array(t.data, dtype=np.float64, copy=True, order="C")
        t.requires_grad = True

    with Tape() as tape:
        out = f(*inputs)
    tape.check_finite()
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("output")
    weights = np.random.default_rng(1234).standard_normal(out.shape)
    if out.data.size == 1:
        weights = np.ones(out.shape)

    def scalar(o: Tensor) -> float:
        return float(np.sum(o.data * weights))

    with tape:
        loss = (out * Tensor(weights)).sum()
    grads = backward(loss, tape, params=inputs)

    worst = 0.0
    for t in inputs:
        analytic = grads[t.uid]
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                up = scalar(f(*inputs))
                flat[i] = orig - eps
                down = scalar(f(*inputs))
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                _diagnose(f, inputs)
                raise NonFiniteError("output")
            nflat[i] = (up - down) / (2.0 * eps)
        if analytic.size:
            worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst


def _diagnose(f: Callable[..., Tensor], inputs: Sequence[Tensor]) -> None:
    # Replay under a fresh tape so check_finite can name the offending op.
    with Tape() as tape:
        f(*inputs)
    tape.check_finite()

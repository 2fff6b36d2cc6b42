"""Multi-head attention, token-wise feed-forward network and AdaIN.

Tokens are (N, d) tensors. Attention splits the width into ``heads`` column
blocks, computes softmax(Q_j K_j^T / sqrt(d_head)) V_j per head and merges the
heads by concatenation.
"""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np

from ..core import ops
from ..core.module import Module
from ..core.tensor import Tensor
from ..errors import ConfigurationError
from .layers import Linear

ADAIN_EPS = 1e-12
TOKEN_NORM_EPS = 1e-5


def attention_weights(q: Tensor, k: Tensor, heads: int) -> List[Tensor]:
    """Row-stochastic (N_q, N_k) weight matrix per head."""
    if q.shape[-1] != k.shape[-1]:
        raise ConfigurationError(
            f"query width {q.shape[-1]} != key width {k.shape[-1]}", key="width"
        )
    if heads < 1 or q.shape[-1] % heads:
        raise ConfigurationError(
            f"width {q.shape[-1]} is not divisible by {heads} heads", key="heads"
        )
    scale = 1.0 / math.sqrt(q.shape[-1] // heads)
    return [
        ops.softmax(ops.matmul(qj, ops.transpose(kj)) * scale)
        for qj, kj in zip(ops.split_columns(q, heads), ops.split_columns(k, heads))
    ]


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Merged multi-head attention over already projected Q, K and V.

    Raises:
        ConfigurationError: If widths are not divisible by ``heads`` or the
            key and value token counts differ
    """
    if k.shape[0] != v.shape[0]:
        raise ConfigurationError(
            f"key tokens {k.shape[0]} != value tokens {v.shape[0]}", key="tokens"
        )
    weights = attention_weights(q, k, heads)
    if v.shape[-1] % heads:
        raise ConfigurationError(
            f"value width {v.shape[-1]} is not divisible by {heads} heads", key="heads"
        )
    outs = [ops.matmul(w, vj) for w, vj in zip(weights, ops.split_columns(v, heads))]
    return outs[0] if len(outs) == 1 else ops.concat(outs, axis=1)


class MultiHeadAttention(Module):
    """Bias-free Q/K/V projections, ``attention``, then an output projection."""

    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        if width % heads:
            raise ConfigurationError(
                f"width {width} is not divisible by {heads} heads", key="heads"
            )
        self.heads = heads
        self.wq = Linear(width, width, rng, bias=False)
        self.wk = Linear(width, width, rng, bias=False)
        self.wv = Linear(width, width, rng, bias=False)
        self.wo = Linear(width, width, rng, bias=False)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor) -> Tensor:
        merged = attention(self.wq(query), self.wk(key), self.wv(value), self.heads)
        return self.wo(merged)

    def weights(self, query: Tensor, key: Tensor) -> List[Tensor]:
        return attention_weights(self.wq(query), self.wk(key), self.heads)


class TokenFCN(Module):
    """Token-wise two-layer network with expansion 4."""

    def __init__(self, width: int, rng: np.random.Generator, expansion: int = 4):
        self.fc1 = Linear(width, expansion * width, rng)
        self.fc2 = Linear(expansion * width, width, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.leaky_relu(self.fc1(x)))


def token_norm(x: Tensor) -> Tensor:
    """Instance normalization of every channel over the token axis."""
    return ops.instance_norm(x, eps=TOKEN_NORM_EPS, axes=(0,))


def _token_stats(x: Tensor, eps: float) -> Tuple[Tensor, Tensor]:
    mu = ops.mean(x, axis=0, keepdims=True)
    centered = x - mu
    var = ops.mean(centered * centered, axis=0, keepdims=True)
    return mu, ops.power(var + eps, 0.5)


def adain(content: Tensor, style: Tensor, eps: float = ADAIN_EPS) -> Tensor:
    """Give ``content`` the per-channel token mean and std of ``style``."""
    if content.shape[-1] != style.shape[-1]:
        raise ConfigurationError(
            f"content width {content.shape[-1]} != style width {style.shape[-1]}",
            key="width",
        )
    mu_s, sigma_s = _token_stats(style, eps)
    return ops.instance_norm(content, eps=eps, axes=(0,)) * sigma_s + mu_s

"""Layers used across the pipeline: linear maps, multi-head attention,
layer normalization, two-layer MLP, pooling, and parameter initializers.

All functions build autodiff graphs; none mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import (Tensor, add, matmul, mean, mul, relu, reshape, softmax,
                       transpose)

__all__ = [
    "AttentionParams",
    "init_linear",
    "init_attention",
    "linear",
    "attention",
    "multi_head_attention",
    "mlp2",
    "mean_pool",
]

INIT_SCALE = 0.02


def init_linear(rng: np.random.Generator, n_in: int, n_out: int,
                name: str, scale: float = INIT_SCALE,
                trainable: bool = True) -> tuple[Tensor, Tensor]:
    w = Tensor(rng.normal(0.0, scale, size=(n_in, n_out)),
               trainable=trainable, name=f"{name}.w")
    b = Tensor(np.zeros(n_out), trainable=trainable, name=f"{name}.b")
    return w, b


@dataclass
class AttentionParams:
    """Per-head projections packed as (D_in, D) matrices plus an optional
    output projection; D must divide evenly into ``heads``."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Optional[Tensor]
    heads: int

    @property
    def width(self) -> int:
        return self.wq.shape[1]

    @property
    def head_width(self) -> int:
        return self.width // self.heads

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.wq": self.wq, f"{prefix}.wk": self.wk, f"{prefix}.wv": self.wv}
        if self.wo is not None:
            out[f"{prefix}.wo"] = self.wo
        return out


def init_attention(rng: np.random.Generator, width: int, heads: int,
                   name: str, kv_width: Optional[int] = None,
                   output_projection: bool = True,
                   trainable: bool = True,
                   scale: float = INIT_SCALE) -> AttentionParams:
    if width % heads != 0:
        raise ValueError(f"width {width} not divisible by heads {heads}")
    kv_width = width if kv_width is None else kv_width
    wq = Tensor(rng.normal(0.0, scale, size=(width, width)), trainable=trainable,
                name=f"{name}.wq")
    wk = Tensor(rng.normal(0.0, scale, size=(kv_width, width)), trainable=trainable,
                name=f"{name}.wk")
    wv = Tensor(rng.normal(0.0, scale, size=(kv_width, width)), trainable=trainable,
                name=f"{name}.wv")
    wo = None
    if output_projection:
        wo = Tensor(rng.normal(0.0, scale, size=(width, width)), trainable=trainable,
                    name=f"{name}.wo")
    return AttentionParams(wq=wq, wk=wk, wv=wv, wo=wo, heads=heads)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def attention(q: Tensor, k: Tensor, v: Tensor,
              mask: Optional[np.ndarray] = None) -> Tensor:
    """Scaled dot-product attention: softmax(Q Kᵀ / sqrt(d)) V.

    ``mask`` is an additive constant (broadcastable to the score shape);
    use large negative values to hide keys.
    """
    d = q.shape[-1]
    scores = mul(matmul(q, transpose(k)), Tensor(1.0 / math.sqrt(d)))
    if mask is not None:
        scores = add(scores, Tensor(mask))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., S, D) -> (..., heads, S, D/heads)"""
    *lead, s, d = x.shape
    x = reshape(x, (*lead, s, heads, d // heads))
    n = x.ndim
    perm = tuple(range(n - 3)) + (n - 2, n - 3, n - 1)
    return transpose(x, perm)


def _merge_heads(x: Tensor) -> Tensor:
    """(..., heads, S, dk) -> (..., S, heads*dk)"""
    n = x.ndim
    perm = tuple(range(n - 3)) + (n - 2, n - 3, n - 1)
    x = transpose(x, perm)
    *lead, s, h, dk = x.shape
    return reshape(x, (*lead, s, h * dk))


def multi_head_attention(x_q: Tensor, x_kv: Tensor, params: AttentionParams,
                         mask: Optional[np.ndarray] = None) -> Tensor:
    """Multi-head attention over the second-to-last axis.

    Queries come from ``x_q`` (..., S, D_in); keys and values from ``x_kv``
    (..., S_kv, D_kv). Heads are concatenated; the output projection is
    applied when the params carry one, otherwise concatenation is the
    aggregation.
    """
    q = _split_heads(matmul(x_q, params.wq), params.heads)
    k = _split_heads(matmul(x_kv, params.wk), params.heads)
    v = _split_heads(matmul(x_kv, params.wv), params.heads)
    if mask is not None:
        mask = np.asarray(mask)[..., None, :, :] if mask.ndim >= 2 else mask
    out = attention(q, k, v, mask=mask)
    out = _merge_heads(out)
    if params.wo is not None:
        out = matmul(out, params.wo)
    return out


def mlp2(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor,
         activation=relu) -> Tensor:
    """Two fully-connected layers with an activation in between."""
    return linear(activation(linear(x, w1, b1)), w2, b2)


def mean_pool(x: Tensor, axis: int) -> Tensor:
    return mean(x, axis=axis)

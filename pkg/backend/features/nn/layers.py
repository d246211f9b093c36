#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Forward and backward passes of the building blocks used by the decoder
and the scorer. All ops accept arbitrary leading batch dimensions;
parameter gradients are summed over them.
"""

import math
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from backend.base.custom_exceptions import InvalidSettingValue, ShapeMismatchError
from backend.features.nn.params import ParamStore

Grads = Dict[str, np.ndarray]


class MlpSpec(NamedTuple):
    """Parameter prefix and layer widths, input first."""
    prefix: str
    sizes: Tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.sizes) - 1

    def weight(self, i: int) -> str:
        return f"{self.prefix}.w{i}"

    def bias(self, i: int) -> str:
        return f"{self.prefix}.b{i}"


def add_mlp(store: ParamStore, spec: MlpSpec, zero_last: bool = False) -> None:
    """Register the weights of an MLP, optionally zeroing the output layer."""
    for i in range(spec.depth):
        zero = zero_last and i == spec.depth - 1
        store.add(spec.weight(i), (spec.sizes[i], spec.sizes[i + 1]), zero=zero)
        store.add(spec.bias(i), (spec.sizes[i + 1],), fan_in=spec.sizes[i], zero=zero)


def _sum_leading(values: np.ndarray, keep: int) -> np.ndarray:
    return values.reshape(-1, *values.shape[values.ndim - keep:]).sum(axis=0)


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeMismatchError(
            f"Linear layer {weight.shape} + {bias.shape} cannot take input {x.shape}"
        )
    return x @ weight + bias


def linear_backward(
    x: np.ndarray,
    weight: np.ndarray,
    grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a linear layer: (input, weight, bias)."""
    grad_x = grad_out @ weight.T
    flat_x = x.reshape(-1, x.shape[-1])
    flat_g = grad_out.reshape(-1, grad_out.shape[-1])
    return grad_x, flat_x.T @ flat_g, flat_g.sum(axis=0)


def mlp_forward(params: ParamStore, x: np.ndarray, spec: MlpSpec) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Affine + ReLU stack; the final layer is linear.

    Args:
        params (ParamStore): Holds the layer weights.
        x (np.ndarray): Input of shape (..., sizes[0]).
        spec (MlpSpec): The layer spec.

    Raises:
        ShapeMismatchError: Input or weights do not match the spec.

    Returns:
        Tuple[np.ndarray, List[np.ndarray]]: The output and the per-layer
        inputs needed by `mlp_backward`.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.sizes[0]:
        raise ShapeMismatchError(f"MLP {spec.prefix} expects {spec.sizes[0]} inputs, got {x.shape[-1]}")

    inputs = []
    h = x
    for i in range(spec.depth):
        w = params[spec.weight(i)]
        if w.shape != (spec.sizes[i], spec.sizes[i + 1]):
            raise ShapeMismatchError(f"{spec.weight(i)} has shape {w.shape}, spec says {spec.sizes[i:i + 2]}")
        inputs.append(h)
        h = linear_forward(h, w, params[spec.bias(i)])
        if i < spec.depth - 1:
            h = np.maximum(h, 0.0)
    return h, inputs


def mlp_backward(
    params: ParamStore,
    spec: MlpSpec,
    inputs: List[np.ndarray],
    grad_out: np.ndarray,
    grads: Grads
) -> np.ndarray:
    """Accumulate MLP parameter gradients into `grads`; returns the input gradient."""
    g = grad_out
    for i in reversed(range(spec.depth)):
        w = params[spec.weight(i)]
        if i < spec.depth - 1:
            # inputs[i + 1] is the activated output of layer i
            g = g * (inputs[i + 1] > 0.0)
        g_in, g_w, g_b = linear_backward(inputs[i], w, g)
        grads[spec.weight(i)] = grads.get(spec.weight(i), 0.0) + g_w
        grads[spec.bias(i)] = grads.get(spec.bias(i), 0.0) + g_b
        g = g_in
    return g


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


class AttentionCache(NamedTuple):
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, AttentionCache]:
    """Single-head scaled dot-product attention of one query per batch item.

    Args:
        q (np.ndarray): Queries (..., d).
        k (np.ndarray): Keys (..., T, d).
        v (np.ndarray): Values (..., T, d).

    Raises:
        ShapeMismatchError: Shapes are inconsistent.

    Returns:
        Tuple[np.ndarray, AttentionCache]: softmax(K q / sqrt(d)) V, shape
        (..., d), and the values needed for the backward pass.
    """
    q = np.asarray(q, dtype=float)
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=float)
    d = q.shape[-1]
    if d == 0 or k.shape[-1] != d or k.shape != v.shape or k.shape[:-2] != q.shape[:-1] or k.shape[-2] == 0:
        raise ShapeMismatchError(f"Attention shapes q {q.shape}, k {k.shape}, v {v.shape} do not fit")

    scores = np.einsum("...d,...td->...t", q, k) / math.sqrt(d)
    weights = softmax(scores)
    out = np.einsum("...t,...td->...d", weights, v)
    return out, AttentionCache(q, k, v, weights)


def attention_backward(cache: AttentionCache, grad_out: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of `attention` with respect to q, k and v."""
    q, k, v, w = cache
    scale = 1.0 / math.sqrt(q.shape[-1])
    grad_v = w[..., :, None] * grad_out[..., None, :]
    grad_w = np.einsum("...td,...d->...t", v, grad_out)
    grad_s = w * (grad_w - np.sum(w * grad_w, axis=-1, keepdims=True))
    grad_q = np.einsum("...t,...td->...d", grad_s, k) * scale
    grad_k = grad_s[..., :, None] * q[..., None, :] * scale
    return grad_q, grad_k, grad_v


def positional_encoding(t: int, d: int) -> np.ndarray:
    """Sinusoidal encoding: sin on even entries, cos on odd entries."""
    if d % 2:
        raise InvalidSettingValue(f"Positional encoding width must be even, got {d}")
    i = np.arange(d // 2)
    angle = t / np.power(10000.0, 2.0 * i / d)
    out = np.empty(d)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def positional_encodings(steps: int, d: int) -> np.ndarray:
    """Rows `positional_encoding(k, d)` for future steps k = 1..steps."""
    return np.stack([positional_encoding(k, d) for k in range(1, steps + 1)])


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def bce_with_logits(z: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise binary cross-entropy on logits and its logit gradient."""
    z = np.asarray(z, dtype=float)
    loss = np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))
    return loss, sigmoid(z) - target


def mse(prediction: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise squared error and its prediction gradient."""
    diff = np.asarray(prediction, dtype=float) - target
    return diff ** 2, 2.0 * diff

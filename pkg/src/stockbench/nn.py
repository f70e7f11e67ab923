"""Neural building blocks on top of the autodiff tensors: linear layers,
positional encoding, transformer encoder/decoder layers, LSTM cells, and
dilated causal convolution blocks.

Parameters live in a flat dict of named tensors, created in a fixed order
from one seeded generator so identical configs always produce bit-identical
initial weights. Weight matrices draw from the symmetric uniform range
sqrt(6 / (fan_in + fan_out)); biases and norm offsets start at zero, norm
gains at one.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import autodiff as ad
from .attention import (
    ProbSparseConfig,
    full_attention_heads,
    probsparse_attention_heads,
)
from .autodiff import Tensor


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def add_linear(params: dict, rng, name: str, d_in: int, d_out: int) -> None:
    params[f"{name}.w"] = glorot_uniform(rng, d_in, d_out, (d_in, d_out))
    params[f"{name}.b"] = Tensor(np.zeros(d_out), requires_grad=True)


def linear(x: Tensor, params: dict, name: str) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def add_layer_norm(params: dict, name: str, width: int) -> None:
    params[f"{name}.gain"] = Tensor(np.ones(width), requires_grad=True)
    params[f"{name}.bias"] = Tensor(np.zeros(width), requires_grad=True)


def apply_layer_norm(x: Tensor, params: dict, name: str, eps: float = 1e-5) -> Tensor:
    return ad.layer_norm(x, params[f"{name}.gain"], params[f"{name}.bias"], eps)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], train: bool) -> Tensor:
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, Tensor(keep))


def positional_encoding(length: int, d_model: int) -> Tensor:
    """Interleaved sine/cosine position table: even channels carry
    sin(pos / 10000^(2i/d)), odd channels the matching cosine."""
    if d_model % 2 != 0:
        raise ValueError(f"positional encoding needs an even width, got {d_model}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    table = np.empty((length, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return Tensor(table)


# -- attention sublayer ---------------------------------------------------------


def add_attention(params: dict, rng, prefix: str, d_model: int) -> None:
    for proj in ("q", "k", "v", "out"):
        add_linear(params, rng, f"{prefix}.{proj}", d_model, d_model)


def attention(
    x_q: Tensor,
    x_kv: Tensor,
    params: dict,
    prefix: str,
    n_heads: int,
    mask: Optional[np.ndarray] = None,
    sparse: Optional[ProbSparseConfig] = None,
) -> Tensor:
    q = linear(x_q, params, f"{prefix}.q")
    k = linear(x_kv, params, f"{prefix}.k")
    v = linear(x_kv, params, f"{prefix}.v")
    if sparse is not None:
        mixed = probsparse_attention_heads(q, k, v, n_heads, sparse, mask)
    else:
        mixed = full_attention_heads(q, k, v, n_heads, mask)
    return linear(mixed, params, f"{prefix}.out")


# -- feed-forward sublayer ---------------------------------------------------------


def add_ffn(params: dict, rng, prefix: str, d_model: int, ffn_dim: int) -> None:
    add_linear(params, rng, f"{prefix}.up", d_model, ffn_dim)
    add_linear(params, rng, f"{prefix}.down", ffn_dim, d_model)


def ffn(x: Tensor, params: dict, prefix: str) -> Tensor:
    return linear(ad.relu(linear(x, params, f"{prefix}.up")), params, f"{prefix}.down")


# -- transformer layers --------------------------------------------------------------


def add_encoder_layer(params: dict, rng, prefix: str, d_model: int, ffn_dim: int) -> None:
    add_attention(params, rng, f"{prefix}.attn", d_model)
    add_layer_norm(params, f"{prefix}.norm1", d_model)
    add_ffn(params, rng, f"{prefix}.ffn", d_model, ffn_dim)
    add_layer_norm(params, f"{prefix}.norm2", d_model)


def encoder_layer(
    x: Tensor,
    params: dict,
    prefix: str,
    n_heads: int,
    drop: float,
    rng,
    train: bool,
    mask: Optional[np.ndarray] = None,
    sparse: Optional[ProbSparseConfig] = None,
) -> Tensor:
    attended = attention(x, x, params, f"{prefix}.attn", n_heads, mask, sparse)
    x = apply_layer_norm(ad.add(x, dropout(attended, drop, rng, train)), params, f"{prefix}.norm1")
    lifted = ffn(x, params, f"{prefix}.ffn")
    return apply_layer_norm(ad.add(x, dropout(lifted, drop, rng, train)), params, f"{prefix}.norm2")


def add_decoder_layer(params: dict, rng, prefix: str, d_model: int, ffn_dim: int) -> None:
    add_attention(params, rng, f"{prefix}.self", d_model)
    add_layer_norm(params, f"{prefix}.norm1", d_model)
    add_attention(params, rng, f"{prefix}.cross", d_model)
    add_layer_norm(params, f"{prefix}.norm2", d_model)
    add_ffn(params, rng, f"{prefix}.ffn", d_model, ffn_dim)
    add_layer_norm(params, f"{prefix}.norm3", d_model)


def decoder_layer(
    x: Tensor,
    encoded: Tensor,
    params: dict,
    prefix: str,
    n_heads: int,
    drop: float,
    rng,
    train: bool,
    self_mask: Optional[np.ndarray],
    self_sparse: Optional[ProbSparseConfig] = None,
) -> Tensor:
    attended = attention(x, x, params, f"{prefix}.self", n_heads, self_mask, self_sparse)
    x = apply_layer_norm(ad.add(x, dropout(attended, drop, rng, train)), params, f"{prefix}.norm1")
    crossed = attention(x, encoded, params, f"{prefix}.cross", n_heads)
    x = apply_layer_norm(ad.add(x, dropout(crossed, drop, rng, train)), params, f"{prefix}.norm2")
    lifted = ffn(x, params, f"{prefix}.ffn")
    return apply_layer_norm(ad.add(x, dropout(lifted, drop, rng, train)), params, f"{prefix}.norm3")


# -- recurrent layer ---------------------------------------------------------------


def add_lstm_layer(params: dict, rng, prefix: str, d_in: int, d_hidden: int) -> None:
    params[f"{prefix}.w"] = glorot_uniform(rng, d_in, 4 * d_hidden, (d_in, 4 * d_hidden))
    params[f"{prefix}.u"] = glorot_uniform(rng, d_hidden, 4 * d_hidden, (d_hidden, 4 * d_hidden))
    params[f"{prefix}.b"] = Tensor(np.zeros(4 * d_hidden), requires_grad=True)


def lstm_layer(x_seq: Tensor, params: dict, prefix: str, d_hidden: int) -> Tensor:
    """Run one LSTM layer over [B, L, d_in]; returns hidden states [B, L, H].

    Gate block order along the widened axis: input, forget, cell, output.
    """
    batch, length, _ = x_seq.shape
    w, u, b = params[f"{prefix}.w"], params[f"{prefix}.u"], params[f"{prefix}.b"]
    h = Tensor(np.zeros((batch, d_hidden)))
    c = Tensor(np.zeros((batch, d_hidden)))
    outputs = []
    for t in range(length):
        x_t = x_seq[:, t, :]
        gates = ad.add(ad.add(ad.matmul(x_t, w), ad.matmul(h, u)), b)
        i_gate = ad.sigmoid(gates[:, 0 * d_hidden : 1 * d_hidden])
        f_gate = ad.sigmoid(gates[:, 1 * d_hidden : 2 * d_hidden])
        g_cell = ad.tanh(gates[:, 2 * d_hidden : 3 * d_hidden])
        o_gate = ad.sigmoid(gates[:, 3 * d_hidden : 4 * d_hidden])
        c = ad.add(ad.mul(f_gate, c), ad.mul(i_gate, g_cell))
        h = ad.mul(o_gate, ad.tanh(c))
        outputs.append(ad.reshape(h, (batch, 1, d_hidden)))
    return ad.concat(outputs, axis=1)


# -- temporal convolution ---------------------------------------------------------------


def add_conv1d(params: dict, rng, name: str, c_in: int, c_out: int, kernel: int) -> None:
    fan_in = kernel * c_in
    params[f"{name}.w"] = glorot_uniform(rng, fan_in, c_out, (fan_in, c_out))
    params[f"{name}.b"] = Tensor(np.zeros(c_out), requires_grad=True)


def causal_conv1d(
    x: Tensor, params: dict, name: str, kernel: int, dilation: int
) -> Tensor:
    """Dilated causal convolution over [B, L, C]: output at t sees only
    inputs at t, t-dilation, ..., t-(kernel-1)*dilation (zero-padded)."""
    batch, length, channels = x.shape
    pad = (kernel - 1) * dilation
    padded = ad.concat([Tensor(np.zeros((batch, pad, channels))), x], axis=1)
    taps = [padded[:, j * dilation : j * dilation + length, :] for j in range(kernel)]
    unfolded = ad.concat(taps, axis=-1)  # oldest tap first, matching the weight layout
    return ad.add(ad.matmul(unfolded, params[f"{name}.w"]), params[f"{name}.b"])


def add_tcn_block(params: dict, rng, prefix: str, c_in: int, c_out: int, kernel: int) -> None:
    add_conv1d(params, rng, f"{prefix}.conv1", c_in, c_out, kernel)
    add_conv1d(params, rng, f"{prefix}.conv2", c_out, c_out, kernel)
    if c_in != c_out:
        add_linear(params, rng, f"{prefix}.down", c_in, c_out)


def tcn_block(
    x: Tensor,
    params: dict,
    prefix: str,
    kernel: int,
    dilation: int,
    drop: float,
    rng,
    train: bool,
) -> Tensor:
    h = ad.relu(causal_conv1d(x, params, f"{prefix}.conv1", kernel, dilation))
    h = dropout(h, drop, rng, train)
    h = ad.relu(causal_conv1d(h, params, f"{prefix}.conv2", kernel, dilation))
    h = dropout(h, drop, rng, train)
    residual = linear(x, params, f"{prefix}.down") if f"{prefix}.down.w" in params else x
    return ad.relu(ad.add(h, residual))

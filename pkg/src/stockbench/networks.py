"""The seven neural forecasting architectures behind one config/forward pair.

Every variant maps a batch of normalized input windows [B, w] to a batch of
predictions [B, h]:

* ``encoder_only``  — input projection + positions, 3 self-attention
  encoder layers, mean-pool over time, linear head.
* ``decoder_only``  — input projection + positions, 2 causally masked
  self-attention layers (no cross-attention), last position, linear head.
* ``vanilla``       — 3-layer encoder over the window; 2-layer decoder fed
  h copies of the last observed value plus positions, causal self-attention
  and cross-attention to the encoder; a shared per-position head emits one
  step each.
* ``no_embedding``  — vanilla, but scalars are tiled to width d_model with
  no learned input projection and (by default) no positional encoding.
* ``probsparse``    — vanilla with the encoder's self-attention swapped for
  the query-sparse kernel; decoder attention stays full unless
  ``sparse_decoder`` is set.
* ``lstm``          — two stacked LSTM layers, last hidden state, head.
* ``tcn``           — four dilated causal-convolution residual blocks
  (kernel 3, dilations 1/2/4/8), last time step, head.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import nn
from .attention import ProbSparseConfig, causal_mask
from .autodiff import Tensor
from .errors import ContractError

VARIANTS = (
    "encoder_only",
    "decoder_only",
    "vanilla",
    "no_embedding",
    "probsparse",
    "lstm",
    "tcn",
)

TCN_KERNEL = 3
TCN_DILATIONS = (1, 2, 4, 8)


@dataclass
class ModelConfig:
    """Architecture and size settings for one neural forecaster."""

    variant: str
    window: int
    horizon: int
    d_model: int = 64
    n_heads: int = 8
    n_encoder_layers: int = 3
    n_decoder_layers: int = 2
    ffn_dim: Optional[int] = None
    dropout: float = 0.1
    seed: int = 0
    encoder_pool: str = "mean"  # or "last"
    keep_positional_encoding: bool = False  # no_embedding only
    sparse_decoder: bool = False            # probsparse only
    sample_factor: float = 5.0
    top_factor: float = 5.0
    # Heads emit offsets from the window's last observed value. Normalization
    # layers strip the absolute price level from the hidden states, so an
    # absolute head cannot track levels outside the training range; the
    # anchored head learns level-free dynamics instead.
    residual_head: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.window < 1 or self.horizon < 1:
            raise ContractError("window and horizon must be >= 1")
        if self.d_model < 1 or self.d_model % self.n_heads != 0:
            raise ContractError(
                f"d_model={self.d_model} must be positive and divisible by n_heads={self.n_heads}"
            )
        if self.d_model % 2 != 0:
            raise ContractError("d_model must be even for the positional encoding")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.encoder_pool not in ("mean", "last"):
            raise ContractError(f"encoder_pool must be 'mean' or 'last', got {self.encoder_pool}")
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d_model

    def probsparse_config(self) -> ProbSparseConfig:
        return ProbSparseConfig(self.sample_factor, self.top_factor, self.seed)


def init_parameters(cfg: ModelConfig) -> dict:
    """Fresh parameter dict, bit-deterministic in cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    params: dict = {}
    d, f = cfg.d_model, cfg.ffn_dim
    if cfg.variant in ("encoder_only", "decoder_only", "vanilla", "probsparse"):
        nn.add_linear(params, rng, "in_proj", 1, d)
    if cfg.variant == "encoder_only":
        for i in range(cfg.n_encoder_layers):
            nn.add_encoder_layer(params, rng, f"enc{i}", d, f)
        nn.add_linear(params, rng, "head", d, cfg.horizon)
    elif cfg.variant == "decoder_only":
        for i in range(cfg.n_decoder_layers):
            nn.add_encoder_layer(params, rng, f"dec{i}", d, f)
        nn.add_linear(params, rng, "head", d, cfg.horizon)
    elif cfg.variant in ("vanilla", "no_embedding", "probsparse"):
        if cfg.variant != "no_embedding":
            nn.add_linear(params, rng, "dec_proj", 1, d)
        for i in range(cfg.n_encoder_layers):
            nn.add_encoder_layer(params, rng, f"enc{i}", d, f)
        for i in range(cfg.n_decoder_layers):
            nn.add_decoder_layer(params, rng, f"dec{i}", d, f)
        nn.add_linear(params, rng, "head", d, 1)
    elif cfg.variant == "lstm":
        nn.add_lstm_layer(params, rng, "lstm0", 1, d)
        nn.add_lstm_layer(params, rng, "lstm1", d, d)
        nn.add_linear(params, rng, "head", d, cfg.horizon)
    elif cfg.variant == "tcn":
        c_in = 1
        for i, dilation in enumerate(TCN_DILATIONS):
            nn.add_tcn_block(params, rng, f"block{i}", c_in, d, TCN_KERNEL)
            c_in = d
        nn.add_linear(params, rng, "head", d, cfg.horizon)
    return params


def parameter_count(params: dict) -> int:
    return sum(t.size for t in params.values())


def forward(
    cfg: ModelConfig,
    params: dict,
    windows: Tensor,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Run the configured variant over a batch of windows [B, w] -> [B, h]."""
    if windows.ndim != 2 or windows.shape[1] != cfg.window:
        raise ContractError(
            f"expected windows of shape [batch, {cfg.window}], got {windows.shape}"
        )
    batch, w = windows.shape
    d, h = cfg.d_model, cfg.horizon

    def anchor(raw: Tensor) -> Tensor:
        if not cfg.residual_head:
            return raw
        return ad.add(raw, windows[:, w - 1 :])  # [B, h] + [B, 1]

    def embed(x_flat: Tensor, length: int, proj: str) -> Tensor:
        x3 = ad.reshape(x_flat, (batch, length, 1))
        if cfg.variant == "no_embedding":
            tiled = ad.matmul(x3, Tensor(np.ones((1, d))))
            if cfg.keep_positional_encoding:
                tiled = ad.add(tiled, nn.positional_encoding(length, d))
            return tiled
        lifted = nn.linear(x3, params, proj)
        return ad.add(lifted, nn.positional_encoding(length, d))

    if cfg.variant == "encoder_only":
        x = embed(windows, w, "in_proj")
        for i in range(cfg.n_encoder_layers):
            x = nn.encoder_layer(x, params, f"enc{i}", cfg.n_heads, cfg.dropout, rng, train)
        pooled = ad.tmean(x, axis=1) if cfg.encoder_pool == "mean" else x[:, -1, :]
        return anchor(nn.linear(pooled, params, "head"))

    if cfg.variant == "decoder_only":
        states = decoder_positionwise_states(cfg, params, windows, train=train, rng=rng)
        return anchor(nn.linear(states[:, -1, :], params, "head"))

    if cfg.variant in ("vanilla", "no_embedding", "probsparse"):
        enc_sparse = cfg.probsparse_config() if cfg.variant == "probsparse" else None
        dec_sparse = (
            cfg.probsparse_config() if cfg.variant == "probsparse" and cfg.sparse_decoder else None
        )
        x = embed(windows, w, "in_proj")
        for i in range(cfg.n_encoder_layers):
            x = nn.encoder_layer(
                x, params, f"enc{i}", cfg.n_heads, cfg.dropout, rng, train, sparse=enc_sparse
            )
        # decoder consumes h copies of the window's last observed value
        last = ad.reshape(windows[:, w - 1 :], (batch, 1, 1))
        dec_in = ad.reshape(ad.matmul(last, Tensor(np.ones((1, h)))), (batch, h))
        y = embed(dec_in, h, "dec_proj")
        mask = causal_mask(h)
        for i in range(cfg.n_decoder_layers):
            y = nn.decoder_layer(
                y, x, params, f"dec{i}", cfg.n_heads, cfg.dropout, rng, train,
                self_mask=mask, self_sparse=dec_sparse,
            )
        per_step = nn.linear(y, params, "head")      # [B, h, 1]
        return anchor(ad.reshape(per_step, (batch, h)))

    if cfg.variant == "lstm":
        x = ad.reshape(windows, (batch, w, 1))
        x = nn.lstm_layer(x, params, "lstm0", d)
        x = nn.lstm_layer(x, params, "lstm1", d)
        return anchor(nn.linear(x[:, -1, :], params, "head"))

    if cfg.variant == "tcn":
        x = ad.reshape(windows, (batch, w, 1))
        for i, dilation in enumerate(TCN_DILATIONS):
            x = nn.tcn_block(
                x, params, f"block{i}", TCN_KERNEL, dilation, cfg.dropout, rng, train
            )
        return anchor(nn.linear(x[:, -1, :], params, "head"))

    raise ContractError(f"unknown variant {cfg.variant!r}")


def decoder_positionwise_states(
    cfg: ModelConfig,
    params: dict,
    windows: Tensor,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Per-position outputs [B, w, d_model] of the decoder-only stack.

    Exposed separately so causality (position i blind to positions > i) can
    be checked on the states themselves, not just the final prediction.
    """
    if cfg.variant != "decoder_only":
        raise ContractError("positionwise states are defined for the decoder_only variant")
    batch, w = windows.shape
    x = ad.reshape(windows, (batch, w, 1))
    x = ad.add(nn.linear(x, params, "in_proj"), nn.positional_encoding(w, cfg.d_model))
    mask = causal_mask(w)
    for i in range(cfg.n_decoder_layers):
        x = nn.encoder_layer(
            x, params, f"dec{i}", cfg.n_heads, cfg.dropout, rng, train, mask=mask
        )
    return x

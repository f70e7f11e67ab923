"""Scaled dot-product attention: full multi-head, causal masking, and a
query-sparse variant.

The sparse mechanism scores every query by how concentrated its attention
distribution is (log-sum-exp of its scores minus their mean), estimates that
score cheaply from a sampled key subset (max minus mean), and computes full
softmax attention only for the top-u queries; every other query passes its
own value row through unchanged. Selection is data-dependent routing and is
treated as a constant during backprop, exactly like argmax-style routing.

All public entry points accept single sequences ``[L, d_model]``; the
``*_heads`` helpers used by the model stack additionally accept leading
batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DegenerateMaskError, DimensionMismatchError

NEG_INF = float("-inf")


@dataclass
class AttentionInputs:
    """Query/key/value matrices plus head count and an optional allow-mask.

    ``mask[i, j]`` True means query i may attend to key j.
    """

    q: Tensor
    k: Tensor
    v: Tensor
    n_heads: int
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.q.ndim != 2 or self.k.ndim != 2 or self.v.ndim != 2:
            raise DimensionMismatchError(
                f"attention inputs must be 2-d [L, d_model], got "
                f"q{self.q.shape} k{self.k.shape} v{self.v.shape}"
            )
        d_model = self.q.shape[-1]
        if self.k.shape[-1] != d_model or self.v.shape[-1] != d_model:
            raise DimensionMismatchError(
                f"q/k/v widths disagree: q{self.q.shape} k{self.k.shape} v{self.v.shape}"
            )
        if self.k.shape[0] != self.v.shape[0]:
            raise DimensionMismatchError(
                f"k and v must share length: k{self.k.shape} v{self.v.shape}"
            )
        if self.n_heads < 1 or d_model % self.n_heads != 0:
            raise ContractError(
                f"d_model={d_model} must be divisible by n_heads={self.n_heads}"
            )
        if self.mask is not None:
            expected = (self.q.shape[0], self.k.shape[0])
            if self.mask.shape != expected:
                raise DimensionMismatchError(
                    f"mask shape {self.mask.shape} != (L_q, L_k)={expected}"
                )


@dataclass
class ProbSparseConfig:
    """Controls for query-sparse attention.

    The sampled key count is ceil(sample_factor * ln L_k) clamped to
    [1, L_k]; the number of fully attended queries is
    ceil(top_factor * ln L_q) clamped to [1, L_q]. Sampling is uniform
    without replacement and fully determined by ``rng_seed``.
    """

    sample_factor: float = 5.0
    top_factor: float = 5.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_factor <= 0 or self.top_factor <= 0:
            raise ContractError("sample_factor and top_factor must be positive")

    def sampled_key_count(self, n_keys: int) -> int:
        raw = math.ceil(self.sample_factor * math.log(max(n_keys, 1)))
        return min(max(raw, 1), n_keys)

    def top_query_count(self, n_queries: int) -> int:
        raw = math.ceil(self.top_factor * math.log(max(n_queries, 1)))
        return min(max(raw, 1), n_queries)


def causal_mask(length: int) -> np.ndarray:
    """Boolean [L, L] allow-mask: position i may attend to j iff j <= i."""
    if length < 1:
        raise ContractError(f"causal_mask needs length >= 1, got {length}")
    return np.tril(np.ones((length, length), dtype=bool))


def _additive_mask(mask: np.ndarray) -> Tensor:
    if not mask.any(axis=-1).all():
        raise DegenerateMaskError("mask leaves at least one query row with no allowed key")
    return Tensor(np.where(mask, 0.0, NEG_INF))


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    """[.., L, d_model] -> [.., H, L, d_head]."""
    *lead, length, d_model = x.shape
    d_head = d_model // n_heads
    x = ad.reshape(x, (*lead, length, n_heads, d_head))
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return ad.transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    """[.., H, L, d_head] -> [.., L, H*d_head]."""
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = ad.transpose(x, axes)
    *lead, length, n_heads, d_head = x.shape
    return ad.reshape(x, (*lead, length, n_heads * d_head))


def full_attention_heads(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    n_heads: int,
    mask: Optional[np.ndarray] = None,
    w_out: Optional[Tensor] = None,
) -> Tensor:
    """Multi-head softmax attention over ``[.., L, d_model]`` inputs.

    Per head: softmax(q kᵀ / sqrt(d_head) + mask) v. Heads are concatenated
    and, when ``w_out`` is given, projected back to d_model.
    """
    d_head = q.shape[-1] // n_heads
    qh = _split_heads(q, n_heads)
    kh = _split_heads(k, n_heads)
    vh = _split_heads(v, n_heads)
    scores = ad.scale(ad.matmul(qh, ad.transpose(kh, _swap_last_two(kh.ndim))), 1.0 / math.sqrt(d_head))
    if mask is not None:
        scores = ad.add(scores, _additive_mask(mask))
    weights = ad.softmax_lastdim(scores)
    per_head = ad.matmul(weights, vh)
    merged = _merge_heads(per_head)
    if w_out is not None:
        merged = ad.matmul(merged, w_out)
    return merged


def _swap_last_two(ndim: int) -> tuple:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def full_attention(inp: AttentionInputs, w_out: Optional[Tensor] = None) -> Tensor:
    """Full multi-head attention for a single sequence (see AttentionInputs)."""
    return full_attention_heads(inp.q, inp.k, inp.v, inp.n_heads, inp.mask, w_out)


# -- sparsity scoring ----------------------------------------------------------


def sparsity_measure_exact(q: np.ndarray, keys: np.ndarray) -> float:
    """log-sum-exp of the query's scaled scores minus their mean.

    Zero when all scores are equal (diffuse attention); grows as the
    distribution becomes peaked. Computed with max-subtraction so large
    scores do not overflow.
    """
    q = np.asarray(q, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or q.shape != (keys.shape[1],):
        raise DimensionMismatchError(f"expected q (d,) and keys (L, d), got {q.shape} and {keys.shape}")
    scores = keys @ q / math.sqrt(q.shape[0])
    m = scores.max()
    lse = m + math.log(np.exp(scores - m).sum())
    return float(lse - scores.mean())


def sparsity_measure_approx(q: np.ndarray, sampled_keys: np.ndarray) -> float:
    """Cheap proxy for the exact measure: max score minus mean score over a
    sampled key subset. Always >= 0."""
    q = np.asarray(q, dtype=np.float64)
    sampled_keys = np.asarray(sampled_keys, dtype=np.float64)
    if sampled_keys.ndim != 2 or q.shape != (sampled_keys.shape[1],):
        raise DimensionMismatchError(
            f"expected q (d,) and keys (L~, d), got {q.shape} and {sampled_keys.shape}"
        )
    scores = sampled_keys @ q / math.sqrt(q.shape[0])
    return float(scores.max() - scores.mean())


def select_top_u(scores: np.ndarray, u: int) -> np.ndarray:
    """Indices of the ``u`` largest scores, ties broken by lower index first."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise DimensionMismatchError(f"scores must be 1-d, got shape {scores.shape}")
    if not 1 <= u <= scores.shape[0]:
        raise ContractError(f"u={u} out of range [1, {scores.shape[0]}]")
    order = np.argsort(-scores, kind="stable")
    return order[:u]


# -- sparse attention ----------------------------------------------------------


def _sample_key_indices(cfg: ProbSparseConfig, n_keys: int, n_heads: int) -> np.ndarray:
    """One sampled key subset per head, [H, L~], uniform without replacement."""
    n_sampled = cfg.sampled_key_count(n_keys)
    rng = np.random.default_rng(cfg.rng_seed)
    return np.stack([
        rng.choice(n_keys, size=n_sampled, replace=False) for _ in range(n_heads)
    ])


def probsparse_attention_heads(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    n_heads: int,
    cfg: ProbSparseConfig,
    mask: Optional[np.ndarray] = None,
    w_out: Optional[Tensor] = None,
) -> Tensor:
    """Query-sparse multi-head attention over ``[.., L, d_model]`` inputs.

    Self-attention only (query and key counts must match, so the
    pass-through branch is well defined). Top-u queries get full softmax
    attention over all keys; the rest emit their own value row.
    """
    if q.shape[-2] != k.shape[-2]:
        raise ContractError(
            f"sparse attention is self-attention only: L_q={q.shape[-2]} != L_k={k.shape[-2]}"
        )
    length = q.shape[-2]
    d_head = q.shape[-1] // n_heads
    qh = _split_heads(q, n_heads)   # [.., H, L, d]
    kh = _split_heads(k, n_heads)
    vh = _split_heads(v, n_heads)

    # Selection is computed outside the tape: sampled scores -> per-query
    # concentration estimate -> top-u indices per (batch, head).
    sampled = _sample_key_indices(cfg, length, n_heads)            # [H, L~]
    kh_sampled = np.stack(
        [np.take(kh.data[..., h, :, :], sampled[h], axis=-2) for h in range(n_heads)],
        axis=-3,
    )                                                              # [.., H, L~, d]
    approx_scores = np.matmul(qh.data, np.swapaxes(kh_sampled, -1, -2)) / math.sqrt(d_head)
    concentration = approx_scores.max(axis=-1) - approx_scores.mean(axis=-1)  # [.., H, L]

    u = cfg.top_query_count(length)
    order = np.argsort(-concentration, axis=-1, kind="stable")
    top = order[..., :u]
    selected = np.zeros(concentration.shape, dtype=np.float64)
    np.put_along_axis(selected, top, 1.0, axis=-1)
    keep = Tensor(selected[..., None])                             # [.., H, L, 1]
    drop = Tensor(1.0 - selected[..., None])

    scores = ad.scale(ad.matmul(qh, ad.transpose(kh, _swap_last_two(kh.ndim))), 1.0 / math.sqrt(d_head))
    if mask is not None:
        scores = ad.add(scores, _additive_mask(mask))
    attended = ad.matmul(ad.softmax_lastdim(scores), vh)
    merged = _merge_heads(ad.add(ad.mul(attended, keep), ad.mul(vh, drop)))
    if w_out is not None:
        merged = ad.matmul(merged, w_out)
    return merged


def probsparse_attention(
    inp: AttentionInputs, cfg: ProbSparseConfig, w_out: Optional[Tensor] = None
) -> Tensor:
    """Query-sparse attention for a single sequence (see AttentionInputs)."""
    return probsparse_attention_heads(inp.q, inp.k, inp.v, inp.n_heads, cfg, inp.mask, w_out)

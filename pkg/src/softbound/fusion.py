"""Query-guided temporal modelling: cross-attention branches and their fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import check_matrix, check_same_dim
from .data import load_embeddings


@dataclass(frozen=True)
class FusionConfig:
    """Weights for ``a * global + b * (start + query + end)``.

    ``attn_scale=None`` means ``1 / sqrt(D)`` at call time.
    """

    a: float = 1.0
    b: float = 1.0
    attn_scale: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("fusion weights must be finite")
        if self.a == 0 and self.b == 0:
            raise ValueError("fusion weights a and b cannot both be zero")
        if self.attn_scale is not None and not math.isfinite(self.attn_scale):
            raise ValueError("attn_scale must be finite")


@dataclass(frozen=True)
class Projections:
    """Optional query/key/value projection matrices (each ``D x D``)."""

    query: np.ndarray
    key: np.ndarray
    value: np.ndarray

    @classmethod
    def from_files(cls, query_path, key_path, value_path) -> "Projections":
        return cls(*(load_embeddings(p) for p in (query_path, key_path, value_path)))


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def attention_weights(queries, keys, scale=None) -> np.ndarray:
    """Row-stochastic ``T x N`` matrix ``softmax(scale * Q K^T)``."""
    Q = check_matrix(queries, "queries")
    K = check_matrix(keys, "keys")
    check_same_dim(("queries", Q), ("keys", K))
    if scale is None:
        scale = 1.0 / math.sqrt(Q.shape[1])
    return softmax(scale * (Q @ K.T), axis=1)


def cross_attention(queries, keys, values, scale=None) -> np.ndarray:
    """Single-head scaled dot-product attention.

    Args:
        queries: ``T x D`` matrix.
        keys: ``N x D`` matrix.
        values: ``N x D`` matrix.
        scale: logit multiplier, default ``1/sqrt(D)``.

    Returns:
        ``T x D`` matrix whose rows are convex combinations of ``values`` rows.
    """
    V = check_matrix(values, "values")
    K = check_matrix(keys, "keys")
    if K.shape[0] != V.shape[0]:
        raise ValueError(f"keys have {K.shape[0]} rows but values have {V.shape[0]}")
    check_same_dim(("keys", K), ("values", V))
    return attention_weights(queries, K, scale) @ V


def _attend(F_v, tokens, scale, projections):
    if projections is None:
        return cross_attention(F_v, tokens, tokens, scale)
    return cross_attention(F_v @ projections.query, tokens @ projections.key, tokens @ projections.value, scale)


def _check_inputs(F_v, F_s, F_q, F_e):
    mats = [check_matrix(m, name) for m, name in ((F_v, "F_v"), (F_s, "F_s"), (F_q, "F_q"), (F_e, "F_e"))]
    check_same_dim(*zip(("F_v", "F_s", "F_q", "F_e"), mats))
    return mats


def local_branch(F_v, F_s, F_q, F_e, scale=None, projections=None):
    """Attend the video to each query part separately.

    Returns:
        ``(start_enhanced, query_enhanced, end_enhanced)``, each ``T x D``.
    """
    F_v, F_s, F_q, F_e = _check_inputs(F_v, F_s, F_q, F_e)
    return tuple(_attend(F_v, tokens, scale, projections) for tokens in (F_s, F_q, F_e))


def global_branch(F_v, F_s, F_q, F_e, scale=None, projections=None):
    """Attend the video to the concatenated ``[F_s; F_q; F_e]`` tokens."""
    F_v, F_s, F_q, F_e = _check_inputs(F_v, F_s, F_q, F_e)
    return _attend(F_v, np.vstack([F_s, F_q, F_e]), scale, projections)


def fuse(global_feat, start_feat, query_feat, end_feat, cfg: FusionConfig = FusionConfig()):
    mats = [np.asarray(m, dtype=np.float64) for m in (global_feat, start_feat, query_feat, end_feat)]
    if len({m.shape for m in mats}) != 1:
        raise ValueError(f"shape mismatch: {[m.shape for m in mats]}")
    g, s, q, e = mats
    return cfg.a * g + cfg.b * (s + q + e)


def enhance(F_v, F_s, F_q, F_e, cfg: FusionConfig = FusionConfig(), projections=None) -> np.ndarray:
    """Both branches plus fusion: the enhanced video feature."""
    local = local_branch(F_v, F_s, F_q, F_e, cfg.attn_scale, projections)
    glob = global_branch(F_v, F_s, F_q, F_e, cfg.attn_scale, projections)
    return fuse(glob, *local, cfg=cfg)

"""Boundary probability modelling.

Rigid ``[start, end]`` annotations are turned into per-frame probabilities in
two steps:

1. Pseudo boundaries. Every frame ``i`` gets a start score
   ``cos(F_v[i], start_query) - |i - anchor_s| / T`` (and the analogous end
   score). The argmax frames become ``s'`` and ``e'``.
2. Soft labels. Frames before ``s'`` are rescored against ``s'`` itself,
   scores under ``tau`` are zeroed, and the survivors are min-max normalised
   into ``[0, 1]``. Frames after ``e'`` are handled symmetrically, and frames
   in ``[s', e']`` get probability 1.

Besides the full method (``strategy="paper"``), four ablation strategies are
selectable: ``gauss``, ``distance_only``, ``similarity_only`` and
``original_query``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_index, check_matrix, check_vector
from .data import SupervisionTarget, VideoRecord, frame_of_time

logger = logging.getLogger(__name__)

STRATEGIES = ("paper", "gauss", "distance_only", "similarity_only", "original_query")


@dataclass(frozen=True)
class SupervisionConfig:
    tau: float = 0.8
    strategy: str = "paper"
    gauss_sigma: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be a positive finite number, got {self.tau}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.strategy == "gauss" and not self.gauss_sigma > 0:
            raise ValueError("gauss_sigma must be positive")

    @property
    def use_similarity(self) -> bool:
        return self.strategy != "distance_only"

    @property
    def use_distance(self) -> bool:
        return self.strategy != "similarity_only"


@dataclass(frozen=True)
class BoundaryScores:
    start_scores: np.ndarray
    end_scores: np.ndarray

    def __post_init__(self):
        if self.start_scores.shape != self.end_scores.shape:
            raise ValueError("start and end scores must have equal length")


@dataclass(frozen=True)
class QueryFeatures:
    """Token features of the original query and its two expansions."""

    original: np.ndarray
    start: np.ndarray
    end: np.ndarray


def cosine_sim(x, y) -> float:
    """Cosine similarity clamped to ``[-1, 1]``; 0 (with a warning) if either norm is 0."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        logger.warning("cosine similarity with a zero-norm vector; using 0")
        return 0.0
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def cosine_sim_rows(F, y) -> np.ndarray:
    """Vectorised :func:`cosine_sim` of every row of ``F`` against ``y``."""
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if F.shape[1] != y.shape[0]:
        raise ValueError(f"dimension mismatch: rows have dim {F.shape[1]}, vector has {y.shape[0]}")
    norms = np.linalg.norm(F, axis=1) * np.linalg.norm(y)
    zero = norms == 0
    if zero.any():
        logger.warning("%d zero-norm embedding(s) in cosine similarity; using 0", int(zero.sum()))
    out = np.zeros(F.shape[0])
    out[~zero] = (F[~zero] @ y) / norms[~zero]
    return np.clip(out, -1.0, 1.0)


def pool_query(tokens) -> np.ndarray:
    """Mean of the token rows."""
    return check_matrix(tokens, "tokens").mean(axis=0)


def normalized_distance(indices, anchor: int, T: int) -> np.ndarray:
    return np.abs(np.asarray(indices, dtype=np.float64) - anchor) / T


def _frame_scores(F_v, query_vec, anchor, indices, use_similarity=True, use_distance=True):
    T = F_v.shape[0]
    scores = np.zeros(len(indices))
    if use_similarity:
        scores += cosine_sim_rows(F_v[indices], query_vec)
    if use_distance:
        scores -= normalized_distance(indices, anchor, T)
    return scores


def compute_boundary_scores(F_v, start_vec, end_vec, anchor_s, anchor_e,
                            use_similarity=True, use_distance=True) -> BoundaryScores:
    """Score every frame as a candidate start and end boundary.

    Args:
        F_v: ``T x D`` frame features.
        start_vec, end_vec: pooled start/end query features (length ``D``).
        anchor_s, anchor_e: annotated boundary frame indices.
        use_similarity, use_distance: switch off either term for ablations.
    """
    F_v = check_matrix(F_v, "F_v")
    T = F_v.shape[0]
    anchor_s = check_index(anchor_s, T, "anchor_s")
    anchor_e = check_index(anchor_e, T, "anchor_e")
    idx = np.arange(T)
    return BoundaryScores(
        _frame_scores(F_v, start_vec, anchor_s, idx, use_similarity, use_distance),
        _frame_scores(F_v, end_vec, anchor_e, idx, use_similarity, use_distance),
    )


def select_pseudo_boundaries(scores: BoundaryScores, fallback=None) -> tuple[int, int]:
    """Argmax start (earliest on ties) and end (latest on ties).

    If the two cross, ``fallback`` (the annotated ``(anchor_s, anchor_e)``)
    is returned instead.

    Raises:
        ValueError: crossed boundaries and no fallback given.
    """
    start = np.asarray(scores.start_scores)
    end = np.asarray(scores.end_scores)
    if start.shape[0] < 2:
        raise ValueError("need at least two frames")
    s = int(np.argmax(start))
    e = int(end.shape[0] - 1 - np.argmax(end[::-1]))
    if s > e:
        if fallback is None:
            raise ValueError(f"pseudo boundaries cross (s'={s} > e'={e}) and no fallback was given")
        logger.debug("crossed pseudo boundaries s'=%d e'=%d; falling back to %s", s, e, fallback)
        return int(fallback[0]), int(fallback[1])
    return s, e


def threshold_minmax(scores, tau: float) -> np.ndarray:
    """Zero scores below ``tau`` and min-max normalise the survivors.

    A lone survivor (or survivors that are all equal) gets probability 1.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    scores = np.asarray(scores, dtype=np.float64)
    out = np.zeros_like(scores)
    keep = scores >= tau
    if not keep.any():
        return out
    kept = scores[keep]
    lo, hi = kept.min(), kept.max()
    out[keep] = 1.0 if hi == lo else (kept - lo) / (hi - lo)
    return out


def probability_before_start(F_v, start_vec, s_prime, tau=0.8, use_similarity=True, use_distance=True):
    """Soft start probabilities for frames ``0 .. s_prime - 1``."""
    F_v = check_matrix(F_v, "F_v")
    s_prime = check_index(s_prime, F_v.shape[0], "s_prime")
    idx = np.arange(s_prime)
    return threshold_minmax(_frame_scores(F_v, start_vec, s_prime, idx, use_similarity, use_distance), tau)


def probability_after_end(F_v, end_vec, e_prime, tau=0.8, use_similarity=True, use_distance=True):
    """Soft end probabilities for frames ``e_prime + 1 .. T - 1``."""
    F_v = check_matrix(F_v, "F_v")
    e_prime = check_index(e_prime, F_v.shape[0], "e_prime")
    idx = np.arange(e_prime + 1, F_v.shape[0])
    return threshold_minmax(_frame_scores(F_v, end_vec, e_prime, idx, use_similarity, use_distance), tau)


def assemble_probability(p_s, p_e, s_prime, e_prime, T) -> np.ndarray:
    if not 0 <= s_prime <= e_prime <= T - 1:
        raise ValueError(f"need 0 <= s'={s_prime} <= e'={e_prime} <= {T - 1}")
    p_s = check_vector(p_s, "p_s", length=s_prime)
    p_e = check_vector(p_e, "p_e", length=T - 1 - e_prime)
    return np.concatenate([p_s, np.ones(e_prime - s_prime + 1), p_e])


def gaussian_labels(anchor_s, anchor_e, T, sigma) -> np.ndarray:
    """Indicator of ``[anchor_s, anchor_e]`` with Gaussian tails outside it."""
    i = np.arange(T, dtype=np.float64)
    probs = np.ones(T)
    before = i < anchor_s
    after = i > anchor_e
    probs[before] = np.exp(-((i[before] - anchor_s) ** 2) / (2 * sigma**2))
    probs[after] = np.exp(-((i[after] - anchor_e) ** 2) / (2 * sigma**2))
    return probs


def soft_labels(F_v, start_vec, end_vec, anchor_s, anchor_e, cfg: SupervisionConfig = SupervisionConfig()):
    """Pseudo boundaries and probabilities from raw features and anchors.

    Returns:
        ``(s_prime, e_prime, probs)``.
    """
    F_v = check_matrix(F_v, "F_v", min_rows=2)
    T = F_v.shape[0]
    if cfg.strategy == "gauss":
        return anchor_s, anchor_e, gaussian_labels(anchor_s, anchor_e, T, cfg.gauss_sigma)
    flags = dict(use_similarity=cfg.use_similarity, use_distance=cfg.use_distance)
    scores = compute_boundary_scores(F_v, start_vec, end_vec, anchor_s, anchor_e, **flags)
    s, e = select_pseudo_boundaries(scores, fallback=(anchor_s, anchor_e))
    p_s = probability_before_start(F_v, start_vec, s, cfg.tau, **flags)
    p_e = probability_after_end(F_v, end_vec, e, cfg.tau, **flags)
    return s, e, assemble_probability(p_s, p_e, s, e, T)


def generate_supervision(record: VideoRecord, F_v, queries: QueryFeatures,
                         cfg: SupervisionConfig = SupervisionConfig()) -> SupervisionTarget:
    """Build the supervision target for one annotated record.

    ``F_v`` supplies the frame count; annotation times are mapped onto its
    rows with the record's clip stride.
    """
    if F_v is None or queries is None:
        raise ValueError(f"{record.video_id}: missing embeddings")
    F_v = check_matrix(F_v, "F_v", min_rows=2)
    T = F_v.shape[0]
    if T != record.num_frames:
        logger.debug("%s: %d feature rows, annotation implies %d", record.video_id, T, record.num_frames)
    anchor_s = frame_of_time(record.annotation.start, record.clip_stride_sec, T)
    anchor_e = frame_of_time(record.annotation.end, record.clip_stride_sec, T)
    if cfg.strategy == "original_query":
        start_vec = end_vec = pool_query(queries.original)
    else:
        start_vec, end_vec = pool_query(queries.start), pool_query(queries.end)
    s, e, probs = soft_labels(F_v, start_vec, end_vec, anchor_s, anchor_e, cfg)
    return SupervisionTarget(record.video_id, s, e, probs)

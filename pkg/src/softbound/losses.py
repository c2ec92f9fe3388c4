"""Loss terms for moment localization with soft boundary supervision.

Moments are ``(center, width)`` pairs normalised to the video length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._validation import check_matrix, check_vector
from .supervision import cosine_sim_rows, pool_query

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Weights for the base-model loss.

    Defaults follow common DETR-style moment-retrieval settings; they are
    configuration, not measured values.
    """

    lambda_l1: float = 10.0
    lambda_iou: float = 1.0
    lambda_saliency: float = 1.0
    lambda_cls: float = 4.0
    margin_delta: float = 0.2

    def __post_init__(self):
        for name in ("lambda_l1", "lambda_iou", "lambda_saliency", "lambda_cls"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not math.isfinite(self.margin_delta):
            raise ValueError("margin_delta must be finite")


@dataclass(frozen=True)
class ToyHeadParams:
    gamma: float = 1.0
    beta: float = 0.0


def cw_to_se(m):
    c, w = m
    return c - w / 2, c + w / 2


def se_to_cw(seg):
    s, e = seg
    return (s + e) / 2, e - s


def giou_1d(m, m_hat) -> float:
    """Generalised IoU of two ``(center, width)`` intervals, in ``(-1, 1]``."""
    if m[1] <= 0 or m_hat[1] <= 0:
        raise ValueError("interval widths must be positive")
    s1, e1 = cw_to_se(m)
    s2, e2 = cw_to_se(m_hat)
    inter = max(0.0, min(e1, e2) - max(s1, s2))
    union = (e1 - s1) + (e2 - s2) - inter
    hull = max(e1, e2) - min(s1, s2)
    return inter / union - (hull - union) / hull


def moment_loss(m, m_hat, w: LossWeights = LossWeights()) -> float:
    l1 = abs(m[0] - m_hat[0]) + abs(m[1] - m_hat[1])
    return w.lambda_l1 * l1 + w.lambda_iou * (1.0 - giou_1d(m, m_hat))


def saliency_loss(S, t_high, t_low, t_in, t_out, delta) -> float:
    """Two hinge ranking terms: high vs low clip inside the moment, in vs out."""
    S = check_vector(S, "S")
    for name, t in (("t_high", t_high), ("t_low", t_low), ("t_in", t_in), ("t_out", t_out)):
        if not 0 <= t < S.shape[0]:
            raise IndexError(f"{name}={t} out of range for {S.shape[0]} clips")
    return max(0.0, delta + S[t_low] - S[t_high]) + max(0.0, delta + S[t_out] - S[t_in])


def logistic(x):
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))


def head_similarities(F_v_prime, F_q_prime) -> np.ndarray:
    F_v_prime = check_matrix(F_v_prime, "F_v_prime")
    F_q_prime = check_matrix(F_q_prime, "F_q_prime")
    if F_v_prime.shape[1] != F_q_prime.shape[1]:
        raise ValueError("video and query features must share their dimension")
    return cosine_sim_rows(F_v_prime, pool_query(F_q_prime))


def toy_boundary_head(F_v_prime, F_q_prime, params: ToyHeadParams = ToyHeadParams()) -> np.ndarray:
    """Per-frame in-moment probability ``logistic(gamma * cos(frame, mean query) + beta)``.

    A deterministic stand-in for a trained boundary prediction head.
    """
    return logistic(params.gamma * head_similarities(F_v_prime, F_q_prime) + params.beta)


def _clamp(p_hat):
    return np.clip(np.asarray(p_hat, dtype=np.float64), EPS, 1.0 - EPS)


def boundary_loss(p, p_hat) -> float:
    """Summed per-frame binary cross-entropy with soft targets ``p``."""
    p = np.asarray(p, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    if p.shape != p_hat.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {p_hat.shape}")
    q = _clamp(p_hat)
    return float(-np.sum(p * np.log(q) + (1.0 - p) * np.log1p(-q)))


def boundary_loss_grad(p, p_hat) -> np.ndarray:
    """Gradient of :func:`boundary_loss` with respect to ``p_hat``.

    Zero where clamping is active.
    """
    p = np.asarray(p, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    q = _clamp(p_hat)
    grad = -p / q + (1.0 - p) / (1.0 - q)
    active = (p_hat > EPS) & (p_hat < 1.0 - EPS)
    return np.where(active, grad, 0.0)


def head_param_grad(p, F_v_prime, F_q_prime, params: ToyHeadParams) -> np.ndarray:
    """Gradient of ``boundary_loss(p, toy_boundary_head(...))`` w.r.t. ``(gamma, beta)``."""
    c = head_similarities(F_v_prime, F_q_prime)
    p_hat = logistic(params.gamma * c + params.beta)
    dz = boundary_loss_grad(p, p_hat) * p_hat * (1.0 - p_hat)
    return np.array([np.sum(dz * c), np.sum(dz)])


def classification_loss(fg_probs: Sequence[float], lambda_cls: float) -> float:
    q = np.clip(np.asarray(fg_probs, dtype=np.float64), EPS, 1.0)
    return float(-lambda_cls * np.sum(np.log(q)))


def origin_loss(pairs, class_probs, saliency: float = 0.0, w: LossWeights = LossWeights()) -> float:
    """Base-model loss over already-matched predictions.

    Args:
        pairs: one entry per prediction: ``(m, m_hat)`` for predictions
            matched to a ground-truth moment, or ``None`` for background.
        class_probs: predicted probability of each prediction's assigned class.
        saliency: a precomputed :func:`saliency_loss` value.
        w: loss weights.
    """
    if len(pairs) != len(class_probs):
        raise ValueError("pairs and class_probs must align")
    total = w.lambda_saliency * saliency + classification_loss(class_probs, w.lambda_cls)
    for pair in pairs:
        if pair is not None:
            total += moment_loss(pair[0], pair[1], w)
    return float(total)


def total_loss(bound: float, origin: float) -> float:
    if not (math.isfinite(bound) and math.isfinite(origin)):
        raise ValueError("loss components must be finite")
    return bound + origin


def grad_check(f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
               x, h: float = 1e-6, floor: float = 1e-8) -> float:
    """Max relative error between ``grad(x)`` and central differences of ``f``.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    analytic = np.asarray(grad(x), dtype=np.float64)
    worst = 0.0
    for k in range(x.size):
        step = np.zeros_like(x)
        step.flat[k] = h
        fp, fm = f(x + step), f(x - step)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite loss near coordinate {k}")
        numeric = (fp - fm) / (2 * h)
        a = analytic.flat[k]
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst

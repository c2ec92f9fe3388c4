"""Synthetic dataset with planted boundary frames, for offline demos and tests.

Frame ``i`` of every video lies on the unit circle spanned by a "start"
direction ``e0`` and an "end" direction ``e1``: exactly ``e0`` at the planted
start frame ``k_s``, exactly ``e1`` at the planted end frame ``k_e``, and
rotating between them inside. The annotation sits one frame further out
(``k_s - 1`` and ``k_e + 1``) and those frames are kept dissimilar enough
that the planted frames remain the unique score maxima. Start and end
descriptions embed to token matrices whose mean is ``e0`` and ``e1``; the
original query points elsewhere, so the ``original_query`` strategy gives
visibly different labels.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .data import Segment, VideoRecord, save_annotations
from .expansion import DEFAULT_MODEL, PROMPT_VERSION, CacheEntry, ExpansionCache, cache_key
from .metrics import Prediction, save_predictions
from .store import FeatureStore

ACTIONS = (
    ("person opens the door", "A hand reaches for the door handle.", "The door swings fully open."),
    ("person eats a sandwich", "The hand lifts the sandwich toward the mouth.", "The person chews and lowers the sandwich."),
    ("person closes the laptop", "Fingers grip the top edge of the laptop screen.", "The laptop screen rests shut on the base."),
    ("person drinks from a cup", "The hand raises the cup to the lips.", "The cup is lowered back to the table."),
)

STRIDE_SEC = 2.0
N_TOKENS = 3
NOISE = 1e-3


def _tokens(direction, rng):
    """Token rows whose mean is exactly ``direction``."""
    delta = rng.normal(0.0, 0.05, size=(N_TOKENS, direction.shape[0]))
    delta -= delta.mean(axis=0)
    return direction + delta


def outside_profile(d, T):
    """Similarity to the nearer boundary direction for a frame ``d`` steps outside it.

    Only the frame holding the annotation (``d == 1``) must stay below
    ``1 - 1/T``; frames further out may be very similar, which yields several
    graded survivors after thresholding.
    """
    if d == 1:
        return math.cos(1.25 * math.acos(1.0 - 1.0 / T))
    if d <= 3:
        return 0.995
    return 0.995 * math.cos(min(0.5 * (d - 3), math.pi / 2))


def frame_plane_coords(T, k_s, k_e):
    """``(T, 2)`` coordinates of every frame on the (start, end) unit circle."""
    coords = np.empty((T, 2))
    for i in range(T):
        if i < k_s:
            c = outside_profile(k_s - i, T)
            coords[i] = c, -math.sqrt(1.0 - c * c)
        elif i <= k_e:
            theta = (math.pi / 2) * (i - k_s) / (k_e - k_s)
            coords[i] = math.cos(theta), math.sin(theta)
        else:
            c = outside_profile(i - k_e, T)
            coords[i] = -math.sqrt(1.0 - c * c), c
    return coords


def make_video(T, D, k_s, k_e, rng):
    F = np.zeros((T, D))
    F[:, :2] = frame_plane_coords(T, k_s, k_e)
    if D > 3:
        F[:, 3:] = rng.normal(0.0, NOISE, size=(T, D - 3))
    return F * rng.uniform(0.5, 2.0, size=(T, 1))


def original_direction(D):
    v = np.zeros(D)
    if D >= 3:
        v[2] = 1.0
    else:
        v[:2] = 1.0 / math.sqrt(2.0)
    return v


def make_fixture(out_dir, n_videos=4, T=16, D=8, seed=0) -> dict:
    """Write a complete offline dataset under ``out_dir``.

    Returns:
        ``{video_id: {"s_prime": k_s, "e_prime": k_e}}``, the planted frames
        (also written to ``planted.json``).
    """
    if n_videos < 1 or T < 4 or D < 2:
        raise ValueError("need n_videos >= 1, T >= 4, D >= 2")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store = FeatureStore(out / "embeddings")
    e0, e1 = np.eye(D)[0], np.eye(D)[1]
    orig = original_direction(D)

    text_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    for query, start_desc, end_desc in ACTIONS:
        store.save_text(query, _tokens(orig, text_rng))
        store.save_text(start_desc, _tokens(e0, text_rng))
        store.save_text(end_desc, _tokens(e1, text_rng))

    cache_path = out / "expansion_cache.jsonl"
    cache_path.unlink(missing_ok=True)
    cache = ExpansionCache(cache_path)
    for query, start_desc, end_desc in ACTIONS:
        cache.put(CacheEntry(cache_key(query, DEFAULT_MODEL, PROMPT_VERSION), start_desc, end_desc, 0.0))

    records, preds, planted = [], [], {}
    for j, ss in enumerate(np.random.SeedSequence(seed).spawn(n_videos)):
        rng = np.random.default_rng(ss)
        vid = f"vid{j:04d}"
        k_s = int(rng.integers(1, T - 2))
        k_e = int(rng.integers(k_s + 1, T - 1))
        store.save_video(vid, make_video(T, D, k_s, k_e, rng))
        query = ACTIONS[j % len(ACTIONS)][0]
        ann = Segment((k_s - 1 + 0.25) * STRIDE_SEC, (k_e + 1 + 0.5) * STRIDE_SEC)
        records.append(VideoRecord(vid, T * STRIDE_SEC, STRIDE_SEC, ann, query))
        planted[vid] = {"s_prime": k_s, "e_prime": k_e}
        shift = float(rng.uniform(-0.5, 0.5)) * STRIDE_SEC
        preds.append(Prediction(vid, Segment(max(ann.start + shift, 0.0), ann.end + shift), 0.9))
        lo = float(rng.uniform(0.0, T * STRIDE_SEC / 2))
        preds.append(Prediction(vid, Segment(lo, lo + float(rng.uniform(1.0, T * STRIDE_SEC / 2))), 0.4))

    save_annotations(records, out / "annotations.jsonl")
    save_predictions(preds, out / "predictions.jsonl")
    (out / "planted.json").write_text(json.dumps(planted, indent=1, sort_keys=True) + "\n")
    (out / "config.ini").write_text(
        "[paths]\n"
        "annotations = annotations.jsonl\n"
        "embeddings_dir = embeddings\n"
        "cache = expansion_cache.jsonl\n"
        "output_dir = out\n\n"
        "[llm]\n"
        "offline = true\n\n"
        "[run]\n"
        f"seed = {seed}\n"
    )
    return planted

"""Temporal localization metrics: IoU, R1@mu and mAP over IoU thresholds."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .data import FormatError, RecordError, Segment, VideoRecord

logger = logging.getLogger(__name__)

DEFAULT_MAP_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
DEFAULT_R1_THRESHOLDS = (0.5, 0.7)


@dataclass(frozen=True)
class Prediction:
    video_id: str
    segment: Segment
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise RecordError(f"{self.video_id}: prediction score must be finite")


@dataclass
class MetricReport:
    r1_at: dict = field(default_factory=dict)
    map_mean: float = 0.0
    per_threshold_ap: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "r1_at": {f"{k:g}": v for k, v in self.r1_at.items()},
            "map_mean": self.map_mean,
            "per_threshold_ap": {f"{k:g}": v for k, v in self.per_threshold_ap.items()},
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "threshold", "value"])
            for mu, v in self.r1_at.items():
                writer.writerow(["R1", f"{mu:g}", repr(v)])
            for mu, v in self.per_threshold_ap.items():
                writer.writerow(["AP", f"{mu:g}", repr(v)])
            writer.writerow(["mAP", "", repr(self.map_mean)])


def temporal_iou(a: Segment, b: Segment) -> float:
    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = a.length + b.length - inter
    return inter / union


def group_ground_truth(records) -> dict[str, list[Segment]]:
    """Ground-truth moments keyed by video id (several lines may share one id)."""
    gts = defaultdict(list)
    for rec in records:
        if isinstance(rec, VideoRecord):
            gts[rec.video_id].append(rec.annotation)
        else:
            vid, seg = rec
            gts[vid].append(seg)
    return dict(gts)


def rank_predictions(preds) -> dict[str, list[Prediction]]:
    """Per-video predictions sorted by score, then earlier start, then input order."""
    grouped = defaultdict(list)
    for order, p in enumerate(preds):
        grouped[p.video_id].append((-p.score, p.segment.start, order, p))
    return {vid: [t[-1] for t in sorted(items, key=lambda t: t[:3])] for vid, items in grouped.items()}


def r1_at_iou(preds, gts: dict, mu: float) -> float:
    """Fraction of queries whose top-ranked prediction reaches IoU >= ``mu``.

    A query with several ground-truth moments counts as a hit if the top
    prediction overlaps any of them enough. Queries without predictions miss.
    """
    if not gts:
        raise ValueError("empty ground truth")
    ranked = rank_predictions(preds)
    hits = 0
    for vid, segs in gts.items():
        if vid in ranked:
            top = ranked[vid][0].segment
            hits += max(temporal_iou(top, g) for g in segs) >= mu
    return hits / len(gts)


def interpolated_ap(tp, n_gt: int) -> float:
    """All-points interpolated average precision of a ranked TP/FP sequence."""
    tp = np.asarray(tp, dtype=np.float64)
    if n_gt == 0 or tp.size == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, tp.size + 1)
    recall = cum_tp / n_gt
    mprec = np.concatenate([[0.0], precision, [0.0]])
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mprec = np.maximum.accumulate(mprec[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0] + 1
    return float(np.sum((mrec[steps] - mrec[steps - 1]) * mprec[steps]))


def match_predictions(ranked, segs, mu) -> list[int]:
    """Greedy one-to-one matching; returns a 0/1 TP flag per ranked prediction."""
    used = [False] * len(segs)
    flags = []
    for p in ranked:
        ious = [temporal_iou(p.segment, g) for g in segs]
        hit = 0
        for j in sorted(range(len(segs)), key=lambda j: -ious[j]):
            if ious[j] < mu:
                break
            if not used[j]:
                used[j] = True
                hit = 1
                break
        flags.append(hit)
    return flags


def average_precision(preds, gts: dict, mu: float) -> float:
    """Mean over queries of the per-query AP at IoU threshold ``mu``."""
    if not gts:
        raise ValueError("empty ground truth")
    ranked = rank_predictions(preds)
    aps = [interpolated_ap(match_predictions(ranked.get(vid, []), segs, mu), len(segs))
           for vid, segs in gts.items()]
    return float(np.mean(aps))


def mean_ap(preds, gts: dict, thresholds=DEFAULT_MAP_THRESHOLDS, r1_thresholds=()) -> MetricReport:
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("need at least one IoU threshold")
    for mu in thresholds:
        if not 0 < mu <= 1:
            raise ValueError(f"IoU threshold {mu} outside (0, 1]")
    preds = list(preds)
    unknown = {p.video_id for p in preds} - set(gts)
    if unknown:
        logger.warning("%d predicted video(s) have no ground truth and are ignored", len(unknown))
    per = {mu: average_precision(preds, gts, mu) for mu in thresholds}
    r1 = {mu: r1_at_iou(preds, gts, mu) for mu in r1_thresholds}
    return MetricReport(r1_at=r1, map_mean=float(np.mean(list(per.values()))), per_threshold_ap=per)


def evaluate(preds, gts, r1_thresholds=DEFAULT_R1_THRESHOLDS, map_thresholds=DEFAULT_MAP_THRESHOLDS) -> MetricReport:
    preds = list(preds)
    if not preds:
        logger.warning("no predictions; every metric is 0")
    return mean_ap(preds, gts, map_thresholds, r1_thresholds)


def load_predictions(path, strict: bool = True) -> list[Prediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(Prediction(str(obj["video_id"]),
                                      Segment(float(obj["start_sec"]), float(obj["end_sec"])),
                                      float(obj["score"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                msg = f"{path}:{lineno}: invalid prediction ({exc})"
                if strict:
                    raise FormatError(msg) from None
                logger.warning(msg)
    return out


def save_predictions(preds, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps({"video_id": p.video_id, "start_sec": p.segment.start,
                                 "end_sec": p.segment.end, "score": p.score}) + "\n")

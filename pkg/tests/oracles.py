"""Slow, independent reference computations used as test oracles.

Everything here is written with plain Python scalars and loops so it shares no
code path with the vectorised implementation under test.
"""

import math


def dot(x, y):
    return sum(a * b for a, b in zip(x, y))


def cosine(x, y):
    nx = math.sqrt(dot(x, x))
    ny = math.sqrt(dot(y, y))
    if nx == 0 or ny == 0:
        return 0.0
    return max(-1.0, min(1.0, dot(x, y) / (nx * ny)))


def attention(Q, K, V, scale):
    out = []
    for q in Q:
        logits = [scale * dot(q, k) for k in K]
        m = max(logits)
        w = [math.exp(v - m) for v in logits]
        z = sum(w)
        out.append([sum(w[n] * V[n][d] for n in range(len(V))) / z for d in range(len(V[0]))])
    return out


def mean_rows(rows):
    return [sum(r[d] for r in rows) / len(rows) for d in range(len(rows[0]))]


def frame_scores(frames, query, anchor, indices, use_sim=True, use_dist=True):
    T = len(frames)
    out = []
    for i in indices:
        s = 0.0
        if use_sim:
            s += cosine(frames[i], query)
        if use_dist:
            s -= abs(i - anchor) / T
        out.append(s)
    return out


def argmax_earliest(values):
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def argmax_latest(values):
    best = 0
    for i in range(1, len(values)):
        if values[i] >= values[best]:
            best = i
    return best


def threshold_minmax(scores, tau):
    kept = [s if s >= tau else 0.0 for s in scores]
    positive = [s for s in kept if s > 0]
    if not positive:
        return [0.0] * len(scores)
    lo, hi = min(positive), max(positive)
    out = []
    for s in kept:
        if s <= 0:
            out.append(0.0)
        elif hi == lo:
            out.append(1.0)
        else:
            out.append((s - lo) / (hi - lo))
    return out


def soft_labels(frames, start_q, end_q, anchor_s, anchor_e, tau):
    """Full pseudo-boundary + probability pipeline, step by step."""
    T = len(frames)
    ss = frame_scores(frames, start_q, anchor_s, range(T))
    es = frame_scores(frames, end_q, anchor_e, range(T))
    s, e = argmax_earliest(ss), argmax_latest(es)
    if s > e:
        s, e = anchor_s, anchor_e
    p_s = threshold_minmax(frame_scores(frames, start_q, s, range(s)), tau)
    p_e = threshold_minmax(frame_scores(frames, end_q, e, range(e + 1, T)), tau)
    return s, e, p_s + [1.0] * (e - s + 1) + p_e


def interval_iou(a, b):
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    return inter / ((a[1] - a[0]) + (b[1] - b[0]) - inter)


def ranked(preds):
    """preds: list of (video_id, start, end, score); returns per-video ranked lists."""
    by_vid = {}
    for order, (vid, s, e, score) in enumerate(preds):
        by_vid.setdefault(vid, []).append((-score, s, order, (s, e)))
    return {vid: [item[3] for item in sorted(items)] for vid, items in by_vid.items()}


def r1(preds, gts, mu):
    rk = ranked(preds)
    hits = 0
    for vid, segs in gts.items():
        if vid in rk and max(interval_iou(rk[vid][0], g) for g in segs) >= mu:
            hits += 1
    return hits / len(gts)


def ap_one_query(ranked_segs, gt_segs, mu):
    used = set()
    tp = []
    for p in ranked_segs:
        best, best_iou = None, -1.0
        for j, g in enumerate(gt_segs):
            iou = interval_iou(p, g)
            if iou >= mu and j not in used and iou > best_iou:
                best, best_iou = j, iou
        if best is not None:
            used.add(best)
        tp.append(best is not None)
    precisions = []
    hits = 0
    for k, flag in enumerate(tp):
        hits += flag
        precisions.append(hits / (k + 1))
    total = 0.0
    for k, flag in enumerate(tp):
        if flag:
            total += max(precisions[k:])
    return total / len(gt_segs)


def mean_ap(preds, gts, thresholds):
    rk = ranked(preds)
    per = {}
    for mu in thresholds:
        aps = [ap_one_query(rk.get(vid, []), segs, mu) for vid, segs in gts.items()]
        per[mu] = sum(aps) / len(aps)
    return per, sum(per.values()) / len(per)


def bce(p, q):
    return sum(-(pi * math.log(qi) + (1 - pi) * math.log(1 - qi)) for pi, qi in zip(p, q))

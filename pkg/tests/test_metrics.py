import csv
import json
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from softbound.data import FormatError, Segment, VideoRecord
from softbound.metrics import (DEFAULT_MAP_THRESHOLDS, Prediction, average_precision, evaluate,
                               group_ground_truth, interpolated_ap, load_predictions, match_predictions, mean_ap,
                               r1_at_iou, rank_predictions, save_predictions, temporal_iou)


def random_case(rng, n_videos=5, n_preds=20, max_gt=3):
    gts = {}
    for v in range(n_videos):
        segs = []
        for _ in range(int(rng.integers(1, max_gt + 1))):
            s = float(rng.uniform(0, 20))
            segs.append(Segment(s, s + float(rng.uniform(1, 10))))
        gts[f"v{v}"] = segs
    preds = []
    for _ in range(n_preds):
        s = float(rng.uniform(0, 20))
        # coarse scores and starts produce ties that exercise the tie-break
        preds.append(Prediction(f"v{int(rng.integers(0, n_videos))}",
                                Segment(round(s), round(s) + float(rng.integers(1, 10))),
                                float(rng.integers(0, 4))))
    return preds, gts


def as_tuples(preds, gts):
    return ([(p.video_id, p.segment.start, p.segment.end, p.score) for p in preds],
            {vid: [(g.start, g.end) for g in segs] for vid, segs in gts.items()})


class TestTemporalIoU:
    def test_example(self):
        assert temporal_iou(Segment(2, 6), Segment(4, 8)) == 1 / 3

    def test_identical_and_disjoint(self):
        assert temporal_iou(Segment(1, 3), Segment(1, 3)) == 1.0
        assert temporal_iou(Segment(0, 1), Segment(2, 3)) == 0.0

    @given(st.floats(0, 50), st.floats(0.1, 20), st.floats(0, 50), st.floats(0.1, 20),
           st.floats(-10, 10), st.floats(0.1, 10))
    def test_symmetric_shift_and_scale_invariant(self, s1, w1, s2, w2, shift, scale):
        a, b = Segment(s1, s1 + w1), Segment(s2, s2 + w2)
        iou = temporal_iou(a, b)
        assert iou == temporal_iou(b, a)
        assert 0.0 <= iou <= 1.0
        moved = temporal_iou(Segment(s1 + shift + 20, s1 + w1 + shift + 20), Segment(s2 + shift + 20, s2 + w2 + shift + 20))
        scaled = temporal_iou(Segment(s1 * scale, (s1 + w1) * scale), Segment(s2 * scale, (s2 + w2) * scale))
        assert moved == pytest.approx(iou, abs=1e-9)
        assert scaled == pytest.approx(iou, abs=1e-9)


class TestR1:
    def test_threshold_straddle(self):
        preds = [Prediction("a", Segment(4, 8), 0.9)]
        gts = {"a": [Segment(2, 6)]}
        assert r1_at_iou(preds, gts, 0.3) == 1.0
        assert r1_at_iou(preds, gts, 0.5) == 0.0

    def test_missing_query_is_miss(self):
        gts = {"a": [Segment(0, 1)], "b": [Segment(0, 1)]}
        assert r1_at_iou([Prediction("a", Segment(0, 1), 1.0)], gts, 0.5) == 0.5

    def test_top_prediction_only(self):
        preds = [Prediction("a", Segment(10, 12), 0.9), Prediction("a", Segment(0, 1), 0.1)]
        assert r1_at_iou(preds, {"a": [Segment(0, 1)]}, 0.5) == 0.0

    def test_empty_ground_truth(self):
        with pytest.raises(ValueError):
            r1_at_iou([], {}, 0.5)

    def test_matches_oracle_and_is_monotone(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            preds, gts = random_case(rng, n_videos=10)
            tp, tg = as_tuples(preds, gts)
            values = []
            for mu in (0.1, 0.3, 0.5, 0.7, 0.9):
                got = r1_at_iou(preds, gts, mu)
                assert abs(got - oracles.r1(tp, tg, mu)) <= 1e-9
                values.append(got)
            assert all(x >= y for x, y in zip(values, values[1:]))


class TestRanking:
    def test_tie_break(self):
        preds = [Prediction("a", Segment(5, 6), 1.0), Prediction("a", Segment(2, 3), 1.0),
                 Prediction("a", Segment(2, 4), 1.0), Prediction("a", Segment(0, 1), 0.5)]
        ranked = rank_predictions(preds)["a"]
        assert [p.segment for p in ranked] == [Segment(2, 3), Segment(2, 4), Segment(5, 6), Segment(0, 1)]


class TestAP:
    def test_interpolated_examples(self):
        assert interpolated_ap([1], 1) == 1.0
        assert interpolated_ap([0, 1], 1) == 0.5
        assert interpolated_ap([1, 0, 1], 2) == pytest.approx(0.5 + 0.5 * 2 / 3)
        assert interpolated_ap([], 3) == 0.0

    def test_perfect_prediction(self):
        report = mean_ap([Prediction("a", Segment(2, 6), 1.0)], {"a": [Segment(2, 6)]})
        assert report.map_mean == 1.0
        assert all(v == 1.0 for v in report.per_threshold_ap.values())

    def test_worst_order_single_gt(self):
        preds = [Prediction("a", Segment(2, 6), s) for s in (0.1, 0.2, 0.3)]
        assert average_precision(preds, {"a": [Segment(2, 6)]}, 0.5) == 1.0

    def test_greedy_match_uses_each_gt_once(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            preds, gts = random_case(rng, n_videos=1, n_preds=8)
            ranked = rank_predictions(preds).get("v0", [])
            flags = match_predictions(ranked, gts["v0"], 0.3)
            assert sum(flags) <= len(gts["v0"])

    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            preds, gts = random_case(rng)
            tp, tg = as_tuples(preds, gts)
            per, mean = oracles.mean_ap(tp, tg, DEFAULT_MAP_THRESHOLDS)
            report = mean_ap(preds, gts)
            assert abs(report.map_mean - mean) <= 1e-9
            for mu in DEFAULT_MAP_THRESHOLDS:
                assert abs(report.per_threshold_ap[mu] - per[mu]) <= 1e-9

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            mean_ap([], {"a": [Segment(0, 1)]}, thresholds=[])
        with pytest.raises(ValueError):
            mean_ap([], {"a": [Segment(0, 1)]}, thresholds=[1.2])

    def test_default_grid(self):
        assert DEFAULT_MAP_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


class TestEvaluate:
    def test_empty_predictions_warn_and_score_zero(self, caplog):
        with caplog.at_level(logging.WARNING):
            report = evaluate([], {"a": [Segment(0, 1)]})
        assert report.map_mean == 0.0 and report.r1_at == {0.5: 0.0, 0.7: 0.0}
        assert "no predictions" in caplog.text

    def test_three_queries(self):
        gts = {"a": [Segment(0, 6)], "b": [Segment(0, 10)], "c": [Segment(0, 10)]}
        preds = [Prediction("a", Segment(2, 4), 1.0),    # IoU 1/3
                 Prediction("b", Segment(0, 6), 1.0),    # IoU 0.6
                 Prediction("c", Segment(0, 9), 1.0)]    # IoU 0.9
        report = evaluate(preds, gts)
        assert report.r1_at[0.5] == pytest.approx(2 / 3)
        assert report.r1_at[0.7] == pytest.approx(1 / 3)

    def test_group_ground_truth_merges_ids(self):
        recs = [VideoRecord("a", 10, 2, Segment(0, 2), "q"), VideoRecord("a", 10, 2, Segment(4, 6), "q")]
        assert group_ground_truth(recs) == {"a": [Segment(0, 2), Segment(4, 6)]}

    def test_report_serialisation(self, tmp_path):
        report = evaluate([Prediction("a", Segment(0, 1), 1.0)], {"a": [Segment(0, 1)]})
        assert json.loads(json.dumps(report.to_json()))["r1_at"]["0.5"] == 1.0
        report.write_csv(tmp_path / "m.csv")
        rows = list(csv.reader(open(tmp_path / "m.csv")))
        assert rows[0] == ["metric", "threshold", "value"]
        assert rows[-1][0] == "mAP"


class TestPredictionFiles:
    def test_roundtrip(self, tmp_path):
        preds = [Prediction("a", Segment(0.5, 2.25), 0.75), Prediction("b", Segment(1, 3), -1.0)]
        save_predictions(preds, tmp_path / "p.jsonl")
        assert load_predictions(tmp_path / "p.jsonl") == preds

    def test_strict_and_lenient(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text('{"video_id": "a", "start_sec": 0, "end_sec": 1, "score": 1}\n{"video_id": "b"}\n')
        with pytest.raises(FormatError, match=":2:"):
            load_predictions(path)
        assert len(load_predictions(path, strict=False)) == 1

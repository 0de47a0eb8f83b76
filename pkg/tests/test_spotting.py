import numpy as np
import pytest

from lpcore.errors import ImageIdMismatchError
from lpcore.geometry import RotatedBox, rotated_iou
from lpcore.spotting import (
    SpottingCounts,
    SpottingItem,
    SpottingRecord,
    aggregate,
    is_unidentifiable,
    match_image,
    match_records,
)


def square(cx, cy=0.0):
    return RotatedBox(cx, cy, 1.0, 1.0, 0.0)


def offset_for_iou(iou):
    """Center offset giving this IoU between unit squares on one axis."""
    return (1.0 - iou) / (1.0 + iou)


class TestMatchImage:
    def test_mixed_hits_and_misses(self):
        gt = SpottingRecord(
            "img",
            (
                SpottingItem(square(0.0), "京A11111"),
                SpottingItem(square(10.0), "京B22222"),
            ),
        )
        pred = SpottingRecord(
            "img",
            (
                SpottingItem(square(offset_for_iou(0.7)), "京A11111", 0.9),
                SpottingItem(square(10.0 + offset_for_iou(0.5)), "京B22222", 0.8),
            ),
        )
        assert rotated_iou(gt.items[1].box, pred.items[1].box) == pytest.approx(0.5)
        counts = match_image(gt, pred)
        assert counts == SpottingCounts(tp=1, fp=1, fn=1)

    def test_boundary_iou_is_not_a_match(self):
        gt = SpottingRecord("img", (SpottingItem(square(0.0), "京A11111"),))
        pred = SpottingRecord("img", (SpottingItem(square(0.25), "京A11111", 0.9),))
        assert rotated_iou(gt.items[0].box, pred.items[0].box) == 0.6
        assert match_image(gt, pred) == SpottingCounts(tp=0, fp=1, fn=1)
        # one step inside the boundary flips it
        assert match_image(gt, pred, iou_thresh=0.59) == SpottingCounts(tp=1, fp=0, fn=0)

    def test_wrong_text_consumes_gt(self):
        gt = SpottingRecord("img", (SpottingItem(square(0.0), "京A11111"),))
        pred = SpottingRecord(
            "img",
            (
                SpottingItem(square(0.0), "京A11112", 0.9),
                SpottingItem(square(0.05), "京A11111", 0.8),
            ),
        )
        # the high-score wrong-text claim burns the gt; the correct-text
        # prediction has nothing left to match
        assert match_image(gt, pred) == SpottingCounts(tp=0, fp=2, fn=1)

    def test_score_order_decides_claims(self):
        gt = SpottingRecord("img", (SpottingItem(square(0.0), "京A11111"),))
        low = SpottingItem(square(0.02), "京A11111", 0.3)
        high = SpottingItem(square(0.01), "京A11111", 0.9)
        counts = match_image(SpottingRecord("img", (gt.items[0],)), SpottingRecord("img", (low, high)))
        # high claims the gt (TP); low becomes FP
        assert counts == SpottingCounts(tp=1, fp=1, fn=0)

    def test_perfect_predictions(self):
        items = tuple(SpottingItem(square(5.0 * i), f"京A1234{i}") for i in range(4))
        preds = tuple(SpottingItem(it.box, it.transcript, 0.9) for it in items)
        counts = match_image(SpottingRecord("img", items), SpottingRecord("img", preds))
        assert counts == SpottingCounts(tp=4, fp=0, fn=0)
        assert aggregate([counts]) == (1.0, 1.0, 1.0)

    def test_image_id_mismatch(self):
        with pytest.raises(ImageIdMismatchError):
            match_image(SpottingRecord("a"), SpottingRecord("b"))

    def test_count_identities(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n_gt = int(rng.integers(0, 5))
            n_pred = int(rng.integers(0, 5))
            gt = SpottingRecord(
                "img",
                tuple(
                    SpottingItem(square(rng.uniform(0, 6)), f"京A{i}0000") for i in range(n_gt)
                ),
            )
            pred = SpottingRecord(
                "img",
                tuple(
                    SpottingItem(
                        square(rng.uniform(0, 6)), f"京A{rng.integers(0, 5)}0000", float(rng.uniform(0, 1))
                    )
                    for _ in range(n_pred)
                ),
            )
            c = match_image(gt, pred)
            assert c.tp + c.fn == n_gt
            assert c.tp + c.fp == n_pred


class TestUnidentifiable:
    def test_flagging(self):
        assert is_unidentifiable("京A123**")
        assert not is_unidentifiable("京A12345")

    def test_placeholder_never_matches_by_text(self):
        gt = SpottingRecord("img", (SpottingItem(square(0.0), "京A123**"),))
        pred = SpottingRecord("img", (SpottingItem(square(0.0), "京A123**", 0.9),))
        assert match_image(gt, pred) == SpottingCounts(tp=0, fp=1, fn=1)

    def test_ignore_mode_drops_both_sides(self):
        gt = SpottingRecord("img", (SpottingItem(square(0.0), "京A123**"),))
        pred = SpottingRecord("img", (SpottingItem(square(0.0), "京A123**", 0.9),))
        counts = match_image(gt, pred, ignore_unidentifiable=True)
        assert counts == SpottingCounts(tp=0, fp=0, fn=0)

    def test_ignore_mode_unmatched_gt_not_fn(self):
        gt = SpottingRecord("img", (SpottingItem(square(0.0), "京A123**"),))
        pred = SpottingRecord("img")
        assert match_image(gt, pred, ignore_unidentifiable=True) == SpottingCounts(0, 0, 0)
        assert match_image(gt, pred) == SpottingCounts(0, 0, 1)


class TestAggregate:
    def test_balanced_halves(self):
        assert aggregate([SpottingCounts(1, 1, 1)]) == (0.5, 0.5, 0.5)

    def test_empty_gives_zeros(self):
        assert aggregate([SpottingCounts(0, 0, 0)]) == (0.0, 0.0, 0.0)
        assert aggregate([]) == (0.0, 0.0, 0.0)

    def test_formula_point(self):
        r, p, f = aggregate([SpottingCounts(3, 1, 2)])
        assert (r, p) == (0.6, 0.75)
        assert f == pytest.approx(2 * 0.45 / 1.35)
        assert f == pytest.approx(0.6667, abs=1e-4)

    def test_fscore_between_precision_and_recall(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            c = SpottingCounts(*(int(v) for v in rng.integers(0, 10, size=3)))
            r, p, f = aggregate([c])
            assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12

    def test_sums_across_images(self):
        parts = [SpottingCounts(1, 0, 0), SpottingCounts(2, 1, 1), SpottingCounts(0, 0, 1)]
        assert aggregate(parts) == aggregate([sum(parts, SpottingCounts())])


class TestMatchRecords:
    def build(self):
        gts, preds = [], []
        for i in range(6):
            items = tuple(SpottingItem(square(4.0 * j), f"京A{i}{j}000") for j in range(3))
            gts.append(SpottingRecord(f"img{i}", items))
            preds.append(
                SpottingRecord(
                    f"img{i}",
                    tuple(SpottingItem(it.box, it.transcript, 0.9) for it in items[: 2 + i % 2]),
                )
            )
        return gts, preds

    def test_missing_images_count_fully(self):
        gts, preds = self.build()
        results = dict(match_records(gts, preds[:-1]))
        assert results["img5"].fn == 3 and results["img5"].tp == 0
        extra = SpottingRecord("zz_only_pred", (SpottingItem(square(0.0), "京A00000", 0.5),))
        results = dict(match_records(gts, preds + [extra]))
        assert results["zz_only_pred"].fp == 1

    def test_sorted_and_thread_invariant(self):
        gts, preds = self.build()
        serial = match_records(gts, preds, max_workers=1)
        threaded = match_records(gts, preds, max_workers=4)
        assert serial == threaded
        ids = [i for i, _ in serial]
        assert ids == sorted(ids)

    def test_order_of_input_records_irrelevant(self):
        gts, preds = self.build()
        a = match_records(gts, preds)
        b = match_records(list(reversed(gts)), list(reversed(preds)))
        assert a == b


class TestValidation:
    def test_record_requires_id(self):
        with pytest.raises(ValueError):
            SpottingRecord("")

    def test_counts_nonnegative(self):
        with pytest.raises(ValueError):
            SpottingCounts(-1, 0, 0)

"""End-to-end spotting metric: joint box-IoU and transcript matching.

A prediction counts as a true positive only when its best available
ground-truth box overlaps by strictly more than the threshold AND the
transcripts match exactly. Totals then feed recall / precision / F-score.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .ctc import exact_match
from .errors import ImageIdMismatchError
from .geometry import RotatedBox, axis_aligned_iou, rotated_iou

DEFAULT_IOU_THRESH = 0.6
UNIDENTIFIABLE_CHAR = "*"


@dataclass(frozen=True)
class SpottingItem:
    """One plate: box, transcript, and (for predictions) a confidence."""

    box: RotatedBox
    transcript: str
    score: float | None = None


@dataclass(frozen=True)
class SpottingRecord:
    """All plates of one image, either ground truth or predictions."""

    image_id: str
    items: tuple[SpottingItem, ...] = ()

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be nonempty")
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class SpottingCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "SpottingCounts") -> "SpottingCounts":
        return SpottingCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def is_unidentifiable(transcript: str) -> bool:
    """Plate content carries the placeholder for unreadable characters."""
    return UNIDENTIFIABLE_CHAR in transcript


def match_image(
    gt: SpottingRecord,
    pred: SpottingRecord,
    iou_thresh: float = DEFAULT_IOU_THRESH,
    ignore_unidentifiable: bool = False,
    axis_aligned: bool = False,
) -> SpottingCounts:
    """Greedy one-to-one matching for a single image.

    Predictions are visited by descending score; each claims the unmatched
    ground truth with the highest IoU. The claim is a TP iff the IoU is
    strictly above iou_thresh and the transcripts match exactly; a claim
    that passes IoU but fails the text still consumes the ground truth.
    Ground truths with placeholder characters can never match by text;
    with ignore_unidentifiable they are dropped from FN, and predictions
    consumed by them are dropped from FP (do-not-care regions).
    """
    if gt.image_id != pred.image_id:
        raise ImageIdMismatchError(f"image ids differ: {gt.image_id!r} vs {pred.image_id!r}")
    iou_fn = axis_aligned_iou if axis_aligned else rotated_iou
    order = sorted(range(len(pred.items)), key=lambda i: -(pred.items[i].score or 0.0))
    taken = [False] * len(gt.items)
    matched_tp = [False] * len(gt.items)
    tp = 0
    fp = 0
    for i in order:
        p = pred.items[i]
        best_j = -1
        best_iou = 0.0
        for j, g in enumerate(gt.items):
            if taken[j]:
                continue
            v = iou_fn(p.box, g.box)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0 and best_iou > iou_thresh:
            taken[best_j] = True
            g = gt.items[best_j]
            if is_unidentifiable(g.transcript):
                if not ignore_unidentifiable:
                    fp += 1
            elif exact_match(p.transcript, g.transcript):
                matched_tp[best_j] = True
                tp += 1
            else:
                fp += 1
        else:
            fp += 1
    fn = 0
    for j, g in enumerate(gt.items):
        if ignore_unidentifiable and is_unidentifiable(g.transcript):
            continue
        if not matched_tp[j]:
            fn += 1
    return SpottingCounts(tp, fp, fn)


def aggregate(counts: list[SpottingCounts]) -> tuple[float, float, float]:
    """Dataset-level (recall, precision, fscore); 0 on empty denominators."""
    tp = sum(c.tp for c in counts)
    fp = sum(c.fp for c in counts)
    fn = sum(c.fn for c in counts)
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    fscore = (
        2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    )
    return recall, precision, fscore


def match_records(
    gts: list[SpottingRecord],
    preds: list[SpottingRecord],
    iou_thresh: float = DEFAULT_IOU_THRESH,
    ignore_unidentifiable: bool = False,
    axis_aligned: bool = False,
    max_workers: int | None = None,
) -> list[tuple[str, SpottingCounts]]:
    """Match whole datasets, pairing records by image id.

    Images present on only one side are scored against an empty record.
    The result is sorted by image id and independent of thread count.
    """
    gt_by_id = {r.image_id: r for r in gts}
    pred_by_id = {r.image_id: r for r in preds}
    ids = sorted(set(gt_by_id) | set(pred_by_id))

    def one(image_id: str) -> SpottingCounts:
        g = gt_by_id.get(image_id) or SpottingRecord(image_id)
        p = pred_by_id.get(image_id) or SpottingRecord(image_id)
        return match_image(g, p, iou_thresh, ignore_unidentifiable, axis_aligned)

    if max_workers is not None and max_workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, ids))
    else:
        results = [one(i) for i in ids]
    return list(zip(ids, results))

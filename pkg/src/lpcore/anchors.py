"""Anchor grids, IoU-based target assignment, and box-offset coding.

One anchor per feature-map cell. Offsets follow the tangent
parameterization for angle: dtheta = tan(g.theta) - tan(b.theta), which is
safe because canonical boxes keep |theta| <= pi/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AngleOutOfRangeError
from .geometry import RotatedBox, rotated_iou

# Conventional single-stage defaults; the P3 stride with a wide 3:1 base
# matches plate geometry. All are overridable call arguments.
DEFAULT_STRIDE = 8
DEFAULT_BASE_W = 48.0
DEFAULT_BASE_H = 16.0
DEFAULT_POS_IOU = 0.5
DEFAULT_NEG_IOU = 0.4

# Assignment.gt_index sentinels (non-negative values are ground-truth indices).
NEGATIVE = -1
IGNORE = -2


@dataclass(frozen=True)
class BoxDelta:
    """Full regression offset (dx, dy, dw, dh, dtheta)."""

    dx: float
    dy: float
    dw: float
    dh: float
    dtheta: float

    def __post_init__(self):
        for name in ("dx", "dy", "dw", "dh", "dtheta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"BoxDelta.{name} must be finite")


@dataclass(frozen=True)
class ShapeDelta:
    """Shape-only offset (dw, dh, dtheta); the center is never moved."""

    dw: float
    dh: float
    dtheta: float

    def __post_init__(self):
        for name in ("dw", "dh", "dtheta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"ShapeDelta.{name} must be finite")


@dataclass(frozen=True)
class AnchorGrid:
    """One axis-aligned anchor of size (base_w, base_h) per grid cell."""

    stride: int
    base_w: float
    base_h: float
    grid_h: int
    grid_w: int
    anchors: tuple[RotatedBox, ...]

    def __post_init__(self):
        if len(self.anchors) != self.grid_h * self.grid_w:
            raise ValueError(
                f"anchor count {len(self.anchors)} != grid {self.grid_h}x{self.grid_w}"
            )


@dataclass(frozen=True)
class Assignment:
    """Per-anchor labels: gt_index >= 0 positive, NEGATIVE, or IGNORE."""

    gt_index: np.ndarray
    max_iou: np.ndarray
    pos_iou: float
    neg_iou: float

    @property
    def positive_mask(self) -> np.ndarray:
        return self.gt_index >= 0

    @property
    def negative_mask(self) -> np.ndarray:
        return self.gt_index == NEGATIVE

    @property
    def ignore_mask(self) -> np.ndarray:
        return self.gt_index == IGNORE


def generate_anchors(
    grid_h: int,
    grid_w: int,
    stride: int = DEFAULT_STRIDE,
    base_w: float = DEFAULT_BASE_W,
    base_h: float = DEFAULT_BASE_H,
) -> AnchorGrid:
    """Row-major grid; cell (i, j) gets an anchor at ((j+.5)s, (i+.5)s)."""
    if grid_h <= 0 or grid_w <= 0 or stride <= 0 or base_w <= 0 or base_h <= 0:
        raise ValueError("all anchor-grid parameters must be positive")
    anchors = tuple(
        RotatedBox((j + 0.5) * stride, (i + 0.5) * stride, base_w, base_h, 0.0)
        for i in range(grid_h)
        for j in range(grid_w)
    )
    return AnchorGrid(stride, base_w, base_h, grid_h, grid_w, anchors)


def assign_targets(
    grid: AnchorGrid,
    gts: list[RotatedBox],
    pos_iou: float = DEFAULT_POS_IOU,
    neg_iou: float = DEFAULT_NEG_IOU,
) -> Assignment:
    """Threshold assignment plus a best-anchor force-match per ground truth.

    Anchors at IoU >= pos_iou take their best ground truth; anchors below
    neg_iou are negative; the band between is ignored. A ground truth left
    without any positive anchor claims its highest-IoU anchor as long as
    that IoU is nonzero (preferring anchors another gt has not taken), so
    small plates still train.
    """
    if not 0.0 <= neg_iou < pos_iou <= 1.0:
        raise ValueError(f"need 0 <= neg_iou < pos_iou <= 1, got ({pos_iou}, {neg_iou})")
    n = len(grid.anchors)
    if not gts:
        return Assignment(
            np.full(n, NEGATIVE, dtype=np.int64), np.zeros(n), pos_iou, neg_iou
        )
    iou = np.array([[rotated_iou(a, g) for g in gts] for a in grid.anchors])
    best_gt = iou.argmax(axis=1)
    max_iou = iou.max(axis=1)

    gt_index = np.full(n, NEGATIVE, dtype=np.int64)
    gt_index[max_iou >= neg_iou] = IGNORE
    positive = max_iou >= pos_iou
    gt_index[positive] = best_gt[positive]

    # Force-match: a gt that ended up with no positive anchor claims its
    # best-IoU anchor, preferring anchors not already holding another gt.
    for k in range(len(gts)):
        if np.any(gt_index == k):
            continue
        col = iou[:, k]
        candidates = np.argsort(-col, kind="stable")
        chosen = -1
        for a in candidates:
            if col[a] <= 0.0:
                break
            if gt_index[a] < 0:
                chosen = int(a)
                break
            if chosen == -1:
                chosen = int(a)  # fallback: steal the overall best
        if chosen >= 0:
            gt_index[chosen] = k
    return Assignment(gt_index, max_iou, pos_iou, neg_iou)


def _checked_tan(theta: float) -> float:
    if not abs(theta) < math.pi / 2:
        raise AngleOutOfRangeError(f"|theta| must be < pi/2 for tan(), got {theta}")
    return math.tan(theta)


def encode_delta(b: RotatedBox, g: RotatedBox) -> BoxDelta:
    """Offset from box b to ground truth g."""
    return BoxDelta(
        (g.cx - b.cx) / b.w,
        (g.cy - b.cy) / b.h,
        math.log(g.w / b.w),
        math.log(g.h / b.h),
        _checked_tan(g.theta) - _checked_tan(b.theta),
    )


def decode_delta(b: RotatedBox, d: BoxDelta) -> RotatedBox:
    """Algebraic inverse of encode_delta."""
    return RotatedBox(
        b.cx + d.dx * b.w,
        b.cy + d.dy * b.h,
        b.w * math.exp(d.dw),
        b.h * math.exp(d.dh),
        math.atan(_checked_tan(b.theta) + d.dtheta),
    )


def refine_anchor(b: RotatedBox, d: ShapeDelta) -> RotatedBox:
    """Adjust only (w, h, theta); the center is carried over unchanged."""
    return RotatedBox(
        b.cx,
        b.cy,
        b.w * math.exp(d.dw),
        b.h * math.exp(d.dh),
        math.atan(_checked_tan(b.theta) + d.dtheta),
    )

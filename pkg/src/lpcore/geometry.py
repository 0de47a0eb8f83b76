"""Rotated-rectangle geometry: five-tuple boxes, quad conversion, exact IoU, NMS.

A rotated box is (cx, cy, w, h, theta) with theta the angle to horizontal.
Angles are kept in [-pi/4, pi/4) with ``w`` along the side closest to
horizontal; any (w, h, theta) describing the same rectangle is folded into
that canonical form on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateQuadError

# Quads with less area than this (in px^2) are rejected by quad_to_rbox.
QUAD_AREA_EPS = 1e-6

_QUARTER_PI = math.pi / 4
_HALF_PI = math.pi / 2

Point = tuple[float, float]


@dataclass(frozen=True)
class RotatedBox:
    """Rotated rectangle (cx, cy, w, h, theta); angle in radians."""

    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h", "theta"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"RotatedBox.{name} must be finite, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"RotatedBox sides must be positive, got w={self.w}, h={self.h}")
        if not -_QUARTER_PI <= self.theta < _QUARTER_PI:
            w, h, theta = _fold_angle(self.w, self.h, self.theta)
            object.__setattr__(self, "w", w)
            object.__setattr__(self, "h", h)
            object.__setattr__(self, "theta", theta)

    @property
    def area(self) -> float:
        return self.w * self.h


def _fold_angle(w: float, h: float, theta: float) -> tuple[float, float, float]:
    """Fold (w, h, theta) into the canonical theta in [-pi/4, pi/4)."""
    t = math.remainder(theta, math.pi)  # [-pi/2, pi/2], same rectangle
    if t >= _QUARTER_PI:
        return h, w, t - _HALF_PI
    if t < -_QUARTER_PI:
        return h, w, t + _HALF_PI
    return w, h, t


@dataclass(frozen=True)
class Quad:
    """Four-vertex polygon in annotation order; must be simple with area > 0."""

    vertices: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        if len(self.vertices) != 4:
            raise DegenerateQuadError(f"quad needs 4 vertices, got {len(self.vertices)}")
        verts = []
        for p in self.vertices:
            x, y = float(p[0]), float(p[1])
            if not (math.isfinite(x) and math.isfinite(y)):
                raise DegenerateQuadError(f"non-finite vertex {p!r}")
            verts.append((x, y))
        object.__setattr__(self, "vertices", tuple(verts))
        if _shoelace(self.vertices) == 0.0:
            raise DegenerateQuadError("quad has zero area")
        if _segments_cross(verts[0], verts[1], verts[2], verts[3]) or _segments_cross(
            verts[1], verts[2], verts[3], verts[0]
        ):
            raise DegenerateQuadError("quad edges self-intersect")

    @property
    def area(self) -> float:
        return abs(_shoelace(self.vertices))


@dataclass(frozen=True)
class ScoredBox:
    """Detection candidate: a rotated box with a confidence in [0, 1]."""

    box: RotatedBox
    score: float

    def __post_init__(self):
        if not (isinstance(self.score, (int, float)) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")


def _shoelace(pts) -> float:
    """Signed area of a polygon (positive for counter-clockwise order)."""
    acc = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool:
    """True iff segments ab and cd properly intersect (not mere touching)."""
    d1 = _cross(a, b, c)
    d2 = _cross(a, b, d)
    d3 = _cross(c, d, a)
    d4 = _cross(c, d, b)
    return d1 * d2 < 0 and d3 * d4 < 0


def _convex_hull(pts) -> list[Point]:
    """Monotone-chain convex hull, counter-clockwise, no duplicate points."""
    pts = sorted(set(pts))
    if len(pts) <= 2:
        return list(pts)
    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def quad_to_rbox(q: Quad) -> RotatedBox:
    """Minimum-area enclosing rotated rectangle of the quad's vertices.

    Rotating calipers over the convex hull: the optimal rectangle has one
    side collinear with a hull edge.
    """
    if q.area < QUAD_AREA_EPS:
        raise DegenerateQuadError(f"quad area {q.area:g} below {QUAD_AREA_EPS:g}")
    hull = _convex_hull(q.vertices)
    if len(hull) < 3:
        raise DegenerateQuadError("quad vertices are collinear")
    best: tuple[float, float, float, float, float, float] | None = None
    n = len(hull)
    for i in range(n):
        x0, y0 = hull[i]
        x1, y1 = hull[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        norm = math.hypot(ex, ey)
        if norm == 0.0:
            continue
        ux, uy = ex / norm, ey / norm
        us = [px * ux + py * uy for px, py in hull]
        vs = [py * ux - px * uy for px, py in hull]
        w = max(us) - min(us)
        h = max(vs) - min(vs)
        area = w * h
        if best is None or area < best[0]:
            cu = 0.5 * (max(us) + min(us))
            cv = 0.5 * (max(vs) + min(vs))
            cx = cu * ux - cv * uy
            cy = cu * uy + cv * ux
            best = (area, cx, cy, w, h, math.atan2(uy, ux))
    assert best is not None
    return RotatedBox(best[1], best[2], best[3], best[4], best[5])


def rbox_to_quad(b: RotatedBox) -> Quad:
    """Corners counter-clockwise starting at box-local (-w/2, -h/2)."""
    c, s = math.cos(b.theta), math.sin(b.theta)
    hw, hh = b.w / 2.0, b.h / 2.0
    pts = tuple(
        (b.cx + lx * c - ly * s, b.cy + lx * s + ly * c)
        for lx, ly in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh))
    )
    return Quad(pts)


def _clip_polygon(subject: list[Point], clip: list[Point]) -> list[Point]:
    """Sutherland-Hodgman: clip `subject` by convex CCW polygon `clip`."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        pts = out
        out = []
        px, py = pts[-1]
        d_prev = ex * (py - ay) - ey * (px - ax)
        for cx_, cy_ in pts:
            d_cur = ex * (cy_ - ay) - ey * (cx_ - ax)
            if d_cur >= 0.0:
                if d_prev < 0.0:
                    t = d_prev / (d_prev - d_cur)
                    out.append((px + t * (cx_ - px), py + t * (cy_ - py)))
                out.append((cx_, cy_))
            elif d_prev >= 0.0:
                t = d_prev / (d_prev - d_cur)
                out.append((px + t * (cx_ - px), py + t * (cy_ - py)))
            px, py, d_prev = cx_, cy_, d_cur
    return out


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Exact intersection-over-union via convex polygon clipping."""
    # canonical argument order makes the result exactly symmetric
    if (b.cx, b.cy, b.w, b.h, b.theta) < (a.cx, a.cy, a.w, a.h, a.theta):
        a, b = b, a
    ca = list(rbox_to_quad(a).vertices)
    cb = list(rbox_to_quad(b).vertices)
    inter_poly = _clip_polygon(ca, cb)
    inter = abs(_shoelace(inter_poly)) if len(inter_poly) >= 3 else 0.0
    union = a.area + b.area - inter
    if inter <= 0.0 or union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def axis_aligned_iou(a: RotatedBox, b: RotatedBox) -> float:
    """IoU of the boxes' axis-aligned corner hulls (loose matching mode)."""

    def bounds(box: RotatedBox) -> tuple[float, float, float, float]:
        pts = rbox_to_quad(box).vertices
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return min(xs), min(ys), max(xs), max(ys)

    ax0, ay0, ax1, ay1 = bounds(a)
    bx0, by0, bx1, by1 = bounds(b)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return min(inter / union, 1.0) if union > 0.0 else 0.0


def rotated_nms(boxes: list[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy suppression by descending score; ties broken by input order.

    A candidate is dropped iff its IoU with an already-kept box exceeds
    ``iou_threshold``. The result is ordered by descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold!r}")
    order = sorted(range(len(boxes)), key=lambda i: -boxes[i].score)
    kept: list[ScoredBox] = []
    for i in order:
        cand = boxes[i]
        if all(rotated_iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept

"""Classification and regression losses with analytic gradients.

Scalar kernels return (value, derivative) pairs so gradient checks can run
without autodiff. Composition helpers mirror the detector's weighted sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .anchors import BoxDelta, ShapeDelta
from .errors import DomainError

# Probabilities are clamped away from {0, 1} before log().
PROB_EPS = 1e-7


@dataclass(frozen=True)
class FocalParams:
    """Focal loss balance/focusing parameters."""

    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class DetLossWeights:
    """Weights of the refinement / localization / classification terms."""

    lambda_ref: float = 0.5
    lambda_loc: float = 0.5
    lambda_cls: float = 1.0


@dataclass(frozen=True)
class EndToEndWeights:
    """Weights of the detection and recognition terms in the total loss."""

    lambda_det: float = 1.0
    lambda_rec: float = 0.1


def focal_loss(p: float, y: int, params: FocalParams = FocalParams()) -> tuple[float, float]:
    """Focal loss -alpha_t (1 - p_t)^gamma log(p_t) and d/dp.

    p is the predicted foreground probability, y in {0, 1} the label;
    p_t = p for positives and 1 - p for negatives, with alpha_t = alpha
    for positives and 1 - alpha otherwise.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must be in [0, 1], got {p!r}")
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    p = min(max(p, PROB_EPS), 1.0 - PROB_EPS)
    if y == 1:
        pt, at, dpt_dp = p, params.alpha, 1.0
    else:
        pt, at, dpt_dp = 1.0 - p, 1.0 - params.alpha, -1.0
    one_minus = 1.0 - pt
    log_pt = math.log(pt)
    gamma = params.gamma
    loss = -at * one_minus**gamma * log_pt
    if gamma == 0.0:
        dloss_dpt = -at / pt
    else:
        dloss_dpt = at * gamma * one_minus ** (gamma - 1.0) * log_pt - at * one_minus**gamma / pt
    return loss, dloss_dpt * dpt_dp


def smooth_l1(x: float) -> tuple[float, float]:
    """Huber-style penalty: 0.5 x^2 inside |x| < 1, |x| - 0.5 outside."""
    if abs(x) < 1.0:
        return 0.5 * x * x, x
    return abs(x) - 0.5, math.copysign(1.0, x)


def regression_loss(target: BoxDelta, pred: BoxDelta) -> float:
    """Smooth-L1 summed over the five offset components."""
    return sum(
        smooth_l1(t - p)[0]
        for t, p in (
            (target.dx, pred.dx),
            (target.dy, pred.dy),
            (target.dw, pred.dw),
            (target.dh, pred.dh),
            (target.dtheta, pred.dtheta),
        )
    )


def refinement_loss(target: ShapeDelta, pred: ShapeDelta) -> float:
    """Smooth-L1 summed over the three shape components."""
    return sum(
        smooth_l1(t - p)[0]
        for t, p in (
            (target.dw, pred.dw),
            (target.dh, pred.dh),
            (target.dtheta, pred.dtheta),
        )
    )


def detection_loss(
    l_ref: float, l_loc: float, l_cls: float, w: DetLossWeights = DetLossWeights()
) -> float:
    return w.lambda_ref * l_ref + w.lambda_loc * l_loc + w.lambda_cls * l_cls


def end_to_end_loss(l_det: float, l_rec: float, w: EndToEndWeights = EndToEndWeights()) -> float:
    return w.lambda_det * l_det + w.lambda_rec * l_rec


def anchor_classification_loss(
    probs: Sequence[float],
    labels: Sequence[int],
    params: FocalParams = FocalParams(),
    reduction: str = "positive",
) -> float:
    """Focal loss over anchors; labels are 1 / 0 / -1 (ignored).

    reduction: "positive" divides by the positive count (never below 1),
    "mean" by the non-ignored count, "sum" not at all.
    """
    if len(probs) != len(labels):
        raise ValueError("probs and labels length mismatch")
    total = 0.0
    n_pos = 0
    n_used = 0
    for p, lab in zip(probs, labels):
        if lab == -1:
            continue
        total += focal_loss(p, lab, params)[0]
        n_used += 1
        if lab == 1:
            n_pos += 1
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total / max(1, n_used)
    if reduction == "positive":
        return total / max(1, n_pos)
    raise ValueError(f"unknown reduction {reduction!r}")


def anchor_localization_loss(
    targets: Iterable[BoxDelta],
    preds: Iterable[BoxDelta],
    reduction: str = "positive",
) -> float:
    """Regression loss over matched (positive) anchor pairs."""
    targets = list(targets)
    preds = list(preds)
    if len(targets) != len(preds):
        raise ValueError("targets and preds length mismatch")
    total = sum(regression_loss(t, p) for t, p in zip(targets, preds))
    if reduction == "sum":
        return total
    if reduction in ("positive", "mean"):
        return total / max(1, len(targets))
    raise ValueError(f"unknown reduction {reduction!r}")

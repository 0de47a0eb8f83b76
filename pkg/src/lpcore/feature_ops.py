"""Dense feature-map operators: bilinear sampling, region cropping,
standard/deformable convolution, and a minimal bidirectional LSTM forward.

Feature maps are (channels, height, width) float64 arrays. Sampling uses
continuous coordinates with pixel centers at integers; reads outside
[0, W-1] x [0, H-1] contribute zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .geometry import RotatedBox, ScoredBox


@dataclass(frozen=True)
class FeatureMap:
    """Immutable-by-convention wrapper for a (C, H, W) float64 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeMismatchError(f"feature map must be 3-D (C,H,W), got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("feature map values must be finite")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_flat(cls, channels: int, height: int, width: int, values) -> "FeatureMap":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != channels * height * width:
            raise ShapeMismatchError(
                f"{arr.size} values cannot fill {channels}x{height}x{width}"
            )
        return cls(arr.reshape(channels, height, width))

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "FeatureMap":
        return cls(np.zeros((channels, height, width)))


@dataclass(frozen=True)
class CropSpec:
    """Region-crop output geometry; defaults suit one-line plate text."""

    out_h: int = 8
    out_w: int = 25
    sampling_ratio: int = 2

    def __post_init__(self):
        if self.out_h <= 0 or self.out_w <= 0 or self.sampling_ratio <= 0:
            raise ValueError("CropSpec fields must be positive")


@dataclass(frozen=True)
class RecognitionHeadConfig:
    """Recognition-branch layout defaults (counts fixed, rest tunable)."""

    num_residual_blocks: int = 4
    num_deformable_layers: int = 2
    crop: CropSpec = CropSpec()
    crop_score_thresh: float = 0.9


def training_crop_boxes(
    gts: list[RotatedBox],
    preds: list[ScoredBox],
    score_thresh: float = 0.9,
) -> list[RotatedBox]:
    """Regions to crop while training the recognizer.

    Ground-truth boxes are always cropped; predicted boxes join them only
    when their score is strictly above the threshold, so near-miss boxes
    that may cut characters off stay out.
    """
    selected = list(gts)
    selected.extend(sb.box for sb in preds if sb.score > score_thresh)
    return selected


def _bilinear_gather(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample all channels at fractional (x, y) points; zero outside. (C, N)."""
    _, h, w = data.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros((data.shape[0], xs.size))
    for dy_, dx_, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx_
        yi = y0 + dy_
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xi_c = np.clip(xi, 0, w - 1)
        yi_c = np.clip(yi, 0, h - 1)
        out += data[:, yi_c, xi_c] * (wgt * valid)
    return out


def bilinear_sample(fm: FeatureMap, x: float, y: float, channel: int) -> float:
    """Bilinear interpolation of one channel at (x, y), zero-padded."""
    if not 0 <= channel < fm.channels:
        raise ShapeMismatchError(f"channel {channel} out of range [0, {fm.channels})")
    val = _bilinear_gather(
        fm.data[channel : channel + 1], np.array([float(x)]), np.array([float(y)])
    )
    return float(val[0, 0])


def _subsample_fractions(out_len: int, ratio: int) -> np.ndarray:
    """Sample positions along one box axis, as fractions of the box side."""
    return (np.arange(out_len * ratio) + 0.5) / ratio / out_len


def rroi_align(fm: FeatureMap, box: RotatedBox, spec: CropSpec = CropSpec()) -> FeatureMap:
    """Crop a rotated box to (C, out_h, out_w) by averaged bilinear samples.

    Box-local x spans the width w across out_w columns and local y spans h
    across out_h rows; each output cell averages sampling_ratio^2 samples
    on a regular interior sub-grid of its footprint.
    """
    r = spec.sampling_ratio
    fx = _subsample_fractions(spec.out_w, r)
    fy = _subsample_fractions(spec.out_h, r)
    u = fx * box.w - box.w / 2.0
    v = fy * box.h - box.h / 2.0
    uu, vv = np.meshgrid(u, v)
    c, s = np.cos(box.theta), np.sin(box.theta)
    xs = box.cx + uu * c - vv * s
    ys = box.cy + uu * s + vv * c
    samples = _bilinear_gather(fm.data, xs.ravel(), ys.ravel())
    samples = samples.reshape(fm.channels, spec.out_h, r, spec.out_w, r)
    return FeatureMap(samples.mean(axis=(2, 4)))


def _require_axis_aligned(box: RotatedBox, op: str) -> None:
    if box.theta != 0.0:
        raise ValueError(f"{op} requires theta == 0, got {box.theta}")


def roi_align(fm: FeatureMap, box: RotatedBox, spec: CropSpec = CropSpec()) -> FeatureMap:
    """Axis-aligned crop: per-cell average of bilinear samples."""
    _require_axis_aligned(box, "roi_align")
    r = spec.sampling_ratio
    xs = box.cx - box.w / 2.0 + _subsample_fractions(spec.out_w, r) * box.w
    ys = box.cy - box.h / 2.0 + _subsample_fractions(spec.out_h, r) * box.h
    gx, gy = np.meshgrid(xs, ys)
    samples = _bilinear_gather(fm.data, gx.ravel(), gy.ravel())
    samples = samples.reshape(fm.channels, spec.out_h, r, spec.out_w, r)
    return FeatureMap(samples.mean(axis=(2, 4)))


def roi_pool(fm: FeatureMap, box: RotatedBox, spec: CropSpec = CropSpec()) -> FeatureMap:
    """Axis-aligned max pooling over quantized bins (no interpolation).

    The box is snapped to the pixel window it covers (pixel i spans
    [i-0.5, i+0.5]); bins partition that window and take per-bin maxima.
    Bins of a window clipped to nothing yield zero.
    """
    _require_axis_aligned(box, "roi_pool")
    col0 = int(np.floor(box.cx - box.w / 2.0 + 0.5))
    col1 = int(np.floor(box.cx + box.w / 2.0 + 0.5)) - 1
    row0 = int(np.floor(box.cy - box.h / 2.0 + 0.5))
    row1 = int(np.floor(box.cy + box.h / 2.0 + 0.5)) - 1
    col0, col1 = max(col0, 0), min(col1, fm.width - 1)
    row0, row1 = max(row0, 0), min(row1, fm.height - 1)
    out = np.zeros((fm.channels, spec.out_h, spec.out_w))
    if col1 < col0 or row1 < row0:
        return FeatureMap(out)
    nx = col1 - col0 + 1
    ny = row1 - row0 + 1

    def bin_edges(n: int, bins: int, j: int) -> tuple[int, int]:
        lo = (j * n) // bins
        hi = -((-(j + 1) * n) // bins)
        return lo, max(hi, lo + 1)

    for i in range(spec.out_h):
        ry0, ry1 = bin_edges(ny, spec.out_h, i)
        for j in range(spec.out_w):
            rx0, rx1 = bin_edges(nx, spec.out_w, j)
            patch = fm.data[:, row0 + ry0 : row0 + ry1, col0 + rx0 : col0 + rx1]
            out[:, i, j] = patch.max(axis=(1, 2))
    return FeatureMap(out)


def _conv_out_dims(h: int, w: int, k: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeMismatchError(
            f"kernel {k} with stride {stride}, padding {padding} exceeds input {h}x{w}"
        )
    return oh, ow


def _check_conv_args(
    fm: FeatureMap, weights: np.ndarray, bias: np.ndarray | None, stride: int, padding: int
) -> tuple[np.ndarray, np.ndarray, int]:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise ShapeMismatchError(f"weights must be (out_c, in_c, k, k), got {weights.shape}")
    if weights.shape[1] != fm.channels:
        raise ShapeMismatchError(
            f"weights expect {weights.shape[1]} input channels, map has {fm.channels}"
        )
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    if bias is None:
        bias = np.zeros(weights.shape[0])
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != (weights.shape[0],):
        raise ShapeMismatchError(f"bias must have shape ({weights.shape[0]},), got {bias.shape}")
    return weights, bias, weights.shape[2]


def conv2d_forward(
    fm: FeatureMap,
    weights: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    padding: int = 0,
) -> FeatureMap:
    """Cross-correlation with square kernel, zero padding."""
    weights, bias, k = _check_conv_args(fm, weights, bias, stride, padding)
    oh, ow = _conv_out_dims(fm.height, fm.width, k, stride, padding)
    padded = np.pad(fm.data, ((0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((weights.shape[0], oh, ow))
    for ki in range(k):
        for kj in range(k):
            view = padded[:, ki : ki + stride * (oh - 1) + 1 : stride,
                          kj : kj + stride * (ow - 1) + 1 : stride]
            out += np.einsum("oi,ihw->ohw", weights[:, :, ki, kj], view)
    out += bias[:, None, None]
    return FeatureMap(out)


def deformable_conv2d_forward(
    fm: FeatureMap,
    weights: np.ndarray,
    bias: np.ndarray | None,
    offsets: FeatureMap,
    stride: int = 1,
    padding: int = 0,
) -> FeatureMap:
    """Convolution whose taps sample at learned fractional displacements.

    offsets holds 2*k*k channels over the output grid: channel 2t is the
    vertical shift dy and 2t+1 the horizontal shift dx for tap t = ki*k+kj.
    Each tap reads the input bilinearly at (base position + shift).
    """
    weights, bias, k = _check_conv_args(fm, weights, bias, stride, padding)
    oh, ow = _conv_out_dims(fm.height, fm.width, k, stride, padding)
    if offsets.channels != 2 * k * k:
        raise ShapeMismatchError(
            f"offsets need {2 * k * k} channels for k={k}, got {offsets.channels}"
        )
    if (offsets.height, offsets.width) != (oh, ow):
        raise ShapeMismatchError(
            f"offsets spatial dims {offsets.height}x{offsets.width} != output {oh}x{ow}"
        )
    oys, oxs = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    out = np.zeros((weights.shape[0], oh * ow))
    for ki in range(k):
        for kj in range(k):
            t = ki * k + kj
            ys = oys * stride - padding + ki + offsets.data[2 * t]
            xs = oxs * stride - padding + kj + offsets.data[2 * t + 1]
            samples = _bilinear_gather(fm.data, xs.ravel(), ys.ravel())
            out += weights[:, :, ki, kj] @ samples
    out += bias[:, None]
    return FeatureMap(out.reshape(weights.shape[0], oh, ow))


@dataclass(frozen=True)
class LstmParams:
    """Single-direction LSTM weights; gate rows ordered (i, f, g, o)."""

    w_input: np.ndarray
    w_hidden: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w_in = np.asarray(self.w_input, dtype=np.float64)
        w_hid = np.asarray(self.w_hidden, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w_in.ndim != 2 or w_hid.ndim != 2 or b.ndim != 1:
            raise ShapeMismatchError("LSTM weights must be 2-D matrices and a 1-D bias")
        if w_in.shape[0] % 4 != 0:
            raise ShapeMismatchError(f"gate dim {w_in.shape[0]} not divisible by 4")
        hidden = w_in.shape[0] // 4
        if w_hid.shape != (4 * hidden, hidden) or b.shape != (4 * hidden,):
            raise ShapeMismatchError(
                f"inconsistent LSTM shapes: {w_in.shape}, {w_hid.shape}, {b.shape}"
            )
        object.__setattr__(self, "w_input", w_in)
        object.__setattr__(self, "w_hidden", w_hid)
        object.__setattr__(self, "bias", b)

    @property
    def hidden_size(self) -> int:
        return self.w_input.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.w_input.shape[1]


@dataclass(frozen=True)
class BiLstmParams:
    forward: LstmParams
    backward: LstmParams

    def __post_init__(self):
        if (
            self.forward.input_size != self.backward.input_size
            or self.forward.hidden_size != self.backward.hidden_size
        ):
            raise ShapeMismatchError("forward/backward LSTM dimensions differ")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _lstm_direction(seq: np.ndarray, p: LstmParams) -> np.ndarray:
    hidden = p.hidden_size
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    outs = np.zeros((seq.shape[0], hidden))
    for t in range(seq.shape[0]):
        gates = p.w_input @ seq[t] + p.w_hidden @ h + p.bias
        i = _sigmoid(gates[:hidden])
        f = _sigmoid(gates[hidden : 2 * hidden])
        g = np.tanh(gates[2 * hidden : 3 * hidden])
        o = _sigmoid(gates[3 * hidden :])
        c = f * c + i * g
        h = o * np.tanh(c)
        outs[t] = h
    return outs


def bilstm_forward(seq, params: BiLstmParams) -> np.ndarray:
    """Concatenate forward and (re-reversed) backward hidden states.

    seq is (T, D); the result is (T, 2 * hidden).
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ShapeMismatchError(f"sequence must be (T, D), got shape {seq.shape}")
    if seq.shape[1] != params.forward.input_size:
        raise ShapeMismatchError(
            f"sequence feature dim {seq.shape[1]} != LSTM input {params.forward.input_size}"
        )
    fwd = _lstm_direction(seq, params.forward)
    bwd = _lstm_direction(seq[::-1], params.backward)[::-1]
    return np.concatenate([fwd, bwd], axis=1)

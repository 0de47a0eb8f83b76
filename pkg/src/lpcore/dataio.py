"""File formats: annotations, prediction/ground-truth records, binary
tensor containers, and deterministic synthetic fixtures.

Annotation lines: ``x1,y1,x2,y2,x3,y3,x4,y4,content,type`` (UTF-8; the
content may hold any non-comma characters). Record lines:
``image_id,score,cx,cy,w,h,theta,transcript`` with an empty score field
for ground truths. Numeric fields are written with six decimals, so a
write/parse roundtrip is lossless to 1e-6.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ctc import DEFAULT_SYMBOLS, PROVINCES
from .errors import ParseError
from .geometry import Quad, RotatedBox
from .spotting import SpottingItem, SpottingRecord


class PlateType(Enum):
    BLUE = "blue"
    YELLOW_SINGLE = "yellow_single"
    YELLOW_DOUBLE = "yellow_double"
    WHITE = "white"


@dataclass(frozen=True)
class Annotation:
    """One annotated plate: vertex quad, content string, plate type."""

    quad: Quad
    content: str
    lp_type: PlateType

    def __post_init__(self):
        if not self.content:
            raise ValueError("annotation content must be nonempty")

    @property
    def unidentifiable(self) -> bool:
        return "*" in self.content


def parse_annotation_file(path) -> list[Annotation]:
    """Parse one plate per line; raises ParseError with the line number.

    Degenerate vertex sets propagate as DegenerateQuadError.
    """
    out: list[Annotation] = []
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 10:
                raise ParseError(
                    f"expected 10 comma-separated fields, got {len(fields)}",
                    path=str(path),
                    line=no,
                )
            try:
                coords = [float(v) for v in fields[:8]]
            except ValueError:
                raise ParseError("non-numeric vertex coordinate", path=str(path), line=no)
            content = fields[8]
            if not content:
                raise ParseError("empty content field", path=str(path), line=no)
            try:
                lp_type = PlateType(fields[9])
            except ValueError:
                raise ParseError(f"unknown plate type {fields[9]!r}", path=str(path), line=no)
            quad = Quad(
                ((coords[0], coords[1]), (coords[2], coords[3]),
                 (coords[4], coords[5]), (coords[6], coords[7]))
            )
            out.append(Annotation(quad, content, lp_type))
    return out


def _check_text_field(value: str, what: str) -> str:
    if "," in value or "\n" in value or "\r" in value:
        raise ValueError(f"{what} may not contain commas or newlines: {value!r}")
    return value


def write_predictions(path, records: list[SpottingRecord]) -> None:
    """Write spotting records, one plate per line; empty score for GTs."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            _check_text_field(rec.image_id, "image_id")
            for item in rec.items:
                _check_text_field(item.transcript, "transcript")
                score = "" if item.score is None else f"{item.score:.6f}"
                b = item.box
                f.write(
                    f"{rec.image_id},{score},{b.cx:.6f},{b.cy:.6f},"
                    f"{b.w:.6f},{b.h:.6f},{b.theta:.6f},{item.transcript}\n"
                )


def parse_predictions(path) -> list[SpottingRecord]:
    """Read spotting records grouped by image id (first-seen order)."""
    grouped: dict[str, list[SpottingItem]] = {}
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split(",")
            if len(fields) != 8:
                raise ParseError(
                    f"expected 8 comma-separated fields, got {len(fields)}",
                    path=str(path),
                    line=no,
                )
            image_id = fields[0]
            if not image_id:
                raise ParseError("empty image_id", path=str(path), line=no)
            try:
                score = None if fields[1] == "" else float(fields[1])
                nums = [float(v) for v in fields[2:7]]
            except ValueError:
                raise ParseError("non-numeric box field", path=str(path), line=no)
            try:
                box = RotatedBox(nums[0], nums[1], nums[2], nums[3], nums[4])
            except ValueError as exc:
                raise ParseError(f"invalid box: {exc}", path=str(path), line=no)
            grouped.setdefault(image_id, []).append(SpottingItem(box, fields[7], score))
    return [SpottingRecord(image_id, tuple(items)) for image_id, items in grouped.items()]


# Binary tensor container: named float64 arrays, little-endian, so test
# fixtures and exported weights are bit-exact across platforms.
TENSOR_MAGIC = b"LPTENSR1"


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(TENSOR_MAGIC)] != TENSOR_MAGIC:
        raise ParseError(f"bad magic; not a {TENSOR_MAGIC!r} container", path=str(path))
    pos = len(TENSOR_MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise ParseError("truncated tensor container", path=str(path))
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n_items = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(8 * n_items), dtype="<f8").reshape(shape)
        out[name] = arr.astype(np.float64)
    if pos != len(blob):
        raise ParseError("trailing bytes after last tensor", path=str(path))
    return out


_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
_TAIL_CHARS = _LETTERS + "0123456789"


def _signed_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    mag = rng.uniform(lo, hi)
    return mag if rng.random() < 0.5 else -mag


def synth_fixture(
    seed: int, n_plates: int, noise: float
) -> tuple[SpottingRecord, SpottingRecord]:
    """Deterministic one-image fixture: ground truth plus perturbed copy.

    noise scales a geometric perturbation of every predicted box; zero
    noise reproduces the ground truth exactly, and a noise of ~2 or more
    displaces each prediction by at least its own size (IoU reaches 0).
    Transcripts are never corrupted.
    """
    rng = np.random.default_rng(seed)
    image_id = f"synth_{seed & (2**64 - 1):016x}"
    gt_items = []
    pred_items = []
    for _ in range(n_plates):
        w = rng.uniform(80.0, 160.0)
        h = w / rng.uniform(2.5, 3.5)
        theta = rng.uniform(-0.3, 0.3)
        cx = rng.uniform(120.0, 520.0)
        cy = rng.uniform(120.0, 520.0)
        text = (
            PROVINCES[rng.integers(len(PROVINCES))]
            + _LETTERS[rng.integers(len(_LETTERS))]
            + "".join(_TAIL_CHARS[rng.integers(len(_TAIL_CHARS))] for _ in range(5))
        )
        assert all(ch in DEFAULT_SYMBOLS for ch in text)
        gt_items.append(SpottingItem(RotatedBox(cx, cy, w, h, theta), text))

        dx = noise * w * _signed_uniform(rng, 0.5, 1.0)
        dy = noise * h * _signed_uniform(rng, 0.5, 1.0)
        scale_w = float(np.exp(noise * _signed_uniform(rng, 0.05, 0.2)))
        scale_h = float(np.exp(noise * _signed_uniform(rng, 0.05, 0.2)))
        dtheta = noise * _signed_uniform(rng, 0.02, 0.1)
        score = float(rng.uniform(0.6, 1.0))
        pred_box = RotatedBox(cx + dx, cy + dy, w * scale_w, h * scale_h, theta + dtheta)
        pred_items.append(SpottingItem(pred_box, text, score))
    return (
        SpottingRecord(image_id, tuple(gt_items)),
        SpottingRecord(image_id, tuple(pred_items)),
    )

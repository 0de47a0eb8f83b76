"""CTC transcription: alphabet handling, loss with gradient, greedy decoding.

Class 0 is always the blank. The loss runs entirely in log space so long
frames cannot underflow; targets that cannot fit in the frame raise
InfeasibleTargetError instead of returning infinity.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleTargetError, ParseError, ShapeMismatchError

BLANK_INDEX = 0
BLANK_MARKER = "<b>"

# 31 province abbreviations, A-Z, 0-9, and the unidentifiable placeholder.
PROVINCES = "京津冀晋蒙辽吉黑沪苏浙皖闽赣鲁豫鄂湘粤桂琼渝川贵云藏陕甘青宁新"
DEFAULT_SYMBOLS = PROVINCES + string.ascii_uppercase + string.digits + "*"

ROW_NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class Alphabet:
    """Ordered non-blank symbols; class index k maps to symbols[k - 1]."""

    symbols: tuple[str, ...] = tuple(DEFAULT_SYMBOLS)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if not symbols:
            raise ValueError("alphabet needs at least one symbol")
        if len(set(symbols)) != len(symbols):
            raise ValueError("alphabet symbols must be distinct")
        for ch in symbols:
            if len(ch) != 1:
                raise ValueError(f"symbols must be single characters, got {ch!r}")
            if ch in ("\n", "\r"):
                raise ValueError("newline cannot be an alphabet symbol")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {ch: i + 1 for i, ch in enumerate(symbols)})

    @property
    def num_classes(self) -> int:
        """Class count including the blank."""
        return len(self.symbols) + 1

    def char_to_index(self, ch: str) -> int:
        try:
            return self._index[ch]
        except KeyError:
            raise ValueError(f"character {ch!r} not in alphabet") from None

    def index_to_char(self, index: int) -> str:
        if not 1 <= index < self.num_classes:
            raise ValueError(f"class index {index} out of range [1, {self.num_classes})")
        return self.symbols[index - 1]

    def encode(self, text: str) -> list[int]:
        return [self.char_to_index(ch) for ch in text]

    def decode(self, indices: Sequence[int]) -> str:
        return "".join(self.index_to_char(i) for i in indices)


def default_alphabet() -> Alphabet:
    return Alphabet()


def save_alphabet(path, alphabet: Alphabet) -> None:
    """One symbol per line; the first line is the blank marker."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(BLANK_MARKER + "\n")
        for ch in alphabet.symbols:
            f.write(ch + "\n")


def load_alphabet(path) -> Alphabet:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != BLANK_MARKER:
        raise ParseError(f"first line must be {BLANK_MARKER!r}", path=str(path), line=1)
    symbols = []
    for no, line in enumerate(lines[1:], start=2):
        if len(line) != 1:
            raise ParseError(f"expected a single character, got {line!r}", path=str(path), line=no)
        symbols.append(line)
    try:
        return Alphabet(tuple(symbols))
    except ValueError as exc:
        raise ParseError(str(exc), path=str(path)) from exc


def _check_log_probs(logp: np.ndarray, validate: bool) -> np.ndarray:
    logp = np.asarray(logp, dtype=np.float64)
    if logp.ndim != 2 or logp.shape[0] < 1 or logp.shape[1] < 2:
        raise ShapeMismatchError(f"log-probs must be (T, K) with K >= 2, got {logp.shape}")
    if validate:
        row = _logsumexp_rows(logp)
        if np.any(np.abs(row) > ROW_NORMALIZATION_TOL):
            worst = float(np.abs(row).max())
            raise ValueError(f"log-prob rows must normalize to 1 (max |logsumexp| {worst:g})")
    return logp


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True))).squeeze(-1)


def _extended_target(target: Sequence[int], num_classes: int) -> np.ndarray:
    lab = np.asarray(list(target), dtype=np.int64)
    if lab.size and (lab.min() < 1 or lab.max() >= num_classes):
        raise ValueError(f"target classes must be in [1, {num_classes}), got {list(target)}")
    ext = np.full(2 * lab.size + 1, BLANK_INDEX, dtype=np.int64)
    ext[1::2] = lab
    return ext


def min_frames_for(target: Sequence[int]) -> int:
    """Shortest frame able to emit the target (repeats need a blank)."""
    lab = list(target)
    repeats = sum(1 for a, b in zip(lab, lab[1:]) if a == b)
    return len(lab) + repeats


def ctc_loss(
    logp: np.ndarray, target: Sequence[int], validate: bool = True
) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of the target plus gradient w.r.t. log-probs.

    The forward recursion runs over the blank-interleaved target; the
    gradient treats each log-probability entry as a free variable.
    """
    logp = _check_log_probs(logp, validate)
    t_len, num_classes = logp.shape
    need = min_frames_for(target)
    if t_len < need:
        raise InfeasibleTargetError(
            f"target of {len(list(target))} labels needs at least {need} frames, got {t_len}"
        )
    ext = _extended_target(target, num_classes)
    s_len = ext.size
    emit = logp[:, ext]  # (T, S)

    # skip[s]: the s-2 -> s transition is allowed (jumping the blank).
    skip = np.zeros(s_len, dtype=bool)
    if s_len > 2:
        skip[2:] = (ext[2:] != BLANK_INDEX) & (ext[2:] != ext[:-2])

    neg_inf = -np.inf
    alpha = np.full((t_len, s_len), neg_inf)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([neg_inf], prev))[:s_len]
        jump = np.concatenate(([neg_inf, neg_inf], prev))[:s_len]
        jump = np.where(skip, jump, neg_inf)
        alpha[t] = emit[t] + np.logaddexp(np.logaddexp(stay, step), jump)

    if s_len > 1:
        log_p = float(np.logaddexp(alpha[-1, -1], alpha[-1, -2]))
    else:
        log_p = float(alpha[-1, -1])

    # Suffix scores, exclusive of time t's own emission.
    beta = np.full((t_len, s_len), neg_inf)
    beta[-1, -1] = 0.0
    if s_len > 1:
        beta[-1, -2] = 0.0
    for t in range(t_len - 2, -1, -1):
        nxt = emit[t + 1] + beta[t + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [neg_inf]))[:s_len]
        jump = np.concatenate((nxt[2:], [neg_inf, neg_inf]))[:s_len]
        allow_jump = np.concatenate((skip[2:], [False, False]))[:s_len]
        jump = np.where(allow_jump, jump, neg_inf)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), jump)

    occupancy = alpha + beta  # (T, S), log posterior mass per lattice state
    grad = np.zeros((t_len, num_classes))
    for cls in np.unique(ext):
        cols = occupancy[:, ext == cls]
        m = cols.max(axis=1)
        safe = m > neg_inf
        acc = np.full(t_len, neg_inf)
        acc[safe] = m[safe] + np.log(np.exp(cols[safe] - m[safe, None]).sum(axis=1))
        grad[:, cls] = -np.exp(acc - log_p)
    return -log_p, grad


def greedy_decode(logp: np.ndarray, alphabet: Alphabet, validate: bool = True) -> str:
    """Best path: per-frame argmax, collapse repeats, drop blanks."""
    logp = _check_log_probs(logp, validate)
    if logp.shape[1] != alphabet.num_classes:
        raise ShapeMismatchError(
            f"frame has {logp.shape[1]} classes, alphabet expects {alphabet.num_classes}"
        )
    best = logp.argmax(axis=1)
    chars = []
    prev = -1
    for idx in best:
        if idx != prev and idx != BLANK_INDEX:
            chars.append(alphabet.index_to_char(int(idx)))
        prev = idx
    return "".join(chars)


def exact_match(pred: str, gt: str) -> bool:
    """Codepoint-exact transcript equality; no normalization of any kind."""
    return pred == gt

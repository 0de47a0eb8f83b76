import math

import numpy as np
import pytest

from lpcore.ctc import (
    Alphabet,
    BLANK_INDEX,
    ctc_loss,
    default_alphabet,
    exact_match,
    greedy_decode,
    load_alphabet,
    min_frames_for,
    save_alphabet,
)
from lpcore.errors import InfeasibleTargetError, ParseError, ShapeMismatchError
from lpcore.oracles import central_difference, ctc_loss_brute_force, relative_error


def normalized_logits(rng, t_len, k):
    raw = rng.normal(size=(t_len, k))
    return raw - np.logaddexp.reduce(raw, axis=1)[:, None]


def rows(*probs):
    arr = np.array(probs, dtype=float)
    return np.log(arr / arr.sum(axis=1, keepdims=True))


class TestCtcLoss:
    def test_single_frame_single_path(self):
        logp = np.log(np.full((1, 2), 0.5))
        loss, grad = ctc_loss(logp, [1])
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)
        assert grad.shape == (1, 2)

    def test_two_frames_three_paths(self):
        # paths aa, a-, -a out of 4 -> P = 0.75
        logp = np.log(np.full((2, 2), 0.5))
        loss, _ = ctc_loss(logp, [1])
        assert loss == pytest.approx(-math.log(0.75), abs=1e-12)
        assert loss == pytest.approx(0.28768, abs=1e-5)

    def test_repeat_needs_blank(self):
        logp = np.log(np.full((2, 2), 0.5))
        with pytest.raises(InfeasibleTargetError):
            ctc_loss(logp, [1, 1])
        # brute force agrees there is no valid path
        assert ctc_loss_brute_force(logp, [1, 1]) == math.inf
        loss3, _ = ctc_loss(np.log(np.full((3, 2), 0.5)), [1, 1])
        assert loss3 == pytest.approx(ctc_loss_brute_force(np.log(np.full((3, 2), 0.5)), [1, 1]))

    def test_min_frames_rule(self):
        assert min_frames_for([]) == 0
        assert min_frames_for([1, 2, 3]) == 3
        assert min_frames_for([1, 1]) == 3
        assert min_frames_for([2, 2, 2]) == 5

    def test_empty_target_all_blanks(self):
        rng = np.random.default_rng(0)
        logp = normalized_logits(rng, 4, 3)
        loss, grad = ctc_loss(logp, [])
        assert loss == pytest.approx(-logp[:, BLANK_INDEX].sum(), abs=1e-12)
        assert np.allclose(grad[:, BLANK_INDEX], -1.0)
        assert np.allclose(grad[:, 1:], 0.0)

    def test_matches_brute_force_sweep(self):
        rng = np.random.default_rng(1)
        checked = 0
        for t_len in range(1, 5):
            for k in (2, 3, 4):
                for l_len in range(0, 3):
                    for _ in range(2):
                        target = list(rng.integers(1, k, size=l_len))
                        logp = normalized_logits(rng, t_len, k)
                        want = ctc_loss_brute_force(logp, target)
                        if min_frames_for(target) > t_len:
                            assert want == math.inf
                            with pytest.raises(InfeasibleTargetError):
                                ctc_loss(logp, target)
                            continue
                        got, _ = ctc_loss(logp, target)
                        assert abs(got - want) < 1e-9
                        checked += 1
        assert checked > 40

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            logp = normalized_logits(rng, 5, 3)
            target = list(rng.integers(1, 3, size=2))
            if min_frames_for(target) > 5:
                continue
            loss, _ = ctc_loss(logp, target)
            assert loss >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            logp = normalized_logits(rng, 4, 3)
            target = [1, 2]
            _, grad = ctc_loss(logp, target)
            for t in range(4):
                for cls in range(3):
                    def shift(eps, t=t, cls=cls):
                        moved = logp.copy()
                        moved[t, cls] += eps
                        return ctc_loss(moved, target, validate=False)[0]

                    fd = central_difference(shift, 0.0)
                    assert relative_error(float(grad[t, cls]), fd, floor=1e-3) < 1e-4

    def test_gradient_rows_sum_to_minus_one(self):
        # scaling a frame's probabilities scales P linearly
        rng = np.random.default_rng(4)
        logp = normalized_logits(rng, 6, 4)
        _, grad = ctc_loss(logp, [1, 3, 2])
        assert np.allclose(grad.sum(axis=1), -1.0, atol=1e-12)

    def test_leak_mass_permutation_invariance(self):
        frame_a = rows([0.4, 0.3, 0.2, 0.1], [0.25, 0.5, 0.2, 0.05])
        frame_b = rows([0.4, 0.3, 0.05, 0.25], [0.25, 0.5, 0.125, 0.125])
        loss_a, _ = ctc_loss(frame_a, [1])
        loss_b, _ = ctc_loss(frame_b, [1])
        assert abs(loss_a - loss_b) < 1e-12

    def test_longer_frames_are_feasible(self):
        rng = np.random.default_rng(5)
        logp = normalized_logits(rng, 40, 10)
        loss, grad = ctc_loss(logp, [3, 3, 7, 1])
        assert math.isfinite(loss) and loss > 0
        assert grad.shape == (40, 10)

    def test_input_validation(self):
        with pytest.raises(ShapeMismatchError):
            ctc_loss(np.zeros((3,)), [1])
        with pytest.raises(ValueError):
            ctc_loss(np.zeros((2, 3)), [1])  # rows don't normalize
        logp = np.log(np.full((2, 2), 0.5))
        with pytest.raises(ValueError):
            ctc_loss(logp, [0])  # blank not allowed in targets
        with pytest.raises(ValueError):
            ctc_loss(logp, [5])


class TestGreedyDecode:
    def test_collapse_and_blank_removal(self):
        ab = Alphabet(("a", "b"))
        # frames argmax to: -, -, a, a, -, b
        logp = rows(
            [0.8, 0.1, 0.1],
            [0.8, 0.1, 0.1],
            [0.1, 0.8, 0.1],
            [0.1, 0.8, 0.1],
            [0.8, 0.1, 0.1],
            [0.1, 0.1, 0.8],
        )
        assert greedy_decode(logp, ab) == "ab"

    def test_all_blanks(self):
        ab = Alphabet(("a", "b"))
        logp = rows([0.9, 0.05, 0.05], [0.9, 0.05, 0.05])
        assert greedy_decode(logp, ab) == ""

    def test_blank_separates_repeats(self):
        ab = Alphabet(("a",))
        logp = rows([0.1, 0.9], [0.9, 0.1], [0.1, 0.9])
        assert greedy_decode(logp, ab) == "aa"

    def test_never_emits_blank_marker(self):
        rng = np.random.default_rng(6)
        ab = default_alphabet()
        for _ in range(20):
            logp = normalized_logits(rng, 12, ab.num_classes)
            decoded = greedy_decode(logp, ab)
            assert "<b>" not in decoded
            assert all(ch in ab.symbols for ch in decoded)

    def test_class_count_must_match(self):
        ab = Alphabet(("a", "b"))
        with pytest.raises(ShapeMismatchError):
            greedy_decode(rows([0.5, 0.5]), ab)


class TestExactMatch:
    def test_equal(self):
        assert exact_match("京A12345", "京A12345")
        assert exact_match("", "")

    def test_differs(self):
        assert not exact_match("京A12345", "京A1234S")
        assert not exact_match("a", "A")


class TestAlphabet:
    def test_default_layout(self):
        ab = default_alphabet()
        assert ab.num_classes == 69  # blank + 31 + 26 + 10 + '*'
        assert ab.char_to_index("京") == 1
        assert ab.index_to_char(1) == "京"
        assert ab.char_to_index("*") == 68

    def test_encode_decode_roundtrip(self):
        ab = default_alphabet()
        text = "沪B7A291"
        assert ab.decode(ab.encode(text)) == text

    def test_unknown_character(self):
        ab = Alphabet(("a", "b"))
        with pytest.raises(ValueError):
            ab.encode("c")

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Alphabet(("a", "a"))
        with pytest.raises(ValueError):
            Alphabet(("ab",))

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "alphabet.txt"
        ab = default_alphabet()
        save_alphabet(path, ab)
        assert load_alphabet(path) == ab
        assert path.read_text(encoding="utf-8").splitlines()[0] == "<b>"

    def test_load_rejects_bad_header(self, tmp_path):
        path = tmp_path / "alphabet.txt"
        path.write_text("a\nb\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_alphabet(path)

    def test_load_rejects_multichar_line(self, tmp_path):
        path = tmp_path / "alphabet.txt"
        path.write_text("<b>\nab\n", encoding="utf-8")
        with pytest.raises(ParseError) as err:
            load_alphabet(path)
        assert err.value.line == 2

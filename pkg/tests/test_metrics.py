import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from duplex_forge.evaluation import (
    Segment,
    SyntheticSpeakerEncoder,
    Timeline,
    correct_start,
    correct_start_rate,
    first_speaker,
    merge_words,
    pearson_exact,
    speaker_similarity,
    speaking_time_diff,
    wer,
)
from duplex_forge.evaluation.metrics import null_tail, pearson_p_n3


def words(*spans):
    return [Segment(s, e) for s, e in spans]


def test_merge_words_examples():
    w = words((0, 1), (1.3, 2), (2.7, 3))
    assert merge_words(w, 0.565) == [Segment(0, 2), Segment(2.7, 3)]
    assert merge_words(w, 0.0) == w
    assert merge_words(words((1, 2)), 0.565) == words((1, 2))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 20), st.integers(1, 20)), max_size=12), st.integers(0, 20))
def test_merge_words_idempotent(gd, thr):
    t, spans = 0, []
    for g, d in gd:
        spans.append((t + g / 10, t + (g + d) / 10))
        t += (g + d) / 10
    once = merge_words(words(*spans), thr / 20)
    assert merge_words(once, thr / 20) == once


def tl(spk, *spans):
    return Timeline(spk, tuple(Segment(s, e) for s, e in spans))


def test_first_speaker_cases():
    assert first_speaker(tl("A", (0.08, 1)), tl("B", (0.4, 1))) == "A"
    assert first_speaker(tl("A", (0.5, 1)), tl("B", (0.4, 1))) == "B"
    assert first_speaker(tl("A", (0.4, 1)), tl("B", (0.4, 2))) == "tie"
    assert first_speaker(tl("A"), tl("B")) == "none"
    assert first_speaker(tl("A"), tl("B", (3, 4))) == "B"


def test_correct_start_rule():
    assert correct_start("A", True, False) and not correct_start("B", True, False)
    assert not correct_start("tie", True, False)
    assert correct_start("tie", True, True) and not correct_start("A", True, True)
    assert correct_start_rate([("A", True, False), ("A", False, True)]) == 50.0
    assert correct_start_rate([("A", True, False), ("B", False, True)]) == 100.0
    with pytest.raises(ValueError):
        correct_start_rate([])


def test_speaking_time_diff():
    assert speaking_time_diff(tl("A", (0, 30)), tl("B", (30, 50))) == 10.0
    assert speaking_time_diff(tl("A", (0, 5)), tl("B", (5, 10))) == 0


def test_wer_examples():
    assert wer("a b c", "a x c") == pytest.approx(100 / 3)
    assert round(wer("a b c", "a x c"), 2) == 33.33
    assert wer("a b", "a b") == 0.0
    assert wer("a b", "a b c") == 50.0
    assert wer(["a"], []) == 100.0
    with pytest.raises(ValueError):
        wer([], ["a"])


def test_similarity_and_drift():
    v = np.array([1.0, 2.0, 3.0])
    assert speaker_similarity(v, [v, v]) == pytest.approx((1.0, 0.0))
    sim, drift = speaker_similarity(np.array([1.0, 0]), [np.array([0, 1.0]), np.array([0, 2.0])])
    assert sim == 0.0 and drift == pytest.approx(0.0)
    with pytest.raises(ValueError):
        speaker_similarity(v, [np.zeros(3)])


def test_synthetic_encoder_is_deterministic_and_speaker_specific():
    enc = SyntheticSpeakerEncoder(seed=1)
    assert np.array_equal(enc("spk-a", "k"), SyntheticSpeakerEncoder(seed=1)("spk-a", "k"))
    same = speaker_similarity(enc.reference("spk-a"), [enc("spk-a", str(i)) for i in range(20)])[0]
    cross = speaker_similarity(enc.reference("spk-b"), [enc("spk-a", str(i)) for i in range(20)])[0]
    assert same > 0.8 and cross < same - 0.3


def test_pearson_examples():
    assert pearson_exact([1, 2, 3], [2, 4, 6]).r == 1.0
    res = pearson_exact([1, 2, 3], [1, 3, 2])
    assert res.r == pytest.approx(0.5, abs=1e-15)
    assert abs(res.p - 2 / 3) < 1e-9
    assert abs(pearson_p_n3(0.5) - 2 / 3) < 1e-15


def test_pearson_r_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        n = int(rng.integers(3, 30))
        x, y = rng.integers(0, 12, n), rng.integers(0, 12, n)
        if x.std() == 0 or y.std() == 0:
            continue
        mx, my = sum(x) / n, sum(y) / n
        num = sum((a - mx) * (b - my) for a, b in zip(x, y))
        den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
        assert abs(pearson_exact(x, y).r - num / den) < 1e-12


def test_p_against_scipy_and_closed_form():
    rng = np.random.default_rng(4)
    for n in (3, 4, 5, 7, 12, 40):
        for _ in range(5):
            x, y = rng.normal(size=n), rng.normal(size=n)
            res = pearson_exact(x, y)
            assert abs(res.p - stats.pearsonr(x, y).pvalue) < 1e-8
            if n == 3:
                assert abs(res.p - pearson_p_n3(res.r)) < 1e-9


@pytest.mark.parametrize("n", [3, 4, 5, 10, 100])
def test_p_is_one_at_zero(n):
    assert abs(2 * null_tail(0.0, n) - 1.0) < 1e-9


def test_pearson_degenerate_inputs():
    with pytest.raises(ValueError):
        pearson_exact([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson_exact([1, 2], [1, 2])

import numpy as np
import pytest

from duplex_forge.evaluation import Segment, Timeline, turn_taking
from duplex_forge.evaluation.turntaking import ipus


def tl(spk, *spans):
    return Timeline(spk, tuple(Segment(s, e) for s, e in spans))


def test_clean_handover():
    st = turn_taking(tl("A", (0, 10)), tl("B", (10.5, 20)), 0.2)
    assert (st.gap_s, st.pause_s, st.overlap_s, st.ipu_s) == (0.5, 0.0, 0.0, 19.5)
    assert st.duration_s == 20
    assert st.per_minute("gap_s") == 1.5 and st.per_minute("ipu_s") == 58.5


def test_short_silence_absorbed_into_ipu():
    st = turn_taking(tl("A", (0, 5), (5.1, 10)), tl("B"), 0.2)
    assert st.n_ipus == (1, 0) and st.ipu_s == 10
    assert st.pause_s == 0


def test_long_silence_is_pause():
    st = turn_taking(tl("A", (0, 5), (6.0, 10)), tl("B"), 0.2)
    assert st.n_ipus == (2, 0) and st.pause_s == 1.0 and st.gap_s == 0


def test_overlap_intersection():
    st = turn_taking(tl("A", (0, 6)), tl("B", (4, 8)))
    assert st.overlap_s == 2 and st.gap_s == 0 and st.pause_s == 0


def test_silence_after_overlap_resolution():
    # A and B overlap, B stops last, then A resumes: not a pause for A
    st = turn_taking(tl("A", (0, 4), (6, 8)), tl("B", (3, 5)))
    assert st.gap_s == 1.0 and st.pause_s == 0


def test_duration_override_and_check():
    st = turn_taking(tl("A", (0, 10)), tl("B", (10.5, 20)), duration_s=60)
    assert st.per_minute("gap_s") == 0.5
    assert st.unvoiced_s == (50, 50.5)
    with pytest.raises(ValueError):
        turn_taking(tl("A", (0, 10)), tl("B"), duration_s=5)


def random_timeline(rng, spk):
    t, spans = rng.uniform(0, 2), []
    for _ in range(rng.integers(0, 12)):
        d = rng.uniform(0.05, 4)
        spans.append((t, t + d))
        t += d + rng.uniform(0.01, 2)
    return tl(spk, *spans)


def test_accounting_identities_random():
    rng = np.random.default_rng(8)
    for _ in range(100):
        a, b = random_timeline(rng, "A"), random_timeline(rng, "B")
        dur = max(a.end_s, b.end_s) + rng.uniform(0, 3) + 0.1
        st = turn_taking(a, b, 0.2, duration_s=dur)
        for k in range(2):
            assert abs(st.voiced_s[k] + st.unvoiced_s[k] - dur) < 1e-9
        assert st.overlap_s <= min(st.voiced_s) + 1e-9
        for name in ("ipu_s", "pause_s", "gap_s", "overlap_s"):
            assert abs(st.per_minute(name) - getattr(st, name) * 60 / dur) < 1e-9
        # ipus cover all speech; silences between blocks are pause or gap
        assert st.ipu_s >= sum(st.voiced_s) - 1e-9
        assert st.pause_s + st.gap_s <= dur


def test_ipus_threshold_zero_keeps_every_segment():
    t = tl("A", (0, 1), (1.05, 2), (3, 4))
    assert ipus(t, 0.0) == [(0, 1), (1.05, 2), (3, 4)]
    assert ipus(t, 0.2) == [(0, 2), (3, 4)]

import numpy as np
import pytest

from duplex_forge.dialogue import BehaviorSpec, Dialogue, Utterance, WordSpan


def utt(speaker, *words, bc=False, inter=False):
    """words given as (text, start, end) triples"""
    return Utterance(speaker, tuple(WordSpan(t, s, e) for t, s, e in words), bc, inter)


def dialogue(utterances, speakers=("A", "B"), did="d-0", narrative="They chat.", behavior=None, ref=None):
    if behavior is None:
        behavior = {s: BehaviorSpec(
            sum(u.is_backchannel for u in utterances if u.speaker == s),
            sum(u.is_interruption for u in utterances if u.speaker == s),
            bool(utterances) and utterances[0].speaker == s) for s in speakers}
    return Dialogue(did, narrative, tuple(speakers), behavior, tuple(utterances), ref)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

"""Random corpora for tests, demos and detector calibration."""

from __future__ import annotations

import numpy as np

from .codec import DEFAULT_ALPHABET, word_symbol
from .dialogue import BehaviorSpec, Dialogue, Utterance, WordSpan

_CANDIDATES = """
yes no okay right well so but and the a you I it that this what how why when where
really sure maybe just think know mean like want need feel going gonna music loud
bass turn down please sorry thanks great good bad fine nice cool wow oh hmm yeah
uh huh wait listen look come here there now then later today tomorrow tonight
party dinner movie game book song friend family work school home car city park
coffee tea water pizza dog cat rain sun weekend morning night money time help
""".split()

NAMES = ("Karina", "Yoseph", "Amara", "Bruno", "Chen", "Dalia", "Emil", "Farah")


def collision_free_lexicon(alphabet: int = DEFAULT_ALPHABET) -> dict[int, str]:
    """symbol -> word over candidate words whose voiced symbols are distinct."""
    lex: dict[int, str] = {}
    for w in _CANDIDATES:
        lex.setdefault(word_symbol(w, alphabet), w)
    return lex


def _pick_speakers(rng):
    i, j = rng.choice(len(NAMES), size=2, replace=False)
    return NAMES[i], NAMES[j]


def random_dialogue(rng: np.random.Generator, idx: int = 0, *, n_turns: tuple[int, int] = (2, 6),
                    frame_rate_hz: float = 12.5, flag_prob: float = 0.25,
                    alphabet: int = DEFAULT_ALPHABET) -> Dialogue:
    """Frame-quantised dialogue whose words are separated by at least one silent frame.

    Every word is a single lexicon token, so text and synthetic audio stay
    consistent by construction. Flags are random (not detector-consistent).
    """
    words_pool = sorted(collision_free_lexicon(alphabet).values())
    a, b = _pick_speakers(rng)
    speakers = (a, b)
    cursor = {a: int(rng.integers(0, 4)), b: int(rng.integers(0, 4))}
    turn = int(rng.integers(2))
    raw = []
    for _ in range(int(rng.integers(n_turns[0], n_turns[1] + 1))):
        spk = speakers[turn]
        f = cursor[spk]
        words = []
        for _ in range(int(rng.integers(1, 5))):
            k = int(rng.integers(1, 5))
            start = (f + rng.uniform(0.0, 0.45)) / frame_rate_hz
            end = (f + k - rng.uniform(0.05, 0.45)) / frame_rate_hz
            words.append(WordSpan(str(rng.choice(words_pool)), round(start, 6), round(end, 6)))
            f += k + int(rng.integers(1, 4))
        flag = rng.random()
        is_bc = flag < flag_prob / 2
        is_int = (not is_bc) and flag < flag_prob
        raw.append(Utterance(spk, tuple(words), bool(is_bc), bool(is_int)))
        cursor[spk] = f + int(rng.integers(1, 6))
        other = speakers[1 - turn]
        # the other speaker may start before this utterance ends (overlap)
        cursor[other] = max(cursor[other], f - int(rng.integers(0, 6)))
        turn = 1 - turn
    utts = tuple(sorted(raw, key=lambda u: u.start_s))
    behavior = {
        s: BehaviorSpec(
            backchannels=sum(u.is_backchannel for u in utts if u.speaker == s),
            interruptions=sum(u.is_interruption for u in utts if u.speaker == s),
            starts=(utts[0].speaker == s),
        )
        for s in speakers
    }
    return Dialogue(
        id=f"rand-{idx:05d}",
        narrative=f"{a} and {b} talk about their plans.",
        speakers=speakers,
        behavior=behavior,
        utterances=utts,
        speaker_ref={a: f"spk-{a.lower()}", b: f"spk-{b.lower()}"},
    )


def random_corpus(n: int, seed: int = 0, **kw) -> list[Dialogue]:
    rng = np.random.default_rng(seed)
    return [random_dialogue(rng, i, **kw) for i in range(n)]


# ------------------------------------------------------------ labelled events


def _utterance(rng, spk, start, n_words, words_pool, gap=(0.08, 0.35), dur=(0.25, 0.6)):
    words = []
    t = start
    for k in range(n_words):
        d = rng.uniform(*dur)
        words.append(WordSpan(str(rng.choice(words_pool)), round(t, 4), round(t + d, 4)))
        t += d + rng.uniform(*gap)
    return words


def event_dialogue(rng: np.random.Generator, idx: int = 0, *, n_turns: tuple[int, int] = (4, 9),
                   bc_prob: float = 0.5, int_prob: float = 0.35) -> Dialogue:
    """Dialogue whose flags agree with the event detector at the reference params.

    Margins: intra-utterance word gaps <= 0.35 s, separate same-speaker
    segments >= 0.8 s apart, backchannels <= 0.7 s and fully inside the
    other speaker's utterance, interruptions start >= 0.6 s before the
    interrupted utterance ends and run >= 1.5 s.
    """
    pool = sorted(collision_free_lexicon().values())
    a, b = _pick_speakers(rng)
    speakers = (a, b)
    utts: list[Utterance] = []
    last_end = {a: -10.0, b: -10.0}
    cur = int(rng.integers(2))
    t = round(rng.uniform(0.0, 0.5), 4)
    interrupting = False
    for turn in range(int(rng.integers(n_turns[0], n_turns[1] + 1))):
        spk, other = speakers[cur], speakers[1 - cur]
        words = _utterance(rng, spk, t, int(rng.integers(4, 9)), pool)
        main = Utterance(spk, tuple(words), False, interrupting)
        start, end = main.start_s, main.end_s
        nxt_interrupt = rng.random() < int_prob
        delta = rng.uniform(0.6, 1.2) if nxt_interrupt else 0.0
        # next speaker's onset
        nxt = end - delta if nxt_interrupt else end + rng.uniform(0.2, 0.8)
        extras = []
        if rng.random() < bc_prob:
            lo = max(start + 0.2, last_end[other] + 0.8)
            hi = min(end - 0.6, nxt - 0.8) - 0.7
            if hi > lo:
                s0 = rng.uniform(lo, hi)
                d = rng.uniform(0.3, 0.7)
                extras.append(Utterance(other, (WordSpan(str(rng.choice(pool)), round(s0, 4), round(s0 + d, 4)),),
                                        True, False))
                last_end[other] = round(s0 + d, 4)
        utts.append(main)
        utts.extend(extras)
        last_end[spk] = end
        # an interrupter must outlast the current utterance and stay off bc length
        t = round(max(nxt, last_end[other] + 0.8), 4)
        if nxt_interrupt and t >= end - 0.6:
            t = round(nxt, 4)
            if t <= last_end[other] + 0.8:
                nxt_interrupt = False
                t = round(max(end + 0.3, last_end[other] + 0.8), 4)
        interrupting = nxt_interrupt
        cur = 1 - cur
    utts.sort(key=lambda u: u.start_s)
    behavior = {
        s: BehaviorSpec(sum(u.is_backchannel for u in utts if u.speaker == s),
                        sum(u.is_interruption for u in utts if u.speaker == s),
                        utts[0].speaker == s)
        for s in speakers
    }
    return Dialogue(f"ev-{idx:05d}", f"{a} and {b} argue about the weekend.", speakers, behavior,
                    tuple(utts), {a: f"spk-{a.lower()}", b: f"spk-{b.lower()}"})


def event_corpus(n: int, seed: int = 0, **kw) -> list[Dialogue]:
    rng = np.random.default_rng(seed)
    return [event_dialogue(rng, i, **kw) for i in range(n)]

import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duplex_forge.codec import default_layout, encode_symbol, word_symbol
from duplex_forge.streams import (
    BC_TOK,
    EOS,
    INT_TOK,
    PAD,
    AlignmentError,
    InstructionPrefix,
    SequenceTooLong,
    StreamBuilder,
    StreamConfig,
    TrainingExample,
    Vocabulary,
    align_text,
    apply_audio_delay,
    assemble_example,
    detokenize,
    insert_behavior_tokens,
    loss_heads_for,
    read_examples,
    render_prompt,
    speaker_track,
    strip_padding,
    tokenize_text,
    write_examples,
)
from duplex_forge.dialogue import BehaviorSpec
from duplex_forge.synthetic import random_corpus

from conftest import dialogue, utt

FSQ = default_layout()


def test_reserved_ids():
    v = Vocabulary()
    assert (PAD, BC_TOK, INT_TOK, EOS) == (0, 1, 2, 3)
    assert [v.token(i) for i in range(4)] == ["<pad>", "<bc>", "<int>", "<eos>"]


def test_tokenize_examples():
    v = Vocabulary()
    ids = tokenize_text("hi there", v)
    assert len(ids) == 2
    assert detokenize(ids, v) == "hi there"
    assert tokenize_text("", v) == []
    a, b = tokenize_text("hi", v), tokenize_text("hi", v)
    assert a == b


def test_vocab_save_load(tmp_path):
    v = Vocabulary(["x", "y"])
    v.save(tmp_path / "v.txt")
    w = Vocabulary.load(tmp_path / "v.txt")
    assert [w.token(i) for i in range(len(w))] == [v.token(i) for i in range(len(v))]


def test_vocab_overflow():
    v = Vocabulary(max_size=5)
    v.add("a")
    with pytest.raises(OverflowError):
        v.add("b")


def test_prompt_contents():
    text = render_prompt("They talk.", "A", "B", BehaviorSpec(9, 0, False))
    assert "- backchannels: 9" in text.splitlines()
    assert "- interruptions: 0" in text.splitlines()
    assert "- starts the dialogue: False" in text.splitlines()
    assert "- starts the dialogue: True" in render_prompt("x", "A", "B", BehaviorSpec(0, 0, True)).splitlines()
    assert "Narrative:" in render_prompt("", "A", "B", BehaviorSpec())


def test_word_alignment_example():
    d = dialogue([utt("A", ("hi", 0.24, 0.4), ("there", 0.56, 0.8))])
    v = Vocabulary()
    s = align_text(d, "A", "word", v)
    hi, there = v.id("hi"), v.id("there")
    assert s[3] == hi and s[7] == there
    assert all(s[i] == PAD for i in range(len(s)) if i not in (3, 7))


def test_utterance_alignment_packs():
    d = dialogue([utt("A", ("hi", 0.24, 0.3), ("there", 0.32, 0.8))])
    v = Vocabulary()
    s = align_text(d, "A", "utterance", v)
    assert list(s[3:5]) == [v.id("hi"), v.id("there")]
    assert all(x == PAD for x in s[5:])


def test_same_frame_words_overflow():
    d = dialogue([utt("A", ("hi", 0.24, 0.26), ("there", 0.27, 0.3))])
    with pytest.raises(AlignmentError):
        align_text(d, "A", "word", Vocabulary())


def test_audio_delay_examples():
    u = np.arange(12).reshape(3, 4) + 1
    s = u + 10
    t = np.array([5, 6, 7])
    u0, s0, t0 = apply_audio_delay(u, s, t, 0, FSQ)
    assert (u0 == u).all() and (s0 == s).all() and (t0 == t).all()
    u2, s2, t2 = apply_audio_delay(u, s, t, 2, FSQ)
    assert len(u2) == len(s2) == len(t2) == 5
    assert (u2[:2] == 0).all() and (s2[:2] == 0).all()
    assert (u2[2:] == u).all() and (s2[2:] == s).all()
    assert list(t2) == [5, 6, 7, PAD, PAD]


def _flagged(bc, onset_frame, prior=None):
    start = onset_frame / 12.5 + 0.01
    utts = [utt("B", ("long", 0.0, 3.0))]
    if prior is not None:
        utts.insert(0, utt("A", ("so", prior / 12.5 + 0.01, prior / 12.5 + 0.05)))
    utts.append(utt("A", ("yeah", start, start + 0.2), bc=bc, inter=not bc))
    utts.sort(key=lambda u: u.start_s)
    return dialogue(utts)


def test_bc_token_in_preceding_pad_frame():
    d = _flagged(True, 10)
    v = Vocabulary()
    s = align_text(d, "A", "word", v)
    out = insert_behavior_tokens(s, d, "A", v)
    assert out[9] == BC_TOK and out[10] == v.id("yeah")


def test_int_token_frame_before():
    d = _flagged(False, 5)
    v = Vocabulary()
    out = insert_behavior_tokens(align_text(d, "A", "word", v), d, "A", v)
    assert out[4] == INT_TOK


def test_marker_shifts_utterance_when_frame_busy():
    d = _flagged(True, 10, prior=9)
    v = Vocabulary()
    s = align_text(d, "A", "word", v)
    out = insert_behavior_tokens(s, d, "A", v)
    assert out[9] == v.id("so")
    assert out[10] == BC_TOK and out[11] == v.id("yeah")
    assert strip_padding(out) == strip_padding(s)


def test_no_flags_no_change():
    d = dialogue([utt("A", ("a", 0.0, 0.3)), utt("B", ("b", 0.5, 0.7))])
    v = Vocabulary()
    s = align_text(d, "A", "word", v)
    assert (insert_behavior_tokens(s, d, "A", v) == s).all()


def test_strip_padding_examples():
    assert strip_padding([PAD, 10, PAD, BC_TOK, 11]) == [10, 11]
    assert strip_padding([PAD] * 4) == []


def test_loss_heads():
    assert list(loss_heads_for("s", 4)) == [False] * 4 + [True] * 5
    assert loss_heads_for("s_u", 4).all()
    with pytest.raises(ValueError):
        loss_heads_for("u", 4)


def test_stream_config_validation():
    with pytest.raises(ValueError):
        StreamConfig(alignment="char")
    with pytest.raises(ValueError):
        StreamConfig(audio_delay_frames=3)


def test_example_lengths_and_masks():
    d = random_corpus(1, seed=5)[0]
    v = Vocabulary()
    for mode in ("s", "s_u"):
        ex = assemble_example(d, d.speakers[0], StreamConfig(loss_mode=mode, audio_delay_frames=2), FSQ, v)
        T0 = assemble_example(d, d.speakers[0], StreamConfig(loss_mode=mode, audio_delay_frames=0), FSQ, v).n_frames
        assert len(ex) == ex.prefix_length + T0 + 2
        m = ex.loss_mask
        assert not m[: ex.prefix_length].any()
        if mode == "s":
            assert not m[:, :4].any()
        else:
            assert (m[ex.prefix_length:].sum(axis=1) == 9).all()


def test_total_length_additivity():
    prefix = InstructionPrefix("spk", tuple(range(4, 43)))
    assert len(prefix) == 40
    ex = TrainingExample(prefix, np.zeros((102, 4)), np.zeros((102, 4)), np.zeros(102), loss_heads_for("s_u", 4))
    assert len(ex) == 142


def test_too_long_is_reported():
    d = random_corpus(1, seed=2)[0]
    with pytest.raises(SequenceTooLong) as e:
        assemble_example(d, d.speakers[0], StreamConfig(), FSQ, Vocabulary(), max_length=80)
    assert e.value.max_length == 80


def test_user_stream_is_other_speaker():
    d = random_corpus(1, seed=9)[0]
    a, b = d.speakers
    ex = assemble_example(d, a, StreamConfig(audio_delay_frames=0), FSQ, Vocabulary())
    track_b = speaker_track(d, b, ex.n_frames)
    assert [tuple(r) for r in ex.user_frames] == [encode_symbol(s, FSQ) for s in track_b.symbols]


def test_speaker_track_symbols():
    d = dialogue([utt("A", ("hi", 0.08, 0.24))])
    tr = speaker_track(d, "A", 4)
    assert tr.symbols == (0, word_symbol("hi"), word_symbol("hi"), 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["word", "utterance"]))
def test_strip_equals_system_words(seed, mode):
    for d in random_corpus(3, seed=seed):
        for spk in d.speakers:
            v = Vocabulary()
            s = align_text(d, spk, mode, v)
            expect = [v.id(w.text) for w in d.words_of(spk)]
            assert strip_padding(s) == expect


def test_builder_two_examples_per_dialogue():
    corpus = random_corpus(10, seed=0)
    sb = StreamBuilder().fit(corpus)
    examples, excluded = sb.build(corpus)
    assert len(examples) == 20 and not excluded
    assert [e.system for e in examples[:2]] == list(corpus[0].speakers)
    assert sb.get_params()["audio_delay_frames"] == 2


def test_builder_excludes_long():
    corpus = random_corpus(3, seed=0)
    sb = StreamBuilder(max_length=90).fit(corpus)
    examples, excluded = sb.build(corpus)
    assert excluded and all("exceeds 90" in r for *_, r in excluded)
    assert len(examples) + len(excluded) == 6


@pytest.mark.parametrize("fmt", ["jsonl", "bin"])
def test_example_file_round_trip(fmt):
    corpus = random_corpus(3, seed=1)
    sb = StreamBuilder(layout="layered").fit(corpus)
    exs = sb.transform(corpus)
    buf = io.BytesIO()
    assert write_examples(exs, buf, fmt) == len(exs)
    buf.seek(0)
    back = read_examples(buf)
    assert len(back) == len(exs)
    for a, b in zip(exs, back):
        assert a.prefix == b.prefix
        assert (a.user_frames == b.user_frames).all() and (a.sys_frames == b.sys_frames).all()
        assert (a.sys_text == b.sys_text).all() and (a.loss_heads == b.loss_heads).all()
        assert b.n_codebooks == 8

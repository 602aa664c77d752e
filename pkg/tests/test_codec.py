import pytest
from hypothesis import given, strategies as st

from duplex_forge.codec import (
    INDEPENDENT,
    LAYERED,
    MISMATCH,
    SILENCE,
    CodebookLayout,
    SymbolTrack,
    _inverse,
    decode_frame,
    default_layout,
    encode_symbol,
    frames_to_symbols,
    silence_frame,
    track_to_frames,
    transcribe_frames,
    word_symbol,
)

FSQ = default_layout(INDEPENDENT)
RVQ = default_layout(LAYERED)


def test_layouts():
    assert (FSQ.n_codebooks, FSQ.codebook_size, FSQ.frame_rate_hz) == (4, 4032, 12.5)
    assert RVQ.n_codebooks == 8
    assert FSQ.frame_duration_s == 0.08


def test_layout_validation():
    with pytest.raises(ValueError):
        CodebookLayout("bogus")
    with pytest.raises(ValueError):
        CodebookLayout(INDEPENDENT, 0)
    with pytest.raises(ValueError):
        default_layout("bogus")


def test_encode_examples():
    assert encode_symbol(0, FSQ) == (0, 0, 0, 0)
    assert encode_symbol(1, FSQ) == (5, 11, 13, 17)
    assert encode_symbol(2, FSQ) == (10, 22, 26, 34)
    assert encode_symbol(0, FSQ) == silence_frame(FSQ)
    assert silence_frame(RVQ) == (0,) * 8


def test_inverse_of_five():
    assert _inverse(5, 4032) == 1613
    assert 5 * 1613 % 4032 == 1


def test_inverse_rejects_non_units():
    with pytest.raises(ValueError):
        _inverse(6, 4032)


def test_decode_examples():
    assert decode_frame((0, 0, 0, 0), FSQ) == SILENCE
    assert decode_frame((5, 11, 13, 17), FSQ) == 1
    assert decode_frame((5, 11, 13, 18), FSQ) == MISMATCH


def test_symbol_outside_alphabet_rejected():
    with pytest.raises(ValueError):
        encode_symbol(64, FSQ)
    # a codeword of a symbol beyond the alphabet decodes as a mismatch
    assert decode_frame(encode_symbol(100, FSQ, alphabet=4032), FSQ) == MISMATCH


@given(st.lists(st.integers(0, 63), max_size=40), st.sampled_from([FSQ, RVQ]))
def test_track_round_trip(symbols, layout):
    frames = track_to_frames(SymbolTrack(tuple(symbols)), layout)
    assert frames_to_symbols(frames, layout) == symbols
    assert track_to_frames(SymbolTrack(tuple(frames_to_symbols(frames, layout))), layout) == frames


def test_track_examples():
    assert track_to_frames(SymbolTrack((0, 0)), FSQ) == [(0,) * 4, (0,) * 4]
    assert track_to_frames(SymbolTrack((1,)), FSQ) == [(5, 11, 13, 17)]


def test_word_symbol_is_voiced_and_stable():
    for w in ["a", "hello", "music", "zzz"]:
        s = word_symbol(w)
        assert 1 <= s < 64
        assert s == word_symbol(w)


def test_transcribe_runs():
    lex = {1: "one", 2: "two"}
    f = [encode_symbol(s, FSQ) for s in (0, 1, 1, 0, 2, 2, 1, 0)]
    f.insert(3, (5, 11, 13, 18))
    assert transcribe_frames(f, FSQ, lex) == ["one", "<unk>", "two", "one"]
    assert transcribe_frames([encode_symbol(7, FSQ)], FSQ, lex) == ["<sym7>"]

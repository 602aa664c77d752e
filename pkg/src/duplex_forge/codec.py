"""Discrete acoustic unit frames and a deterministic invertible stand-in codec.

A frame holds one code per codebook. The synthetic codec maps a pseudo-phoneme
symbol ``s`` to ``codes[i] = s * p[i] mod codebook_size`` with multipliers that
are units modulo the codebook size, so decoding is exact and symbol 0 is the
all-zero silence frame.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INDEPENDENT = "independent"
LAYERED = "layered"

MULTIPLIERS = (5, 11, 13, 17, 19, 23, 25, 29)
DEFAULT_ALPHABET = 64
SILENCE = 0
MISMATCH = -1


@dataclass(frozen=True)
class CodebookLayout:
    kind: str = INDEPENDENT
    n_codebooks: int = 4
    codebook_size: int = 4032
    frame_rate_hz: float = 12.5

    def __post_init__(self):
        if self.kind not in (INDEPENDENT, LAYERED):
            raise ValueError(f"unknown layout kind {self.kind!r}")
        if self.n_codebooks < 1:
            raise ValueError("n_codebooks must be >= 1")
        if self.n_codebooks > len(MULTIPLIERS):
            raise ValueError(f"at most {len(MULTIPLIERS)} codebooks supported")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")
        if not self.frame_rate_hz > 0:
            raise ValueError("frame_rate_hz must be positive")

    @property
    def frame_duration_s(self) -> float:
        return 1.0 / self.frame_rate_hz

    @property
    def multipliers(self) -> tuple[int, ...]:
        return MULTIPLIERS[: self.n_codebooks]


def default_layout(kind: str = INDEPENDENT) -> CodebookLayout:
    """FSQ-style 4x4032 or RVQ-style 8x4032, both at 12.5 frames per second."""
    if kind == INDEPENDENT:
        return CodebookLayout(INDEPENDENT, 4, 4032, 12.5)
    if kind == LAYERED:
        return CodebookLayout(LAYERED, 8, 4032, 12.5)
    raise ValueError(f"unknown layout kind {kind!r}")


DauFrame = tuple[int, ...]


def check_frame(frame: Sequence[int], layout: CodebookLayout) -> DauFrame:
    frame = tuple(int(c) for c in frame)
    if len(frame) != layout.n_codebooks:
        raise ValueError(f"frame has {len(frame)} codes, layout expects {layout.n_codebooks}")
    for c in frame:
        if not 0 <= c < layout.codebook_size:
            raise ValueError(f"code {c} outside [0, {layout.codebook_size})")
    return frame


def silence_frame(layout: CodebookLayout) -> DauFrame:
    return (0,) * layout.n_codebooks


def encode_symbol(s: int, layout: CodebookLayout, alphabet: int = DEFAULT_ALPHABET) -> DauFrame:
    if alphabet > layout.codebook_size:
        raise ValueError("alphabet larger than codebook")
    if not 0 <= s < alphabet:
        raise ValueError(f"symbol {s} outside [0, {alphabet})")
    return tuple((s * p) % layout.codebook_size for p in layout.multipliers)


def _inverse(p: int, m: int) -> int:
    # extended Euclid
    r0, r1, t0, t1 = m, p % m, 0, 1
    while r1:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        t0, t1 = t1, t0 - q * t1
    if r0 != 1:
        raise ValueError(f"{p} is not invertible mod {m}")
    return t0 % m


def decode_frame(frame: Sequence[int], layout: CodebookLayout, alphabet: int = DEFAULT_ALPHABET) -> int:
    """Symbol id, or ``MISMATCH`` when the frame is not a codeword."""
    frame = tuple(frame)
    s = (frame[0] * _inverse(layout.multipliers[0], layout.codebook_size)) % layout.codebook_size
    if s >= alphabet or encode_symbol(s, layout, alphabet) != frame:
        return MISMATCH
    return s


@dataclass(frozen=True)
class SymbolTrack:
    symbols: tuple[int, ...]
    frame_rate_hz: float = 12.5
    alphabet: int = DEFAULT_ALPHABET

    def __post_init__(self):
        for s in self.symbols:
            if not 0 <= s < self.alphabet:
                raise ValueError(f"symbol {s} outside [0, {self.alphabet})")

    @property
    def frame_duration_s(self) -> float:
        return 1.0 / self.frame_rate_hz

    def __len__(self) -> int:
        return len(self.symbols)


def track_to_frames(track: SymbolTrack, layout: CodebookLayout) -> list[DauFrame]:
    return [encode_symbol(s, layout, track.alphabet) for s in track.symbols]


def frames_to_symbols(frames: Iterable[Sequence[int]], layout: CodebookLayout,
                      alphabet: int = DEFAULT_ALPHABET) -> list[int]:
    return [decode_frame(f, layout, alphabet) for f in frames]


def frames_array(frames: Sequence[Sequence[int]], layout: CodebookLayout) -> np.ndarray:
    arr = np.asarray(frames, dtype=np.int64).reshape(-1, layout.n_codebooks)
    if arr.size and (arr.min() < 0 or arr.max() >= layout.codebook_size):
        raise ValueError("code out of range")
    return arr


# ---------------------------------------------------------- word <-> symbol mapping


def word_symbol(word: str, alphabet: int = DEFAULT_ALPHABET) -> int:
    """Stable voiced symbol for a word: crc32 of its text mod (alphabet - 1), plus 1."""
    return zlib.crc32(word.encode("utf-8")) % (alphabet - 1) + 1


def transcribe_frames(frames: Sequence[Sequence[int]], layout: CodebookLayout,
                      lexicon: dict[int, str], alphabet: int = DEFAULT_ALPHABET) -> list[str]:
    """Toy recogniser: one word per run of identical voiced symbols.

    Runs are split by silence and by symbol changes. Symbols outside the
    lexicon render as ``<symN>``; mismatch frames as ``<unk>``.
    """
    out: list[str] = []
    prev = SILENCE
    for s in frames_to_symbols(frames, layout, alphabet):
        if s != SILENCE and s != prev:
            out.append("<unk>" if s == MISMATCH else lexicon.get(s, f"<sym{s}>"))
        prev = s
    return out

"""Turn a :class:`~duplex_forge.dialogue.Dialogue` into a model-facing token grid.

The grid has one column per 80 ms frame. Each column carries a user frame, a
system frame and one system-side text token; an instruction prefix (speaker
slot followed by prompt tokens) sits in front of the grid.
"""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .codec import (
    DEFAULT_ALPHABET,
    CodebookLayout,
    SymbolTrack,
    default_layout,
    silence_frame,
    track_to_frames,
    word_symbol,
)
from .dialogue import BehaviorSpec, Dialogue, validate_dialogue

PAD, BC_TOK, INT_TOK, EOS = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<bc>", "<int>", "<eos>")
SPECIAL_IDS = frozenset((PAD, BC_TOK, INT_TOK, EOS))

WORD, UTTERANCE = "word", "utterance"
LOSS_S, LOSS_SU = "s", "s_u"

MAX_SEQUENCE_LENGTH = 2048
_FRAME_EPS = 1e-9
_TOKEN_RE = re.compile(r"[\w']+|[^\w\s]")


class AlignmentError(ValueError):
    """More text tokens than frames available before the next onset."""


class SequenceTooLong(ValueError):
    def __init__(self, length: int, max_length: int, keep_frames: int):
        self.length = length
        self.max_length = max_length
        self.keep_frames = keep_frames
        super().__init__(
            f"sequence length {length} exceeds {max_length}; truncate the stream to {keep_frames} frames"
        )


# ------------------------------------------------------------------- vocabulary


class Vocabulary:
    """Whitespace/punctuation vocabulary with reserved ids 0..3."""

    def __init__(self, tokens: Iterable[str] = (), max_size: int = 1024):
        if max_size < len(RESERVED_TOKENS):
            raise ValueError("max_size too small for reserved tokens")
        self.max_size = max_size
        self._tokens: list[str] = list(RESERVED_TOKENS)
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        for t in tokens:
            self.add(t)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def add(self, token: str) -> int:
        if token in self._ids:
            return self._ids[token]
        if len(self._tokens) >= self.max_size:
            raise OverflowError(f"vocabulary full ({self.max_size} entries), cannot add {token!r}")
        self._ids[token] = len(self._tokens)
        self._tokens.append(token)
        return self._ids[token]

    def id(self, token: str) -> int:
        return self._ids[token]

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, text: str, grow: bool = True) -> list[int]:
        pieces = _TOKEN_RE.findall(text)
        if grow:
            return [self.add(p) for p in pieces]
        try:
            return [self._ids[p] for p in pieces]
        except KeyError as e:
            raise KeyError(f"token {e.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self._tokens[i] for i in ids)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self._tokens:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path, max_size: int | None = None) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        if tuple(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError(f"{path}: first lines must be {RESERVED_TOKENS}")
        return cls(tokens[len(RESERVED_TOKENS):], max_size=max_size or max(len(tokens), 1024))


def tokenize_text(text: str, vocab: Vocabulary, grow: bool = True) -> list[int]:
    return vocab.encode(text, grow=grow)


def detokenize(ids: Iterable[int], vocab: Vocabulary) -> str:
    return vocab.decode(ids)


# ----------------------------------------------------------------------- prompt


PROMPT_TEMPLATE = (
    "Generate a dialogue between you ({system}) and another speaker ({other}) based on the given "
    "narrative. Follow the specific behavior instructions for you.\n"
    "\n"
    "Narrative:\n"
    "- {narrative}\n"
    "\n"
    "Your behaviors:\n"
    "- backchannels: {backchannels}\n"
    "- interruptions: {interruptions}\n"
    "- starts the dialogue: {starts}\n"
    "\n"
    "Ensure that the dialogue reflects the behaviours of you."
)


def render_prompt(narrative: str, system: str, other: str, behavior: BehaviorSpec) -> str:
    if system == other:
        raise ValueError("system and other speaker names must differ")
    return PROMPT_TEMPLATE.format(
        system=system,
        other=other,
        narrative=narrative,
        backchannels=behavior.backchannels,
        interruptions=behavior.interruptions,
        starts=bool(behavior.starts),
    )


# ---------------------------------------------------------------------- configs


@dataclass(frozen=True)
class StreamConfig:
    alignment: str = WORD
    audio_delay_frames: int = 2
    behavior_tokens: bool = True
    loss_mode: str = LOSS_SU

    def __post_init__(self):
        if self.alignment not in (WORD, UTTERANCE):
            raise ValueError(f"alignment must be {WORD!r} or {UTTERANCE!r}")
        if self.audio_delay_frames not in (0, 1, 2):
            raise ValueError("audio_delay_frames must be 0, 1 or 2")
        if self.loss_mode not in (LOSS_S, LOSS_SU):
            raise ValueError(f"loss_mode must be {LOSS_S!r} or {LOSS_SU!r}")


@dataclass(frozen=True)
class InstructionPrefix:
    speaker_slot: str
    prompt_tokens: tuple[int, ...]

    def __post_init__(self):
        if not self.prompt_tokens:
            raise ValueError("prompt_tokens must be non-empty")

    def __len__(self) -> int:
        return 1 + len(self.prompt_tokens)


@dataclass
class TrainingExample:
    prefix: InstructionPrefix
    user_frames: np.ndarray  # (T, n_codebooks)
    sys_frames: np.ndarray  # (T, n_codebooks)
    sys_text: np.ndarray  # (T,)
    loss_heads: np.ndarray  # (2n + 1,) bool; applies to every stream position
    dialogue_id: str = ""
    system: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.user_frames = np.asarray(self.user_frames, dtype=np.int64)
        self.sys_frames = np.asarray(self.sys_frames, dtype=np.int64)
        self.sys_text = np.asarray(self.sys_text, dtype=np.int64)
        self.loss_heads = np.asarray(self.loss_heads, dtype=bool)
        T = len(self.sys_text)
        n = self.n_codebooks
        if self.user_frames.shape != (T, n) or self.sys_frames.shape != (T, n):
            raise ValueError(
                f"stream lengths differ: user {self.user_frames.shape}, sys {self.sys_frames.shape}, text {T}"
            )
        if self.loss_heads.shape != (2 * n + 1,):
            raise ValueError("loss_heads must have 2 * n_codebooks + 1 entries")

    @property
    def n_codebooks(self) -> int:
        return self.loss_heads.shape[0] // 2 if self.loss_heads.ndim else 0

    @property
    def n_frames(self) -> int:
        return len(self.sys_text)

    @property
    def prefix_length(self) -> int:
        return len(self.prefix)

    def __len__(self) -> int:
        return self.prefix_length + self.n_frames

    @property
    def loss_mask(self) -> np.ndarray:
        """(length, 2n + 1) booleans; all prefix rows are False."""
        mask = np.zeros((len(self), len(self.loss_heads)), dtype=bool)
        mask[self.prefix_length:] = self.loss_heads
        return mask


# --------------------------------------------------------------------- alignment


def frame_index(t: float, frame_rate_hz: float) -> int:
    return int(math.floor(t * frame_rate_hz + _FRAME_EPS))


def frame_end(t: float, frame_rate_hz: float) -> int:
    """Exclusive frame bound of a span ending at ``t``."""
    return int(math.ceil(t * frame_rate_hz - _FRAME_EPS))


def n_frames_for(d: Dialogue, frame_rate_hz: float) -> int:
    return frame_end(d.duration_s, frame_rate_hz)


@dataclass(frozen=True)
class _Placement:
    frame: int
    tokens: tuple[int, ...]
    utterance: int
    word: int | None
    label: str


def _placements(d: Dialogue, system: str, mode: str, vocab: Vocabulary,
                frame_rate_hz: float, grow: bool) -> list[_Placement]:
    out = []
    for i, u in enumerate(d.utterances):
        if u.speaker != system:
            continue
        if mode == WORD:
            for j, w in enumerate(u.words):
                toks = tuple(vocab.encode(w.text, grow=grow))
                if toks:
                    out.append(_Placement(frame_index(w.start_s, frame_rate_hz), toks, i, j,
                                          f"utterances[{i}].words[{j}] {w.text!r}"))
        elif mode == UTTERANCE:
            toks = tuple(t for w in u.words for t in vocab.encode(w.text, grow=grow))
            if toks:
                out.append(_Placement(frame_index(u.start_s, frame_rate_hz), toks, i, None,
                                      f"utterances[{i}] {u.text!r}"))
        else:
            raise ValueError(f"unknown alignment mode {mode!r}")
    return out


def align_text(d: Dialogue, system: str, mode: str, vocab: Vocabulary, *,
               frame_rate_hz: float = 12.5, n_frames: int | None = None,
               grow: bool = True) -> np.ndarray:
    """System-side text stream, PAD everywhere except at token placements.

    Word mode starts each word's tokens at its onset frame; utterance mode packs
    an utterance's tokens from the utterance onset. Tokens must fit before the
    next placement (or the end of the grid).
    """
    if system not in d.speakers:
        raise KeyError(f"{system!r} is not a speaker of {d.id!r}")
    T = n_frames_for(d, frame_rate_hz) if n_frames is None else n_frames
    stream = np.full(T, PAD, dtype=np.int64)
    places = _placements(d, system, mode, vocab, frame_rate_hz, grow)
    for k, p in enumerate(places):
        limit = places[k + 1].frame if k + 1 < len(places) else T
        if p.frame + len(p.tokens) > limit:
            raise AlignmentError(
                f"{d.id}: {p.label} needs {len(p.tokens)} frame(s) from frame {p.frame} "
                f"but only {max(0, limit - p.frame)} are free"
            )
        stream[p.frame:p.frame + len(p.tokens)] = p.tokens
    return stream


def insert_behavior_tokens(sys_text: Sequence[int], d: Dialogue, system: str, vocab: Vocabulary, *,
                           mode: str = WORD, frame_rate_hz: float = 12.5) -> np.ndarray:
    """Place BC_TOK / INT_TOK in the frame before each flagged system utterance.

    If that frame is unavailable the marker goes on the onset frame and the
    utterance's own tokens move one frame right.
    """
    stream = np.array(sys_text, dtype=np.int64, copy=True)
    places = _placements(d, system, mode, vocab, frame_rate_hz, grow=False)
    by_utt: dict[int, list[int]] = {}
    for p in places:
        by_utt.setdefault(p.utterance, []).extend(range(p.frame, p.frame + len(p.tokens)))
    for i, u in enumerate(d.utterances):
        if u.speaker != system or not (u.is_backchannel or u.is_interruption):
            continue
        marker = BC_TOK if u.is_backchannel else INT_TOK
        onset = frame_index(u.start_s, frame_rate_hz)
        if onset >= 1 and stream[onset - 1] == PAD:
            stream[onset - 1] = marker
            continue
        own = sorted(by_utt.get(i, []))
        own_set = set(own)
        for f in own:
            if f + 1 >= len(stream) or (stream[f + 1] != PAD and f + 1 not in own_set):
                raise AlignmentError(
                    f"{d.id}: no room to shift utterances[{i}] after inserting a behavior token"
                )
        values = [stream[f] for f in own]
        stream[own] = PAD
        for f, v in zip(own, values):
            stream[f + 1] = v
        if onset >= len(stream) or stream[onset] != PAD:
            raise AlignmentError(f"{d.id}: no room for a behavior token at utterances[{i}]")
        stream[onset] = marker
    return stream


def apply_audio_delay(user_frames: np.ndarray, sys_frames: np.ndarray, sys_text: np.ndarray,
                      delay: int, layout: CodebookLayout):
    """Audio lags text by ``delay`` frames: silence in front of the audio, PAD behind the text."""
    if delay not in (0, 1, 2):
        raise ValueError("delay must be 0, 1 or 2")
    user_frames = np.asarray(user_frames, dtype=np.int64).reshape(-1, layout.n_codebooks)
    sys_frames = np.asarray(sys_frames, dtype=np.int64).reshape(-1, layout.n_codebooks)
    sys_text = np.asarray(sys_text, dtype=np.int64)
    if delay == 0:
        return user_frames.copy(), sys_frames.copy(), sys_text.copy()
    sil = np.tile(np.asarray(silence_frame(layout), dtype=np.int64), (delay, 1))
    return (
        np.concatenate([sil, user_frames]),
        np.concatenate([sil, sys_frames]),
        np.concatenate([sys_text, np.full(delay, PAD, dtype=np.int64)]),
    )


def strip_padding(sys_text: Iterable[int]) -> list[int]:
    return [int(t) for t in sys_text if int(t) not in SPECIAL_IDS]


def speaker_track(d: Dialogue, speaker: str, n_frames: int, *, frame_rate_hz: float = 12.5,
                  alphabet: int = DEFAULT_ALPHABET) -> SymbolTrack:
    """Per-frame voiced symbols for one speaker; later words win shared frames."""
    symbols = [0] * n_frames
    for w in d.words_of(speaker):
        lo = frame_index(w.start_s, frame_rate_hz)
        hi = max(frame_end(w.end_s, frame_rate_hz), lo + 1)
        sym = word_symbol(w.text, alphabet)
        for f in range(lo, min(hi, n_frames)):
            symbols[f] = sym
    return SymbolTrack(tuple(symbols), frame_rate_hz, alphabet)


def loss_heads_for(loss_mode: str, n_codebooks: int) -> np.ndarray:
    heads = np.ones(2 * n_codebooks + 1, dtype=bool)
    if loss_mode == LOSS_S:
        heads[:n_codebooks] = False
    elif loss_mode != LOSS_SU:
        raise ValueError(f"unknown loss mode {loss_mode!r}")
    return heads


def build_prefix(d: Dialogue, system: str, vocab: Vocabulary, grow: bool = True) -> InstructionPrefix:
    prompt = render_prompt(d.narrative, system, d.other(system), d.behavior[system])
    slot = (d.speaker_ref or {}).get(system, system)
    return InstructionPrefix(slot, tuple(vocab.encode(prompt, grow=grow)))


def assemble_example(d: Dialogue, system: str, cfg: StreamConfig, layout: CodebookLayout,
                     vocab: Vocabulary, *, max_length: int = MAX_SEQUENCE_LENGTH,
                     alphabet: int = DEFAULT_ALPHABET, grow: bool = True) -> TrainingExample:
    report = validate_dialogue(d)
    if not report.ok:
        raise ValueError(f"{d.id}: invalid dialogue: {report}")
    rate = layout.frame_rate_hz
    T = n_frames_for(d, rate)
    prefix = build_prefix(d, system, vocab, grow)
    text = align_text(d, system, cfg.alignment, vocab, frame_rate_hz=rate, n_frames=T, grow=grow)
    if cfg.behavior_tokens:
        text = insert_behavior_tokens(text, d, system, vocab, mode=cfg.alignment, frame_rate_hz=rate)
    user = track_to_frames(speaker_track(d, d.other(system), T, frame_rate_hz=rate, alphabet=alphabet), layout)
    sys_ = track_to_frames(speaker_track(d, system, T, frame_rate_hz=rate, alphabet=alphabet), layout)
    user, sys_, text = apply_audio_delay(np.asarray(user).reshape(T, -1), np.asarray(sys_).reshape(T, -1),
                                         text, cfg.audio_delay_frames, layout)
    total = len(prefix) + len(text)
    if total > max_length:
        raise SequenceTooLong(total, max_length, max(0, max_length - len(prefix)))
    return TrainingExample(
        prefix=prefix,
        user_frames=user,
        sys_frames=sys_,
        sys_text=text,
        loss_heads=loss_heads_for(cfg.loss_mode, layout.n_codebooks),
        dialogue_id=d.id,
        system=system,
        meta={"alignment": cfg.alignment, "audio_delay_frames": cfg.audio_delay_frames,
              "behavior_tokens": cfg.behavior_tokens, "loss_mode": cfg.loss_mode},
    )


# -------------------------------------------------------------------- estimator


class StreamBuilder(TransformerMixin, BaseEstimator):
    """Fit a vocabulary on a corpus, then transform dialogues into training examples.

    Each dialogue yields two examples, one per system-speaker role, in the
    order of ``dialogue.speakers``.
    """

    def __init__(self, alignment=WORD, audio_delay_frames=2, behavior_tokens=True, loss_mode=LOSS_SU,
                 layout=None, max_length=MAX_SEQUENCE_LENGTH, vocab_size=1024, alphabet=DEFAULT_ALPHABET):
        self.alignment = alignment
        self.audio_delay_frames = audio_delay_frames
        self.behavior_tokens = behavior_tokens
        self.loss_mode = loss_mode
        self.layout = layout
        self.max_length = max_length
        self.vocab_size = vocab_size
        self.alphabet = alphabet

    @property
    def config(self) -> StreamConfig:
        return StreamConfig(self.alignment, self.audio_delay_frames, self.behavior_tokens, self.loss_mode)

    def _layout(self) -> CodebookLayout:
        if self.layout is None:
            return default_layout()
        if isinstance(self.layout, str):
            return default_layout(self.layout)
        return self.layout

    def fit(self, X, y=None, vocabulary: Vocabulary | None = None):
        self.config  # validates parameters
        self.layout_ = self._layout()
        vocab = vocabulary if vocabulary is not None else Vocabulary(max_size=self.vocab_size)
        for d in X:
            for spk in d.speakers:
                build_prefix(d, spk, vocab, grow=True)
                for w in d.words_of(spk):
                    vocab.encode(w.text, grow=True)
        self.vocabulary_ = vocab
        return self

    def transform(self, X) -> list[TrainingExample]:
        check_is_fitted(self, "vocabulary_")
        return [
            assemble_example(d, spk, self.config, self.layout_, self.vocabulary_,
                             max_length=self.max_length, alphabet=self.alphabet, grow=False)
            for d in X for spk in d.speakers
        ]

    def build(self, X):
        """Like :meth:`transform` but collects failures instead of raising.

        Returns ``(examples, excluded)`` where ``excluded`` holds
        ``(dialogue_id, system_speaker, reason)`` triples.
        """
        check_is_fitted(self, "vocabulary_")
        examples, excluded = [], []
        for d in X:
            for spk in d.speakers:
                try:
                    examples.append(assemble_example(d, spk, self.config, self.layout_, self.vocabulary_,
                                                     max_length=self.max_length, alphabet=self.alphabet,
                                                     grow=False))
                except (AlignmentError, SequenceTooLong, ValueError, KeyError) as e:
                    excluded.append((d.id, spk, str(e)))
        return examples, excluded


# ----------------------------------------------------------------- example files


def example_to_dict(ex: TrainingExample) -> dict:
    return {
        "dialogue_id": ex.dialogue_id,
        "system": ex.system,
        "speaker_slot": ex.prefix.speaker_slot,
        "prompt_tokens": list(ex.prefix.prompt_tokens),
        "user_frames": ex.user_frames.tolist(),
        "sys_frames": ex.sys_frames.tolist(),
        "sys_text": ex.sys_text.tolist(),
        "loss_heads": ex.loss_heads.astype(int).tolist(),
        "meta": ex.meta,
    }


def example_from_dict(rec: dict) -> TrainingExample:
    n = len(rec["loss_heads"]) // 2
    return TrainingExample(
        prefix=InstructionPrefix(rec["speaker_slot"], tuple(rec["prompt_tokens"])),
        user_frames=np.asarray(rec["user_frames"], dtype=np.int64).reshape(-1, n),
        sys_frames=np.asarray(rec["sys_frames"], dtype=np.int64).reshape(-1, n),
        sys_text=rec["sys_text"],
        loss_heads=np.asarray(rec["loss_heads"], dtype=bool),
        dialogue_id=rec.get("dialogue_id", ""),
        system=rec.get("system", ""),
        meta=rec.get("meta", {}),
    )


_BIN_MAGIC = b"DFEX\x01"


def write_examples(examples: Iterable[TrainingExample], fh: IO[bytes], fmt: str = "jsonl") -> int:
    """Write examples as JSON Lines or as a length-prefixed binary container."""
    n = 0
    if fmt == "bin":
        fh.write(_BIN_MAGIC)
    elif fmt != "jsonl":
        raise ValueError(f"unknown example format {fmt!r}")
    for ex in examples:
        payload = json.dumps(example_to_dict(ex), sort_keys=True).encode("utf-8")
        if fmt == "bin":
            fh.write(struct.pack(">I", len(payload)))
            fh.write(payload)
        else:
            fh.write(payload + b"\n")
        n += 1
    return n


def read_examples(fh: IO[bytes]) -> list[TrainingExample]:
    """Read either container; the format is sniffed from the first bytes."""
    data = fh.read()
    out = []
    if data.startswith(_BIN_MAGIC):
        pos = len(_BIN_MAGIC)
        while pos < len(data):
            (size,) = struct.unpack(">I", data[pos:pos + 4])
            pos += 4
            out.append(example_from_dict(json.loads(data[pos:pos + size])))
            pos += size
        return out
    for line in data.splitlines():
        if line.strip():
            out.append(example_from_dict(json.loads(line)))
    return out

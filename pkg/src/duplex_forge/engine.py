"""Lockstep self-talk between two agents.

At step ``t`` each agent first samples its system frame and text token from
everything it consumed up to ``t - 1``, then consumes position ``t`` whose
user frame is the other agent's system frame from step ``t - 1`` (silence at
``t = 0``). One frame of exchange latency keeps the loop causal.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import IO, Callable, Iterable, Protocol, Sequence

import numpy as np

from .codec import SILENCE, CodebookLayout, decode_frame, default_layout, silence_frame
from .evaluation.metrics import first_speaker
from .evaluation.timeline import Segment, Timeline
from .neural.net import FrameNet
from .neural.sampling import DEFAULT_TEMPERATURE, DEFAULT_TOP_K, DEFAULT_TOP_P, sample_step
from .streams import PAD, InstructionPrefix

INFERENCE_CONTEXT = 1024
RECORD_SCHEMA = "duplex-forge/conversation/1"


class ContextOverflow(ValueError):
    pass


class Agent(Protocol):
    n_codebooks: int

    def reset(self) -> None: ...

    def step(self, t: int, heard: tuple[int, ...]) -> tuple[tuple[int, ...], int]:
        """Emit (system frame, text token) for step ``t``; ``heard`` is the user frame at ``t``."""

    def describe(self) -> dict: ...


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = DEFAULT_TEMPERATURE
    top_k: int = DEFAULT_TOP_K
    top_p: float = DEFAULT_TOP_P

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")


class ModelAgent:
    """A frame network instance conditioned on its own instruction prefix."""

    def __init__(self, net: FrameNet, prefix: InstructionPrefix, sampling: SamplingParams = SamplingParams(),
                 seed: int = 0, context: int = INFERENCE_CONTEXT):
        self.net = net
        self.prefix = prefix
        self.sampling = sampling
        self.seed = int(seed)
        self.context = min(int(context), net.config.context_length)
        self.n_codebooks = net.config.n_codebooks
        self.reset()

    def reset(self) -> None:
        self.rng = np.random.default_rng(self.seed)
        self.state = self.net.start(self.prefix.speaker_slot, self.prefix.prompt_tokens)

    def check_capacity(self, n_frames: int) -> None:
        need = len(self.prefix) + n_frames
        if need > self.context:
            raise ContextOverflow(f"prefix {len(self.prefix)} + {n_frames} frames exceeds context {self.context}")

    def step(self, t: int, heard):
        s = self.sampling
        frame, text = sample_step(self.state.logits(), s.temperature, s.top_k, s.top_p, self.rng)
        self.state.push_frame(heard, frame, text)
        return frame, text

    def describe(self) -> dict:
        return {"kind": "model", "seed": self.seed, "sampling": asdict(self.sampling),
                "speaker_slot": self.prefix.speaker_slot, "prompt_tokens": list(self.prefix.prompt_tokens)}


Policy = Callable[[int, Sequence[tuple[int, ...]]], tuple[Sequence[int], int]]


class ScriptedAgent:
    """Rule-based agent: ``policy(t, heard_so_far)`` returns (frame, text token).

    ``heard_so_far`` holds the user frames for steps ``0..t``.
    """

    def __init__(self, policy: Policy, layout: CodebookLayout | None = None, name: str = "scripted"):
        self.policy = policy
        self.layout = layout or default_layout()
        self.n_codebooks = self.layout.n_codebooks
        self.name = name
        self.reset()

    def reset(self) -> None:
        self.heard: list[tuple[int, ...]] = []

    def step(self, t: int, heard):
        self.heard.append(tuple(int(c) for c in heard))
        frame, text = self.policy(t, list(self.heard))
        return tuple(int(c) for c in frame), int(text)

    def describe(self) -> dict:
        return {"kind": "scripted", "name": self.name}


def waiting_agent(wait_frames: int, talk_frames: int, symbol: int, layout: CodebookLayout | None = None,
                  alphabet: int = 64) -> ScriptedAgent:
    """Silent for ``wait_frames``, then voices ``symbol`` for ``talk_frames`` frames."""
    from .codec import encode_symbol
    layout = layout or default_layout()
    voiced = encode_symbol(symbol, layout, alphabet)
    sil = silence_frame(layout)

    def policy(t, heard):
        return (voiced if wait_frames <= t < wait_frames + talk_frames else sil), PAD

    return ScriptedAgent(policy, layout, name=f"wait{wait_frames}-talk{talk_frames}-sym{symbol}")


@dataclass
class ConversationRecord:
    id: str
    n_frames: int
    frames_a: list[list[int]]
    frames_b: list[list[int]]
    text_a: list[int]
    text_b: list[int]
    agents: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = RECORD_SCHEMA
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConversationRecord":
        d = dict(d)
        schema = d.pop("schema", RECORD_SCHEMA)
        if schema != RECORD_SCHEMA:
            raise ValueError(f"unsupported conversation schema {schema!r}")
        rec = cls(**d)
        if not (len(rec.frames_a) == len(rec.frames_b) == len(rec.text_a) == len(rec.text_b) == rec.n_frames):
            raise ValueError(f"conversation {rec.id}: stream lengths differ from n_frames")
        return rec

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def converse(agent_a: Agent, agent_b: Agent, n_frames: int, conv_id: str = "conv-00000",
             meta: dict | None = None) -> ConversationRecord:
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if agent_a.n_codebooks != agent_b.n_codebooks:
        raise ValueError("agents disagree on the number of codebooks")
    for ag in (agent_a, agent_b):
        if hasattr(ag, "check_capacity"):
            ag.check_capacity(n_frames)
        ag.reset()
    sil = tuple([SILENCE] * agent_a.n_codebooks)
    fa, fb, ta, tb = [], [], [], []
    last_a, last_b = sil, sil
    for t in range(n_frames):
        a_frame, a_text = agent_a.step(t, last_b)
        b_frame, b_text = agent_b.step(t, last_a)
        fa.append(list(a_frame))
        fb.append(list(b_frame))
        ta.append(a_text)
        tb.append(b_text)
        last_a, last_b = tuple(a_frame), tuple(b_frame)
    return ConversationRecord(conv_id, n_frames, fa, fb, ta, tb,
                              [agent_a.describe(), agent_b.describe()], dict(meta or {}))


# ------------------------------------------------------------------ files


def write_records(records: Iterable[ConversationRecord], fh: IO[str]) -> int:
    n = 0
    for r in records:
        fh.write(r.dumps() + "\n")
        n += 1
    return n


def read_records(fh: IO[str]) -> list[ConversationRecord]:
    out = []
    for i, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            out.append(ConversationRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError, KeyError, ValueError) as e:
            raise ValueError(f"line {i}: {e}") from e
    return out


# -------------------------------------------------------------- analysis


def voiced_mask(frames: Sequence[Sequence[int]], layout: CodebookLayout, alphabet: int = 64) -> np.ndarray:
    """True where a frame decodes to anything but silence (mismatches count as voiced)."""
    return np.array([decode_frame(f, layout, alphabet) != SILENCE for f in frames], dtype=bool)


def frames_to_timeline(frames, layout: CodebookLayout, speaker: str, alphabet: int = 64) -> Timeline:
    v = voiced_mask(frames, layout, alphabet)
    dt = layout.frame_duration_s
    segs = []
    t = 0
    while t < len(v):
        if v[t]:
            s = t
            while t < len(v) and v[t]:
                t += 1
            segs.append(Segment(round(s * dt, 9), round(t * dt, 9)))
        else:
            t += 1
    return Timeline(speaker, tuple(segs))


def record_to_timelines(rec: ConversationRecord, layout: CodebookLayout | None = None,
                        alphabet: int = 64) -> tuple[Timeline, Timeline]:
    layout = layout or default_layout()
    return (frames_to_timeline(rec.frames_a, layout, "A", alphabet),
            frames_to_timeline(rec.frames_b, layout, "B", alphabet))


def record_first_speaker(rec: ConversationRecord, layout: CodebookLayout | None = None) -> str:
    return first_speaker(*record_to_timelines(rec, layout))


def leading_silence_frames(rec: ConversationRecord, layout: CodebookLayout | None = None,
                           alphabet: int = 64) -> int:
    """Frames before either agent first voices anything (``n_frames`` when all silent)."""
    layout = layout or default_layout()
    joint = voiced_mask(rec.frames_a, layout, alphabet) | voiced_mask(rec.frames_b, layout, alphabet)
    hits = np.nonzero(joint)[0]
    return int(hits[0]) if len(hits) else rec.n_frames

"""Dialogue domain types and the JSON Lines corpus format.

One record per line::

    {"schema": "duplex-forge/1", "id": ..., "narrative": ..., "speakers": [a, b],
     "behavior": {a: {"backchannels": 0, "interruptions": 0, "starts": true}, ...},
     "utterances": [{"speaker": a, "is_backchannel": false, "is_interruption": false,
                     "words": [{"text": "hi", "start_s": 0.0, "end_s": 0.3}]}],
     "speaker_ref": {a: "spk-01"}}            # optional

Times are seconds. Conversion to frames happens in :mod:`duplex_forge.streams`.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

SCHEMA_VERSION = "duplex-forge/1"


class CorpusError(ValueError):
    """Malformed corpus record. Carries the 1-based line number and a field path."""

    def __init__(self, message: str, line: int | None = None, path: str = ""):
        self.line = line
        self.path = path
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(path)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class WordSpan:
    text: str
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class Utterance:
    speaker: str
    words: tuple[WordSpan, ...]
    is_backchannel: bool = False
    is_interruption: bool = False

    @property
    def start_s(self) -> float:
        return self.words[0].start_s

    @property
    def end_s(self) -> float:
        return self.words[-1].end_s

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)


@dataclass(frozen=True)
class BehaviorSpec:
    backchannels: int = 0
    interruptions: int = 0
    starts: bool = False


@dataclass(frozen=True)
class Dialogue:
    id: str
    narrative: str
    speakers: tuple[str, str]
    behavior: Mapping[str, BehaviorSpec]
    utterances: tuple[Utterance, ...]
    speaker_ref: Mapping[str, str] | None = None

    def other(self, speaker: str) -> str:
        a, b = self.speakers
        if speaker == a:
            return b
        if speaker == b:
            return a
        raise KeyError(f"{speaker!r} is not a speaker of dialogue {self.id!r}")

    def utterances_of(self, speaker: str) -> list[Utterance]:
        return [u for u in self.utterances if u.speaker == speaker]

    def words_of(self, speaker: str) -> list[WordSpan]:
        return [w for u in self.utterances if u.speaker == speaker for w in u.words]

    @property
    def duration_s(self) -> float:
        return max((u.end_s for u in self.utterances), default=0.0)


# --------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.violations)


def _is_count(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def validate_dialogue(d: Dialogue) -> ValidationReport:
    """Collect every invariant violation of ``d``. Never raises."""
    out: list[Violation] = []

    def bad(path, msg):
        out.append(Violation(path, msg))

    if len(d.speakers) != 2 or d.speakers[0] == d.speakers[1]:
        bad("speakers", "exactly two distinct speakers required")
    for spk in d.speakers:
        spec = d.behavior.get(spk) if d.behavior is not None else None
        if spec is None:
            bad(f"behavior.{spk}", "missing behavior spec")
            continue
        if not _is_count(spec.backchannels):
            bad(f"behavior.{spk}.backchannels", "must be a non-negative integer")
        if not _is_count(spec.interruptions):
            bad(f"behavior.{spk}.interruptions", "must be a non-negative integer")
    for spk in d.behavior or {}:
        if spk not in d.speakers:
            bad(f"behavior.{spk}", "unknown speaker")
    if d.speaker_ref is not None:
        for spk in d.speaker_ref:
            if spk not in d.speakers:
                bad(f"speaker_ref.{spk}", "unknown speaker")

    last_start = -math.inf
    last_end: dict[str, tuple[int, float]] = {}
    for i, u in enumerate(d.utterances):
        up = f"utterances[{i}]"
        if u.speaker not in d.speakers:
            bad(f"{up}.speaker", f"unknown speaker {u.speaker!r}")
        if u.is_backchannel and u.is_interruption:
            bad(up, "flag exclusivity: both is_backchannel and is_interruption set")
        if not u.words:
            bad(f"{up}.words", "utterance has no words")
            continue
        prev_end = -math.inf
        for j, w in enumerate(u.words):
            wp = f"{up}.words[{j}]"
            if not w.text:
                bad(f"{wp}.text", "empty word text")
            if not (math.isfinite(w.start_s) and math.isfinite(w.end_s)):
                bad(wp, "non-finite timestamp")
                continue
            if w.start_s < 0:
                bad(f"{wp}.start_s", "negative start time")
            if w.end_s <= w.start_s:
                bad(f"{wp}.end_s", f"end_s {w.end_s} not after start_s {w.start_s}")
            if w.start_s < prev_end:
                bad(f"{wp}.start_s", "words overlap or are out of order")
            prev_end = max(prev_end, w.end_s)
        if u.start_s < last_start:
            bad(f"{up}.start_s", "utterances not ordered by start time")
        last_start = max(last_start, u.start_s)
        if u.speaker in last_end:
            k, end = last_end[u.speaker]
            if u.start_s < end:
                bad(up, f"same-speaker overlap with utterances[{k}]")
        if u.speaker not in last_end or u.end_s >= last_end[u.speaker][1]:
            last_end[u.speaker] = (i, u.end_s)
    return ValidationReport(out)


# -------------------------------------------------------------------------- stats


@dataclass(frozen=True)
class SpeakerStats:
    utterances: int
    backchannels: int
    interruptions: int
    speech_s: float


@dataclass(frozen=True)
class DialogueStats:
    speakers: dict[str, SpeakerStats]
    duration_s: float


def union_length(intervals: Iterable[tuple[float, float]]) -> float:
    total = 0.0
    cur_s = cur_e = None
    for s, e in sorted(intervals):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def dialogue_stats(d: Dialogue) -> DialogueStats:
    per = {}
    for spk in d.speakers:
        utts = d.utterances_of(spk)
        per[spk] = SpeakerStats(
            utterances=len(utts),
            backchannels=sum(u.is_backchannel for u in utts),
            interruptions=sum(u.is_interruption for u in utts),
            speech_s=sum(union_length((w.start_s, w.end_s) for w in u.words) for u in utts),
        )
    return DialogueStats(per, d.duration_s)


# ------------------------------------------------------------------ serialization


def dialogue_to_dict(d: Dialogue) -> dict:
    rec = {
        "schema": SCHEMA_VERSION,
        "id": d.id,
        "narrative": d.narrative,
        "speakers": list(d.speakers),
        "behavior": {
            spk: {"backchannels": b.backchannels, "interruptions": b.interruptions, "starts": b.starts}
            for spk, b in d.behavior.items()
        },
        "utterances": [
            {
                "speaker": u.speaker,
                "is_backchannel": u.is_backchannel,
                "is_interruption": u.is_interruption,
                "words": [{"text": w.text, "start_s": w.start_s, "end_s": w.end_s} for w in u.words],
            }
            for u in d.utterances
        ],
    }
    if d.speaker_ref is not None:
        rec["speaker_ref"] = dict(d.speaker_ref)
    return rec


def dumps_dialogue(d: Dialogue) -> str:
    return json.dumps(dialogue_to_dict(d), ensure_ascii=False, sort_keys=True)


def write_corpus(dialogues: Iterable[Dialogue], fh: IO[str]) -> None:
    for d in dialogues:
        fh.write(dumps_dialogue(d))
        fh.write("\n")


def _require(obj, key, typ, path, line):
    if not isinstance(obj, dict) or key not in obj:
        raise CorpusError("missing field", line, f"{path}.{key}" if path else key)
    val = obj[key]
    ok = isinstance(val, typ) and not (typ in (int, (int, float)) and isinstance(val, bool))
    if not ok:
        raise CorpusError(f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}",
                          line, f"{path}.{key}" if path else key)
    return val


def dialogue_from_dict(rec: dict, line: int | None = None) -> Dialogue:
    """Structural decoding only; invariants are checked by :func:`validate_dialogue`."""
    if not isinstance(rec, dict):
        raise CorpusError("record must be a JSON object", line)
    schema = rec.get("schema")
    if schema != SCHEMA_VERSION:
        raise CorpusError(f"schema must be {SCHEMA_VERSION!r}, got {schema!r}", line, "schema")
    did = _require(rec, "id", str, "", line)
    narrative = _require(rec, "narrative", str, "", line)
    speakers = _require(rec, "speakers", list, "", line)
    if len(speakers) != 2 or not all(isinstance(s, str) for s in speakers):
        raise CorpusError("expected an array of two strings", line, "speakers")
    beh_raw = _require(rec, "behavior", dict, "", line)
    behavior = {}
    for spk, b in beh_raw.items():
        p = f"behavior.{spk}"
        behavior[spk] = BehaviorSpec(
            backchannels=_require(b, "backchannels", int, p, line),
            interruptions=_require(b, "interruptions", int, p, line),
            starts=_require(b, "starts", bool, p, line),
        )
    utterances = []
    for i, u in enumerate(_require(rec, "utterances", list, "", line)):
        up = f"utterances[{i}]"
        words = []
        for j, w in enumerate(_require(u, "words", list, up, line)):
            wp = f"{up}.words[{j}]"
            words.append(WordSpan(
                text=_require(w, "text", str, wp, line),
                start_s=float(_require(w, "start_s", (int, float), wp, line)),
                end_s=float(_require(w, "end_s", (int, float), wp, line)),
            ))
        utterances.append(Utterance(
            speaker=_require(u, "speaker", str, up, line),
            words=tuple(words),
            is_backchannel=_require(u, "is_backchannel", bool, up, line),
            is_interruption=_require(u, "is_interruption", bool, up, line),
        ))
    speaker_ref = None
    if rec.get("speaker_ref") is not None:
        raw = _require(rec, "speaker_ref", dict, "", line)
        for spk, ref in raw.items():
            if not isinstance(ref, str):
                raise CorpusError("expected str", line, f"speaker_ref.{spk}")
        speaker_ref = dict(raw)
    return Dialogue(did, narrative, (speakers[0], speakers[1]), behavior, tuple(utterances), speaker_ref)


def parse_corpus(stream: IO[bytes] | IO[str] | bytes | str) -> list[Dialogue]:
    """Parse a JSON Lines corpus. Blank lines are skipped.

    Raises :class:`CorpusError` on malformed JSON, schema/type errors, invariant
    violations (first violation reported) and duplicate ids.
    """
    if isinstance(stream, (bytes, str)):
        stream = io.BytesIO(stream.encode() if isinstance(stream, str) else stream)
    out: list[Dialogue] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(stream, 1):
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if not text.strip():
            continue
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as e:
            raise CorpusError(f"invalid JSON: {e.msg} (column {e.colno})", lineno) from None
        d = dialogue_from_dict(rec, lineno)
        report = validate_dialogue(d)
        if not report.ok:
            v = report.violations[0]
            raise CorpusError(v.message, lineno, v.path)
        if d.id in seen:
            raise CorpusError(f"duplicate dialogue id {d.id!r} (first on line {seen[d.id]})", lineno, "id")
        seen[d.id] = lineno
        out.append(d)
    return out


def read_corpus(path) -> list[Dialogue]:
    with open(path, "rb") as fh:
        return parse_corpus(fh)

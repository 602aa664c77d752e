"""Backchannel and interruption detection over merged utterance timelines.

Both predicates are written in terms of per-utterance critical values so the
grid search and the direct detector apply literally the same comparisons:

* backchannel: ``dur(u) <= bc_max`` and ``bc_crit(u) <= overlap_tol`` where
  ``bc_crit(u) = min over v with v.end > u.end of
  max(v.start - u.start, u.end - v.end)``
* interruption: not a backchannel and ``interruption_threshold < int_crit(u)``
  where ``int_crit(u) = max over v with v.start < u.start and v.end < u.end of
  (v.end - u.start)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from ..dialogue import Dialogue
from .timeline import Segment, Timeline, merge_timeline, word_timelines

BACKCHANNEL, INTERRUPTION = "bc", "int"


@dataclass(frozen=True)
class DetectorParams:
    split_threshold_s: float = 0.565
    interruption_threshold_s: float = 0.405
    overlap_tolerance_s: float = 0.435
    bc_max_duration_s: float = 1.0

    def __post_init__(self):
        for name in ("split_threshold_s", "interruption_threshold_s", "overlap_tolerance_s",
                     "bc_max_duration_s"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v >= 0):
                raise ValueError(f"{name} must be a number >= 0, got {v!r}")

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.split_threshold_s, self.interruption_threshold_s, self.overlap_tolerance_s)


@dataclass(frozen=True)
class Event:
    kind: str
    speaker: str
    segment: Segment
    trigger: Segment  # the opposing utterance that qualified it


@dataclass
class EventReport:
    speakers: tuple[str, str]
    events: list[Event] = field(default_factory=list)
    turn_taking: object | None = None

    def of(self, kind: str, speaker: str | None = None) -> list[Event]:
        return [e for e in self.events if e.kind == kind and (speaker is None or e.speaker == speaker)]

    def count(self, kind: str, speaker: str | None = None) -> int:
        return len(self.of(kind, speaker))


def bc_critical(u: Segment, others: Sequence[Segment]) -> tuple[float, Segment | None]:
    """Smallest overlap tolerance making ``u`` embedded in some ``v`` that outlasts it."""
    best, who = math.inf, None
    for v in others:
        if v.end_s > u.end_s:
            c = max(v.start_s - u.start_s, u.end_s - v.end_s)
            if c < best:
                best, who = c, v
    return best, who


def int_critical(u: Segment, others: Sequence[Segment]) -> tuple[float, Segment | None]:
    """Largest head start of ``u`` before the end of a ``v`` it outlasts."""
    best, who = -math.inf, None
    for v in others:
        if v.start_s < u.start_s and v.end_s < u.end_s:
            c = v.end_s - u.start_s
            if c > best:
                best, who = c, v
    return best, who


def _earliest(u: Segment, others: Sequence[Segment], ok) -> Segment:
    return min((v for v in others if ok(v)), key=lambda v: (v.start_s, v.end_s))


def classify(u: Segment, others: Sequence[Segment], params: DetectorParams) -> tuple[str, Segment] | None:
    """Kind of ``u`` against the opposing utterances, with the earliest qualifying trigger."""
    tol, thr = params.overlap_tolerance_s, params.interruption_threshold_s
    if u.duration_s <= params.bc_max_duration_s:
        crit, _ = bc_critical(u, others)
        if crit <= tol:
            return BACKCHANNEL, _earliest(
                u, others, lambda v: v.end_s > u.end_s and max(v.start_s - u.start_s, u.end_s - v.end_s) <= tol)
    crit, _ = int_critical(u, others)
    if thr < crit:
        return INTERRUPTION, _earliest(
            u, others, lambda v: v.start_s < u.start_s and v.end_s < u.end_s and thr < v.end_s - u.start_s)
    return None


def detect_events(a: Timeline, b: Timeline, params: DetectorParams = DetectorParams()) -> EventReport:
    """Classify every utterance of both (already merged) timelines."""
    report = EventReport((a.speaker, b.speaker))
    for me, other in ((a, b), (b, a)):
        for u in me.segments:
            hit = classify(u, other.segments, params)
            if hit is not None:
                report.events.append(Event(hit[0], me.speaker, u, hit[1]))
    report.events.sort(key=lambda e: (e.segment.start_s, e.speaker))
    return report


def detect_dialogue(d: Dialogue, params: DetectorParams = DetectorParams()) -> EventReport:
    """Merge the dialogue's words at the split threshold, then detect."""
    a, b = word_timelines(d)
    return detect_events(merge_timeline(a, params.split_threshold_s),
                         merge_timeline(b, params.split_threshold_s), params)


# -------------------------------------------------------------- GT comparison


@dataclass(frozen=True)
class EventErrors:
    missing_bc: int
    extra_bc: int
    missing_int: int
    extra_int: int

    @property
    def total(self) -> int:
        return self.missing_bc + self.extra_bc + self.missing_int + self.extra_int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.missing_bc, self.extra_bc, self.missing_int, self.extra_int)


def ground_truth(d: Dialogue) -> dict[str, list[tuple[str, Segment]]]:
    """Flagged utterances as (speaker, segment) per event kind."""
    gt = {BACKCHANNEL: [], INTERRUPTION: []}
    for u in d.utterances:
        if u.is_backchannel:
            gt[BACKCHANNEL].append((u.speaker, Segment(u.start_s, u.end_s, u.text)))
        if u.is_interruption:
            gt[INTERRUPTION].append((u.speaker, Segment(u.start_s, u.end_s, u.text)))
    return gt


def compare_to_ground_truth(d: Dialogue, report: EventReport) -> EventErrors:
    """A flagged utterance is found when a same-kind detection of its speaker overlaps it.

    A detection overlapping no flagged utterance of its kind and speaker is an extra.
    """
    gt = ground_truth(d)
    counts = []
    for kind in (BACKCHANNEL, INTERRUPTION):
        det = [(e.speaker, e.segment) for e in report.of(kind)]
        missing = sum(not any(s == gs and seg.overlaps(g) for s, seg in det) for gs, g in gt[kind])
        extra = sum(not any(s == gs and seg.overlaps(g) for gs, g in gt[kind]) for s, seg in det)
        counts += [missing, extra]
    return EventErrors(*counts)

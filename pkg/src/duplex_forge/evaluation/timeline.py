"""Speech segments per speaker and word merging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from ..dialogue import Dialogue


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float
    text: str = ""

    def __post_init__(self):
        if not self.end_s >= self.start_s:
            raise ValueError(f"segment ends before it starts: {self.start_s} > {self.end_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def overlaps(self, other: "Segment") -> bool:
        return self.start_s < other.end_s and other.start_s < self.end_s


@dataclass(frozen=True)
class Timeline:
    """Ordered, non-overlapping segments of one speaker."""

    speaker: str
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        for a, b in zip(segs, segs[1:]):
            if b.start_s < a.end_s:
                raise ValueError(f"{self.speaker}: segments overlap or are out of order at {b.start_s}")

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def speaking_time_s(self) -> float:
        return sum(s.duration_s for s in self.segments)

    @property
    def onset_s(self) -> float | None:
        return self.segments[0].start_s if self.segments else None

    @property
    def end_s(self) -> float:
        return self.segments[-1].end_s if self.segments else 0.0


def merge_words(words: Sequence[Segment], split_threshold_s: float) -> list[Segment]:
    """Join consecutive spans whose gap is below ``split_threshold_s``."""
    if split_threshold_s < 0:
        raise ValueError("split threshold must be >= 0")
    out: list[Segment] = []
    for w in words:
        if out and w.start_s - out[-1].end_s < split_threshold_s:
            last = out[-1]
            text = f"{last.text} {w.text}".strip()
            out[-1] = Segment(last.start_s, max(last.end_s, w.end_s), text)
        else:
            out.append(w)
    return out


def merge_timeline(tl: Timeline, split_threshold_s: float) -> Timeline:
    return Timeline(tl.speaker, tuple(merge_words(tl.segments, split_threshold_s)))


def word_timelines(d: Dialogue) -> tuple[Timeline, Timeline]:
    """Word-level timelines of both speakers in ``d.speakers`` order."""
    out = []
    for spk in d.speakers:
        words = sorted(d.words_of(spk), key=lambda w: w.start_s)
        out.append(Timeline(spk, tuple(Segment(w.start_s, w.end_s, w.text) for w in words)))
    return out[0], out[1]


def union(segments: Iterable[Segment]) -> list[tuple[float, float]]:
    """Disjoint sorted intervals covering the union of ``segments``."""
    ivs = sorted((s.start_s, s.end_s) for s in segments)
    out: list[list[float]] = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def intersection_length(a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]) -> float:
    """Total overlap of two sorted disjoint interval lists."""
    i = j = 0
    total = 0.0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total

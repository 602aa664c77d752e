"""IPU / pause / gap / overlap accounting for a two-speaker timeline."""

from __future__ import annotations

from dataclasses import dataclass

from .timeline import Segment, Timeline, intersection_length, union

DEFAULT_IPU_SILENCE_S = 0.2


@dataclass(frozen=True)
class TurnTakingStats:
    duration_s: float
    ipu_s: float
    pause_s: float
    gap_s: float
    overlap_s: float
    voiced_s: tuple[float, float]
    unvoiced_s: tuple[float, float]
    n_ipus: tuple[int, int]

    def per_minute(self, name: str) -> float:
        if self.duration_s <= 0:
            raise ValueError("per-minute rates need a positive duration")
        return getattr(self, name) * 60.0 / self.duration_s

    def rates(self) -> dict[str, float]:
        return {k: self.per_minute(k) for k in ("ipu_s", "pause_s", "gap_s", "overlap_s")}


def ipus(tl: Timeline, silence_threshold_s: float = DEFAULT_IPU_SILENCE_S) -> list[tuple[float, float]]:
    """Maximal runs of one speaker's speech whose internal silences are below the threshold."""
    out: list[list[float]] = []
    for a, b in union(tl.segments):
        if out and a - out[-1][1] < silence_threshold_s:
            out[-1][1] = b
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _complement(ivs: list[tuple[float, float]], duration: float) -> float:
    total, cursor = 0.0, 0.0
    for a, b in ivs:
        if a > cursor:
            total += min(a, duration) - cursor
        cursor = max(cursor, b)
    if duration > cursor:
        total += duration - cursor
    return total


def turn_taking(a: Timeline, b: Timeline, ipu_silence_threshold_s: float = DEFAULT_IPU_SILENCE_S,
                duration_s: float | None = None) -> TurnTakingStats:
    """Cumulative durations; ``duration_s`` defaults to the last speech end (timelines start at 0).

    Silences between consecutive blocks of joint speech are a pause when the
    same single speaker ends the block before and starts the block after,
    and a gap otherwise. Leading and trailing silence count as neither.
    """
    ia, ib = ipus(a, ipu_silence_threshold_s), ipus(b, ipu_silence_threshold_s)
    end = max(a.end_s, b.end_s)
    duration = end if duration_s is None else float(duration_s)
    if duration < end:
        raise ValueError(f"duration {duration} shorter than the last segment end {end}")
    tagged = [(s, e, 0) for s, e in ia] + [(s, e, 1) for s, e in ib]
    blocks = union(Segment(s, e) for s, e, _ in tagged)
    pause = gap = 0.0
    for (s0, e0), (s1, e1) in zip(blocks, blocks[1:]):
        enders = {who for s, e, who in tagged if e == e0 and s0 <= s}
        starters = {who for s, e, who in tagged if s == s1 and e <= e1}
        if len(enders) == 1 and enders == starters:
            pause += s1 - e0
        else:
            gap += s1 - e0
    ua, ub = union(a.segments), union(b.segments)
    voiced = (sum(e - s for s, e in ua), sum(e - s for s, e in ub))
    unvoiced = (_complement(ua, duration), _complement(ub, duration))
    return TurnTakingStats(
        duration_s=duration,
        ipu_s=sum(e - s for s, e in ia) + sum(e - s for s, e in ib),
        pause_s=pause,
        gap_s=gap,
        overlap_s=intersection_length(ua, ub),
        voiced_s=voiced,
        unvoiced_s=unvoiced,
        n_ipus=(len(ia), len(ib)),
    )

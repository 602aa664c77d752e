"""Scalar dialogue metrics: initiation, speaking balance, WER, speaker similarity, correlation."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import beta as beta_fn

from .timeline import Timeline, union

A, B, TIE, NONE = "A", "B", "tie", "none"


# ---------------------------------------------------------------- initiation


def first_speaker(a: Timeline, b: Timeline) -> str:
    """``A``/``B`` for a strictly earlier onset, ``tie`` for equal onsets, ``none`` for silence."""
    oa, ob = a.onset_s, b.onset_s
    if oa is None and ob is None:
        return NONE
    if ob is None or (oa is not None and oa < ob):
        return A
    if oa is None or ob < oa:
        return B
    return TIE


def correct_start(first: str, a_starts: bool, b_starts: bool) -> bool:
    """Whether the observed initiator matches the prompts.

    One prompted starter: that agent must go first. Both prompted: only a tie
    counts. Neither prompted: only a silent conversation counts.
    """
    if a_starts and b_starts:
        return first == TIE
    if a_starts:
        return first == A
    if b_starts:
        return first == B
    return first == NONE


def correct_start_rate(outcomes: Iterable[tuple[str, bool, bool]]) -> float:
    """Percentage of (first_speaker, a_starts, b_starts) outcomes that are correct."""
    flags = [correct_start(*o) for o in outcomes]
    if not flags:
        raise ValueError("correct-start rate of an empty set")
    return 100.0 * sum(flags) / len(flags)


def speaking_time_diff(a: Timeline, b: Timeline) -> float:
    ta = sum(e - s for s, e in union(a.segments))
    tb = sum(e - s for s, e in union(b.segments))
    return abs(ta - tb)


# ----------------------------------------------------------------------- WER


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> float:
    """Word error rate in percent."""
    if isinstance(reference, str):
        reference = reference.split()
    if isinstance(hypothesis, str):
        hypothesis = hypothesis.split()
    if len(reference) == 0:
        raise ValueError("WER needs a non-empty reference")
    return 100.0 * edit_distance(list(reference), list(hypothesis)) / len(reference)


# ------------------------------------------------------------ speaker vectors


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine of a zero vector")
    if u.shape != v.shape:
        raise ValueError(f"vector shapes differ: {u.shape} vs {v.shape}")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def speaker_similarity(reference, segments: Sequence) -> tuple[float, float]:
    """(mean cosine of segment vectors to the reference, 1 - cos(first, last))."""
    if len(segments) == 0:
        raise ValueError("no segment vectors")
    sims = [cosine(reference, s) for s in segments]
    return float(np.mean(sims)), 1.0 - cosine(segments[0], segments[-1])


def mean_speaker_similarity(pairs: Iterable[tuple[object, Sequence]]) -> tuple[float, float]:
    """Average of :func:`speaker_similarity` over speakers."""
    res = [speaker_similarity(r, s) for r, s in pairs]
    if not res:
        raise ValueError("no speakers")
    return float(np.mean([r[0] for r in res])), float(np.mean([r[1] for r in res]))


class SyntheticSpeakerEncoder:
    """Stand-in embedding provider: fixed per-slot vector plus seeded noise per segment."""

    def __init__(self, dim: int = 16, noise: float = 0.5, seed: int = 0):
        self.dim = dim
        self.noise = noise
        self.seed = seed

    def reference(self, slot: str) -> np.ndarray:
        rng = np.random.default_rng(zlib.crc32(slot.encode("utf-8")))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def __call__(self, slot: str, key: str) -> np.ndarray:
        rng = np.random.default_rng([self.seed, zlib.crc32(f"{slot}|{key}".encode("utf-8"))])
        return self.reference(slot) + self.noise * rng.standard_normal(self.dim) / math.sqrt(self.dim)


# ---------------------------------------------------------------- correlation


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p: float
    n: int


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("correlation undefined for zero variance")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def null_tail(r: float, n: int) -> float:
    """P(R >= |r|) under the null density (1 - t^2)^((n-4)/2) / B(1/2, (n-2)/2)."""
    if n < 3:
        raise ValueError("need n >= 3")
    a = abs(r)
    if a >= 1.0:
        return 0.0
    k = (n - 4) / 2.0
    # (1 - t^2)^k = (1 - t)^k (1 + t)^k; the endpoint factor goes into the weight
    val, _ = integrate.quad(lambda t: (1.0 + t) ** k, a, 1.0, weight="alg", wvar=(0.0, k),
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val / beta_fn(0.5, (n - 2) / 2.0)


def pearson_exact(x, y) -> CorrelationResult:
    """Pearson r with its two-sided p-value from the exact null distribution."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError("pearson_exact needs n >= 3")
    r = pearson_r(x, y)
    p = float(min(1.0, max(0.0, 2.0 * null_tail(r, x.size))))
    return CorrelationResult(r, p, int(x.size))


def pearson_p_n3(r: float) -> float:
    """Closed form for n = 3: 1 - (2/pi) asin|r|."""
    return 1.0 - 2.0 / math.pi * math.asin(min(1.0, abs(r)))

"""Exhaustive detector-threshold search against flagged dialogues.

For a fixed split threshold every utterance reduces to three numbers
(duration, backchannel critical tolerance, interruption critical value), so
the whole (interruption threshold x overlap tolerance) plane is evaluated
with array comparisons. Split values are partitioned across worker
processes; the reduction is an argmin over the concatenated counts, so the
answer does not depend on the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dialogue import Dialogue
from .events import (
    BACKCHANNEL,
    INTERRUPTION,
    DetectorParams,
    EventErrors,
    bc_critical,
    compare_to_ground_truth,
    detect_dialogue,
    ground_truth,
    int_critical,
)
from .timeline import merge_timeline, word_timelines

DEFAULT_RANGES = {
    "split": (0.20, 0.90),
    "interrupt": (0.10, 0.70),
    "overlap": (0.05, 0.50),
}
DEFAULT_STEP = 0.005
CATEGORIES = ("missing_bc", "extra_bc", "missing_int", "extra_int")


def axis(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid ``lo, lo+step, ..., hi`` with values rounded to decimal."""
    if step <= 0:
        raise ValueError("step must be > 0")
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi}]")
    n = int(round((hi - lo) / step)) + 1
    return np.array([round(lo + i * step, 9) for i in range(n)])


def grid_shape(ranges=DEFAULT_RANGES, step: float = DEFAULT_STEP) -> tuple[int, int, int]:
    return tuple(len(axis(*ranges[k], step)) for k in ("split", "interrupt", "overlap"))


def _segment_table(d: Dialogue, split: float):
    """Merged segments of both speakers with their critical values."""
    a, b = word_timelines(d)
    a, b = merge_timeline(a, split), merge_timeline(b, split)
    rows = []
    for me, other in ((a, b), (b, a)):
        for u in me.segments:
            rows.append((me.speaker, u, u.duration_s, bc_critical(u, other.segments)[0],
                         int_critical(u, other.segments)[0]))
    return rows


def _overlap_matrix(gt, rows) -> np.ndarray:
    return np.array([[spk == gs and seg.overlaps(g) for spk, seg, *_ in rows] for gs, g in gt],
                    dtype=bool).reshape(len(gt), len(rows))


def _dialogue_counts(d: Dialogue, split: float, thr: np.ndarray, tol: np.ndarray, bc_max: float) -> np.ndarray:
    """(4, J, K) error counts of one dialogue at one split value."""
    J, K = len(thr), len(tol)
    out = np.zeros((4, J, K), dtype=np.int64)
    rows = _segment_table(d, split)
    gt = ground_truth(d)
    if rows:
        dur = np.array([r[2] for r in rows])
        bcc = np.array([r[3] for r in rows])
        intc = np.array([r[4] for r in rows])
        is_bc = (dur <= bc_max)[:, None] & (bcc[:, None] <= tol[None, :])                 # (S, K)
        is_int = (~is_bc)[:, None, :] & (thr[None, :, None] < intc[:, None, None])        # (S, J, K)
    else:
        is_bc = np.zeros((0, K), dtype=bool)
        is_int = np.zeros((0, J, K), dtype=bool)
    ob = _overlap_matrix(gt[BACKCHANNEL], rows).astype(np.int64)
    oi = _overlap_matrix(gt[INTERRUPTION], rows).astype(np.int64)
    # missing: flagged utterances no detection covers; extra: detections covering no flag
    found_bc = (ob @ is_bc) > 0                                      # (G, K)
    out[0] = (len(gt[BACKCHANNEL]) - found_bc.sum(axis=0))[None, :]
    out[1] = (is_bc & ~(ob.sum(axis=0) > 0)[:, None]).sum(axis=0)[None, :]
    found_int = np.einsum("gs,sjk->gjk", oi, is_int.astype(np.int64)) > 0
    out[2] = len(gt[INTERRUPTION]) - found_int.sum(axis=0)
    out[3] = (is_int & ~(oi.sum(axis=0) > 0)[:, None, None]).sum(axis=0)
    return out


def _scan_slice(args) -> np.ndarray:
    corpus, splits, thr, tol, bc_max = args
    out = np.zeros((4, len(splits), len(thr), len(tol)), dtype=np.int64)
    for i, split in enumerate(splits):
        for d in corpus:
            out[:, i] += _dialogue_counts(d, float(split), thr, tol, bc_max)
    return out


@dataclass
class GridSearchResult:
    best: DetectorParams
    objective: int
    counts: np.ndarray            # (4, n_split, n_interrupt, n_overlap), summed over dialogues
    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    per_dialogue: list[EventErrors]

    @property
    def objective_grid(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n_configs(self) -> int:
        return int(np.prod(self.counts.shape[1:]))

    def summary(self) -> dict[str, tuple[float, float]]:
        """Mean and standard deviation per dialogue of each error category at the best params."""
        arr = np.array([e.as_tuple() for e in self.per_dialogue], dtype=float).reshape(-1, 4)
        return {c: (float(arr[:, i].mean()), float(arr[:, i].std())) for i, c in enumerate(CATEGORIES)}


def grid_search(corpus: Sequence[Dialogue], ranges=DEFAULT_RANGES, step: float = DEFAULT_STEP,
                bc_max_duration_s: float = 1.0, workers: int = 1) -> GridSearchResult:
    """Scan every (split, interrupt, overlap) triple; ties go to the smallest triple."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("grid search needs a non-empty labelled corpus")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    splits = axis(*ranges["split"], step)
    thr = axis(*ranges["interrupt"], step)
    tol = axis(*ranges["overlap"], step)
    chunks = [c for c in np.array_split(splits, min(workers, len(splits))) if len(c)]
    jobs = [(corpus, c, thr, tol, bc_max_duration_s) for c in chunks]
    if workers == 1:
        parts = [_scan_slice(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_scan_slice, jobs))
    counts = np.concatenate(parts, axis=1)
    obj = counts.sum(axis=0)
    # argmin returns the first minimum in C order, i.e. the lexicographically smallest triple
    i, j, k = np.unravel_index(int(np.argmin(obj)), obj.shape)
    best = DetectorParams(float(splits[i]), float(thr[j]), float(tol[k]), bc_max_duration_s)
    per = [compare_to_ground_truth(d, detect_dialogue(d, best)) for d in corpus]
    return GridSearchResult(best, int(obj[i, j, k]), counts, (splits, thr, tol), per)


def objective(corpus: Sequence[Dialogue], params: DetectorParams) -> int:
    """Total missing + extra events of the direct detector over ``corpus``."""
    return sum(compare_to_ground_truth(d, detect_dialogue(d, params)).total for d in corpus)

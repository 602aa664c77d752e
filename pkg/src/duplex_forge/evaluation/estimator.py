"""Estimator wrapper: fit calibrates thresholds by grid search, predict detects events."""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .events import DetectorParams, compare_to_ground_truth, detect_dialogue
from .gridsearch import DEFAULT_RANGES, DEFAULT_STEP, grid_search


class EventDetector(BaseEstimator):
    """Backchannel / interruption detector over dialogues.

    Unfitted, ``predict`` uses the constructor thresholds; after ``fit`` it
    uses the grid-search optimum stored in ``params_``.
    """

    def __init__(self, split_threshold_s=0.565, interruption_threshold_s=0.405, overlap_tolerance_s=0.435,
                 bc_max_duration_s=1.0, search_ranges=None, step=DEFAULT_STEP, workers=1):
        self.split_threshold_s = split_threshold_s
        self.interruption_threshold_s = interruption_threshold_s
        self.overlap_tolerance_s = overlap_tolerance_s
        self.bc_max_duration_s = bc_max_duration_s
        self.search_ranges = search_ranges
        self.step = step
        self.workers = workers

    def _params(self) -> DetectorParams:
        if hasattr(self, "params_"):
            return self.params_
        return DetectorParams(self.split_threshold_s, self.interruption_threshold_s, self.overlap_tolerance_s,
                              self.bc_max_duration_s)

    def fit(self, X, y=None):
        self._params()  # validates the constructor values
        res = grid_search(list(X), self.search_ranges or DEFAULT_RANGES, self.step, self.bc_max_duration_s,
                          self.workers)
        self.search_ = res
        self.params_ = res.best
        self.objective_ = res.objective
        return self

    def predict(self, X):
        p = self._params()
        return [detect_dialogue(d, p) for d in X]

    def score(self, X, y=None) -> float:
        """Negative total of missing plus extra events (higher is better)."""
        p = self._params()
        return -float(sum(compare_to_ground_truth(d, detect_dialogue(d, p)).total for d in X))

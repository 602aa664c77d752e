"""Behavioural evaluation: timelines, event detection, turn-taking, scalar metrics, reports."""

from .estimator import EventDetector
from .events import (
    BACKCHANNEL,
    INTERRUPTION,
    DetectorParams,
    Event,
    EventErrors,
    EventReport,
    compare_to_ground_truth,
    detect_dialogue,
    detect_events,
)
from .gridsearch import GridSearchResult, grid_search, grid_shape
from .metrics import (
    CorrelationResult,
    SyntheticSpeakerEncoder,
    correct_start,
    correct_start_rate,
    first_speaker,
    pearson_exact,
    speaker_similarity,
    speaking_time_diff,
    wer,
)
from .report import Report, Table, evaluate_run, fixture_report
from .timeline import Segment, Timeline, merge_words, word_timelines
from .turntaking import TurnTakingStats, turn_taking

__all__ = [
    "BACKCHANNEL", "INTERRUPTION", "CorrelationResult", "DetectorParams", "Event", "EventDetector",
    "EventErrors", "EventReport", "GridSearchResult", "Report", "Segment", "SyntheticSpeakerEncoder", "Table",
    "Timeline", "TurnTakingStats", "compare_to_ground_truth", "correct_start", "correct_start_rate",
    "detect_dialogue", "detect_events", "evaluate_run", "first_speaker", "fixture_report", "grid_search",
    "grid_shape", "merge_words", "pearson_exact", "speaker_similarity", "speaking_time_diff", "turn_taking",
    "wer", "word_timelines",
]

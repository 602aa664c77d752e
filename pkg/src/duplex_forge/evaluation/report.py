"""Report tables for self-talk runs, plus the published reference rows.

Three layouts: general modelling (perplexities, quality, WER, speaking-time
difference), instruction following (initiation, speaker similarity and
drift, narrative, BC/interruption correlation) and turn-taking durations per
minute. Each renders as CSV and as an aligned plain-text table.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..codec import CodebookLayout, default_layout, transcribe_frames, word_symbol
from ..streams import SPECIAL_IDS, Vocabulary
from .events import BACKCHANNEL, INTERRUPTION, DetectorParams, detect_events
from .metrics import (
    correct_start_rate,
    first_speaker,
    mean_speaker_similarity,
    pearson_exact,
    speaking_time_diff,
    wer,
)
from .timeline import merge_timeline
from .turntaking import DEFAULT_IPU_SILENCE_S, turn_taking

NA = "n/a"

GENERAL_COLUMNS = ("Model", "PPL DSU", "PPL Text", "UTMOS", "WER % audio/text", "Avg. Speaking Diff (s)")
INSTRUCTION_COLUMNS = ("Model", "Correct Start (%)", "Spk. Sim. (cos)", "Spk. Drift (1-cos)",
                       "Narrative (1-5)", "BC Corr. (per dial.)", "Inter. Corr. (per dial.)")
TURN_COLUMNS = ("Model", "", "IPU", "Pause", "Gap", "Overl.")

# published reference rows, kept as the exact printed strings
FIXTURE_GENERAL = [("Behaviour-SD Dialogues Testset", "-", "-", "3.78", "4.5", "15.44")]
FIXTURE_INSTRUCTION = [
    ("Behaviour-SD Dialogues Testset", "100.00", "0.62", "0.62", "4.04", "0.92", "0.74"),
    ("Lower Baseline", "50.0", "0.35", "0.75", "1.26", "-", "-"),
]
FIXTURE_TURNS = [
    ("Best non-casc.", "dGSLM", "41.4s", "13.8s", "10.7s", "6.1s"),
    ("Best casc.", "dGSLM", "54.8s", "0.0s", "5.3s", "0.0s"),
    ("Ground Truth", "dGSLM", "53.5s", "5.5s", "4.4s", "3.6s"),
    ("Moshi", "Moshi", "50.8s", "7.0s", "4.5s", "4.1s"),
    ("Ground Truth", "Moshi", "51.1s", "6.4s", "4.2s", "3.3s"),
    ("Ours", "(best)", "59.3s", "10.4s", "3.0s", "5.4s"),
    ("Ground Truth", "(Beh.-SD)", "55.8s", "10.8s", "3.8s", "3.0s"),
]


@dataclass
class Table:
    title: str
    columns: tuple[str, ...]
    rows: list[tuple[str, ...]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        widths = [max(len(str(r[i])) for r in [self.columns, *self.rows]) for i in range(len(self.columns))]

        def line(cells):
            out = [str(cells[0]).ljust(widths[0])]
            out += [str(c).rjust(w) for c, w in zip(cells[1:], widths[1:])]
            return "  ".join(out).rstrip()

        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        body = [self.title, rule, line(self.columns), rule] + [line(r) for r in self.rows] + [rule]
        return "\n".join(body) + "\n"


@dataclass
class Report:
    general: Table
    instruction: Table
    turns: Table
    details: dict = field(default_factory=dict)

    def tables(self) -> list[Table]:
        return [self.general, self.instruction, self.turns]

    def to_text(self) -> str:
        return "\n".join(t.to_text() for t in self.tables())


def fixture_report() -> Report:
    return Report(Table("General modelling", GENERAL_COLUMNS, list(FIXTURE_GENERAL)),
                  Table("Instruction following", INSTRUCTION_COLUMNS, list(FIXTURE_INSTRUCTION)),
                  Table("Turn-taking (cumulated durations per minute)", TURN_COLUMNS, list(FIXTURE_TURNS)))


# ------------------------------------------------------------------ computed


def fmt(x, digits: int = 2, suffix: str = "") -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return NA
    return f"{x:.{digits}f}{suffix}"


@dataclass(frozen=True)
class AgentPrompt:
    """What one agent was asked to do."""
    slot: str
    starts: bool
    backchannels: int
    interruptions: int

    @classmethod
    def from_dict(cls, d: dict) -> "AgentPrompt":
        return cls(str(d["slot"]), bool(d["starts"]), int(d["backchannels"]), int(d["interruptions"]))


def lexicon_from_vocab(vocab: Vocabulary, alphabet: int = 64) -> dict[int, str]:
    lex: dict[int, str] = {}
    for i in range(len(SPECIAL_IDS), len(vocab)):
        lex.setdefault(word_symbol(vocab.token(i), alphabet), vocab.token(i))
    return lex


def _record_prompts(rec, prompts) -> tuple[AgentPrompt, AgentPrompt]:
    if prompts is not None and rec.id in prompts:
        return prompts[rec.id]
    meta = rec.meta.get("prompts")
    if not meta:
        raise ValueError(f"conversation {rec.id}: no prompt information")
    return AgentPrompt.from_dict(meta[0]), AgentPrompt.from_dict(meta[1])


def _corr(x, y):
    try:
        return pearson_exact(x, y).r
    except ValueError:
        return None


def evaluate_run(records: Sequence, *, params: DetectorParams = DetectorParams(),
                 prompts: dict | None = None, vocab: Vocabulary | None = None,
                 layout: CodebookLayout | None = None, perplexity: tuple | None = None,
                 speaker_encoder=None, judge: Callable | None = None,
                 ipu_silence_threshold_s: float = DEFAULT_IPU_SILENCE_S, label: str = "run",
                 alphabet: int = 64) -> Report:
    """All computed tables for a set of conversation records.

    ``perplexity`` is an optional (dau, text) pair from the trained model.
    ``speaker_encoder`` must provide ``reference(slot)`` and ``__call__(slot, key)``.
    ``judge(record)`` may return a 1-5 narrative score; without it the column is n/a.
    """
    from ..engine import record_to_timelines  # late import: engine depends on this package
    if not records:
        raise ValueError("no conversation records")
    layout = layout or default_layout()
    lexicon = lexicon_from_vocab(vocab, alphabet) if vocab is not None else None
    diffs, wers, starts, sims, narr = [], [], [], [], []
    bc_x, bc_y, in_x, in_y = [], [], [], []
    tt = []
    for rec in records:
        pa, pb = _record_prompts(rec, prompts)
        ta, tb = record_to_timelines(rec, layout, alphabet)
        diffs.append(speaking_time_diff(ta, tb))
        starts.append((first_speaker(ta, tb), pa.starts, pb.starts))
        ma, mb = merge_timeline(ta, params.split_threshold_s), merge_timeline(tb, params.split_threshold_s)
        ev = detect_events(ma, mb, params)
        for who, p in (("A", pa), ("B", pb)):
            bc_x.append(p.backchannels)
            bc_y.append(ev.count(BACKCHANNEL, who))
            in_x.append(p.interruptions)
            in_y.append(ev.count(INTERRUPTION, who))
        if rec.n_frames * layout.frame_duration_s > 0:
            tt.append(turn_taking(ta, tb, ipu_silence_threshold_s,
                                  duration_s=rec.n_frames * layout.frame_duration_s))
        if lexicon is not None:
            for frames, text in ((rec.frames_a, rec.text_a), (rec.frames_b, rec.text_b)):
                ref = [vocab.token(i) for i in text if i not in SPECIAL_IDS]
                if ref:
                    wers.append(wer(ref, transcribe_frames(frames, layout, lexicon, alphabet)))
        if speaker_encoder is not None:
            for who, p, tl in (("A", pa, ta), ("B", pb, tb)):
                if len(tl):
                    vecs = [speaker_encoder(p.slot, f"{rec.id}:{who}:{i}") for i in range(len(tl))]
                    sims.append((speaker_encoder.reference(p.slot), vecs))
        if judge is not None:
            narr.append(float(judge(rec)))

    ppl_dau, ppl_text = perplexity if perplexity is not None else (None, None)
    general = Table("General modelling", GENERAL_COLUMNS, [
        (label, fmt(ppl_dau), fmt(ppl_text), NA, fmt(float(np.mean(wers)) if wers else None),
         fmt(float(np.mean(diffs))))])
    sim, drift = mean_speaker_similarity(sims) if sims else (None, None)
    instruction = Table("Instruction following", INSTRUCTION_COLUMNS, [
        (label, fmt(correct_start_rate(starts)), fmt(sim), fmt(drift),
         fmt(float(np.mean(narr))) if narr else NA, fmt(_corr(bc_x, bc_y)), fmt(_corr(in_x, in_y)))])
    if tt:
        rates = {k: float(np.mean([s.per_minute(k) for s in tt])) for k in ("ipu_s", "pause_s", "gap_s", "overlap_s")}
        row = (label, "", fmt(rates["ipu_s"], 1, "s"), fmt(rates["pause_s"], 1, "s"),
               fmt(rates["gap_s"], 1, "s"), fmt(rates["overlap_s"], 1, "s"))
    else:
        row = (label, "", NA, NA, NA, NA)
    turns = Table("Turn-taking (cumulated durations per minute)", TURN_COLUMNS, [row])
    details = {"n_conversations": len(records), "bc_prompted": bc_x, "bc_detected": bc_y,
               "int_prompted": in_x, "int_detected": in_y, "starts": starts}
    return Report(general, instruction, turns, details)

import csv
import io

import pytest

from duplex_forge.engine import converse, waiting_agent
from duplex_forge.evaluation import DetectorParams, SyntheticSpeakerEncoder, evaluate_run, fixture_report
from duplex_forge.evaluation.report import AgentPrompt, Table

GENERAL_TEXT = """\
General modelling
--------------------------------------------------------------------------------------------------
Model                           PPL DSU  PPL Text  UTMOS  WER % audio/text  Avg. Speaking Diff (s)
--------------------------------------------------------------------------------------------------
Behaviour-SD Dialogues Testset        -         -   3.78               4.5                   15.44
--------------------------------------------------------------------------------------------------
"""

OURS_LINE = "Ours               (best)  59.3s  10.4s   3.0s    5.4s"


def test_general_fixture_byte_exact():
    assert fixture_report().general.to_text() == GENERAL_TEXT


def test_turn_fixture_row():
    lines = fixture_report().turns.to_text().splitlines()
    assert OURS_LINE in lines
    assert lines[2].split() == ["Model", "IPU", "Pause", "Gap", "Overl."]


def test_instruction_fixture_csv():
    rows = list(csv.reader(io.StringIO(fixture_report().instruction.to_csv())))
    assert rows[1] == ["Behaviour-SD Dialogues Testset", "100.00", "0.62", "0.62", "4.04", "0.92", "0.74"]
    assert rows[2] == ["Lower Baseline", "50.0", "0.35", "0.75", "1.26", "-", "-"]


def test_table_alignment():
    t = Table("T", ("name", "x"), [("a", "1.5"), ("long name", "10.25")])
    assert t.to_text().splitlines()[3:6] == ["-" * 16, "a            1.5", "long name  10.25"]


def toy_records():
    recs = []
    # A opens and talks, B backchannels once inside A's turn, then takes over
    spec = [((0, 40, 3), (15, 5, 4), True, False), ((30, 10, 5), (2, 20, 6), False, True)]
    for i, (wa, wb, sa, sb) in enumerate(spec):
        prompts = [AgentPrompt("spk-a", sa, 1, 0).__dict__, AgentPrompt("spk-b", sb, 0, 1).__dict__]
        recs.append(converse(waiting_agent(*wa), waiting_agent(*wb), 60, conv_id=f"c{i}",
                             meta={"prompts": prompts}))
    recs.append(converse(waiting_agent(5, 10, 3), waiting_agent(20, 30, 4), 60, conv_id="c2",
                         meta={"prompts": [AgentPrompt("spk-a", True, 2, 1).__dict__,
                                           AgentPrompt("spk-b", False, 1, 0).__dict__]}))
    return recs


def test_toy_run_populates_computed_columns():
    rep = evaluate_run(toy_records(), params=DetectorParams(), perplexity=(12.5, 40.0),
                       speaker_encoder=SyntheticSpeakerEncoder(seed=0), label="toy")
    gen = rep.general.rows[0]
    assert gen[:3] == ("toy", "12.50", "40.00") and gen[3] == "n/a"
    inst = rep.instruction.rows[0]
    assert inst[1] == "100.00"
    assert inst[4] == "n/a"
    assert all(c != "n/a" for c in inst[2:4])
    turns = rep.turns.rows[0]
    assert all(c.endswith("s") for c in turns[2:])
    assert rep.details["bc_detected"][:2] == [0, 1]


def test_judge_hook_fills_narrative():
    rep = evaluate_run(toy_records(), judge=lambda rec: 4.0)
    assert rep.instruction.rows[0][4] == "4.00"


def test_missing_prompts_rejected():
    rec = converse(waiting_agent(0, 5, 3), waiting_agent(0, 5, 4), 10)
    with pytest.raises(ValueError):
        evaluate_run([rec])
    with pytest.raises(ValueError):
        evaluate_run([])

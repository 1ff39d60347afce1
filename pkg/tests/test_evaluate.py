"""Evaluation protocols: gold-echo oracles, error propagation, TSR/DSR."""

from __future__ import annotations

import pytest

from todkit.data import Dataset
from todkit.evaluate import (
    EchoPredictor,
    ScriptedPredictor,
    evaluate_end_to_end,
    evaluate_turn_by_turn,
    extract_user_utterance,
    gold_contexts,
    tsr_dsr,
)
from todkit.stateformat import SubtaskKind, render_subtask_input


def test_gold_echo_turn_by_turn_is_perfect(clean_dataset):
    report = evaluate_turn_by_turn(clean_dataset, EchoPredictor(clean_dataset))
    assert report.dst_acc == pytest.approx(100.0)
    assert report.da_acc == pytest.approx(100.0)
    assert report.bleu == pytest.approx(100.0)
    assert len(report.trace) == 20


def test_gold_echo_end_to_end_is_perfect(clean_dataset, clean_db):
    report = evaluate_end_to_end(clean_dataset, EchoPredictor(clean_dataset), clean_db)
    for name in ("jga", "tsr", "dsr", "api_acc", "daa", "bleu"):
        assert getattr(report, name) == pytest.approx(100.0), name
    assert report.ser == pytest.approx(0.0)


def test_gold_echo_on_demo_fixture(demo_dataset, demo_db, demo_vm):
    report = evaluate_end_to_end(demo_dataset, EchoPredictor(demo_dataset),
                                 demo_db, demo_vm)
    assert report.jga == pytest.approx(100.0)
    assert report.api_acc == pytest.approx(100.0)
    assert report.tsr == pytest.approx(100.0)
    assert report.dsr == pytest.approx(100.0)
    assert report.ser == pytest.approx(0.0)


def test_constant_null_dst_scores_zero(clean_dataset):
    class NullPredictor:
        concurrent_safe = True

        def __call__(self, kind, rendered_input):
            return {SubtaskKind.DST: "null", SubtaskKind.API: "no",
                    SubtaskKind.DA: "( hotel ) general",
                    SubtaskKind.RG: "ok"}[kind]

    report = evaluate_turn_by_turn(clean_dataset, NullPredictor())
    assert report.dst_acc == pytest.approx(0.0)  # every gold state is non-empty


def test_scripted_predictor_wrong_on_one_of_four_turns(clean_dataset):
    one_dialogue = Dataset((clean_dataset.dialogues[0],))
    predictor = ScriptedPredictor.from_dataset(one_dialogue)
    contexts = gold_contexts(one_dialogue.dialogues[0])
    # corrupt the DST answer for turn 2 only
    rendered = render_subtask_input(SubtaskKind.DST, contexts[2][SubtaskKind.DST])
    predictor.override(SubtaskKind.DST, rendered, '( hotel ) area " wrong "')
    report = evaluate_turn_by_turn(one_dialogue, predictor)
    assert report.dst_acc == pytest.approx(80.0)  # 4 of 5 turns correct


def test_end_to_end_carries_corruption_forward(clean_dataset, clean_db):
    predictor = ScriptedPredictor.from_dataset(clean_dataset)
    dialogue = clean_dataset.dialogues[0]
    contexts = gold_contexts(dialogue)
    rendered = render_subtask_input(SubtaskKind.DST, contexts[0][SubtaskKind.DST])
    predictor.override(SubtaskKind.DST, rendered, '( hotel ) area " riverside "')

    tbt = evaluate_turn_by_turn(clean_dataset, predictor)
    e2e = evaluate_end_to_end(clean_dataset, predictor, clean_db)

    # turn-by-turn only loses the corrupted turn
    assert tbt.dst_acc == pytest.approx(100.0 * 19 / 20)
    # end-to-end: every turn of the corrupted dialogue sees a wrong context
    assert e2e.jga == pytest.approx(100.0 * 15 / 20)
    assert e2e.jga < tbt.dst_acc


def test_predictor_exception_recorded_as_miss(clean_dataset):
    class FlakyPredictor:
        concurrent_safe = True

        def __call__(self, kind, rendered_input):
            raise RuntimeError("model server down")

    report = evaluate_turn_by_turn(clean_dataset, FlakyPredictor())
    assert report.dst_acc == pytest.approx(0.0)
    assert report.da_acc == pytest.approx(0.0)
    assert all(row["dst"]["error"] for row in report.trace)


def test_unparseable_outputs_score_zero_not_raise(clean_dataset, clean_db):
    class GarbagePredictor:
        concurrent_safe = True

        def __call__(self, kind, rendered_input):
            return ">>> not ( parseable"

    tbt = evaluate_turn_by_turn(clean_dataset, GarbagePredictor())
    assert tbt.dst_acc == 0.0 and tbt.da_acc == 0.0
    e2e = evaluate_end_to_end(clean_dataset, GarbagePredictor(), clean_db)
    assert e2e.jga == 0.0 and e2e.api_acc == 0.0 and e2e.daa == 0.0
    # the closing turn of each dialogue has no gold entities, so 16/20
    # responses are entity errors
    assert e2e.ser == pytest.approx(80.0)


def test_empty_dataset_reports_nulls():
    report = evaluate_turn_by_turn(Dataset(), lambda kind, text: "")
    assert report.dst_acc is None and report.bleu is None
    obj = report.to_obj()
    assert obj["jga"] is None and obj["trace"] == []


def test_pipeline_deterministic(clean_dataset, clean_db):
    predictor = EchoPredictor(clean_dataset)
    first = evaluate_end_to_end(clean_dataset, predictor, clean_db)
    second = evaluate_end_to_end(clean_dataset, predictor, clean_db)
    assert first.to_obj() == second.to_obj()


def test_extract_user_utterance():
    rendered = ("DST: <state> null <endofstate> <history> AGENT_ACTS: ( a ) general "
                "USER: where is it? <endofhistory>")
    assert extract_user_utterance(rendered) == "where is it?"


# ---------------------------------------------------------------------------
# TSR / DSR from traces


def _trace_row(dialogue_id, domains):
    return {"dialogue_id": dialogue_id,
            "domains": {d: {"api_ok": ok_api, "entities_ok": ok_ent}
                        for d, (ok_api, ok_ent) in domains.items()}}


def test_tsr_dsr_all_perfect():
    trace = [_trace_row("d0", {"hotel": (True, True)}),
             _trace_row("d0", {"hotel": (True, True)})]
    assert tsr_dsr(trace) == (100.0, 100.0)


def test_tsr_dsr_one_of_two_tasks_fails():
    trace = [_trace_row("d0", {"hotel": (True, True), "taxi": (False, True)})]
    tsr, dsr = tsr_dsr(trace)
    assert tsr == pytest.approx(50.0)
    assert dsr == pytest.approx(0.0)


def test_tsr_dsr_two_dialogues_one_failing():
    trace = [
        _trace_row("d0", {"hotel": (True, True)}),
        _trace_row("d0", {"hotel": (True, True)}),
        _trace_row("d1", {"hotel": (True, False)}),
    ]
    tsr, dsr = tsr_dsr(trace)
    assert tsr == pytest.approx(50.0)   # 1 of 2 (dialogue, domain) tasks
    assert dsr == pytest.approx(50.0)   # d0 succeeds, d1 fails


def test_tsr_task_failure_from_any_turn():
    trace = [
        _trace_row("d0", {"hotel": (True, True)}),
        _trace_row("d0", {"hotel": (True, False)}),  # later turn fails
    ]
    assert tsr_dsr(trace) == (0.0, 0.0)


def test_tsr_dsr_empty_trace():
    assert tsr_dsr([]) == (None, None)


def test_report_summary_fixed_order(clean_dataset):
    report = evaluate_turn_by_turn(clean_dataset, EchoPredictor(clean_dataset))
    lines = report.summary().splitlines()
    names = [line.split()[0] for line in lines]
    assert names == ["dst_acc", "da_acc", "jga", "tsr", "dsr", "api_acc", "daa",
                     "bleu", "ser"]
    assert "n/a" in lines[2]  # jga not produced by turn-by-turn


def test_report_save_round_trip(clean_dataset, tmp_path):
    import json
    report = evaluate_turn_by_turn(clean_dataset, EchoPredictor(clean_dataset))
    path = tmp_path / "report.json"
    report.save(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    assert obj["dst_acc"] == pytest.approx(100.0)
    assert len(obj["trace"]) == 20

"""Dataset representation: loading, saving, validation, round trips."""

from __future__ import annotations

import json
import os
import stat

import pytest

from todkit.data import (
    ActItem,
    ActSeq,
    BeliefState,
    Dataset,
    Dialogue,
    EntitySpan,
    SlotTriplet,
    Turn,
    dataset_from_obj,
    dataset_to_obj,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from todkit.errors import IoError, SchemaError
from todkit import findings as F


def test_load_demo_fixture(demo_dataset):
    assert len(demo_dataset) == 1
    dialogue = demo_dataset.dialogues[0]
    assert len(dialogue.turns) == 2
    assert dialogue.domains == ("attraction",)
    turn = dialogue.turns[0]
    assert turn.belief_state.triplets[0] == SlotTriplet(
        "attraction", "consumption", "equal_to", "mid")
    assert turn.api_call.domain == "attraction"
    assert len(turn.api_results) == 4


def test_demo_fixture_matches_json_schema(demo_path):
    # Independent schema check (jsonschema, not our loader).
    jsonschema = pytest.importorskip("jsonschema")
    triplet = {
        "type": "object",
        "required": ["domain", "slot", "relation", "value"],
        "properties": {
            "domain": {"type": "string"}, "slot": {"type": "string"},
            "relation": {"type": "string"}, "value": {"type": "string"},
        },
    }
    schema = {
        "type": "array",
        "items": {
            "type": "object",
            "required": ["dialogue_id", "domains", "turns"],
            "properties": {
                "dialogue_id": {"type": "string"},
                "domains": {"type": "array", "items": {"type": "string"}},
                "turns": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["turn_id", "user_utterance", "belief_state",
                                     "api_call", "api_results", "agent_acts",
                                     "agent_utterance", "spans"],
                        "properties": {
                            "turn_id": {"type": "integer", "minimum": 0},
                            "user_utterance": {"type": "string"},
                            "belief_state": {"type": "array", "items": triplet},
                            "api_call": {"type": ["object", "null"]},
                            "api_results": {"type": ["array", "null"]},
                            "agent_acts": {"type": "array"},
                            "agent_utterance": {"type": "string"},
                            "spans": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["domain", "slot", "relation", "value",
                                                 "start_char", "end_char", "side"],
                                    "properties": {
                                        "start_char": {"type": "integer", "minimum": 0},
                                        "end_char": {"type": "integer", "minimum": 1},
                                        "side": {"enum": ["user", "agent"]},
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
    }
    with open(demo_path, encoding="utf-8") as f:
        jsonschema.validate(json.load(f), schema)


def test_round_trip_demo_fixture(demo_dataset, tmp_path):
    path = tmp_path / "out.json"
    save_dataset(demo_dataset, path)
    assert load_dataset(path) == demo_dataset


def test_round_trip_clean_fixture(clean_dataset, tmp_path):
    path = tmp_path / "clean.json"
    save_dataset(clean_dataset, path)
    reloaded = load_dataset(path)
    assert reloaded == clean_dataset
    # loading must not mutate the file
    before = path.read_bytes()
    load_dataset(path)
    assert path.read_bytes() == before


def test_empty_dataset_round_trip(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("[]", encoding="utf-8")
    ds = load_dataset(path)
    assert len(ds) == 0
    save_dataset(ds, path)
    assert json.loads(path.read_text(encoding="utf-8")) == []


def test_bad_span_offsets_rejected(demo_path, tmp_path):
    with open(demo_path, encoding="utf-8") as f:
        obj = json.load(f)
    span = obj[0]["turns"][0]["spans"][0]
    span["end_char"] = span["start_char"]  # end <= start
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(obj), encoding="utf-8")
    with pytest.raises(SchemaError) as err:
        load_dataset(path)
    assert "BAD_SPAN" in str(err.value)


def test_span_text_mismatch_rejected(demo_path, tmp_path):
    with open(demo_path, encoding="utf-8") as f:
        obj = json.load(f)
    obj[0]["turns"][0]["spans"][0]["value"] = "wrong text"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(obj), encoding="utf-8")
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_save_to_unwritable_path_raises(demo_dataset, tmp_path):
    if os.geteuid() == 0:
        pytest.skip("running as root; permission bits are not enforced")
    ro_dir = tmp_path / "ro"
    ro_dir.mkdir()
    os.chmod(ro_dir, stat.S_IRUSR | stat.S_IXUSR)
    with pytest.raises(IoError):
        save_dataset(demo_dataset, ro_dir / "out.json")


def test_save_to_nonexistent_dir_raises(demo_dataset, tmp_path):
    with pytest.raises(IoError):
        save_dataset(demo_dataset, tmp_path / "missing" / "out.json")


def test_load_missing_file_raises():
    with pytest.raises(IoError):
        load_dataset("/nonexistent/dataset.json")


# ---------------------------------------------------------------------------
# validate_dataset: one fault flips exactly one invariant each


def _single_turn_dataset(turn: Turn, dialogue_id: str = "d-0") -> Dataset:
    return Dataset((Dialogue(dialogue_id, ("hotel",), (turn,)),))


def _ok_turn(**overrides) -> Turn:
    base = dict(
        turn_id=0,
        user_utterance="I want a cheap hotel.",
        belief_state=BeliefState((SlotTriplet("hotel", "pricerange", "equal_to", "cheap"),)),
        agent_acts=ActSeq((ActItem("hotel", "recommend", "name", "equal_to", "Golden Inn"),)),
        agent_utterance="How about Golden Inn?",
        spans=(EntitySpan("hotel", "pricerange", "equal_to", "cheap", 9, 14, "user"),),
    )
    base.update(overrides)
    return Turn(**base)


def test_valid_fixture_has_no_findings(clean_dataset):
    assert validate_dataset(clean_dataset) == []


def test_duplicate_dialogue_id():
    turn = _ok_turn()
    ds = Dataset((Dialogue("dup", (), (turn,)), Dialogue("dup", (), (turn,))))
    codes = [f.code for f in validate_dataset(ds)]
    assert codes.count(F.DUP_DIALOGUE_ID) == 1


def test_duplicate_slot_key():
    bs = BeliefState((
        SlotTriplet("hotel", "pricerange", "equal_to", "cheap"),
        SlotTriplet("hotel", "pricerange", "equal_to", "expensive"),
    ))
    ds = _single_turn_dataset(_ok_turn(belief_state=bs))
    codes = [f.code for f in validate_dataset(ds)]
    assert F.DUP_SLOT_KEY in codes


@pytest.mark.parametrize("fault, code", [
    (dict(belief_state=BeliefState((SlotTriplet("ho tel", "pricerange", "equal_to", "x"),))),
     F.BAD_IDENTIFIER),
    (dict(belief_state=BeliefState((SlotTriplet("hotel", "pricerange", "equal_to", ""),))),
     F.EMPTY_VALUE),
    (dict(agent_acts=ActSeq()), F.EMPTY_ACTS),
    (dict(agent_acts=ActSeq((ActItem("hotel", "general", slot="name", value="x"),))),
     F.BAD_ACT_ITEM),
    (dict(spans=(EntitySpan("hotel", "pricerange", "equal_to", "cheap", 0, 5, "user"),)),
     F.BAD_SPAN),
])
def test_single_fault_yields_single_code(fault, code):
    ds = _single_turn_dataset(_ok_turn(**fault))
    findings = validate_dataset(ds)
    assert any(f.code == code for f in findings)


def test_turn_order_enforced():
    t0, t1 = _ok_turn(), _ok_turn()
    ds = Dataset((Dialogue("d", (), (t0, t1)),))  # both turn_id 0
    assert any(f.code == F.BAD_TURN_ORDER for f in validate_dataset(ds))


def test_mixed_api_domain():
    from todkit.data import ApiCall
    call = ApiCall("hotel", (SlotTriplet("restaurant", "food", "equal_to", "thai"),))
    ds = _single_turn_dataset(_ok_turn(api_call=call))
    assert any(f.code == F.MIXED_API_DOMAIN for f in validate_dataset(ds))


def test_findings_pinpoint_location():
    ds = _single_turn_dataset(_ok_turn(agent_acts=ActSeq()), dialogue_id="where")
    finding = validate_dataset(ds)[0]
    assert finding.dialogue_id == "where"
    assert finding.turn_id == 0


def test_obj_round_trip_preserves_structure(clean_dataset):
    obj = dataset_to_obj(clean_dataset)
    assert dataset_from_obj(obj) == clean_dataset

"""Both evaluation protocols with scripted predictors.

A gold-echo oracle scores perfectly under both protocols.  A predictor that
corrupts only the first turn's state shows why end-to-end numbers sit below
turn-by-turn numbers: the corrupted state is carried forward.
"""

from pathlib import Path

from todkit import load_dataset
from todkit.evaluate import (
    EchoPredictor,
    ScriptedPredictor,
    evaluate_end_to_end,
    evaluate_turn_by_turn,
    gold_contexts,
)
from todkit.kb import load_database
from todkit.stateformat import SubtaskKind, render_subtask_input
from todkit.valuemap import load_value_mapping

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
ds = load_dataset(FIXTURES / "demo_dialogue.json")
db = load_database(FIXTURES / "demo_db.json")
vm = load_value_mapping(FIXTURES / "demo_value_mapping.json")

print("== gold-echo oracle, turn-by-turn ==")
print(evaluate_turn_by_turn(ds, EchoPredictor(ds), vm).summary())

print("\n== gold-echo oracle, end-to-end ==")
print(evaluate_end_to_end(ds, EchoPredictor(ds), db, vm).summary())

print("\n== corrupting only the first turn's state ==")
predictor = ScriptedPredictor.from_dataset(ds)
contexts = gold_contexts(ds.dialogues[0])
first_dst = render_subtask_input(SubtaskKind.DST, contexts[0][SubtaskKind.DST])
predictor.override(SubtaskKind.DST, first_dst,
                   '( attraction ) consumption " luxury "')
tbt = evaluate_turn_by_turn(ds, predictor, vm)
e2e = evaluate_end_to_end(ds, predictor, db, vm)
print(f"turn-by-turn state accuracy: {tbt.dst_acc:.1f}")
print(f"end-to-end joint goal accuracy: {e2e.jga:.1f}  (corruption carried forward)")

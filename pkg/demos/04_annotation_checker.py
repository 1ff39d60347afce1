"""The annotation checker: entity checks, API checks, and auto-fixes.

Starts from the clean fixture, injects a redundant API constraint, lets the
checker propose a drop-fix, applies it, and verifies the fixpoint.
"""

from dataclasses import replace
from pathlib import Path

from todkit import load_dataset
from todkit.checker import apply_fixes, check_api, check_dataset
from todkit.data import SlotTriplet, replace_turn
from todkit.kb import load_database
from todkit.valuemap import load_value_mapping

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
ds = load_dataset(FIXTURES / "demo_dialogue.json")
db = load_database(FIXTURES / "demo_db.json")
vm = load_value_mapping(FIXTURES / "demo_value_mapping.json")

print("clean fixture findings:", check_dataset(ds, db, vm))

dialogue = ds.dialogues[0]
turn = dialogue.turns[0]
extra = SlotTriplet("attraction", "score", "equal_to", "9.9")
broken_turn = replace(turn, api_call=replace(
    turn.api_call, constraints=turn.api_call.constraints + (extra,)))
broken = replace_turn(ds, dialogue.dialogue_id, broken_turn)

found = check_api(broken_turn, db, vm, dialogue_id=dialogue.dialogue_id)
for finding in found:
    print(f"\n{finding.code}: {finding.message}")
    if finding.suggested_fix:
        print(f"  proposed fix: {finding.suggested_fix.kind} "
              f"{finding.suggested_fix.payload}")

fixes = [f.suggested_fix for f in found if f.suggested_fix]
repaired = apply_fixes(broken, fixes, vm)
repaired_turn = repaired.get_dialogue(dialogue.dialogue_id).turns[0]
print("\nafter applying the fix:", check_api(repaired_turn, db, vm))

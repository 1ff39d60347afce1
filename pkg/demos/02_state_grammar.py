"""The textual belief-state / dialogue-act format and the subtask templates.

Shows parsing with flexible whitespace, canonical re-serialization, the
implicit/explicit relation styles, and the byte-exact sentinel-token inputs
each of the four subtasks receives.
"""

from pathlib import Path

from todkit import load_dataset
from todkit.evaluate import gold_contexts
from todkit.stateformat import (
    EXPLICIT_RELATION,
    SubtaskKind,
    parse_act_seq,
    parse_belief_state,
    render_subtask_input,
    serialize_belief_state,
)

messy = '( attraction )   consumption  " mid " ,type " commercial center "'
state = parse_belief_state(messy)
print("parsed:      ", [(t.slot, t.relation, t.value) for t in state])
print("canonical:   ", serialize_belief_state(state))
print("explicit rel:", serialize_belief_state(state, EXPLICIT_RELATION))

acts = parse_act_seq('( attraction ) recommend name " Guanqian Street " , general')
print("acts:        ", [(a.act, a.slot, a.value) for a in acts])

print("\nsubtask inputs for the fixture dialogue, turn 1:")
FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
ds = load_dataset(FIXTURES / "demo_dialogue.json")
contexts = gold_contexts(ds.dialogues[0])
for kind in SubtaskKind:
    rendered = render_subtask_input(kind, contexts[0][kind])
    print(f"\n{kind.value}:")
    print(" ", rendered if len(rendered) < 200 else rendered[:197] + "...")

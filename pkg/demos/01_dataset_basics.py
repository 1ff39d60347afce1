"""Loading, validating, and round-tripping a dialogue dataset.

The bundled fixture is a two-turn attraction-domain dialogue with belief
states, agent acts, an API call with recorded results, and character-level
entity spans.
"""

import tempfile
from pathlib import Path

from todkit import load_dataset, save_dataset, validate_dataset

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

ds = load_dataset(FIXTURES / "demo_dialogue.json")
dialogue = ds.dialogues[0]
print(f"loaded {len(ds)} dialogue(s); first covers domains {list(dialogue.domains)}")

for turn in dialogue.turns:
    print(f"\nturn {turn.turn_id}")
    print(f"  user : {turn.user_utterance}")
    print(f"  state: {[(t.slot, t.value) for t in turn.belief_state]}")
    print(f"  acts : {[(a.act, a.slot, a.value) for a in turn.agent_acts]}")
    print(f"  agent: {turn.agent_utterance}")
    for span in turn.spans:
        utt = turn.utterance(span.side)
        print(f"  span : {span.slot}={span.value!r} at "
              f"{span.start_char}..{span.end_char} ({span.side}): "
              f"{utt[span.start_char:span.end_char]!r}")

print(f"\nvalidation findings: {validate_dataset(ds)}")

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "copy.json"
    save_dataset(ds, out)
    assert load_dataset(out) == ds
    print("save -> load round trip: structurally equal")

"""Synthesizing label-error training data and filtering with an ensemble.

Every negative example differs from its gold annotation by exactly one edit
(omit / wrong value / hallucinate), sampled according to observed error
statistics; an ensemble of classifiers then filters self-training pairs.
"""

from pathlib import Path

from todkit import load_dataset
from todkit.kb import load_ontology
from todkit.perturb import (
    EnsembleFilter,
    ErrorStats,
    SynthConfig,
    collect_error_stats,
    select_self_training,
    synthesize_dataset,
)
from todkit.stateformat import parse_belief_state

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
ds = load_dataset(FIXTURES / "demo_dialogue.json")
ontology = load_ontology(FIXTURES / "demo_ontology.json")

# error statistics from a (toy) batch of parser predictions
gold = ds.dialogues[0].turns[0].belief_state
pred = parse_belief_state('( attraction ) consumption " mid "')  # omitted type
stats = collect_error_stats([pred], [gold])
print("observed error counts:", dict(stats.counts))

cfg = SynthConfig(task="dst", negatives_per_positive=2, seed=13)
examples = synthesize_dataset(ds, stats, ontology, cfg)
for x in examples:
    tag = "gold " if x.label == 0 else x.perturbation["type"]
    print(f"[{x.label}] {tag:<12} {x.annotation}")

# ensemble filtering for self-training: any flagging classifier filters
gold_quote_count = examples[0].annotation.count('"')
flag_hallucinations = lambda x: 1 if x.annotation.count('"') > gold_quote_count else 0
ens = EnsembleFilter((flag_hallucinations,))
pairs = [(x.input, x.annotation) for x in examples]
kept = select_self_training(pairs, ens)
print(f"\nself-training selection kept {len(kept)} of {len(pairs)} pairs")

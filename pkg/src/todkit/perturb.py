"""Synthesis of labeled correct/error examples that mimic parser mistakes,
plus the classifier-ensemble filter used for self-training selection.

Negative examples are gold annotations perturbed by exactly one edit (omit a
slot, swap in a wrong value, hallucinate a slot or act); which edits are
sampled follows the observed error statistics per domain.  Everything is
deterministic under a base seed, with per-turn seeds derived by hashing so
serial and parallel runs agree.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from .data import ActItem, ActSeq, BeliefState, Dataset, SlotTriplet, Turn
from .errors import (
    LengthMismatchError,
    NotApplicableError,
    PredicateFailureError,
    UnknownSlotError,
)
from .evaluate import gold_contexts
from .kb import Ontology, slot_values
from .stateformat import (
    IMPLICIT_RELATION,
    SubtaskKind,
    render_subtask_input,
    serialize_act_seq,
    serialize_belief_state,
)

OMIT = "omit"
WRONG_VALUE = "wrong_value"
HALLUCINATE = "hallucinate"

DST_PERTURBATIONS = (OMIT, WRONG_VALUE, HALLUCINATE)
DA_PERTURBATIONS = (OMIT, HALLUCINATE)

KEEP = "keep"
FILTER = "filter"

# Synthetic slot injected into knowledge blocks; never a real annotation.
_EXCLUDED_KNOWLEDGE_SLOTS = {"available_options"}


@dataclass(frozen=True)
class LabeledExample:
    """A classifier training example: subtask input text, annotation text,
    and a binary label (0 = correct annotation, 1 = error).  Perturbed
    examples carry a descriptor of the single edit applied."""

    input: str
    annotation: str
    label: int
    perturbation: dict | None = None

    def to_dict(self) -> dict:
        return {"input": self.input, "annotation": self.annotation,
                "label": self.label, "perturbation": self.perturbation}


def write_examples(examples: list[LabeledExample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for x in examples:
            f.write(json.dumps(x.to_dict(), ensure_ascii=False) + "\n")


def read_examples(path) -> list[LabeledExample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                obj = json.loads(line)
                out.append(LabeledExample(obj["input"], obj["annotation"],
                                          obj["label"], obj.get("perturbation")))
    return out


# ---------------------------------------------------------------------------
# Error statistics


@dataclass
class ErrorStats:
    """Counts of (domain, slot-or-act, error type) parser mistakes."""

    task: str  # "dst" | "da"
    counts: Counter = field(default_factory=Counter)

    def add(self, domain: str, slot: str, error_type: str, n: int = 1):
        self.counts[(domain, slot, error_type)] += n

    def domain_total(self, domain: str) -> int:
        return sum(c for (d, _, _), c in self.counts.items() if d == domain)

    def frequencies(self, domain: str) -> dict[tuple[str, str], float]:
        """Per (slot, error_type) frequency within one domain; sums to 1."""
        total = self.domain_total(domain)
        if not total:
            return {}
        return {(s, e): c / total
                for (d, s, e), c in self.counts.items() if d == domain}

    def type_weights(self, domain: str, types: tuple[str, ...]) -> dict[str, float]:
        freqs = self.frequencies(domain)
        weights = {t: 0.0 for t in types}
        for (_, etype), f in freqs.items():
            if etype in weights:
                weights[etype] += f
        if not any(weights.values()):
            return {t: 1.0 / len(types) for t in types}
        return weights

    def slot_weights(self, domain: str, etype: str) -> dict[str, float]:
        return {s: c for (d, s, e), c in self.counts.items()
                if d == domain and e == etype}

    def to_obj(self) -> dict:
        return {"task": self.task,
                "counts": [{"domain": d, "slot": s, "error_type": e, "count": c}
                           for (d, s, e), c in sorted(self.counts.items())]}

    @classmethod
    def from_obj(cls, obj: dict) -> "ErrorStats":
        stats = cls(task=obj.get("task", "dst"))
        for row in obj.get("counts", []):
            stats.add(row["domain"], row["slot"], row["error_type"], row["count"])
        return stats


def collect_error_stats(preds: list, golds: list) -> ErrorStats:
    """Classify prediction/gold differences into omit / wrong_value /
    hallucinate counts (value-level for belief states, act-level for acts)."""
    if len(preds) != len(golds):
        raise LengthMismatchError(f"{len(preds)} predictions vs {len(golds)} golds")
    if golds and isinstance(golds[0], ActSeq):
        stats = ErrorStats(task="da")
        for pred, gold in zip(preds, golds):
            sig = lambda a: (a.domain, a.act, a.slot, a.relation, a.value)
            pred_counts = Counter(sig(a) for a in pred)
            gold_counts = Counter(sig(a) for a in gold)
            for (domain, act, *_), n in (gold_counts - pred_counts).items():
                stats.add(domain, act, OMIT, n)
            for (domain, act, *_), n in (pred_counts - gold_counts).items():
                stats.add(domain, act, HALLUCINATE, n)
        return stats

    stats = ErrorStats(task="dst")
    for pred, gold in zip(preds, golds):
        pred_map = {t.key: t.value for t in pred}
        gold_map = {t.key: t.value for t in gold}
        for key, value in gold_map.items():
            if key not in pred_map:
                stats.add(key[0], key[1], OMIT)
            elif pred_map[key] != value:
                stats.add(key[0], key[1], WRONG_VALUE)
        for key in pred_map:
            if key not in gold_map:
                stats.add(key[0], key[1], HALLUCINATE)
    return stats


# ---------------------------------------------------------------------------
# Single-edit perturbations


def _safe_slot_values(ontology: Ontology, domain: str, slot: str) -> list[str]:
    try:
        return slot_values(ontology, domain, slot)
    except UnknownSlotError:
        return []


def perturb_dst(gold: BeliefState, ptype: str, ontology: Ontology,
                target_slot: str | None = None, seed: int = 0) -> BeliefState:
    """Apply exactly one edit of the given type to a belief state.

    Raises ``NotApplicableError`` when no edit of that type exists (e.g.
    wrong_value on a slot whose ontology has no alternative value).
    """
    rng = random.Random(seed)
    triplets = list(gold.triplets)

    if ptype == OMIT:
        indices = [i for i, t in enumerate(triplets)
                   if target_slot is None or t.slot == target_slot]
        if not indices:
            raise NotApplicableError(OMIT, "no matching triplet to omit")
        del triplets[rng.choice(indices)]
        return BeliefState(tuple(triplets))

    if ptype == WRONG_VALUE:
        eligible = []
        for i, t in enumerate(triplets):
            if target_slot is not None and t.slot != target_slot:
                continue
            alternatives = [v for v in _safe_slot_values(ontology, t.domain, t.slot)
                            if v != t.value]
            if alternatives:
                eligible.append((i, alternatives))
        if not eligible:
            raise NotApplicableError(WRONG_VALUE, "no slot has an alternative value")
        i, alternatives = eligible[rng.randrange(len(eligible))]
        triplets[i] = SlotTriplet(triplets[i].domain, triplets[i].slot,
                                  triplets[i].relation, rng.choice(alternatives))
        return BeliefState(tuple(triplets))

    if ptype == HALLUCINATE:
        present = {(t.domain, t.slot) for t in triplets}
        eligible = []
        for domain in dict.fromkeys(t.domain for t in triplets):
            if domain not in ontology.slots:
                continue
            for slot in ontology.slot_names(domain):
                if (domain, slot) in present:
                    continue
                if target_slot is not None and slot != target_slot:
                    continue
                values = _safe_slot_values(ontology, domain, slot)
                if values:
                    eligible.append((domain, slot, values))
        if not eligible:
            raise NotApplicableError(HALLUCINATE, "no absent ontology slot to insert")
        domain, slot, values = eligible[rng.randrange(len(eligible))]
        triplets.append(SlotTriplet(domain, slot, "equal_to", rng.choice(values)))
        return BeliefState(tuple(triplets))

    raise NotApplicableError(ptype, "unknown perturbation type")


def perturb_da(gold: ActSeq, ptype: str, knowledge: dict[str, str] | None = None,
               ontology: Ontology | None = None, seed: int = 0) -> ActSeq:
    """Apply exactly one act-level edit.

    Omitting the only act yields the bare ``general`` act for the same
    domain; hallucination appends an inform act drawn from the knowledge
    record (ontology values as fallback).
    """
    rng = random.Random(seed)
    items = list(gold.items)

    if ptype == OMIT:
        if not items:
            raise NotApplicableError(OMIT, "no act to omit")
        removed = items.pop(rng.randrange(len(items)))
        if not items:
            items = [ActItem(domain=removed.domain, act="general")]
        return ActSeq(tuple(items))

    if ptype == HALLUCINATE:
        if not items:
            raise NotApplicableError(HALLUCINATE, "no act to anchor the domain")
        domain = items[-1].domain
        informed = {(a.slot, a.value) for a in items if a.value is not None}
        pool: list[tuple[str, str]] = []
        if knowledge:
            pool = [(slot, value) for slot, value in knowledge.items()
                    if slot not in _EXCLUDED_KNOWLEDGE_SLOTS
                    and (slot, value) not in informed]
        if not pool and ontology is not None and domain in ontology.slots:
            for slot in ontology.slot_names(domain):
                for value in _safe_slot_values(ontology, domain, slot):
                    if (slot, value) not in informed:
                        pool.append((slot, value))
        if not pool:
            raise NotApplicableError(HALLUCINATE, "nothing to hallucinate from")
        slot, value = pool[rng.randrange(len(pool))]
        items.append(ActItem(domain=domain, act="inform", slot=slot,
                             relation="equal_to", value=value))
        return ActSeq(tuple(items))

    raise NotApplicableError(ptype, "unknown perturbation type")


# ---------------------------------------------------------------------------
# Dataset synthesis


def _derive_seed(base_seed: int, dialogue_id: str, turn_id: int, extra: int = 0) -> int:
    digest = hashlib.sha256(
        f"{base_seed}:{dialogue_id}:{turn_id}:{extra}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _weighted_choice(rng: random.Random, weights: dict[str, float]) -> str:
    names = sorted(weights)
    total = sum(weights[n] for n in names)
    if total <= 0:
        return rng.choice(names)
    return rng.choices(names, weights=[weights[n] for n in names], k=1)[0]


@dataclass(frozen=True)
class SynthConfig:
    task: str = "dst"  # "dst" | "da"
    negatives_per_positive: int = 1
    seed: int = 0
    style: str = IMPLICIT_RELATION


def _describe(ptype: str, gold_text: str, perturbed_text: str, task: str) -> dict:
    return {"type": ptype, "task": task, "before": gold_text, "after": perturbed_text}


def _synthesize_turn(dialogue_id: str, turn: Turn, ctx, stats: ErrorStats | None,
                     ontology: Ontology, cfg: SynthConfig) -> list[LabeledExample]:
    if cfg.task == "dst":
        kind, types = SubtaskKind.DST, DST_PERTURBATIONS
        gold_text = serialize_belief_state(turn.belief_state, cfg.style)
    else:
        kind, types = SubtaskKind.DA, DA_PERTURBATIONS
        gold_text = serialize_act_seq(turn.agent_acts, cfg.style)
    rendered = render_subtask_input(kind, ctx[kind], cfg.style)
    out = [LabeledExample(input=rendered, annotation=gold_text, label=0)]
    emitted = {gold_text}

    domains = ([t.domain for t in turn.belief_state] if cfg.task == "dst"
               else [a.domain for a in turn.agent_acts])
    domain = domains[-1] if domains else None
    weights = (stats.type_weights(domain, types)
               if stats is not None and domain is not None
               else {t: 1.0 / len(types) for t in types})
    knowledge_record = (turn.api_results[0]
                        if turn.api_results else None)

    for i in range(cfg.negatives_per_positive):
        rng = random.Random(_derive_seed(cfg.seed, dialogue_id, turn.turn_id, i + 1))
        first = _weighted_choice(rng, weights)
        order = [first] + [t for t in types if t != first]
        for ptype in order:
            edit_seed = _derive_seed(cfg.seed, dialogue_id, turn.turn_id,
                                     1000 + i * len(types) + types.index(ptype))
            try:
                if cfg.task == "dst":
                    perturbed = serialize_belief_state(
                        perturb_dst(turn.belief_state, ptype, ontology, seed=edit_seed),
                        cfg.style)
                else:
                    perturbed = serialize_act_seq(
                        perturb_da(turn.agent_acts, ptype, knowledge=knowledge_record,
                                   ontology=ontology, seed=edit_seed),
                        cfg.style)
            except NotApplicableError:
                continue
            if perturbed in emitted:
                continue
            emitted.add(perturbed)
            out.append(LabeledExample(
                input=rendered, annotation=perturbed, label=1,
                perturbation=_describe(ptype, gold_text, perturbed, cfg.task)))
            break
    return out


def synthesize_dataset(ds: Dataset, stats: ErrorStats | None, ontology: Ontology,
                       cfg: SynthConfig, parallel: bool = False) -> list[LabeledExample]:
    """One correct example per turn plus up to ``negatives_per_positive``
    single-edit negatives, with perturbation types sampled according to the
    error statistics.  Byte-identical output for a fixed seed, whether run
    serially or in parallel."""
    if cfg.task not in ("dst", "da"):
        raise ValueError(f"unknown task {cfg.task!r}")
    jobs = []
    for dialogue in ds:
        contexts = gold_contexts(dialogue)
        for turn, ctx in zip(dialogue.turns, contexts):
            jobs.append((dialogue.dialogue_id, turn, ctx))

    if parallel:
        with ThreadPoolExecutor() as pool:
            chunks = list(pool.map(
                lambda job: _synthesize_turn(job[0], job[1], job[2], stats, ontology, cfg),
                jobs))
    else:
        chunks = [_synthesize_turn(d, t, c, stats, ontology, cfg) for d, t, c in jobs]
    return [x for chunk in chunks for x in chunk]


# ---------------------------------------------------------------------------
# Ensemble filtering and self-training selection


@dataclass(frozen=True)
class EnsembleFilter:
    """k >= 1 classifier ports, each mapping a LabeledExample to 0/1."""

    predicates: tuple[Callable[[LabeledExample], int], ...]

    def __post_init__(self):
        if len(self.predicates) < 1:
            raise ValueError("ensemble needs at least one predicate")


def ensemble_filter(x: LabeledExample, ens: EnsembleFilter) -> str:
    """``filter`` iff any predicate flags the example (min(1, sum) = 1)."""
    votes = 0
    for i, g in enumerate(ens.predicates):
        try:
            votes += int(g(x))
        except Exception as e:
            raise PredicateFailureError(i, e) from e
    return FILTER if min(1, votes) == 1 else KEEP


def select_self_training(unlabeled: list[tuple[str, str]],
                         ens: EnsembleFilter) -> list[tuple[str, str]]:
    """Keep exactly the (input, annotation) pairs no classifier flags,
    preserving order."""
    selected = []
    for rendered, annotation in unlabeled:
        x = LabeledExample(input=rendered, annotation=annotation, label=0)
        if ensemble_filter(x, ens) == KEEP:
            selected.append((rendered, annotation))
    return selected

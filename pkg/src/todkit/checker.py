"""Automated annotation checking: entity consistency, API consistency with
auto-fix proposals, value-mapping construction, and consistency audits.

All checks are pure (same inputs, same findings, stable order).  Fixes are
proposals; ``apply_fixes`` is the only mutator and rejects stale fixes
instead of misapplying them.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import replace

from . import findings as F
from .alignment import AlignedEntity, CandidateSet, NormConfig, dictionary_align
from .data import ActSeq, ApiCall, BeliefState, Dataset, SlotTriplet, Turn, replace_turn
from .errors import NoMatchError, ParallelismError, StaleFixError
from .kb import Database, execute_api
from .valuemap import ValueMapping, prenorm

DEFAULT_NORM = NormConfig()


def _occurs(value: str, text: str, vm: ValueMapping | None, norm: NormConfig) -> bool:
    """True when the value, any mapping candidate, or its canonical form
    occurs in the text (word-boundary aware via the dictionary matcher)."""
    if not text:
        return False
    surfaces = [value]
    if vm is not None:
        surfaces += sorted(vm.surfaces_of(value))
    try:
        dictionary_align(CandidateSet(entity=value, candidates=tuple(surfaces)), text, norm)
        return True
    except NoMatchError:
        return False


def annotation_atoms(turn: Turn, prior_state: BeliefState | None = None):
    """The (slot_key, value) atoms this turn is responsible for: the belief
    delta against the prior state plus all value-bearing agent acts."""
    atoms: list[tuple[tuple[str, str, str], str]] = []
    prior = set(prior_state.triplets) if prior_state is not None else set()
    for t in turn.belief_state:
        if t not in prior:
            atoms.append((t.key, t.value))
    for a in turn.agent_acts:
        if a.value is not None and a.slot is not None:
            atoms.append(((a.domain, a.slot, a.relation or "equal_to"), a.value))
    deduped = []
    seen = set()
    for key, value in atoms:
        sig = (key, prenorm(value))
        if sig not in seen:
            seen.add(sig)
            deduped.append((key, value))
    return deduped


def check_entities(turn: Turn, vm: ValueMapping | None = None,
                   norm: NormConfig = DEFAULT_NORM,
                   prior_state: BeliefState | None = None,
                   history_text: str = "",
                   dialogue_id: str = "") -> list[F.Finding]:
    """Locate missing entities and span-count mismatches for one turn.

    A value is *missing* when no surface form of it (the value itself, any
    mapping candidate, or its canonical) occurs in the dialogue text seen so
    far (``history_text`` plus this turn's utterances) and no span of this
    turn covers its slot key.  The span count must equal the number of
    distinct annotation values anchored to this turn (occurring in its
    utterances or covered by one of its spans).
    """
    out: list[F.Finding] = []
    current_text = f"{turn.user_utterance}\n{turn.agent_utterance}"
    seen_text = f"{history_text}\n{current_text}" if history_text else current_text
    span_keys = {s.slot_key for s in turn.spans}

    atoms = annotation_atoms(turn, prior_state)
    anchored_values: set[str] = set()
    for key, value in atoms:
        in_current = _occurs(value, current_text, vm, norm)
        has_span = key in span_keys
        if in_current or has_span:
            anchored_values.add(prenorm(value))
        if has_span or in_current:
            continue
        if not _occurs(value, seen_text, vm, norm):
            out.append(F.Finding(
                F.MISSING_ENTITY, dialogue_id, turn.turn_id,
                f"value {value!r} for {key} not found in any utterance and has no span",
                slot_key=key))

    if len(turn.spans) != len(anchored_values):
        out.append(F.Finding(
            F.SPAN_COUNT_MISMATCH, dialogue_id, turn.turn_id,
            f"{len(turn.spans)} spans but {len(anchored_values)} annotation "
            f"values anchored to this turn"))
    return out


# ---------------------------------------------------------------------------
# API checking


def _record_matches(pred: dict[str, str], gold: dict[str, str],
                    vm: ValueMapping | None) -> bool:
    """Gold records may carry a slot subset; every gold slot must agree."""
    def norm(val, slot):
        return vm.normalize(val, slot=slot) if vm is not None else prenorm(val)
    return all(
        slot in pred and norm(pred[slot], slot) == norm(value, slot)
        for slot, value in gold.items()
    )


def _results_equal(pred: tuple[dict[str, str], ...], gold, vm) -> bool:
    return len(pred) == len(gold) and all(
        _record_matches(p, g, vm) for p, g in zip(pred, gold))


def _result_distance(pred, gold, vm) -> int:
    """Symmetric difference size under greedy subset matching."""
    used = [False] * len(pred)
    matched = 0
    for g in gold:
        for i, p in enumerate(pred):
            if not used[i] and _record_matches(p, g, vm):
                used[i] = True
                matched += 1
                break
    return (len(pred) - matched) + (len(gold) - matched)


def _triplet_dicts(constraints) -> list[dict[str, str]]:
    return [{"domain": c.domain, "slot": c.slot, "relation": c.relation, "value": c.value}
            for c in constraints]


def check_api(turn: Turn, db: Database, vm: ValueMapping | None = None,
              dialogue_id: str = "") -> list[F.Finding]:
    """Compare the turn's API call against its recorded ground-truth results.

    On a mismatch, fixes are proposed in two stages.  First, greedy
    constraint dropping: iteratively remove the single constraint whose
    removal most shrinks the symmetric difference to the gold results,
    stopping at an exact match or no improvement; the drop fix is attached
    only after re-execution verifies the match.  Residual value mismatches
    (an essential constraint whose value disagrees with the value all gold
    records share for its slot) are then emitted as value-mapping additions.
    """
    if turn.api_call is None or turn.api_results is None:
        return []
    call = turn.api_call
    gold = turn.api_results

    def run(constraints) -> tuple[dict[str, str], ...]:
        return execute_api(ApiCall(call.domain, tuple(constraints)), db, vm).records

    def exact(constraints) -> bool:
        return _results_equal(run(constraints), gold, vm)

    if exact(call.constraints):
        return []

    out: list[F.Finding] = []
    current = list(call.constraints)

    # Stage 1: greedy constraint dropping.
    dropped: list[SlotTriplet] = []
    while current and not exact(current):
        base = _result_distance(run(current), gold, vm)
        best_i, best_d = None, base
        for i in range(len(current)):
            trial = current[:i] + current[i + 1:]
            d = _result_distance(run(trial), gold, vm)
            if d < best_d:
                best_i, best_d = i, d
        if best_i is None:
            break
        dropped.append(current.pop(best_i))

    # Stage 2: residual value mismatches become mapping additions.
    if not exact(current) and gold:
        for i, c in enumerate(current):
            if c.relation != "equal_to":
                continue
            gold_values = {g.get(c.slot) for g in gold}
            gold_values.discard(None)
            if len(gold_values) != 1:
                continue
            target = next(iter(gold_values))
            c_norm = vm.normalize(c.value, slot=c.slot) if vm else prenorm(c.value)
            t_norm = vm.normalize(target, slot=c.slot) if vm else prenorm(target)
            if c_norm == t_norm:
                continue
            trial = current.copy()
            trial[i] = replace(c, value=target)
            if _result_distance(run(trial), gold, vm) < _result_distance(run(current), gold, vm):
                current = trial
                out.append(F.Finding(
                    F.API_RESULT_MISMATCH, dialogue_id, turn.turn_id,
                    f"constraint {c.slot}={c.value!r} disagrees with ground-truth "
                    f"value {target!r}; add it to the value mapping",
                    slot_key=c.key,
                    suggested_fix=F.Fix(
                        kind="add_value_mapping", dialogue_id=dialogue_id,
                        turn_id=turn.turn_id,
                        payload={"source_value": c.value, "slot": c.slot, "target": target},
                    )))

    final_exact = exact(current)
    if dropped:
        fix = None
        if final_exact:  # only propose a verified fix
            fix = F.Fix(
                kind="drop_constraints", dialogue_id=dialogue_id, turn_id=turn.turn_id,
                payload={"drop": _triplet_dicts(dropped)},
                before=_triplet_dicts(call.constraints),
            )
        out.append(F.Finding(
            F.API_RESULT_MISMATCH, dialogue_id, turn.turn_id,
            "API results differ from ground truth; redundant constraints: "
            + ", ".join(f"{c.slot}={c.value!r}" for c in dropped),
            suggested_fix=fix))
    if not out or (not final_exact and not dropped):
        out.append(F.Finding(
            F.API_RESULT_MISMATCH, dialogue_id, turn.turn_id,
            "API results differ from ground truth and no automatic fix was found"))
    return out


def apply_fixes(ds: Dataset, fixes: list[F.Fix],
                vm: ValueMapping | None = None) -> Dataset:
    """Apply fixes, returning a new dataset (``vm`` is updated in place for
    mapping fixes).  Raises ``StaleFixError`` when the target no longer
    matches the fix's recorded before-state."""
    for fix in fixes:
        if fix.kind == "add_value_mapping":
            if vm is None:
                raise ValueError("add_value_mapping fix needs a value mapping")
            p = fix.payload
            vm.add(p["source_value"], p["slot"], p["target"], canonical=p["target"])
            continue

        dialogue = ds.get_dialogue(fix.dialogue_id)
        turn = None
        if dialogue is not None:
            turn = next((t for t in dialogue.turns if t.turn_id == fix.turn_id), None)
        if turn is None:
            raise StaleFixError(f"no turn {fix.dialogue_id}/{fix.turn_id}")

        if fix.kind == "drop_constraints":
            if turn.api_call is None or _triplet_dicts(turn.api_call.constraints) != fix.before:
                raise StaleFixError("constraints changed since the fix was computed")
            drop = {(d["domain"], d["slot"], d["relation"], d["value"])
                    for d in fix.payload["drop"]}
            kept = tuple(c for c in turn.api_call.constraints
                         if (c.domain, c.slot, c.relation, c.value) not in drop)
            ds = replace_turn(ds, fix.dialogue_id,
                              replace(turn, api_call=replace(turn.api_call, constraints=kept)))
        elif fix.kind == "drop_triplet":
            if _triplet_dicts(turn.belief_state.triplets) != fix.before:
                raise StaleFixError("belief state changed since the fix was computed")
            d = fix.payload["triplet"]
            kept = tuple(t for t in turn.belief_state
                         if (t.domain, t.slot, t.relation, t.value)
                         != (d["domain"], d["slot"], d["relation"], d["value"]))
            ds = replace_turn(ds, fix.dialogue_id,
                              replace(turn, belief_state=BeliefState(kept)))
        else:
            raise ValueError(f"unknown fix kind {fix.kind!r}")
    return ds


# ---------------------------------------------------------------------------
# Value-mapping construction and audits


def build_value_mapping(ds_source: Dataset, ds_target: Dataset,
                        alignments: dict[tuple[str, int], list[AlignedEntity]]) -> ValueMapping:
    """Aggregate per-turn alignments into a value mapping.

    ``alignments`` maps (dialogue_id, turn_id) to the aligned entities of
    that turn.  The slot for each aligned value is read from the source
    turn's annotations.  Canonical forms are initialized to the most frequent
    candidate (ties to the lexicographically first).
    """
    src_ids = [(d.dialogue_id, tuple(t.turn_id for t in d.turns)) for d in ds_source]
    tgt_ids = [(d.dialogue_id, tuple(t.turn_id for t in d.turns)) for d in ds_target]
    if src_ids != tgt_ids:
        raise ParallelismError("source and target datasets are not turn-parallel")

    vm = ValueMapping()
    counts: dict[tuple[str, str], Counter] = {}
    for dialogue in ds_source:
        for turn in dialogue.turns:
            for aligned in alignments.get((dialogue.dialogue_id, turn.turn_id), []):
                slots = sorted(
                    {t.slot for t in turn.belief_state if t.value == aligned.source_value}
                    | {a.slot for a in turn.agent_acts
                       if a.value == aligned.source_value and a.slot}
                    | ({c.slot for c in turn.api_call.constraints
                        if c.value == aligned.source_value} if turn.api_call else set())
                )
                for slot in slots:
                    vm.add(aligned.source_value, slot, aligned.target_text)
                    counts.setdefault((aligned.source_value, slot),
                                      Counter())[aligned.target_text] += 1

    for (source, slot), counter in counts.items():
        canonical = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        vm.set_canonical(source, slot, canonical)
    return vm


def check_value_consistency(vm: ValueMapping) -> list[F.Finding]:
    """Flag source values whose canonical translation differs across slots."""
    out = []
    for source in sorted(vm.entries):
        canonicals = {slot: e.canonical for slot, e in vm.entries[source].items()
                      if e.canonical}
        if len(set(canonicals.values())) > 1:
            detail = ", ".join(f"{slot}={canon!r}" for slot, canon in sorted(canonicals.items()))
            out.append(F.Finding(
                F.VALUE_INCONSISTENT, "", None,
                f"source value {source!r} has inconsistent canonicals: {detail}"))
    return out


def diff_upstream(pinned: Dataset, current: Dataset) -> list[F.Finding]:
    """Diff a pinned upstream snapshot against its current revision.

    Upstream edits must be propagated to downstream translations: removed
    triplets become auto-fixable REDUNDANT_SLOT findings, changed or added
    annotation atoms become NEEDS_REANNOTATION findings at the same location.
    """
    out: list[F.Finding] = []
    current_by_id = {d.dialogue_id: d for d in current}
    for dialogue in pinned:
        new_dialogue = current_by_id.get(dialogue.dialogue_id)
        if new_dialogue is None:
            out.append(F.Finding(F.NEEDS_REANNOTATION, dialogue.dialogue_id, None,
                                 "dialogue removed upstream"))
            continue
        new_turns = {t.turn_id: t for t in new_dialogue.turns}
        for turn in dialogue.turns:
            new_turn = new_turns.get(turn.turn_id)
            if new_turn is None:
                out.append(F.Finding(F.NEEDS_REANNOTATION, dialogue.dialogue_id,
                                     turn.turn_id, "turn removed upstream"))
                continue
            old = {t.key: t.value for t in turn.belief_state}
            new = {t.key: t.value for t in new_turn.belief_state}
            for key, value in old.items():
                if key not in new:
                    out.append(F.Finding(
                        F.REDUNDANT_SLOT, dialogue.dialogue_id, turn.turn_id,
                        f"triplet {key} removed upstream", slot_key=key,
                        suggested_fix=F.Fix(
                            kind="drop_triplet", dialogue_id=dialogue.dialogue_id,
                            turn_id=turn.turn_id,
                            payload={"triplet": {"domain": key[0], "slot": key[1],
                                                 "relation": key[2], "value": value}},
                            before=_triplet_dicts(turn.belief_state.triplets))))
                elif new[key] != value:
                    out.append(F.Finding(
                        F.NEEDS_REANNOTATION, dialogue.dialogue_id, turn.turn_id,
                        f"value for {key} changed upstream: {value!r} -> {new[key]!r}",
                        slot_key=key))
            for key in new:
                if key not in old:
                    out.append(F.Finding(
                        F.NEEDS_REANNOTATION, dialogue.dialogue_id, turn.turn_id,
                        f"triplet {key} added upstream", slot_key=key))
            if _acts_signature(turn.agent_acts) != _acts_signature(new_turn.agent_acts):
                out.append(F.Finding(
                    F.NEEDS_REANNOTATION, dialogue.dialogue_id, turn.turn_id,
                    "agent acts changed upstream"))
    return out


def _acts_signature(acts: ActSeq):
    return [(a.domain, a.act, a.slot, a.relation, a.value) for a in acts]


# ---------------------------------------------------------------------------
# Dataset-level driver (shared by CLI and service)


def check_dataset(ds: Dataset, db: Database | None = None,
                  vm: ValueMapping | None = None,
                  norm: NormConfig = DEFAULT_NORM) -> list[F.Finding]:
    """Run entity checks (and API checks when a database is given) over every
    turn, threading the belief-state delta and utterance history."""
    out: list[F.Finding] = []
    for dialogue in ds:
        prior: BeliefState | None = None
        history: list[str] = []
        for turn in dialogue.turns:
            out.extend(check_entities(
                turn, vm, norm, prior_state=prior,
                history_text="\n".join(history), dialogue_id=dialogue.dialogue_id))
            if db is not None:
                out.extend(check_api(turn, db, vm, dialogue_id=dialogue.dialogue_id))
            history += [turn.user_utterance, turn.agent_utterance]
            prior = turn.belief_state
    return out

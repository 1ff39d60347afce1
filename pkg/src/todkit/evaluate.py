"""The two evaluation protocols over a pluggable predictor port.

Turn-by-turn feeds every subtask its gold context, isolating per-subtask
quality.  End-to-end carries the *predicted* belief state forward across
turns, executes API calls against a live database for the knowledge block,
and chains predicted outputs between subtasks within a turn; only the agent
acts in the history come from gold (so conversations cannot diverge).

Predictor failures and unparseable outputs score 0 and are logged in the
trace; evaluation never raises on arbitrary model text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Protocol

from .data import ActSeq, ApiCall, BeliefState, Dataset, Dialogue, Turn
from .errors import TodkitError
from .kb import Database, canonicalize_value, execute_api
from .metrics import (WORD_TOKENS, api_accuracy, bleu, da_accuracy, jga, ser)
from .stateformat import (
    IMPLICIT_RELATION,
    KnowledgeBlock,
    SubtaskContext,
    SubtaskKind,
    compose_subtask_input,
    parse_act_seq,
    parse_api_decision,
    parse_belief_state,
    render_subtask_input,
    serialize_act_seq,
    serialize_belief_state,
)
from .valuemap import ValueMapping

METRIC_ORDER = ("dst_acc", "da_acc", "jga", "tsr", "dsr", "api_acc", "daa", "bleu", "ser")


class Predictor(Protocol):
    """Port for anything that can answer subtask inputs.

    Implementations must be total (an exception is recorded as a miss) and
    must not mutate evaluation state.  Set ``concurrent_safe = False`` to
    declare single-flight behavior.
    """

    concurrent_safe: bool

    def __call__(self, kind: SubtaskKind, rendered_input: str) -> str: ...


@dataclass
class EvalReport:
    """Aggregates on a 0-100 scale; None where a protocol does not produce
    the metric (or the dataset is empty)."""

    dst_acc: float | None = None
    da_acc: float | None = None
    jga: float | None = None
    tsr: float | None = None
    dsr: float | None = None
    api_acc: float | None = None
    daa: float | None = None
    bleu: float | None = None
    ser: float | None = None
    trace: list[dict] = field(default_factory=list)

    def to_obj(self) -> dict:
        obj = {name: getattr(self, name) for name in METRIC_ORDER}
        obj["trace"] = self.trace
        return obj

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_obj(), f, ensure_ascii=False, indent=1)

    def summary(self) -> str:
        rows = []
        for name in METRIC_ORDER:
            value = getattr(self, name)
            rows.append(f"{name:>8}  " + ("   n/a" if value is None else f"{value:6.2f}"))
        return "\n".join(rows)


# ---------------------------------------------------------------------------
# Gold context assembly


def _acts_window(turns: list[Turn], index: int) -> ActSeq:
    """Agent acts of up to the two turns preceding ``index``, merged."""
    items = []
    for turn in turns[max(0, index - 2):index]:
        items.extend(turn.agent_acts.items)
    return ActSeq(tuple(items))


def _knowledge_from_results(turn: Turn) -> KnowledgeBlock | None:
    if turn.api_call is None or turn.api_results is None:
        return None
    records = turn.api_results
    return KnowledgeBlock(
        domain=turn.api_call.domain,
        record=dict(records[0]) if records else None,
        available_options=len(records),
    )


def gold_contexts(dialogue: Dialogue) -> list[dict[SubtaskKind, SubtaskContext]]:
    """Per turn, the gold-context SubtaskContext for each of the four
    subtasks (knowledge carries over from the most recent searched turn)."""
    turns = list(dialogue.turns)
    out = []
    carried: KnowledgeBlock | None = None
    for i, turn in enumerate(turns):
        prior = turns[i - 1].belief_state if i > 0 else BeliefState()
        window = _acts_window(turns, i)
        fresh = _knowledge_from_results(turn)
        after_api = fresh if fresh is not None else carried
        ctx = {
            SubtaskKind.DST: SubtaskContext(
                prior_state=prior, last_agent_acts=window,
                user_utterance=turn.user_utterance),
            SubtaskKind.API: SubtaskContext(
                prior_state=turn.belief_state, last_agent_acts=window,
                user_utterance=turn.user_utterance, knowledge=carried),
            SubtaskKind.DA: SubtaskContext(
                prior_state=turn.belief_state, last_agent_acts=window,
                user_utterance=turn.user_utterance, knowledge=after_api),
            SubtaskKind.RG: SubtaskContext(
                user_utterance=turn.user_utterance, acts_for_rg=turn.agent_acts),
        }
        out.append(ctx)
        carried = after_api
    return out


def gold_output(turn: Turn, kind: SubtaskKind, style: str = IMPLICIT_RELATION) -> str:
    if kind is SubtaskKind.DST:
        return serialize_belief_state(turn.belief_state, style)
    if kind is SubtaskKind.API:
        return "yes" if turn.api_call is not None else "no"
    if kind is SubtaskKind.DA:
        return serialize_act_seq(turn.agent_acts, style)
    return turn.agent_utterance


# ---------------------------------------------------------------------------
# Scripted predictors


_USER_RE = re.compile(r"USER: (.*?) <endofhistory>", re.DOTALL)


def extract_user_utterance(rendered_input: str) -> str:
    matches = _USER_RE.findall(rendered_input)
    return matches[-1] if matches else ""


class EchoPredictor:
    """Oracle that answers every subtask with the gold output.

    Keyed by (subtask, user utterance) so it stays correct even when the
    surrounding context differs between protocols (e.g. live database
    knowledge versus recorded results).  Stateless and concurrent-safe.
    """

    concurrent_safe = True

    def __init__(self, ds: Dataset, style: str = IMPLICIT_RELATION):
        self.table: dict[tuple[SubtaskKind, str], str] = {}
        for _, turn in ds.turns():
            for kind in SubtaskKind:
                self.table[(kind, turn.user_utterance)] = gold_output(turn, kind, style)

    def __call__(self, kind: SubtaskKind, rendered_input: str) -> str:
        return self.table[(kind, extract_user_utterance(rendered_input))]


FALLBACKS = {
    SubtaskKind.DST: "null",
    SubtaskKind.API: "no",
    SubtaskKind.DA: "( unknown ) general",
    SubtaskKind.RG: "",
}


class ScriptedPredictor:
    """Exact-input lookup table with per-subtask fallbacks.

    Unlike ``EchoPredictor`` this is sensitive to the full rendered input, so
    upstream errors cascade: a corrupted context misses the table and yields
    the fallback.  ``from_dataset`` builds the gold table; entries can then
    be overridden to script specific mistakes.
    """

    concurrent_safe = True

    def __init__(self, table: dict[tuple[SubtaskKind, str], str],
                 fallbacks: dict[SubtaskKind, str] | None = None):
        self.table = dict(table)
        self.fallbacks = dict(FALLBACKS if fallbacks is None else fallbacks)

    @classmethod
    def from_dataset(cls, ds: Dataset, style: str = IMPLICIT_RELATION) -> "ScriptedPredictor":
        table = {}
        for dialogue in ds:
            contexts = gold_contexts(dialogue)
            for turn, ctx in zip(dialogue.turns, contexts):
                for kind in SubtaskKind:
                    rendered = render_subtask_input(kind, ctx[kind], style)
                    table[(kind, rendered)] = gold_output(turn, kind, style)
        return cls(table)

    def override(self, kind: SubtaskKind, rendered_input: str, output: str):
        self.table[(kind, rendered_input)] = output

    def __call__(self, kind: SubtaskKind, rendered_input: str) -> str:
        return self.table.get((kind, rendered_input), self.fallbacks[kind])


def _call(predictor, kind: SubtaskKind, rendered: str) -> tuple[str | None, str | None]:
    try:
        return predictor(kind, rendered), None
    except Exception as e:  # predictor failures become misses, never crashes
        return None, f"{type(e).__name__}: {e}"


# ---------------------------------------------------------------------------
# Turn-by-turn protocol


def evaluate_turn_by_turn(ds: Dataset, predictor, vm: ValueMapping | None = None,
                          style: str = IMPLICIT_RELATION,
                          tokenize_mode: str = WORD_TOKENS) -> EvalReport:
    """Feed each subtask its gold input for every turn and score the outputs."""
    report = EvalReport()
    dst_hits: list[int] = []
    da_hits: list[int] = []
    responses: list[str] = []
    references: list[str] = []

    for dialogue in ds:
        contexts = gold_contexts(dialogue)
        for turn, ctx in zip(dialogue.turns, contexts):
            row = {"dialogue_id": dialogue.dialogue_id, "turn_id": turn.turn_id}

            out, err = _call(predictor, SubtaskKind.DST,
                             render_subtask_input(SubtaskKind.DST, ctx[SubtaskKind.DST], style))
            hit = 0
            if out is not None:
                try:
                    hit = jga(parse_belief_state(out), turn.belief_state, vm)
                except TodkitError as e:
                    err = f"unparseable state: {e}"
            dst_hits.append(hit)
            row["dst"] = {"output": out, "hit": hit, "error": err}

            out, err = _call(predictor, SubtaskKind.API,
                             render_subtask_input(SubtaskKind.API, ctx[SubtaskKind.API], style))
            decision = None
            if out is not None:
                try:
                    decision = parse_api_decision(out)
                except TodkitError as e:
                    err = f"unparseable decision: {e}"
            row["api"] = {"output": out,
                          "hit": int(decision == (turn.api_call is not None)),
                          "error": err}

            out, err = _call(predictor, SubtaskKind.DA,
                             render_subtask_input(SubtaskKind.DA, ctx[SubtaskKind.DA], style))
            hit = 0
            if out is not None:
                try:
                    hit = da_accuracy(parse_act_seq(out), turn.agent_acts, vm)
                except TodkitError as e:
                    err = f"unparseable acts: {e}"
            da_hits.append(hit)
            row["da"] = {"output": out, "hit": hit, "error": err}

            out, err = _call(predictor, SubtaskKind.RG,
                             render_subtask_input(SubtaskKind.RG, ctx[SubtaskKind.RG], style))
            responses.append(out or "")
            references.append(turn.agent_utterance)
            row["rg"] = {"output": out, "error": err}

            report.trace.append(row)

    if dst_hits:
        report.dst_acc = 100.0 * sum(dst_hits) / len(dst_hits)
        report.da_acc = 100.0 * sum(da_hits) / len(da_hits)
        report.bleu = bleu(responses, references, mode=tokenize_mode)
    return report


# ---------------------------------------------------------------------------
# End-to-end protocol


def _gold_entities(turn: Turn, domain: str | None = None) -> list[str]:
    return [a.value for a in turn.agent_acts
            if a.value is not None and (domain is None or a.domain == domain)]


def _turn_domains(turn: Turn) -> list[str]:
    domains = []
    for a in turn.agent_acts:
        if a.domain not in domains:
            domains.append(a.domain)
    if turn.api_call is not None and turn.api_call.domain not in domains:
        domains.append(turn.api_call.domain)
    return domains


def _active_domain(pred_state: BeliefState, turn: Turn) -> str | None:
    if pred_state:
        return pred_state.triplets[-1].domain
    if turn.api_call is not None:
        return turn.api_call.domain
    return None


def evaluate_end_to_end(ds: Dataset, predictor, db: Database,
                        vm: ValueMapping | None = None,
                        style: str = IMPLICIT_RELATION,
                        tokenize_mode: str = WORD_TOKENS) -> EvalReport:
    """Full-conversation evaluation with predicted-state carryforward.

    Within a turn the subtasks chain on predicted upstream outputs (the DA
    output string feeds RG); across turns the predicted belief state carries
    forward while the history's agent acts come from gold.  A predicted
    positive API decision triggers a live database call whose result becomes
    the knowledge block.
    """
    report = EvalReport()
    jga_hits: list[int] = []
    api_hits: list[int] = []
    daa_hits: list[int] = []
    ser_hits: list[int] = []
    responses: list[str] = []
    references: list[str] = []

    for dialogue in ds:
        turns = list(dialogue.turns)
        pred_prior = BeliefState()
        carried: KnowledgeBlock | None = None
        for i, turn in enumerate(turns):
            row = {"dialogue_id": dialogue.dialogue_id, "turn_id": turn.turn_id}
            window = _acts_window(turns, i)  # gold acts in the history
            base = SubtaskContext(prior_state=pred_prior, last_agent_acts=window,
                                  user_utterance=turn.user_utterance)

            # DST on the carried predicted state.
            out, err = _call(predictor, SubtaskKind.DST,
                             render_subtask_input(SubtaskKind.DST, base, style))
            pred_state = pred_prior  # unparseable output keeps the old state
            if out is not None:
                try:
                    pred_state = parse_belief_state(out)
                except TodkitError as e:
                    err = f"unparseable state: {e}"
            jga_t = jga(pred_state, turn.belief_state, vm)
            jga_hits.append(jga_t)
            row["dst"] = {"output": out, "hit": jga_t, "error": err}

            # API decision on the predicted state; execute on yes.
            api_ctx = replace(base, prior_state=pred_state, knowledge=carried)
            out, err = _call(predictor, SubtaskKind.API,
                             render_subtask_input(SubtaskKind.API, api_ctx, style))
            decision = None
            if out is not None:
                try:
                    decision = parse_api_decision(out)
                except TodkitError as e:
                    err = f"unparseable decision: {e}"
            pred_call = None
            if decision:
                domain = _active_domain(pred_state, turn)
                if domain is not None:
                    constraints = tuple(
                        replace(t, value=canonicalize_value(domain, t.slot, t.value, vm))
                        if vm is not None else t
                        for t in pred_state if t.domain == domain
                    )
                    pred_call = ApiCall(domain=domain, constraints=constraints)
                    if domain in db.tables:
                        rs = execute_api(pred_call, db, vm)
                        carried = KnowledgeBlock(
                            domain=domain,
                            record=dict(rs.records[0]) if rs.records else None,
                            available_options=rs.available_options)
            api_t = 0
            if decision is not None:
                api_t = api_accuracy(decision, pred_call,
                                     turn.api_call is not None, turn.api_call, vm)
            api_hits.append(api_t)
            row["api"] = {"output": out, "hit": api_t, "error": err}

            # DA on the (possibly refreshed) knowledge.
            da_ctx = replace(base, prior_state=pred_state, knowledge=carried)
            out, err = _call(predictor, SubtaskKind.DA,
                             render_subtask_input(SubtaskKind.DA, da_ctx, style))
            pred_acts = None
            if out is not None:
                try:
                    pred_acts = parse_act_seq(out)
                except TodkitError as e:
                    err = f"unparseable acts: {e}"
            daa_t = da_accuracy(pred_acts, turn.agent_acts, vm) if pred_acts else 0
            daa_hits.append(daa_t)
            row["da"] = {"output": out, "hit": daa_t, "error": err}

            # RG chains on the predicted acts (canonical form when they
            # parse, the raw prediction otherwise).
            if pred_acts:
                actions_text = serialize_act_seq(pred_acts, style)
            else:
                actions_text = (out or "").strip() or FALLBACKS[SubtaskKind.DA]
            rg_input = compose_subtask_input(
                SubtaskKind.RG, actions=actions_text,
                history=f"USER: {turn.user_utterance}")
            out, err = _call(predictor, SubtaskKind.RG, rg_input)
            response = out or ""
            responses.append(response)
            references.append(turn.agent_utterance)
            ser_t = ser(response, _gold_entities(turn), vm)
            ser_hits.append(ser_t)
            row["rg"] = {"output": out, "ser": ser_t, "error": err}

            # Task bookkeeping for TSR/DSR.
            domain_status = {}
            gold_domain = turn.api_call.domain if turn.api_call else None
            for domain in _turn_domains(turn):
                api_ok = api_t == 1 if (gold_domain is None or domain == gold_domain) else True
                entities_ok = ser(response, _gold_entities(turn, domain), vm) == 0
                domain_status[domain] = {"api_ok": api_ok, "entities_ok": entities_ok}
            row["domains"] = domain_status
            report.trace.append(row)

            pred_prior = pred_state

    if jga_hits:
        report.jga = 100.0 * sum(jga_hits) / len(jga_hits)
        report.api_acc = 100.0 * sum(api_hits) / len(api_hits)
        report.daa = 100.0 * sum(daa_hits) / len(daa_hits)
        report.bleu = bleu(responses, references, mode=tokenize_mode)
        report.ser = 100.0 * sum(ser_hits) / len(ser_hits)
        report.tsr, report.dsr = tsr_dsr(report.trace)
    return report


def tsr_dsr(trace: list[dict]) -> tuple[float | None, float | None]:
    """Task and dialogue success rates from an end-to-end trace.

    A task is a (dialogue, domain) pair; it succeeds iff every one of its
    turns has a correct API call and a response containing that domain's
    gold entities.  A dialogue succeeds iff all its tasks do.
    """
    tasks: dict[tuple[str, str], bool] = {}
    dialogues: dict[str, bool] = {}
    for row in trace:
        dialogues.setdefault(row["dialogue_id"], True)
        for domain, status in row.get("domains", {}).items():
            key = (row["dialogue_id"], domain)
            ok = status["api_ok"] and status["entities_ok"]
            tasks[key] = tasks.get(key, True) and ok
    if not tasks:
        return None, None
    for (dialogue_id, _), ok in tasks.items():
        dialogues[dialogue_id] = dialogues[dialogue_id] and ok
    tsr = 100.0 * sum(tasks.values()) / len(tasks)
    dsr = 100.0 * sum(dialogues.values()) / len(dialogues)
    return tsr, dsr

"""Standardized dialogue dataset representation and its JSON on-disk format.

A dataset is a list of dialogues; each dialogue is a list of turns, where one
turn is a full user->agent exchange: user utterance, accumulated belief
state, optional API call and results, agent dialogue acts, agent utterance,
and the entity spans annotated in either utterance.

All types are immutable values after construction and safe to share across
threads.  Construction is permissive: invariants are checked by
``validate_dataset`` (which reports findings) and enforced by
``load_dataset`` (which raises ``SchemaError``).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Any, Iterator

from . import findings as F
from .errors import IoError, SchemaError

VALID_SPLITS = ("fewshot", "valid", "test", "train")
VALID_SIDES = ("user", "agent")

DEFAULT_RELATION = "equal_to"

_FORBIDDEN_IDENT_CHARS = set("\"'")


def is_identifier(text: str) -> bool:
    """Identifiers (domains, slots, relations, acts) are non-empty and
    contain no whitespace or quote characters."""
    if not text:
        return False
    if any(ch.isspace() or ch in _FORBIDDEN_IDENT_CHARS for ch in text):
        return False
    return True


@dataclass(frozen=True)
class SlotTriplet:
    """One (domain, slot, relation, value) annotation atom."""

    domain: str
    slot: str
    relation: str = DEFAULT_RELATION
    value: str = ""

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.domain, self.slot, self.relation)


@dataclass(frozen=True)
class BeliefState:
    """Ordered list of slot triplets with unique (domain, slot, relation) keys."""

    triplets: tuple[SlotTriplet, ...] = ()

    def __iter__(self) -> Iterator[SlotTriplet]:
        return iter(self.triplets)

    def __len__(self) -> int:
        return len(self.triplets)

    def __bool__(self) -> bool:
        return bool(self.triplets)

    def domains(self) -> list[str]:
        seen = []
        for t in self.triplets:
            if t.domain not in seen:
                seen.append(t.domain)
        return seen

    def duplicate_keys(self) -> list[tuple[str, str, str]]:
        seen: set[tuple[str, str, str]] = set()
        dups = []
        for t in self.triplets:
            if t.key in seen:
                dups.append(t.key)
            seen.add(t.key)
        return dups


@dataclass(frozen=True)
class ActItem:
    """One agent dialogue act: (domain, act) with an optional slot/value."""

    domain: str
    act: str
    slot: str | None = None
    relation: str | None = None
    value: str | None = None


@dataclass(frozen=True)
class ActSeq:
    """Ordered agent dialogue acts for one turn."""

    items: tuple[ActItem, ...] = ()

    def __iter__(self) -> Iterator[ActItem]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)


@dataclass(frozen=True)
class ApiCall:
    """A database query: domain plus domain-homogeneous constraints."""

    domain: str
    constraints: tuple[SlotTriplet, ...] = ()


@dataclass(frozen=True)
class EntitySpan:
    """Character span of an annotation value's surface form in an utterance.

    Offsets index Unicode scalar values, not bytes.  The slice
    ``utterance[start_char:end_char]`` must equal ``value`` exactly.
    """

    domain: str
    slot: str
    relation: str
    value: str
    start_char: int
    end_char: int
    side: str  # "user" | "agent"

    @property
    def slot_key(self) -> tuple[str, str, str]:
        return (self.domain, self.slot, self.relation)


@dataclass(frozen=True)
class Turn:
    """One full user->agent exchange."""

    turn_id: int
    user_utterance: str
    belief_state: BeliefState = BeliefState()
    api_call: ApiCall | None = None
    api_results: tuple[dict[str, str], ...] | None = None
    agent_acts: ActSeq = ActSeq()
    agent_utterance: str = ""
    spans: tuple[EntitySpan, ...] = ()

    def utterance(self, side: str) -> str:
        return self.user_utterance if side == "user" else self.agent_utterance


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    domains: tuple[str, ...] = ()
    turns: tuple[Turn, ...] = ()


@dataclass(frozen=True)
class Dataset:
    """A list of dialogues plus runtime language/split tags.

    The tags are not part of the on-disk format and are excluded from
    structural equality so that a save/load round trip compares equal.
    """

    dialogues: tuple[Dialogue, ...] = ()
    language: str = field(default="", compare=False)
    split: str | None = field(default=None, compare=False)

    def __iter__(self) -> Iterator[Dialogue]:
        return iter(self.dialogues)

    def __len__(self) -> int:
        return len(self.dialogues)

    def get_dialogue(self, dialogue_id: str) -> Dialogue | None:
        for d in self.dialogues:
            if d.dialogue_id == dialogue_id:
                return d
        return None

    def turns(self) -> Iterator[tuple[Dialogue, Turn]]:
        for d in self.dialogues:
            for t in d.turns:
                yield d, t


# ---------------------------------------------------------------------------
# Validation


def _check_triplet(t: SlotTriplet, out, d_id, t_id, where):
    for name, val in (("domain", t.domain), ("slot", t.slot), ("relation", t.relation)):
        if not is_identifier(val):
            out.append(F.Finding(F.BAD_IDENTIFIER, d_id, t_id,
                                 f"{where}: {name} {val!r} is not an identifier"))
    if not t.value:
        out.append(F.Finding(F.EMPTY_VALUE, d_id, t_id, f"{where}: empty value",
                             slot_key=t.key))
    elif '"' in t.value:
        out.append(F.Finding(F.EMPTY_VALUE, d_id, t_id,
                             f"{where}: value contains a double quote", slot_key=t.key))


def validate_dataset(ds: Dataset) -> list[F.Finding]:
    """Check every type invariant; return findings (empty iff fully valid)."""
    out: list[F.Finding] = []
    if ds.split is not None and ds.split not in VALID_SPLITS:
        out.append(F.Finding(F.BAD_SPLIT, "", None, f"unknown split {ds.split!r}"))

    seen_ids: set[str] = set()
    for d in ds.dialogues:
        d_id = d.dialogue_id
        if d_id in seen_ids:
            out.append(F.Finding(F.DUP_DIALOGUE_ID, d_id, None, "duplicate dialogue_id"))
        seen_ids.add(d_id)

        prev_turn_id = -1
        for turn in d.turns:
            t_id = turn.turn_id
            if t_id <= prev_turn_id:
                out.append(F.Finding(F.BAD_TURN_ORDER, d_id, t_id,
                                     f"turn_id {t_id} not strictly increasing"))
            prev_turn_id = t_id

            for t in turn.belief_state:
                _check_triplet(t, out, d_id, t_id, "belief_state")
            for key in turn.belief_state.duplicate_keys():
                out.append(F.Finding(F.DUP_SLOT_KEY, d_id, t_id,
                                     f"duplicate slot key {key}", slot_key=key))

            if not turn.agent_acts:
                out.append(F.Finding(F.EMPTY_ACTS, d_id, t_id, "agent turn has no acts"))
            for item in turn.agent_acts:
                if not is_identifier(item.domain) or not is_identifier(item.act):
                    out.append(F.Finding(F.BAD_IDENTIFIER, d_id, t_id,
                                         f"act {item.domain}/{item.act} malformed"))
                if item.value is not None and item.slot is None:
                    out.append(F.Finding(F.BAD_ACT_ITEM, d_id, t_id,
                                         f"act {item.act} has a value but no slot"))
                if item.act == "general" and (item.slot or item.value):
                    out.append(F.Finding(F.BAD_ACT_ITEM, d_id, t_id,
                                         "general act must not carry a slot or value"))

            if turn.api_call is not None:
                for c in turn.api_call.constraints:
                    _check_triplet(c, out, d_id, t_id, "api_call")
                    if c.domain != turn.api_call.domain:
                        out.append(F.Finding(F.MIXED_API_DOMAIN, d_id, t_id,
                                             f"constraint domain {c.domain!r} differs "
                                             f"from call domain {turn.api_call.domain!r}"))

            for i, span in enumerate(turn.spans):
                if span.side not in VALID_SIDES:
                    out.append(F.Finding(F.BAD_SPAN, d_id, t_id,
                                         f"span[{i}]: bad side {span.side!r}"))
                    continue
                utt = turn.utterance(span.side)
                if not (0 <= span.start_char < span.end_char <= len(utt)):
                    out.append(F.Finding(F.BAD_SPAN, d_id, t_id,
                                         f"span[{i}]: offsets ({span.start_char}, "
                                         f"{span.end_char}) out of range"))
                elif utt[span.start_char:span.end_char] != span.value:
                    out.append(F.Finding(F.BAD_SPAN, d_id, t_id,
                                         f"span[{i}]: slice "
                                         f"{utt[span.start_char:span.end_char]!r} != "
                                         f"value {span.value!r}"))
    return out


# ---------------------------------------------------------------------------
# JSON (de)serialization.  Field names are part of the public contract.


def _triplet_to_dict(t: SlotTriplet) -> dict[str, str]:
    return {"domain": t.domain, "slot": t.slot, "relation": t.relation, "value": t.value}


def _triplet_from_dict(obj: Any, loc: str) -> SlotTriplet:
    if not isinstance(obj, dict):
        raise SchemaError(loc, "triplet must be an object")
    try:
        return SlotTriplet(
            domain=_req_str(obj, "domain", loc),
            slot=_req_str(obj, "slot", loc),
            relation=str(obj.get("relation") or DEFAULT_RELATION),
            value=_req_str(obj, "value", loc),
        )
    except KeyError as e:
        raise SchemaError(loc, f"triplet missing field {e}") from None


def _req_str(obj: dict, key: str, loc: str) -> str:
    if key not in obj:
        raise SchemaError(loc, f"missing field {key!r}")
    val = obj[key]
    if not isinstance(val, str):
        raise SchemaError(loc, f"field {key!r} must be a string")
    return val


def turn_to_dict(turn: Turn) -> dict[str, Any]:
    return {
        "turn_id": turn.turn_id,
        "user_utterance": turn.user_utterance,
        "belief_state": [_triplet_to_dict(t) for t in turn.belief_state],
        "api_call": (
            None if turn.api_call is None
            else {"domain": turn.api_call.domain,
                  "constraints": [_triplet_to_dict(c) for c in turn.api_call.constraints]}
        ),
        "api_results": None if turn.api_results is None else [dict(r) for r in turn.api_results],
        "agent_acts": [
            {"domain": a.domain, "act": a.act, "slot": a.slot,
             "relation": a.relation, "value": a.value}
            for a in turn.agent_acts
        ],
        "agent_utterance": turn.agent_utterance,
        "spans": [
            {"domain": s.domain, "slot": s.slot, "relation": s.relation, "value": s.value,
             "start_char": s.start_char, "end_char": s.end_char, "side": s.side}
            for s in turn.spans
        ],
    }


def turn_from_dict(obj: Any, loc: str) -> Turn:
    if not isinstance(obj, dict):
        raise SchemaError(loc, "turn must be an object")
    turn_id = obj.get("turn_id")
    if not isinstance(turn_id, int) or turn_id < 0:
        raise SchemaError(loc, "turn_id must be an int >= 0")

    belief = BeliefState(tuple(
        _triplet_from_dict(t, f"{loc}.belief_state[{i}]")
        for i, t in enumerate(obj.get("belief_state") or [])
    ))

    api_call = None
    raw_call = obj.get("api_call")
    if raw_call is not None:
        if not isinstance(raw_call, dict):
            raise SchemaError(f"{loc}.api_call", "must be an object or null")
        api_call = ApiCall(
            domain=_req_str(raw_call, "domain", f"{loc}.api_call"),
            constraints=tuple(
                _triplet_from_dict(c, f"{loc}.api_call.constraints[{i}]")
                for i, c in enumerate(raw_call.get("constraints") or [])
            ),
        )

    api_results = None
    raw_results = obj.get("api_results")
    if raw_results is not None:
        if not isinstance(raw_results, list):
            raise SchemaError(f"{loc}.api_results", "must be a list or null")
        api_results = tuple(
            {str(k): str(v) for k, v in r.items()} if isinstance(r, dict)
            else _bad_record(f"{loc}.api_results[{i}]")
            for i, r in enumerate(raw_results)
        )

    acts = []
    for i, a in enumerate(obj.get("agent_acts") or []):
        aloc = f"{loc}.agent_acts[{i}]"
        if not isinstance(a, dict):
            raise SchemaError(aloc, "act must be an object")
        acts.append(ActItem(
            domain=_req_str(a, "domain", aloc),
            act=_req_str(a, "act", aloc),
            slot=a.get("slot"),
            relation=a.get("relation"),
            value=a.get("value"),
        ))

    spans = []
    for i, s in enumerate(obj.get("spans") or []):
        sloc = f"{loc}.spans[{i}]"
        if not isinstance(s, dict):
            raise SchemaError(sloc, "span must be an object")
        start, end = s.get("start_char"), s.get("end_char")
        if not isinstance(start, int) or not isinstance(end, int):
            raise SchemaError(sloc, "start_char/end_char must be ints")
        spans.append(EntitySpan(
            domain=_req_str(s, "domain", sloc),
            slot=_req_str(s, "slot", sloc),
            relation=str(s.get("relation") or DEFAULT_RELATION),
            value=_req_str(s, "value", sloc),
            start_char=start,
            end_char=end,
            side=_req_str(s, "side", sloc),
        ))

    return Turn(
        turn_id=turn_id,
        user_utterance=_req_str(obj, "user_utterance", loc),
        belief_state=belief,
        api_call=api_call,
        api_results=api_results,
        agent_acts=ActSeq(tuple(acts)),
        agent_utterance=_req_str(obj, "agent_utterance", loc),
        spans=tuple(spans),
    )


def _bad_record(loc: str):
    raise SchemaError(loc, "api result record must be an object")


def dataset_to_obj(ds: Dataset) -> list[dict[str, Any]]:
    return [
        {"dialogue_id": d.dialogue_id, "domains": list(d.domains),
         "turns": [turn_to_dict(t) for t in d.turns]}
        for d in ds.dialogues
    ]


def dataset_from_obj(obj: Any, language: str = "", split: str | None = None) -> Dataset:
    if not isinstance(obj, list):
        raise SchemaError("$", "top level must be a JSON array of dialogues")
    dialogues = []
    for i, d in enumerate(obj):
        loc = f"dialogues[{i}]"
        if not isinstance(d, dict):
            raise SchemaError(loc, "dialogue must be an object")
        d_id = _req_str(d, "dialogue_id", loc)
        domains = d.get("domains") or []
        if not isinstance(domains, list) or not all(isinstance(x, str) for x in domains):
            raise SchemaError(loc, "domains must be a list of strings")
        turns = tuple(
            turn_from_dict(t, f"{loc}(id={d_id}).turns[{j}]")
            for j, t in enumerate(d.get("turns") or [])
        )
        dialogues.append(Dialogue(dialogue_id=d_id, domains=tuple(domains), turns=turns))
    return Dataset(dialogues=tuple(dialogues), language=language, split=split)


def load_dataset(path, language: str = "", split: str | None = None) -> Dataset:
    """Load and fully validate a dataset file.

    Raises ``IoError`` if the file cannot be read and ``SchemaError`` (with a
    location pinpointing the dialogue/turn) on the first violated invariant.
    """
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(str(path), f"not valid JSON: {e}") from e

    ds = dataset_from_obj(raw, language=language, split=split)
    issues = validate_dataset(ds)
    if issues:
        first = issues[0]
        raise SchemaError(
            f"dialogue {first.dialogue_id!r} turn {first.turn_id}",
            f"{first.code}: {first.message}"
            + (f" (+{len(issues) - 1} more)" if len(issues) > 1 else ""),
        )
    return ds


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset atomically (temp file + rename) in the JSON format."""
    payload = json.dumps(dataset_to_obj(ds), ensure_ascii=False, indent=1)
    directory = os.path.dirname(os.fspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def replace_turn(ds: Dataset, dialogue_id: str, turn: Turn) -> Dataset:
    """Return a new dataset with one turn swapped (matched by turn_id)."""
    dialogues = []
    for d in ds.dialogues:
        if d.dialogue_id == dialogue_id:
            turns = tuple(turn if t.turn_id == turn.turn_id else t for t in d.turns)
            dialogues.append(replace(d, turns=turns))
        else:
            dialogues.append(d)
    return replace(ds, dialogues=tuple(dialogues))

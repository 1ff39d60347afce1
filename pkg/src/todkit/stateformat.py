"""Textual format for belief states, dialogue acts, and subtask inputs.

Grammar (whitespace between tokens is flexible on input; output is canonical
single-space):

    state := group+
    group := "(" domain ")" svp ("," svp)*
    svp   := slot [relation] '"' value '"'

    acts  := group+
    group := "(" domain ")" item ("," item)*
    item  := act [slot [relation] '"' value '"']

Values may contain commas and parentheses; the double-quote character is
forbidden inside values (there is no escaping mechanism).  An omitted
relation means ``equal_to``.  Repeated domain groups parse by concatenation.

The subtask input templates and their sentinel tokens (``<state>``,
``<endofstate>``, ...) are a byte-exact public contract.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .data import ActItem, ActSeq, BeliefState, SlotTriplet, DEFAULT_RELATION, is_identifier
from .errors import (
    DuplicateKeyError,
    EmptyActsError,
    MissingContextError,
    ParseError,
    UnrecognizedDecisionError,
)

NULL_STATE = "null"

IMPLICIT_RELATION = "implicit_relation"
EXPLICIT_RELATION = "explicit_relation"

_DELIMS = {"(": "LPAREN", ")": "RPAREN", ",": "COMMA"}


class SubtaskKind(enum.Enum):
    DST = "DST"
    API = "API"
    DA = "DA"
    RG = "RG"


# ---------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class _Token:
    kind: str  # LPAREN | RPAREN | COMMA | VALUE | IDENT
    text: str
    pos: int


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _DELIMS:
            tokens.append(_Token(_DELIMS[ch], ch, i))
            i += 1
            continue
        if ch == '"':
            end = text.find('"', i + 1)
            if end < 0:
                raise ParseError(i, "a closing double quote")
            value = text[i + 1:end].strip()
            if not value:
                raise ParseError(i, "a non-empty quoted value")
            tokens.append(_Token("VALUE", value, i))
            i = end + 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in '(),"':
            j += 1
        tokens.append(_Token("IDENT", text[i:j], i))
        i = j
    return tokens


class _Cursor:
    def __init__(self, tokens: list[_Token], length: int):
        self.tokens = tokens
        self.i = 0
        self.end = length

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self, kind: str, expected: str) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.end, expected)
        if tok.kind != kind:
            raise ParseError(tok.pos, expected)
        self.i += 1
        return tok


# ---------------------------------------------------------------------------
# Parsing


def parse_belief_state(text: str) -> BeliefState:
    """Parse belief-state text; ``null`` denotes the empty state.

    Raises ``ParseError`` on malformed input and ``DuplicateKeyError`` when
    two triplets share a (domain, slot, relation) key.
    """
    if text.strip() == NULL_STATE:
        return BeliefState()
    cur = _Cursor(_lex(text), len(text))
    triplets: list[SlotTriplet] = []
    seen: set[tuple[str, str, str]] = set()

    if cur.peek() is None:
        raise ParseError(0, f"'{NULL_STATE}' or '('")
    while cur.peek() is not None:
        cur.take("LPAREN", "'('")
        domain = cur.take("IDENT", "a domain name").text
        cur.take("RPAREN", "')'")
        while True:
            slot_tok = cur.take("IDENT", "a slot name")
            nxt = cur.peek()
            if nxt is not None and nxt.kind == "IDENT":
                relation = cur.take("IDENT", "a relation").text
                value_tok = cur.take("VALUE", "a quoted value")
            elif nxt is not None and nxt.kind == "VALUE":
                relation = DEFAULT_RELATION
                value_tok = cur.take("VALUE", "a quoted value")
            else:
                pos = nxt.pos if nxt is not None else cur.end
                raise ParseError(pos, "a relation or a quoted value")
            triplet = SlotTriplet(domain, slot_tok.text, relation, value_tok.text)
            if triplet.key in seen:
                raise DuplicateKeyError(slot_tok.pos, triplet.key)
            seen.add(triplet.key)
            triplets.append(triplet)

            nxt = cur.peek()
            if nxt is None or nxt.kind == "LPAREN":
                break
            cur.take("COMMA", "',' or '('")
    return BeliefState(tuple(triplets))


def parse_act_seq(text: str) -> ActSeq:
    """Parse dialogue-act text into an ordered act sequence."""
    cur = _Cursor(_lex(text), len(text))
    items: list[ActItem] = []
    if cur.peek() is None:
        raise ParseError(0, "'('")
    while cur.peek() is not None:
        cur.take("LPAREN", "'('")
        domain = cur.take("IDENT", "a domain name").text
        cur.take("RPAREN", "')'")
        while True:
            act = cur.take("IDENT", "an act name").text
            slot = relation = value = None
            nxt = cur.peek()
            if nxt is not None and nxt.kind == "IDENT":
                slot = cur.take("IDENT", "a slot name").text
                nxt = cur.peek()
                if nxt is not None and nxt.kind == "IDENT":
                    relation = cur.take("IDENT", "a relation").text
                    value = cur.take("VALUE", "a quoted value").text
                elif nxt is not None and nxt.kind == "VALUE":
                    relation = DEFAULT_RELATION
                    value = cur.take("VALUE", "a quoted value").text
                else:
                    pos = nxt.pos if nxt is not None else cur.end
                    raise ParseError(pos, "a relation or a quoted value")
            elif nxt is not None and nxt.kind == "VALUE":
                raise ParseError(nxt.pos, "a slot name before the value")
            items.append(ActItem(domain, act, slot, relation, value))

            nxt = cur.peek()
            if nxt is None or nxt.kind == "LPAREN":
                break
            cur.take("COMMA", "',' or '('")
    return ActSeq(tuple(items))


def parse_api_decision(text: str) -> bool:
    """Interpret an API-call decision token (``yes``/``no``, case-insensitive)."""
    token = text.strip().casefold()
    if token == "yes":
        return True
    if token == "no":
        return False
    raise UnrecognizedDecisionError(f"expected 'yes' or 'no', got {text!r}")


# ---------------------------------------------------------------------------
# Serialization


def _check_value(value: str) -> str:
    if not value:
        raise ValueError("cannot serialize an empty value")
    if '"' in value:
        raise ValueError(f"value contains a double quote: {value!r}")
    return value


def _check_ident(name: str) -> str:
    if not is_identifier(name):
        raise ValueError(f"not a serializable identifier: {name!r}")
    return name


def _emit_relation(relation: str | None, style: str) -> list[str]:
    relation = relation or DEFAULT_RELATION
    if style == IMPLICIT_RELATION and relation == DEFAULT_RELATION:
        return []
    return [_check_ident(relation)]


def serialize_belief_state(bs: BeliefState, style: str = IMPLICIT_RELATION) -> str:
    """Render a belief state in canonical single-space form.

    Consecutive triplets with the same domain share one ``( domain )`` group,
    so parse(serialize(bs)) reproduces the triplet order exactly.
    """
    _check_style(style)
    if not bs:
        return NULL_STATE
    tokens: list[str] = []
    current_domain = None
    for t in bs:
        if t.domain != current_domain:
            tokens += ["(", _check_ident(t.domain), ")"]
            current_domain = t.domain
        else:
            tokens.append(",")
        tokens.append(_check_ident(t.slot))
        tokens += _emit_relation(t.relation, style)
        tokens.append(f'" {_check_value(t.value)} "')
    return " ".join(tokens)


def serialize_act_seq(acts: ActSeq, style: str = IMPLICIT_RELATION) -> str:
    """Render an act sequence in canonical single-space form."""
    _check_style(style)
    if not acts:
        raise EmptyActsError("cannot serialize an empty act sequence")
    tokens: list[str] = []
    current_domain = None
    for item in acts:
        if item.domain != current_domain:
            tokens += ["(", _check_ident(item.domain), ")"]
            current_domain = item.domain
        else:
            tokens.append(",")
        tokens.append(_check_ident(item.act))
        if item.value is not None:
            if item.slot is None:
                raise ValueError(f"act {item.act!r} has a value but no slot")
            tokens.append(_check_ident(item.slot))
            tokens += _emit_relation(item.relation, style)
            tokens.append(f'" {_check_value(item.value)} "')
        elif item.slot is not None:
            raise ValueError(f"act {item.act!r} has a slot but no value")
    return " ".join(tokens)


def _check_style(style: str):
    if style not in (IMPLICIT_RELATION, EXPLICIT_RELATION):
        raise ValueError(f"unknown style {style!r}")


def render_knowledge(domain: str, record: dict[str, str] | None,
                     available_options: int) -> str:
    """Render one database record plus the synthetic ``available_options``
    slot, in lexicographic slot order.  ``None`` (no results) renders as
    ``null``."""
    if record is None:
        return NULL_STATE
    merged = {**record, "available_options": str(available_options)}
    tokens = ["(", _check_ident(domain), ")"]
    for i, slot in enumerate(sorted(merged)):
        if i:
            tokens.append(",")
        tokens.append(_check_ident(slot))
        tokens.append(f'" {_check_value(str(merged[slot]))} "')
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# Subtask input rendering


@dataclass(frozen=True)
class KnowledgeBlock:
    """Database knowledge given to the API/DA subtasks: the top result
    record plus the total number of matching records."""

    domain: str
    record: dict[str, str] | None
    available_options: int

    def render(self) -> str:
        return render_knowledge(self.domain, self.record, self.available_options)


@dataclass(frozen=True)
class SubtaskContext:
    """Everything a subtask input template can mention.

    ``prior_state`` is the belief state the subtask conditions on: the
    previous turn's state for DST, the current turn's state for API/DA.
    ``last_agent_acts`` holds the agent acts of up to the last two turns,
    merged in order.
    """

    prior_state: BeliefState = BeliefState()
    last_agent_acts: ActSeq = ActSeq()
    user_utterance: str | None = None
    knowledge: KnowledgeBlock | None = None
    acts_for_rg: ActSeq | None = None


def compose_subtask_input(kind: SubtaskKind, *, state: str | None = None,
                          knowledge: str | None = None, actions: str | None = None,
                          history: str | None = None) -> str:
    """Assemble a subtask input from already-rendered parts (byte-exact
    templates).  Prefer ``render_subtask_input`` unless a part must be
    passed through verbatim (e.g. chaining a raw model prediction)."""
    if history is None:
        raise MissingContextError("history")
    if kind is SubtaskKind.DST:
        return f"DST: <state> {state} <endofstate> <history> {history} <endofhistory>"
    if kind is SubtaskKind.API:
        return (f"API: <knowledge> {knowledge} <endofknowledge> <state> {state} "
                f"<endofstate> <history> {history} <endofhistory>")
    if kind is SubtaskKind.DA:
        return (f"DA: <knowledge> {knowledge} <endofknowledge> <state> {state} "
                f"<endofstate> <history> {history} <endofhistory>")
    if kind is SubtaskKind.RG:
        return f"RG: <actions> {actions} <endofactions> <history> {history} <endofhistory>"
    raise ValueError(f"unknown subtask kind {kind!r}")


def render_history(ctx: SubtaskContext, style: str = IMPLICIT_RELATION,
                   include_acts: bool = True) -> str:
    if ctx.user_utterance is None:
        raise MissingContextError("user_utterance")
    if include_acts and ctx.last_agent_acts:
        acts = serialize_act_seq(ctx.last_agent_acts, style)
        return f"AGENT_ACTS: {acts} USER: {ctx.user_utterance}"
    return f"USER: {ctx.user_utterance}"


def render_subtask_input(kind: SubtaskKind, ctx: SubtaskContext,
                         style: str = IMPLICIT_RELATION) -> str:
    """Render the exact input string a predictor sees for one subtask.

    Missing knowledge renders as ``null`` for API and DA; a missing
    ``acts_for_rg`` for RG raises ``MissingContextError``.
    """
    _check_style(style)
    if kind is SubtaskKind.RG:
        if ctx.acts_for_rg is None:
            raise MissingContextError("acts_for_rg")
        actions = serialize_act_seq(ctx.acts_for_rg, style)
        history = render_history(ctx, style, include_acts=False)
        return compose_subtask_input(kind, actions=actions, history=history)

    state = serialize_belief_state(ctx.prior_state, style)
    history = render_history(ctx, style)
    if kind is SubtaskKind.DST:
        return compose_subtask_input(kind, state=state, history=history)
    knowledge = ctx.knowledge.render() if ctx.knowledge is not None else NULL_STATE
    return compose_subtask_input(kind, state=state, knowledge=knowledge, history=history)

"""Ontology and database storage plus API-call execution.

The ontology catalogs, per (domain, slot), the permissible canonical values;
the database holds the records API calls filter.  Matching uses the same
entity normalization as evaluation so database filtering and metrics agree.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

from .data import ApiCall
from .errors import IoError, UnknownDomainError, UnknownSlotError, UnsupportedRelationError
from .valuemap import ValueMapping, prenorm

EQUAL_TO = "equal_to"
NOT_EQUAL_TO = "not_equal_to"


@dataclass(frozen=True)
class Ontology:
    """Per domain: slot names and their canonical value lists."""

    slots: dict[str, dict[str, tuple[str, ...]]] = field(default_factory=dict)

    def domains(self) -> list[str]:
        return list(self.slots)

    def slot_names(self, domain: str) -> list[str]:
        if domain not in self.slots:
            raise UnknownDomainError(domain)
        return list(self.slots[domain])

    def validate(self) -> list[str]:
        problems = []
        for domain, slots in self.slots.items():
            for slot, values in slots.items():
                if not values:
                    problems.append(f"({domain}, {slot}): empty value list")
                if len(set(values)) != len(values):
                    problems.append(f"({domain}, {slot}): duplicate values")
        return problems


def slot_values(ontology: Ontology, domain: str, slot: str) -> list[str]:
    """The ontology's value list for (domain, slot), in stable order."""
    if domain not in ontology.slots:
        raise UnknownSlotError(f"unknown domain {domain!r}")
    if slot not in ontology.slots[domain]:
        raise UnknownSlotError(f"unknown slot ({domain!r}, {slot!r})")
    return list(ontology.slots[domain][slot])


@dataclass(frozen=True)
class ResultSet:
    records: tuple[dict[str, str], ...]
    available_options: int

    def __post_init__(self):
        assert self.available_options == len(self.records)


class Database:
    """Per domain: a list of records (slot -> value maps).

    Records are immutable after load.  A per-domain slot->value->row-ids
    index is built lazily; construction is idempotent so concurrent queries
    are safe.
    """

    def __init__(self, tables: dict[str, list[dict[str, str]]]):
        self.tables = {d: [dict(r) for r in rows] for d, rows in tables.items()}
        self._index: dict[str, dict[str, dict[str, list[int]]]] = {}
        self._index_lock = threading.Lock()

    def domains(self) -> list[str]:
        return list(self.tables)

    def records(self, domain: str) -> list[dict[str, str]]:
        if domain not in self.tables:
            raise UnknownDomainError(domain)
        return self.tables[domain]

    def _domain_index(self, domain: str) -> dict[str, dict[str, list[int]]]:
        idx = self._index.get(domain)
        if idx is None:
            built: dict[str, dict[str, list[int]]] = {}
            for row_id, record in enumerate(self.tables[domain]):
                for slot, value in record.items():
                    built.setdefault(slot, {}).setdefault(prenorm(value), []).append(row_id)
            with self._index_lock:
                idx = self._index.setdefault(domain, built)
        return idx

    def validate_against(self, ontology: Ontology) -> list[str]:
        problems = []
        for domain, rows in self.tables.items():
            if domain not in ontology.slots:
                problems.append(f"domain {domain!r} not in ontology")
                continue
            known = set(ontology.slots[domain])
            for i, record in enumerate(rows):
                for slot in record:
                    if slot not in known:
                        problems.append(f"{domain}[{i}]: slot {slot!r} not in ontology")
        return problems


def execute_api(call: ApiCall, db: Database, vm: ValueMapping | None = None) -> ResultSet:
    """Filter the domain's records by the call's constraints.

    ``equal_to`` is string equality after entity normalization;
    ``not_equal_to`` is its complement (a record lacking the slot satisfies
    it).  Result order follows database order.
    """
    if call.domain not in db.tables:
        raise UnknownDomainError(call.domain)
    for c in call.constraints:
        if c.relation not in (EQUAL_TO, NOT_EQUAL_TO):
            raise UnsupportedRelationError(c.relation)

    def norm(text: str, slot: str) -> str:
        return vm.normalize(text, slot=slot) if vm is not None else prenorm(text)

    rows = db.tables[call.domain]
    row_ids: list[int] | range = range(len(rows))
    if vm is None:
        # The index is keyed by prenorm, so it can only prefilter when no
        # value mapping changes the normalization.
        for c in call.constraints:
            if c.relation == EQUAL_TO:
                index = db._domain_index(call.domain)
                row_ids = index.get(c.slot, {}).get(prenorm(c.value), [])
                break

    matched = []
    for row_id in row_ids:
        record = rows[row_id]
        ok = True
        for c in call.constraints:
            have = record.get(c.slot)
            equal = have is not None and norm(have, c.slot) == norm(c.value, c.slot)
            if c.relation == EQUAL_TO and not equal:
                ok = False
                break
            if c.relation == NOT_EQUAL_TO and equal:
                ok = False
                break
        if ok:
            matched.append(dict(record))
    return ResultSet(records=tuple(matched), available_options=len(matched))


def canonicalize_value(domain: str, slot: str, raw: str, vm: ValueMapping) -> str:
    """Map a surface slot value to its canonical database form.

    Returns ``raw`` unchanged when no mapping entry covers it; idempotent
    because canonical forms map to themselves.  ``domain`` is accepted for
    interface symmetry; mapping entries are slot-scoped.
    """
    canonical = vm.canonical_for(slot, raw)
    return canonical if canonical is not None else raw


# ---------------------------------------------------------------------------
# File formats: ontology {domain: {slot: [values]}}, database {domain: [{slot: value}]}


def load_ontology(path) -> Ontology:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    slots = {
        str(domain): {str(slot): tuple(str(v) for v in values)
                      for slot, values in table.items()}
        for domain, table in raw.items()
    }
    return Ontology(slots=slots)


def save_ontology(ontology: Ontology, path) -> None:
    obj = {d: {s: list(v) for s, v in slots.items()} for d, slots in ontology.slots.items()}
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(obj, f, ensure_ascii=False, indent=1)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load_database(path) -> Database:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return Database({
        str(domain): [{str(k): str(v) for k, v in record.items()} for record in rows]
        for domain, rows in raw.items()
    })


def save_database(db: Database, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(db.tables, f, ensure_ascii=False, indent=1)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def ontology_from_database(db: Database) -> Ontology:
    """Derive an ontology by cataloging every value seen per (domain, slot)."""
    slots: dict[str, dict[str, tuple[str, ...]]] = {}
    for domain, rows in db.tables.items():
        table: dict[str, list[str]] = {}
        for record in rows:
            for slot, value in record.items():
                bucket = table.setdefault(slot, [])
                if value not in bucket:
                    bucket.append(value)
        slots[domain] = {s: tuple(v) for s, v in table.items()}
    return Ontology(slots=slots)

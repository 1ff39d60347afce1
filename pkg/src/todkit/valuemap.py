"""One-to-many mapping from source-language slot values to translations.

Each entry maps a source value to, per slot, the set of translation
candidates seen for it and one chosen canonical form.  The canonical form is
what the ontology/database stores and what evaluation normalizes to.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field

from .errors import IoError

_WS = re.compile(r"\s+")


def prenorm(text: str) -> str:
    """Casefold, trim, collapse whitespace, strip edge punctuation.

    This is the string-level half of entity normalization; canonical-map
    lookup happens on top of it.  Idempotent.
    """
    t = _WS.sub(" ", text.casefold().strip())
    start, end = 0, len(t)
    while start < end and unicodedata.category(t[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(t[end - 1]).startswith("P"):
        end -= 1
    return t[start:end].strip()


@dataclass
class SlotEntry:
    candidates: list[str] = field(default_factory=list)
    canonical: str = ""

    def add_candidate(self, candidate: str):
        if candidate not in self.candidates:
            self.candidates.append(candidate)
        if not self.canonical:
            self.canonical = candidate


class ValueMapping:
    """source value -> slot -> {candidates, canonical}."""

    def __init__(self, entries: dict[str, dict[str, SlotEntry]] | None = None):
        self.entries: dict[str, dict[str, SlotEntry]] = entries or {}
        self._caches_stale = True
        self._flat: dict[str, str] = {}
        self._by_slot: dict[tuple[str, str], str] = {}
        self._classes: dict[str, set[str]] = {}

    # -- construction -------------------------------------------------------

    def add(self, source_value: str, slot: str, candidate: str, canonical: str | None = None):
        entry = self.entries.setdefault(source_value, {}).setdefault(slot, SlotEntry())
        entry.add_candidate(candidate)
        if canonical is not None:
            if canonical not in entry.candidates:
                entry.candidates.append(canonical)
            entry.canonical = canonical
        self._caches_stale = True

    def set_canonical(self, source_value: str, slot: str, canonical: str):
        self.add(source_value, slot, canonical, canonical=canonical)

    # -- lookup -------------------------------------------------------------

    def _surfaces(self, source_value: str, entry: SlotEntry) -> list[str]:
        return [source_value, *entry.candidates, entry.canonical]

    def _rebuild(self):
        """Build lookup caches; values are resolved to fixpoints so
        normalization is idempotent even across chained entries."""
        flat: dict[str, str] = {}
        by_slot: dict[tuple[str, str], str] = {}
        classes: dict[str, set[str]] = {}
        for source in sorted(self.entries):
            for slot in sorted(self.entries[source]):
                entry = self.entries[source][slot]
                if not entry.canonical:
                    continue
                canon = prenorm(entry.canonical)
                surfaces = {prenorm(s) for s in self._surfaces(source, entry)}
                surfaces.discard("")
                for s in surfaces:
                    flat.setdefault(s, canon)
                    by_slot.setdefault((slot, s), entry.canonical)
                group = set(surfaces)
                for s in surfaces:
                    group |= classes.get(s, set())
                for s in group:
                    classes[s] = group

        # Collapse chains (a->b, b->c) to fixpoints; break cycles
        # deterministically at the smallest member.
        def resolve(key: str) -> str:
            seen = [key]
            cur = key
            while True:
                nxt = flat.get(cur)
                if nxt is None or nxt == cur:
                    return cur
                if nxt in seen:
                    return min(seen[seen.index(nxt):])
                seen.append(nxt)
                cur = nxt

        self._flat = {k: resolve(k) for k in flat}
        self._by_slot = by_slot
        self._classes = classes
        self._caches_stale = False

    def _ensure(self):
        if self._caches_stale:
            self._rebuild()

    def canonical_for(self, slot: str, raw: str) -> str | None:
        """The canonical form registered for (slot, raw), if any.  ``raw``
        may be the source value, a candidate, or the canonical itself."""
        self._ensure()
        return self._by_slot.get((slot, prenorm(raw)))

    def normalize(self, text: str, slot: str | None = None) -> str:
        """prenorm plus canonical-map lookup (slot-scoped first)."""
        self._ensure()
        p = prenorm(text)
        if slot is not None:
            canon = self._by_slot.get((slot, p))
            if canon is not None:
                return self._flat.get(prenorm(canon), prenorm(canon))
        return self._flat.get(p, p)

    def surfaces_of(self, value: str) -> set[str]:
        """All prenormed surface forms equivalent to ``value`` (including
        itself): source value, candidates, and canonical of any entry that
        mentions it."""
        self._ensure()
        p = prenorm(value)
        out = {p} if p else set()
        out |= self._classes.get(p, set())
        return out

    # -- (de)serialization ---------------------------------------------------

    def to_obj(self) -> dict:
        return {
            source: {
                slot: {"candidates": list(e.candidates), "canonical": e.canonical}
                for slot, e in slots.items()
            }
            for source, slots in self.entries.items()
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ValueMapping":
        vm = cls()
        for source, slots in obj.items():
            for slot, spec in slots.items():
                entry = SlotEntry()
                for c in spec.get("candidates", []):
                    entry.add_candidate(str(c))
                canonical = spec.get("canonical", "")
                if canonical:
                    if canonical not in entry.candidates:
                        entry.candidates.append(canonical)
                    entry.canonical = canonical
                vm.entries.setdefault(source, {})[slot] = entry
        return vm


def load_value_mapping(path) -> ValueMapping:
    try:
        with open(path, encoding="utf-8") as f:
            return ValueMapping.from_obj(json.load(f))
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def save_value_mapping(vm: ValueMapping, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(vm.to_obj(), f, ensure_ascii=False, indent=1)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e

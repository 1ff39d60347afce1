"""Findings and fixes emitted by validation and consistency checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

# Codes produced by dataset validation.
DUP_DIALOGUE_ID = "DUP_DIALOGUE_ID"
DUP_SLOT_KEY = "DUP_SLOT_KEY"
BAD_IDENTIFIER = "BAD_IDENTIFIER"
EMPTY_VALUE = "EMPTY_VALUE"
BAD_SPAN = "BAD_SPAN"
BAD_TURN_ORDER = "BAD_TURN_ORDER"
EMPTY_ACTS = "EMPTY_ACTS"
BAD_ACT_ITEM = "BAD_ACT_ITEM"
MIXED_API_DOMAIN = "MIXED_API_DOMAIN"
BAD_SPLIT = "BAD_SPLIT"

# Codes produced by the annotation checker.
MISSING_ENTITY = "MISSING_ENTITY"
REDUNDANT_SLOT = "REDUNDANT_SLOT"
SPAN_COUNT_MISMATCH = "SPAN_COUNT_MISMATCH"
API_RESULT_MISMATCH = "API_RESULT_MISMATCH"
VALUE_INCONSISTENT = "VALUE_INCONSISTENT"
NEEDS_REANNOTATION = "NEEDS_REANNOTATION"

# Only these carry machine-applicable fixes.
AUTO_FIXABLE = {REDUNDANT_SLOT, API_RESULT_MISMATCH}


@dataclass(frozen=True)
class Fix:
    """A machine-applicable correction proposal.

    ``kind`` is one of ``drop_constraints`` (remove API constraints),
    ``drop_triplet`` (remove a belief-state triplet), or
    ``add_value_mapping`` (register a translation candidate).  ``before``
    records the state the fix was computed against so a stale fix can be
    rejected instead of silently misapplied.
    """

    kind: str
    dialogue_id: str
    turn_id: int
    payload: dict[str, Any] = field(default_factory=dict)
    before: Any = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "dialogue_id": self.dialogue_id,
            "turn_id": self.turn_id,
            "payload": self.payload,
            "before": self.before,
        }


@dataclass(frozen=True)
class Finding:
    """One issue located in a dataset.

    ``slot_key`` is a ``(domain, slot, relation)`` tuple when the finding is
    about a specific annotation atom, else None.  ``suggested_fix`` is only
    present for auto-fixable codes.
    """

    code: str
    dialogue_id: str
    turn_id: int | None
    message: str
    slot_key: tuple[str, str, str] | None = None
    suggested_fix: Fix | None = None

    def __post_init__(self):
        if self.suggested_fix is not None and self.code not in AUTO_FIXABLE:
            raise ValueError(f"code {self.code} cannot carry a fix")

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "dialogue_id": self.dialogue_id,
            "turn_id": self.turn_id,
            "slot_key": list(self.slot_key) if self.slot_key else None,
            "message": self.message,
            "suggested_fix": self.suggested_fix.to_dict() if self.suggested_fix else None,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def write_findings_report(findings: list[Finding], path) -> None:
    """Write findings as JSON lines, one finding per line."""
    with open(path, "w", encoding="utf-8") as f:
        for finding in findings:
            f.write(finding.to_json_line() + "\n")

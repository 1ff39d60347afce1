"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class TodkitError(Exception):
    """Base class for all toolkit errors."""


class IoError(TodkitError):
    """File could not be read or written."""


class SchemaError(TodkitError):
    """A dataset file violates the on-disk schema or a type invariant.

    Carries a human-readable location (e.g. ``dialogue 'x' turn 3``) so the
    offending record can be found without re-running validation.
    """

    def __init__(self, location: str, reason: str):
        self.location = location
        self.reason = reason
        super().__init__(f"{location}: {reason}")


class ParseError(TodkitError):
    """Malformed belief-state / act text.

    ``position`` is a character offset into the input; ``expected`` describes
    what the parser was looking for at that point.
    """

    def __init__(self, position: int, expected: str):
        self.position = position
        self.expected = expected
        super().__init__(f"at char {position}: expected {expected}")


class DuplicateKeyError(ParseError):
    """Two triplets share the same (domain, slot, relation) key."""

    def __init__(self, position: int, key: tuple[str, str, str]):
        self.key = key
        super().__init__(position, f"unique slot key, got duplicate {key}")


class EmptyActsError(TodkitError):
    """An act sequence attached to an agent turn must not be empty."""


class MissingContextError(TodkitError):
    """A subtask render was attempted without a required context field."""

    def __init__(self, field: str):
        self.field = field
        super().__init__(f"missing context field: {field}")


class UnrecognizedDecisionError(TodkitError):
    """API-call decision text was neither 'yes' nor 'no'."""


class UnknownDomainError(TodkitError):
    """Domain not present in the database/ontology."""


class UnknownSlotError(TodkitError):
    """(domain, slot) pair not present in the ontology."""


class UnsupportedRelationError(TodkitError):
    """API execution saw a relation it cannot evaluate."""


class NoMatchError(TodkitError):
    """No dictionary candidate occurs in the target sentence."""


class NoAlignmentError(TodkitError):
    """No target token attends to the requested source span."""


class InvalidMatrixError(TodkitError):
    """Attention matrix violates its row-stochastic invariant."""


class AlignmentFailedError(TodkitError):
    """Both dictionary and neural alignment failed for an entity."""


class ZeroVectorError(TodkitError):
    """Cosine similarity is undefined for a zero-norm vector."""


class IndexOutOfRangeError(TodkitError):
    """A word-alignment pair points outside its sentence."""


class UnmappedValueError(TodkitError):
    """An annotation value has neither an alignment nor a mapping entry."""

    def __init__(self, domain: str, slot: str, value: str):
        self.domain = domain
        self.slot = slot
        self.value = value
        super().__init__(f"no alignment or mapping for ({domain}, {slot}) value {value!r}")


class StaleFixError(TodkitError):
    """The dataset changed since the fix was computed; refusing to apply."""


class ParallelismError(TodkitError):
    """Source/target datasets are not turn-parallel."""


class LengthMismatchError(TodkitError):
    """Parallel lists have different lengths."""


class EmptyCorpusError(TodkitError):
    """Corpus-level metric called with no sentence pairs."""


class NotApplicableError(TodkitError):
    """The requested perturbation cannot be applied to this example."""

    def __init__(self, ptype: str, reason: str):
        self.ptype = ptype
        super().__init__(f"{ptype}: {reason}")


class PredicateFailureError(TodkitError):
    """An ensemble classifier predicate raised; index identifies which."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"predicate {index} failed: {cause}")


class VersionConflictError(TodkitError):
    """A write carried a stale turn version."""

    def __init__(self, current_version: int):
        self.current_version = current_version
        super().__init__(f"stale version; current is {current_version}")


class SpanInvariantViolationError(TodkitError):
    """A submitted span does not match its utterance slice."""


class NoMatchingTaskError(TodkitError):
    """No turn in the dataset matches the requested filter."""

"""Locating translated entities in target-language sentences.

Two complementary strategies: dictionary alignment scans the translation for
any of an entity's pre-generated candidate translations; neural alignment
reads the translation model's cross-attention matrix.  The hybrid aligner
tries the dictionary first and falls back to attention only on a miss, since
attention has low recall on long multi-token entities.

The translation model itself is out of scope: attention matrices, candidate
lists, and embedding vectors all arrive as data files.
"""

from __future__ import annotations

import json
import random
import unicodedata
from dataclasses import dataclass, replace

import numpy as np

from .data import Turn, EntitySpan
from .errors import (
    AlignmentFailedError,
    IndexOutOfRangeError,
    InvalidMatrixError,
    IoError,
    NoAlignmentError,
    NoMatchError,
    SpanInvariantViolationError,
    UnmappedValueError,
    ZeroVectorError,
)
from .valuemap import ValueMapping

DICTIONARY = "dictionary"
NEURAL = "neural"

ROW_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class NormConfig:
    """Text normalization for dictionary matching.

    ``word_boundaries`` should be disabled for scripts without spaces
    (matching then happens at any character position).
    """

    casefold: bool = True
    fold_diacritics: bool = False
    word_boundaries: bool = True


@dataclass(frozen=True)
class CandidateSet:
    """An entity and its candidate translations (deduplicated, order kept)."""

    entity: str
    candidates: tuple[str, ...]

    def __post_init__(self):
        deduped = []
        for c in self.candidates:
            if c and c not in deduped:
                deduped.append(c)
        object.__setattr__(self, "candidates", tuple(deduped))


@dataclass(frozen=True)
class AlignedEntity:
    """A source value located in the target sentence.

    ``target_text`` always equals the target sentence slice at
    ``target_span``; ``provenance`` records which aligner found it.
    """

    source_value: str
    target_span: tuple[int, int]
    target_text: str
    provenance: str


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class AttentionMatrix:
    """Cross-attention weights of a translation model, row-stochastic over
    source tokens for each target token."""

    src_text: str
    tgt_text: str
    src_tokens: tuple[Token, ...]
    tgt_tokens: tuple[Token, ...]
    weights: np.ndarray  # [n_tgt, n_src]

    def validate(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.tgt_tokens), len(self.src_tokens)):
            raise InvalidMatrixError(
                f"weights shape {w.shape} vs {len(self.tgt_tokens)} target / "
                f"{len(self.src_tokens)} source tokens")
        if (w < 0).any():
            raise InvalidMatrixError("negative attention weight")
        row_sums = w.sum(axis=1)
        if len(row_sums) and np.abs(row_sums - 1.0).max() > ROW_SUM_TOLERANCE:
            raise InvalidMatrixError("attention rows must sum to 1")
        for name, tokens, text in (("src", self.src_tokens, self.src_text),
                                   ("tgt", self.tgt_tokens, self.tgt_text)):
            prev_end = 0
            for t in tokens:
                if not (prev_end <= t.start < t.end <= len(text)):
                    raise InvalidMatrixError(f"{name} token offsets not increasing: {t}")
                prev_end = t.end


# ---------------------------------------------------------------------------
# Dictionary alignment


def _fold_char(ch: str, cfg: NormConfig) -> str:
    s = ch.casefold() if cfg.casefold else ch
    if cfg.fold_diacritics:
        s = "".join(c for c in unicodedata.normalize("NFKD", s)
                    if not unicodedata.combining(c))
    return s


def _normalize_indexed(text: str, cfg: NormConfig) -> tuple[str, list[int]]:
    """Normalized text plus, per normalized char, the index of the original
    char it came from (whitespace runs collapse to one space)."""
    chars: list[str] = []
    origins: list[int] = []
    pending_ws: int | None = None
    for idx, ch in enumerate(text):
        if ch.isspace():
            if pending_ws is None:
                pending_ws = idx
            continue
        if pending_ws is not None and chars:
            chars.append(" ")
            origins.append(pending_ws)
        pending_ws = None
        for out in _fold_char(ch, cfg):
            chars.append(out)
            origins.append(idx)
    return "".join(chars), origins


def _normalize_plain(text: str, cfg: NormConfig) -> str:
    normalized, _ = _normalize_indexed(text, cfg)
    return normalized


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def dictionary_align(cs: CandidateSet, target_text: str,
                     norm: NormConfig = NormConfig()) -> AlignedEntity:
    """Find the best candidate occurrence in the target sentence.

    Among candidates occurring in the normalized text (at word boundaries
    when enabled), picks the longest by normalized length; ties go to the
    earliest occurrence.  The span is reported in original character
    coordinates.  Raises ``NoMatchError`` when nothing occurs.
    """
    norm_text, origins = _normalize_indexed(target_text, norm)
    best: tuple[int, int, int] | None = None  # (-len, start, end)
    for candidate in cs.candidates:
        needle = _normalize_plain(candidate, norm)
        if not needle:
            continue
        start = norm_text.find(needle)
        while start >= 0:
            end = start + len(needle)
            boundary_ok = (not norm.word_boundaries) or (
                (start == 0 or not _is_word_char(norm_text[start - 1]))
                and (end == len(norm_text) or not _is_word_char(norm_text[end]))
            )
            if boundary_ok:
                key = (-len(needle), start, end)
                if best is None or key < best:
                    best = key
            start = norm_text.find(needle, start + 1)
    if best is None:
        raise NoMatchError(f"no candidate of {cs.entity!r} occurs in the target text")
    _, start, end = best
    orig_start = origins[start]
    orig_end = origins[end - 1] + 1
    return AlignedEntity(
        source_value=cs.entity,
        target_span=(orig_start, orig_end),
        target_text=target_text[orig_start:orig_end],
        provenance=DICTIONARY,
    )


# ---------------------------------------------------------------------------
# Neural alignment


def attended_target_tokens(am: AttentionMatrix, src_span: tuple[int, int]) -> list[int]:
    """Indices of target tokens whose argmax source token overlaps the span
    (ties resolved to the lowest source index)."""
    am.validate()
    span_start, span_end = src_span
    source_ids = {
        j for j, t in enumerate(am.src_tokens)
        if t.start < span_end and t.end > span_start
    }
    if not source_ids:
        raise NoAlignmentError(f"source span {src_span} covers no tokens")
    weights = np.asarray(am.weights, dtype=float)
    if weights.size == 0:
        return []
    argmax = weights.argmax(axis=1)  # first (lowest) index on ties
    return [t for t in range(len(am.tgt_tokens)) if int(argmax[t]) in source_ids]


def neural_align(am: AttentionMatrix, src_span: tuple[int, int]) -> AlignedEntity:
    """Locate the translation of a source span via attention argmax.

    The target span is the contiguous character hull from the first to the
    last attending token, trimmed of edge whitespace and punctuation.
    Raises ``NoAlignmentError`` when no target token attends to the span.
    """
    attending = attended_target_tokens(am, src_span)
    if not attending:
        raise NoAlignmentError(f"no target token attends to source span {src_span}")
    start = am.tgt_tokens[min(attending)].start
    end = am.tgt_tokens[max(attending)].end
    text = am.tgt_text

    def trimmable(ch: str) -> bool:
        return ch.isspace() or unicodedata.category(ch).startswith("P")

    while start < end and trimmable(text[start]):
        start += 1
    while end > start and trimmable(text[end - 1]):
        end -= 1
    if start >= end:
        raise NoAlignmentError("attended span is all whitespace/punctuation")
    return AlignedEntity(
        source_value=am.src_text[src_span[0]:src_span[1]],
        target_span=(start, end),
        target_text=text[start:end],
        provenance=NEURAL,
    )


def hybrid_align(cs: CandidateSet | None, am: AttentionMatrix | None,
                 src_span: tuple[int, int] | None, target_text: str,
                 norm: NormConfig = NormConfig()) -> AlignedEntity:
    """Dictionary alignment first; fall back to neural on a miss.

    A dictionary hit never consults the attention matrix.  Raises
    ``AlignmentFailedError`` when both paths fail.
    """
    if cs is None and am is None:
        raise ValueError("need a candidate set or an attention matrix")
    if cs is not None:
        try:
            return dictionary_align(cs, target_text, norm)
        except NoMatchError:
            pass
    if am is not None and src_span is not None:
        try:
            return neural_align(am, src_span)
        except NoAlignmentError:
            pass
    entity = cs.entity if cs is not None else f"span {src_span}"
    raise AlignmentFailedError(f"could not align {entity!r}")


# ---------------------------------------------------------------------------
# Embedding-based word alignment and code-mix substitution


@dataclass(frozen=True)
class WordAlignment:
    """(source word index, target word index) pairs."""

    pairs: tuple[tuple[int, int], ...]


def align_by_embeddings(src_vecs, tgt_vecs) -> WordAlignment:
    """Mutual-argmax cosine alignment between two token vector lists.

    A pair (i, j) is kept iff j is i's best target AND i is j's best source;
    ties break to the lowest index.
    """
    src = np.asarray(src_vecs, dtype=float)
    tgt = np.asarray(tgt_vecs, dtype=float)
    if src.size == 0 or tgt.size == 0:
        return WordAlignment(())
    if src.ndim != 2 or tgt.ndim != 2 or src.shape[1] != tgt.shape[1]:
        raise ValueError("embedding lists must share one vector dimension")
    src_norms = np.linalg.norm(src, axis=1)
    tgt_norms = np.linalg.norm(tgt, axis=1)
    if (src_norms == 0).any() or (tgt_norms == 0).any():
        raise ZeroVectorError("zero-norm embedding vector")
    cosine = (src / src_norms[:, None]) @ (tgt / tgt_norms[:, None]).T
    fwd = cosine.argmax(axis=1)
    bwd = cosine.argmax(axis=0)
    pairs = tuple(
        (i, int(fwd[i])) for i in range(src.shape[0]) if int(bwd[int(fwd[i])]) == i
    )
    return WordAlignment(pairs)


@dataclass(frozen=True)
class SubstitutionPolicy:
    """Which aligned words to swap: an optional index predicate plus a
    substitution ratio realized with seeded randomness."""

    ratio: float = 1.0
    seed: int = 0
    predicate: object = None  # callable (src_idx, tgt_idx) -> bool

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")


def codemix_substitute(matrix_sentence: list[str], embedded_sentence: list[str],
                       wa: WordAlignment, policy: SubstitutionPolicy) -> str:
    """Replace aligned matrix-language words with their embedded-language
    counterparts; deterministic for a fixed seed."""
    for i, j in wa.pairs:
        if not (0 <= i < len(matrix_sentence) and 0 <= j < len(embedded_sentence)):
            raise IndexOutOfRangeError(f"alignment pair ({i}, {j}) out of range")
    eligible = [
        (i, j) for i, j in wa.pairs
        if policy.predicate is None or policy.predicate(i, j)
    ]
    k = round(policy.ratio * len(eligible))
    chosen = random.Random(policy.seed).sample(eligible, k) if k else []
    words = list(matrix_sentence)
    for i, j in chosen:
        words[i] = embedded_sentence[j]
    return " ".join(words)


# ---------------------------------------------------------------------------
# Annotation projection


def project_annotations(turn: Turn, alignments: list[AlignedEntity],
                        vm: ValueMapping | None = None) -> Turn:
    """Rewrite a turn's annotation values and spans to target-language forms.

    The turn's utterances must already be the translated ones; annotation
    values are rewritten from alignments first, then from the value mapping's
    canonical forms.  Spans are rebuilt from alignments (values without an
    alignment lose their span); every rebuilt span is checked against the
    utterance slice.  Raises ``UnmappedValueError`` for a value with neither
    an alignment nor a mapping entry.
    """
    by_value: dict[str, AlignedEntity] = {}
    for a in alignments:
        by_value.setdefault(a.source_value, a)

    def project(domain: str, slot: str, value: str) -> str:
        aligned = by_value.get(value)
        if aligned is not None:
            return aligned.target_text
        if vm is not None:
            canonical = vm.canonical_for(slot, value)
            if canonical is not None:
                return canonical
        raise UnmappedValueError(domain, slot, value)

    belief = replace(turn.belief_state, triplets=tuple(
        replace(t, value=project(t.domain, t.slot, t.value)) for t in turn.belief_state
    ))
    acts = replace(turn.agent_acts, items=tuple(
        a if a.value is None
        else replace(a, value=project(a.domain, a.slot or "", a.value))
        for a in turn.agent_acts
    ))
    api_call = turn.api_call
    if api_call is not None:
        api_call = replace(api_call, constraints=tuple(
            replace(c, value=project(c.domain, c.slot, c.value))
            for c in api_call.constraints
        ))

    spans = []
    for span in turn.spans:
        aligned = by_value.get(span.value)
        if aligned is None:
            continue
        start, end = aligned.target_span
        new_span = EntitySpan(span.domain, span.slot, span.relation,
                              aligned.target_text, start, end, span.side)
        utt = turn.utterance(span.side)
        if utt[start:end] != aligned.target_text:
            raise SpanInvariantViolationError(
                f"aligned span {aligned.target_span} does not match the "
                f"{span.side} utterance slice for {span.value!r}")
        spans.append(new_span)

    return replace(turn, belief_state=belief, agent_acts=acts,
                   api_call=api_call, spans=tuple(spans))


# ---------------------------------------------------------------------------
# Sidecar file formats


def load_attention(path) -> AttentionMatrix:
    """Attention file: {"src_text", "tgt_text", "src_tokens": [{"text",
    "start", "end"}], "tgt_tokens": [...], "weights": [[float]]}."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    am = AttentionMatrix(
        src_text=raw["src_text"],
        tgt_text=raw["tgt_text"],
        src_tokens=tuple(Token(t["text"], t["start"], t["end"]) for t in raw["src_tokens"]),
        tgt_tokens=tuple(Token(t["text"], t["start"], t["end"]) for t in raw["tgt_tokens"]),
        weights=np.asarray(raw["weights"], dtype=float),
    )
    am.validate()
    return am


def load_candidates(path, budget: int | None = None) -> dict[str, CandidateSet]:
    """Candidate file: {entity: [candidate translations]}.  ``budget`` caps
    the number of candidates kept per entity."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    out = {}
    for entity, candidates in raw.items():
        kept = [str(c) for c in candidates]
        if budget is not None:
            kept = kept[:budget]
        out[entity] = CandidateSet(entity=entity, candidates=tuple(kept))
    return out


def load_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    """Embedding file: {"src": [[float]], "tgt": [[float]]}."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return np.asarray(raw["src"], dtype=float), np.asarray(raw["tgt"], dtype=float)

"""Per-turn metric indicators and corpus BLEU.

All indicator metrics (joint goal accuracy, dialogue act accuracy, API
accuracy, slot error) compare normalized sets, so they are insensitive to
ordering, case, surrounding punctuation, and mapped value variants.
"""

from __future__ import annotations

import math
import re
from collections import Counter

from .data import ActSeq, ApiCall, BeliefState, DEFAULT_RELATION
from .errors import EmptyCorpusError, LengthMismatchError
from .valuemap import ValueMapping, prenorm

WORD_TOKENS = "word"
CHAR_TOKENS = "char"

# Unicode words, or single non-space punctuation marks.
_WORD_RE = re.compile(r"\w+|[^\w\s]")


def normalize_entity(text: str, vm: ValueMapping | None = None,
                     slot: str | None = None) -> str:
    """Casefold, trim, collapse whitespace, strip edge punctuation, then map
    through the canonical value mapping.  Idempotent."""
    if vm is None:
        return prenorm(text)
    return vm.normalize(text, slot=slot)


def _norm_triplets(bs: BeliefState, vm: ValueMapping | None) -> frozenset:
    return frozenset(
        (t.domain, t.slot, t.relation, normalize_entity(t.value, vm, slot=t.slot))
        for t in bs
    )


def jga(pred: BeliefState, gold: BeliefState, vm: ValueMapping | None = None) -> int:
    """Joint goal accuracy indicator: 1 iff the normalized triplet sets match."""
    return int(_norm_triplets(pred, vm) == _norm_triplets(gold, vm))


def _norm_acts(acts: ActSeq, vm: ValueMapping | None) -> frozenset:
    normed = set()
    for a in acts:
        if a.value is None:
            normed.add((a.domain, a.act, a.slot, "", ""))
        else:
            relation = a.relation or DEFAULT_RELATION
            normed.add((a.domain, a.act, a.slot, relation,
                        normalize_entity(a.value, vm, slot=a.slot)))
    return frozenset(normed)


def da_accuracy(pred: ActSeq, gold: ActSeq, vm: ValueMapping | None = None) -> int:
    """Dialogue act accuracy indicator: 1 iff all acts (including entities)
    match as normalized sets."""
    return int(_norm_acts(pred, vm) == _norm_acts(gold, vm))


def api_accuracy(pred_decision: bool, pred_call: ApiCall | None,
                 gold_decision: bool, gold_call: ApiCall | None,
                 vm: ValueMapping | None = None) -> int:
    """API indicator: decisions must agree, and on a positive decision the
    normalized constraint sets (and domain) must match."""
    if pred_decision != gold_decision:
        return 0
    if not gold_decision:
        return 1
    pred_bs = BeliefState(pred_call.constraints if pred_call else ())
    gold_bs = BeliefState(gold_call.constraints if gold_call else ())
    pred_domain = pred_call.domain if pred_call else None
    gold_domain = gold_call.domain if gold_call else None
    return int(pred_domain == gold_domain
               and _norm_triplets(pred_bs, vm) == _norm_triplets(gold_bs, vm))


def ser(pred_response: str, gold_entities: list[str],
        vm: ValueMapping | None = None) -> int:
    """Slot error indicator: 0 iff every gold entity occurs in the response
    (normalized substring match, accepting any mapped surface variant)."""
    response = prenorm(pred_response)
    for entity in gold_entities:
        surfaces = vm.surfaces_of(entity) if vm is not None else {prenorm(entity)}
        if not any(s and s in response for s in surfaces):
            return 1
    return 0


# ---------------------------------------------------------------------------
# Corpus BLEU


def tokenize(text: str, mode: str = WORD_TOKENS) -> list[str]:
    """Unicode-word segmentation for spaced scripts, character segmentation
    (``char``) for unspaced scripts."""
    if mode == CHAR_TOKENS:
        return [ch for ch in text if not ch.isspace()]
    if mode == WORD_TOKENS:
        return _WORD_RE.findall(text)
    raise ValueError(f"unknown tokenizer mode {mode!r}")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(preds: list[str], refs: list[str], mode: str = WORD_TOKENS,
         max_n: int = 4, smooth: bool = False) -> float:
    """Corpus-level BLEU on a 0-100 scale.

    Uniform n-gram weights up to ``max_n``, clipped counts pooled over the
    corpus, brevity penalty exp(1 - r/c) when c < r.  Without smoothing the
    score is 0 when any pooled n-gram precision is zero; with ``smooth`` the
    zero counts are add-one smoothed for n >= 2.
    """
    if len(preds) != len(refs):
        raise LengthMismatchError(f"{len(preds)} predictions vs {len(refs)} references")
    if not preds:
        raise EmptyCorpusError("no sentence pairs")

    matched = [0] * max_n
    total = [0] * max_n
    pred_len = 0
    ref_len = 0
    for pred, ref in zip(preds, refs):
        pred_tokens = tokenize(pred, mode)
        ref_tokens = tokenize(ref, mode)
        pred_len += len(pred_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_n + 1):
            pred_counts = _ngrams(pred_tokens, n)
            if not pred_counts:
                continue
            ref_counts = _ngrams(ref_tokens, n)
            total[n - 1] += sum(pred_counts.values())
            matched[n - 1] += sum(min(c, ref_counts[g]) for g, c in pred_counts.items())

    log_sum = 0.0
    for n in range(max_n):
        m, t = matched[n], total[n]
        if smooth and n > 0 and m == 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    precision = math.exp(log_sum / max_n)
    bp = 1.0 if pred_len >= ref_len else math.exp(1.0 - ref_len / max(pred_len, 1))
    return 100.0 * bp * precision

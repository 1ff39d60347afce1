"""Alignment against brute-force oracles; code-mix substitution; projection."""

from __future__ import annotations

import json
import random

import numpy as np
import pytest

from todkit.alignment import (
    AlignedEntity,
    AttentionMatrix,
    CandidateSet,
    NormConfig,
    SubstitutionPolicy,
    Token,
    WordAlignment,
    align_by_embeddings,
    attended_target_tokens,
    codemix_substitute,
    dictionary_align,
    hybrid_align,
    load_attention,
    load_candidates,
    load_embeddings,
    neural_align,
    project_annotations,
)
from todkit.errors import (
    AlignmentFailedError,
    IndexOutOfRangeError,
    InvalidMatrixError,
    NoAlignmentError,
    NoMatchError,
    UnmappedValueError,
    ZeroVectorError,
)
from todkit.valuemap import ValueMapping


# ---------------------------------------------------------------------------
# Dictionary alignment


def test_dictionary_simple_hit():
    cs = CandidateSet("观前街", ("Guanqian Street", "Guanqian Road"))
    entity = dictionary_align(cs, "You can go to Guanqian Street.")
    assert entity.target_text == "Guanqian Street"
    assert entity.target_span == (14, 29)
    assert entity.provenance == "dictionary"


def test_dictionary_prefers_longest():
    cs = CandidateSet("便宜", ("cheap", "very cheap"))
    entity = dictionary_align(cs, "I found a very cheap hotel.")
    assert entity.target_text == "very cheap"


def test_dictionary_no_match():
    with pytest.raises(NoMatchError):
        dictionary_align(CandidateSet("libre", ("libre",)), "free all day")


def test_dictionary_ties_break_to_earliest():
    cs = CandidateSet("e", ("aaa", "bbb"))
    entity = dictionary_align(cs, "xx bbb yy aaa zz")
    assert entity.target_text == "bbb"


def test_dictionary_word_boundaries():
    cs = CandidateSet("cat", ("cat",))
    with pytest.raises(NoMatchError):
        dictionary_align(cs, "concatenate these")
    hit = dictionary_align(cs, "my cat sleeps")
    assert hit.target_span == (3, 6)


def test_dictionary_boundary_disabled_for_unspaced_scripts():
    cs = CandidateSet("观前街", ("观前街",))
    norm = NormConfig(word_boundaries=False)
    entity = dictionary_align(cs, "去观前街吧。", norm)
    assert entity.target_text == "观前街"
    assert entity.target_span == (1, 4)


def test_dictionary_casefold_and_whitespace():
    cs = CandidateSet("x", ("Guanqian Street",))
    entity = dictionary_align(cs, "go to GUANQIAN   street now")
    assert entity.target_text == "GUANQIAN   street"


def test_dictionary_diacritic_folding():
    cs = CandidateSet("x", ("cafe royal",))
    norm = NormConfig(fold_diacritics=True)
    entity = dictionary_align(cs, "the Café Royal is nice", norm)
    assert entity.target_text == "Café Royal"


def _oracle_scan(candidates, text, norm):
    """Exhaustive substring scan in normalized space (independent oracle)."""
    from todkit.alignment import _normalize_indexed, _normalize_plain, _is_word_char
    norm_text, origins = _normalize_indexed(text, norm)
    hits = []
    for cand in candidates:
        needle = _normalize_plain(cand, norm)
        if not needle:
            continue
        for start in range(len(norm_text) - len(needle) + 1):
            if norm_text[start:start + len(needle)] != needle:
                continue
            end = start + len(needle)
            if norm.word_boundaries:
                if start > 0 and _is_word_char(norm_text[start - 1]):
                    continue
                if end < len(norm_text) and _is_word_char(norm_text[end]):
                    continue
            hits.append((-len(needle), start, end))
    if not hits:
        return None
    _, start, end = min(hits)
    return origins[start], origins[end - 1] + 1


def test_dictionary_matches_exhaustive_scan_oracle():
    rng = random.Random(41)
    words = ["cat", "dog", "very", "cheap", "hotel", "Guanqian", "street", "café"]
    for _ in range(300):
        text = " ".join(rng.choices(words, k=rng.randint(2, 8)))
        candidates = tuple(" ".join(rng.choices(words, k=rng.randint(1, 2)))
                           for _ in range(rng.randint(1, 4)))
        cs = CandidateSet("e", candidates)
        norm = NormConfig(fold_diacritics=rng.random() < 0.5)
        expected = _oracle_scan(cs.candidates, text, norm)
        try:
            entity = dictionary_align(cs, text, norm)
            assert expected == entity.target_span
            assert text[entity.target_span[0]:entity.target_span[1]] == entity.target_text
        except NoMatchError:
            assert expected is None


# ---------------------------------------------------------------------------
# Neural alignment


def _matrix(weights, src="ab cd ef", tgt="uv wx yz"):
    def toks(text):
        out, at = [], 0
        for part in text.split(" "):
            out.append(Token(part, at, at + len(part)))
            at += len(part) + 1
        return tuple(out)

    return AttentionMatrix(src_text=src, tgt_text=tgt, src_tokens=toks(src),
                           tgt_tokens=toks(tgt), weights=np.asarray(weights, dtype=float))


def test_neural_near_identity():
    am = _matrix([[.8, .1, .1], [.1, .8, .1], [.1, .1, .8]])
    entity = neural_align(am, (3, 5))  # source token 1 ("cd")
    assert entity.target_text == "wx"
    assert entity.target_span == (3, 5)
    assert entity.provenance == "neural"
    assert entity.source_value == "cd"


def test_neural_hull_covers_attending_tokens():
    # target tokens 1 and 2 both attend to source token 0
    am = _matrix([[.2, .4, .4], [.9, .05, .05], [.6, .2, .2]])
    entity = neural_align(am, (0, 2))  # source token 0
    assert entity.target_span == (3, 8)
    assert entity.target_text == "wx yz"


def test_neural_no_alignment():
    am = _matrix([[.8, .1, .1], [.7, .2, .1], [.6, .3, .1]])
    with pytest.raises(NoAlignmentError):
        neural_align(am, (6, 8))  # source token 2: nothing attends to it


def test_neural_invalid_matrix():
    am = _matrix([[.5, .1, .1], [.1, .8, .1], [.1, .1, .8]])
    with pytest.raises(InvalidMatrixError):
        neural_align(am, (0, 2))


def test_neural_tie_breaks_to_lowest_source_index():
    am = _matrix([[.5, .5, .0], [.0, .5, .5], [.0, .0, 1.]])
    # row 0 ties source 0/1 -> 0 (in span); row 1 ties 1/2 -> 1 (out)
    entity = neural_align(am, (0, 2))  # covers source token 0 only
    assert entity.target_span == (0, 2)  # target token 0 only


def test_neural_hull_trims_punctuation():
    am = AttentionMatrix(
        src_text="ab", tgt_text='"wx,"',
        src_tokens=(Token("ab", 0, 2),),
        tgt_tokens=(Token('"wx,"', 0, 5),),
        weights=np.asarray([[1.0]]))
    entity = neural_align(am, (0, 2))
    assert entity.target_text == "wx"


def _oracle_attending(weights, src_ids):
    out = []
    for t, row in enumerate(weights):
        best = max(range(len(row)), key=lambda j: (row[j], -j))
        if best in src_ids:
            out.append(t)
    return out


def test_neural_matches_argmax_oracle_randomized():
    rng = random.Random(42)
    for _ in range(300):
        n_src, n_tgt = rng.randint(1, 5), rng.randint(1, 5)
        weights = []
        for _ in range(n_tgt):
            row = [rng.random() for _ in range(n_src)]
            total = sum(row)
            weights.append([w / total for w in row])
        src = " ".join("s%d" % i for i in range(n_src))
        tgt = " ".join("t%d" % i for i in range(n_tgt))
        am = _matrix(weights, src=src, tgt=tgt)
        token = rng.randrange(n_src)
        span = (am.src_tokens[token].start, am.src_tokens[token].end)
        expected = _oracle_attending(weights, {token})
        assert attended_target_tokens(am, span) == expected


def test_neural_monotone_in_source_span():
    rng = random.Random(43)
    for _ in range(100):
        n = 4
        weights = []
        for _ in range(n):
            row = [rng.random() for _ in range(n)]
            total = sum(row)
            weights.append([w / total for w in row])
        am = _matrix(weights, src="s0 s1 s2 s3", tgt="t0 t1 t2 t3")
        wide = set(attended_target_tokens(am, (0, 8)))    # tokens 0..2
        narrow = set(attended_target_tokens(am, (0, 5)))  # tokens 0..1
        assert narrow <= wide


# ---------------------------------------------------------------------------
# Hybrid


def test_hybrid_dictionary_short_circuit():
    cs = CandidateSet("x", ("wx",))
    bad_matrix = _matrix([[2.0, -1.0, 0.0], [.1, .8, .1], [.1, .1, .8]])  # invalid
    entity = hybrid_align(cs, bad_matrix, (0, 2), "uv wx yz")
    assert entity.provenance == "dictionary"  # matrix never consulted


def test_hybrid_falls_back_to_neural():
    cs = CandidateSet("x", ("missing",))
    am = _matrix([[.8, .1, .1], [.1, .8, .1], [.1, .1, .8]])
    entity = hybrid_align(cs, am, (0, 2), "uv wx yz")
    assert entity.provenance == "neural"


def test_hybrid_both_fail():
    cs = CandidateSet("x", ("missing",))
    am = _matrix([[.8, .1, .1], [.7, .2, .1], [.6, .3, .1]])
    with pytest.raises(AlignmentFailedError):
        hybrid_align(cs, am, (6, 8), "uv wx yz")


def test_hybrid_requires_some_input():
    with pytest.raises(ValueError):
        hybrid_align(None, None, None, "text")


# ---------------------------------------------------------------------------
# Embedding alignment


def test_embeddings_identity():
    vecs = np.eye(4)
    wa = align_by_embeddings(vecs, vecs)
    assert wa.pairs == tuple((i, i) for i in range(4))


def test_embeddings_single_mutual_pair():
    src = [[1.0, 0.0], [0.9, 0.1]]
    tgt = [[1.0, 0.05], [0.0, 1.0], [0.1, 1.0]]
    wa = align_by_embeddings(src, tgt)
    # brute-force cosine table: src0/src1 both argmax tgt0; tgt0 argmax src0
    assert wa.pairs == ((0, 0),)


def test_embeddings_zero_vector():
    with pytest.raises(ZeroVectorError):
        align_by_embeddings([[0.0, 0.0]], [[1.0, 0.0]])


def test_embeddings_symmetry_transposes():
    rng = np.random.default_rng(44)
    for _ in range(50):
        src = rng.normal(size=(rng.integers(1, 5), 3))
        tgt = rng.normal(size=(rng.integers(1, 5), 3))
        fwd = align_by_embeddings(src, tgt).pairs
        bwd = align_by_embeddings(tgt, src).pairs
        assert set((j, i) for i, j in fwd) == set(bwd)


def test_embeddings_mutual_argmax_oracle():
    rng = np.random.default_rng(45)
    for _ in range(100):
        src = rng.normal(size=(int(rng.integers(1, 6)), 4))
        tgt = rng.normal(size=(int(rng.integers(1, 6)), 4))
        cos = np.zeros((len(src), len(tgt)))
        for i, u in enumerate(src):
            for j, v in enumerate(tgt):
                cos[i, j] = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
        expected = tuple(
            (i, int(cos[i].argmax())) for i in range(len(src))
            if int(cos[:, int(cos[i].argmax())].argmax()) == i)
        assert align_by_embeddings(src, tgt).pairs == expected


# ---------------------------------------------------------------------------
# Code-mix substitution


_MATRIX = ["main", "kal", "movie", "dekhunga"]
_EMBEDDED = ["I", "tomorrow", "film", "watch"]
_WA = WordAlignment(((0, 0), (1, 1), (2, 2), (3, 3)))


def test_codemix_ratio_zero_is_identity():
    policy = SubstitutionPolicy(ratio=0.0, seed=5)
    assert codemix_substitute(_MATRIX, _EMBEDDED, _WA, policy) == "main kal movie dekhunga"


def test_codemix_ratio_one_replaces_all_aligned():
    policy = SubstitutionPolicy(ratio=1.0, seed=5)
    assert codemix_substitute(_MATRIX, _EMBEDDED, _WA, policy) == "I tomorrow film watch"


def test_codemix_half_ratio_deterministic():
    policy = SubstitutionPolicy(ratio=0.5, seed=99)
    first = codemix_substitute(_MATRIX, _EMBEDDED, _WA, policy)
    second = codemix_substitute(_MATRIX, _EMBEDDED, _WA, policy)
    assert first == second
    replaced = sum(1 for a, b in zip(first.split(), _MATRIX) if a != b)
    assert replaced == 2


def test_codemix_predicate_filters_positions():
    policy = SubstitutionPolicy(ratio=1.0, seed=0, predicate=lambda i, j: i % 2 == 0)
    out = codemix_substitute(_MATRIX, _EMBEDDED, _WA, policy)
    assert out == "I kal film dekhunga"


def test_codemix_unaligned_words_unchanged():
    wa = WordAlignment(((1, 1),))
    policy = SubstitutionPolicy(ratio=1.0, seed=0)
    assert codemix_substitute(_MATRIX, _EMBEDDED, wa, policy) == "main tomorrow movie dekhunga"


def test_codemix_index_out_of_range():
    wa = WordAlignment(((9, 0),))
    with pytest.raises(IndexOutOfRangeError):
        codemix_substitute(_MATRIX, _EMBEDDED, wa, SubstitutionPolicy())


def test_codemix_bad_ratio_rejected():
    with pytest.raises(ValueError):
        SubstitutionPolicy(ratio=1.5)


# ---------------------------------------------------------------------------
# Annotation projection


def test_project_turn_values_and_spans(demo_dataset):
    # Build a pseudo-source turn: same structure, source-language values.
    from dataclasses import replace
    from todkit.data import BeliefState, SlotTriplet, ActSeq, ActItem, EntitySpan

    target = demo_dataset.dialogues[0].turns[0]
    source_turn = replace(
        target,
        belief_state=BeliefState((
            SlotTriplet("attraction", "consumption", "equal_to", "中等"),
            SlotTriplet("attraction", "type", "equal_to", "商业中心"),
        )),
        agent_acts=ActSeq((ActItem("attraction", "recommend", "name", "equal_to", "观前街"),)),
        api_call=None, api_results=None,
        spans=(EntitySpan("attraction", "type", "equal_to", "商业中心", 0, 4, "user"),
               EntitySpan("attraction", "name", "equal_to", "观前街", 0, 3, "agent")),
    )
    alignments = [
        AlignedEntity("商业中心", (71, 88), "commercial center", "dictionary"),
        AlignedEntity("观前街", (14, 29), "Guanqian Street", "neural"),
    ]
    vm = ValueMapping()
    vm.add("中等", "consumption", "mid", canonical="mid")

    projected = project_annotations(source_turn, alignments, vm)
    assert [t.value for t in projected.belief_state] == ["mid", "commercial center"]
    assert projected.agent_acts.items[0].value == "Guanqian Street"
    assert len(projected.spans) == 2
    for span in projected.spans:
        utt = projected.utterance(span.side)
        assert utt[span.start_char:span.end_char] == span.value


def test_project_unmapped_value_raises(demo_dataset):
    turn = demo_dataset.dialogues[0].turns[0]
    with pytest.raises(UnmappedValueError) as err:
        project_annotations(turn, [], None)
    assert "consumption" in str(err.value)


def test_project_empty_state_is_identity_modulo_spans(demo_dataset):
    from dataclasses import replace
    from todkit.data import BeliefState, ActSeq, ActItem

    turn = replace(demo_dataset.dialogues[0].turns[0],
                   belief_state=BeliefState(), api_call=None, api_results=None,
                   agent_acts=ActSeq((ActItem("attraction", "general"),)), spans=())
    projected = project_annotations(turn, [], None)
    assert projected == turn


# ---------------------------------------------------------------------------
# Sidecar file loaders


def test_load_attention_roundtrip(tmp_path):
    payload = {
        "src_text": "ab cd", "tgt_text": "uv wx",
        "src_tokens": [{"text": "ab", "start": 0, "end": 2},
                       {"text": "cd", "start": 3, "end": 5}],
        "tgt_tokens": [{"text": "uv", "start": 0, "end": 2},
                       {"text": "wx", "start": 3, "end": 5}],
        "weights": [[0.9, 0.1], [0.2, 0.8]],
    }
    path = tmp_path / "att.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    am = load_attention(path)
    assert am.tgt_tokens[1].text == "wx"

    payload["weights"] = [[0.9, 0.3], [0.2, 0.8]]  # row sum > 1
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(InvalidMatrixError):
        load_attention(path)


def test_load_candidates_budget(tmp_path):
    path = tmp_path / "cand.json"
    path.write_text(json.dumps({"观前街": ["a", "b", "c", "d"]}), encoding="utf-8")
    loaded = load_candidates(path, budget=2)
    assert loaded["观前街"].candidates == ("a", "b")


def test_load_embeddings(tmp_path):
    path = tmp_path / "emb.json"
    path.write_text(json.dumps({"src": [[1, 0]], "tgt": [[0, 1]]}), encoding="utf-8")
    src, tgt = load_embeddings(path)
    assert src.shape == (1, 2) and tgt.shape == (1, 2)

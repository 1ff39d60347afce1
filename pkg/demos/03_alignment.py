"""Hybrid entity alignment and code-mix word substitution.

Dictionary alignment scans the translated sentence for any candidate
translation of an entity; neural alignment reads the translation model's
cross-attention; the hybrid tries the dictionary first.
"""

import numpy as np

from todkit.alignment import (
    AttentionMatrix,
    CandidateSet,
    SubstitutionPolicy,
    Token,
    WordAlignment,
    align_by_embeddings,
    codemix_substitute,
    dictionary_align,
    hybrid_align,
    neural_align,
)

sentence = "You can go to Guanqian Street."
cs = CandidateSet("观前街", ("Guanqian Street", "Guanqian Road"))
hit = dictionary_align(cs, sentence)
print(f"dictionary: {hit.source_value!r} -> {hit.target_text!r} at {hit.target_span}")

# a toy 3x3 cross-attention matrix over "ab cd ef" -> "uv wx yz"
tokens = lambda text: tuple(
    Token(w, text.index(w), text.index(w) + len(w)) for w in text.split())
am = AttentionMatrix(
    src_text="ab cd ef", tgt_text="uv wx yz",
    src_tokens=tokens("ab cd ef"), tgt_tokens=tokens("uv wx yz"),
    weights=np.array([[.8, .1, .1], [.1, .8, .1], [.1, .1, .8]]))
hit = neural_align(am, (3, 5))  # the middle source token
print(f"neural:     {hit.source_value!r} -> {hit.target_text!r} at {hit.target_span}")

hit = hybrid_align(CandidateSet("cd", ("nowhere",)), am, (3, 5), am.tgt_text)
print(f"hybrid:     fell back to {hit.provenance} for {hit.target_text!r}")

# mutual-argmax embedding alignment drives code-mix substitution
matrix_words = ["main", "kal", "movie", "dekhunga"]
embedded_words = ["I", "tomorrow", "film", "watch"]
vectors = np.eye(4)
wa = align_by_embeddings(vectors, vectors)
print(f"\nword alignment: {wa.pairs}")
for ratio in (0.0, 0.5, 1.0):
    mixed = codemix_substitute(matrix_words, embedded_words,
                               WordAlignment(wa.pairs),
                               SubstitutionPolicy(ratio=ratio, seed=7))
    print(f"ratio {ratio}: {mixed}")

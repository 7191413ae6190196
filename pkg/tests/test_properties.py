"""Hypothesis property tests for the pure-math invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from malclass.metrics import cohen_kappa, macro_prf
from malclass.mining import uncertainty_filter
from malclass.nn.layers import SoftmaxCrossEntropy
from malclass.taxonomy import load_default
from malclass.tokens import build_vocab, encode_words

labels3 = st.sampled_from(["a", "b", "c"])


@given(st.lists(st.tuples(labels3, labels3), min_size=1, max_size=80))
def test_kappa_bounded_and_identity(pairs):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    kappa = cohen_kappa(a, b)
    assert -1.0 - 1e-12 <= kappa <= 1.0 + 1e-12
    assert cohen_kappa(a, a) == 1.0


@given(st.lists(st.tuples(labels3, labels3), min_size=1, max_size=60))
def test_macro_prf_within_percent_scale(pairs):
    golds = [x for x, _ in pairs]
    preds = [y for _, y in pairs]
    report = macro_prf(golds, preds, ["a", "b", "c"])
    for row in report.per_class.values():
        assert 0.0 <= row["precision"] <= 100.0
        assert 0.0 <= row["recall"] <= 100.0
        assert 0.0 <= row["f1"] <= 100.0
    assert 0.0 <= report.macro_f1 <= 100.0


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), max_size=50),
       st.floats(min_value=0.0, max_value=1.0),
       st.floats(min_value=0.0, max_value=1.0))
def test_uncertainty_filter_band(probs, lo, hi):
    lo, hi = min(lo, hi), max(lo, hi)
    items = [(i, p) for i, p in enumerate(probs)]
    kept = set(uncertainty_filter(items, lo, hi))
    for i, p in items:
        assert (i in kept) == (lo <= p <= hi)


@given(st.lists(st.sampled_from(["kill", "you", "now", "never", "ok"]),
                min_size=0, max_size=20))
def test_encode_decode_roundtrip(tokens):
    vocab = build_vocab(["kill you now never ok"])
    ids, n = encode_words(tokens, vocab, max_len=32)
    assert n == len(tokens)
    assert vocab.decode(ids) == tokens


@settings(max_examples=30)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=2, max_value=9),
       st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_softmax_probability_vector(batch, classes, seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(batch, classes)) * 20
    probs = SoftmaxCrossEntropy.probabilities(logits)
    assert (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


@given(st.sampled_from([c.id for c in load_default().level_classes(3)]))
def test_projection_idempotent_for_every_leaf(leaf_id):
    taxonomy = load_default()
    for level in (1, 2):
        mid = taxonomy.project(leaf_id, level)
        assert taxonomy.project(mid.id, level).id == mid.id

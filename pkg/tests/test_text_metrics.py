import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from support import lev_oracle, tfidf_oracle
from wedas.text_metrics import (
    CorpusStats,
    alignment_triple,
    jaccard,
    nls,
    normalize,
    tfidf_cosine,
)

texts = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=60)
words = st.lists(st.sampled_from(["red", "apple", "pie", "the", "fruit", "green", "x1", "éte"]), max_size=8)


def test_normalize_examples():
    assert normalize("").tokens == ()
    n = normalize("Red  APPLE!")
    assert n.normalized == "red apple!"
    assert n.tokens == ("red", "apple")


def test_normalize_collapses_unicode_whitespace_and_underscores():
    n = normalize("  a  b\tc_d\n")
    assert n.normalized == "a b c_d"
    assert n.tokens == ("a", "b", "c", "d")


@given(texts)
def test_normalize_idempotent(x):
    once = normalize(x)
    assert normalize(once.normalized).normalized == once.normalized
    assert normalize(once.normalized).tokens == once.tokens
    assert "  " not in once.normalized
    assert all(t and t == t.lower() for t in once.tokens)


def test_jaccard_examples():
    assert jaccard(normalize("the red apple"), normalize("red apple pie the")) == 0.75
    assert jaccard(normalize("same words"), normalize("same words")) == 1.0
    assert jaccard(normalize("alpha"), normalize("beta")) == 0.0
    assert jaccard(normalize(""), normalize("")) == 1.0
    assert jaccard(normalize(""), normalize("x")) == 0.0


def test_nls_examples():
    assert nls(normalize("kitten"), normalize("sitting")) == pytest.approx(1 - 3 / 7, abs=1e-9)
    assert nls(normalize("abc"), normalize("abc")) == 1.0
    assert nls(normalize(""), normalize("abc")) == 0.0
    assert nls(normalize(""), normalize("")) == 1.0


def test_tfidf_examples():
    q, o = normalize("red apple"), normalize("red red fruit")
    assert tfidf_cosine(q, o, CorpusStats()) == pytest.approx(2 / math.sqrt(10), abs=1e-9)
    stats = CorpusStats.fit(["red apple", "green pear", "red red fruit"])
    assert tfidf_cosine(q, q, stats) == 1.0
    assert tfidf_cosine(normalize("alpha"), normalize("beta"), stats) == 0.0
    assert tfidf_cosine(normalize(""), normalize("beta"), stats) == 0.0


def test_tfidf_matches_oracle_with_idf():
    docs = ["red apple pie", "green pear", "red red fruit", "apple tart recipe"]
    stats = CorpusStats.fit(docs)
    oracle = tfidf_oracle(["red", "apple"], ["red", "red", "fruit"], [d.split() for d in docs])
    assert tfidf_cosine(normalize("red apple"), normalize("red red fruit"), stats) == pytest.approx(oracle, abs=1e-12)


def test_alignment_triple_examples():
    t = alignment_triple("same text", "same text")
    assert (t.tfidf, t.jaccard, t.nls) == (1.0, 1.0, 1.0)
    t = alignment_triple("red apple", "red red fruit", CorpusStats())
    assert t.tfidf == pytest.approx(2 / math.sqrt(10), abs=1e-9)
    # {red} over {red, apple, fruit}
    assert t.jaccard == pytest.approx(1 / 3, abs=1e-12)
    assert t.nls == pytest.approx(1 - lev_oracle("red apple", "red red fruit") / 13, abs=1e-12)
    t = alignment_triple("abc", "abd")
    assert t.tfidf == 0.0 and t.jaccard == 0.0 and t.nls > 0


def test_corpus_stats_rejects_inconsistent_frequencies():
    with pytest.raises(ValueError):
        CorpusStats(1, {"a": 2})
    with pytest.raises(ValueError):
        CorpusStats(-1)


@settings(max_examples=1000, deadline=None)
@given(st.text(max_size=50), st.text(max_size=50))
def test_nls_matches_dp_oracle_and_is_symmetric(a, b):
    na, nb = normalize(a), normalize(b)
    longest = max(len(na.normalized), len(nb.normalized))
    expected = 1.0 if longest == 0 else 1 - lev_oracle(na.normalized, nb.normalized) / longest
    assert nls(na, nb) == pytest.approx(expected, abs=1e-12)
    assert nls(na, nb) == nls(nb, na)
    assert 0.0 <= nls(na, nb) <= 1.0
    assert (nls(na, nb) == 1.0) == (na.normalized == nb.normalized)


@settings(max_examples=300, deadline=None)
@given(words, words, st.lists(words, max_size=6))
def test_metric_symmetry_bounds_and_oracles(qw, ow, corpus):
    q, o = normalize(" ".join(qw)), normalize(" ".join(ow))
    stats = CorpusStats.fit(" ".join(d) for d in corpus)
    j = jaccard(q, o)
    a, b = set(q.tokens), set(o.tokens)
    assert j == (1.0 if not a | b else len(a & b) / len(a | b))
    assert j == jaccard(o, q)
    c = tfidf_cosine(q, o, stats)
    assert c == tfidf_cosine(o, q, stats)
    assert 0.0 <= c <= 1.0
    assert c == pytest.approx(tfidf_oracle(q.tokens, o.tokens, [list(normalize(" ".join(d)).tokens) for d in corpus]),
                              abs=1e-12)


@given(words, words)
def test_uniform_document_frequency_equals_tf_cosine(qw, ow):
    q, o = normalize(" ".join(qw)), normalize(" ".join(ow))
    uniform = CorpusStats(1, {t: 1 for t in set(q.tokens) | set(o.tokens)})
    assert tfidf_cosine(q, o, uniform) == tfidf_cosine(q, o, CorpusStats())


@given(words)
def test_identical_texts_score_one(ws):
    x = normalize(" ".join(ws) or "nonempty")
    stats = CorpusStats.fit(["red apple", "pie", "the fruit"])
    assert tfidf_cosine(x, x, stats) == 1.0

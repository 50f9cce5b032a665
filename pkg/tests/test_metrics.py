import itertools
from collections import Counter
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from summ import metrics
from summ.kernels import lcs_tokens


def oracle_lcs(a, b):
    """Independent recursive LCS, memoized; no DP table shared with the kernel."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


def oracle_clipped_matches(hyp, ref, n):
    hyp_grams = Counter(tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1))
    ref_grams = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
    return sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())


tokens_st = st.lists(st.sampled_from(list("abcde")), max_size=12)


class TestRougeL:
    def test_identical(self):
        s = metrics.rouge_l(["a", "b", "c"], ["a", "b", "c"])
        assert s.precision == s.recall == s.f1 == 1.0

    def test_disjoint(self):
        assert metrics.rouge_l(["a", "b"], ["c", "d"]).f1 == 0.0

    def test_partial(self):
        # lcs(abc, acb) = 2 -> P = R = 2/3
        s = metrics.rouge_l(list("abc"), list("acb"))
        np.testing.assert_allclose([s.precision, s.recall], [2 / 3, 2 / 3])

    @pytest.mark.parametrize("empty_side", [([], ["a"]), (["a"], []), ([], [])])
    def test_empty(self, empty_side):
        s = metrics.rouge_l(*empty_side)
        assert s.f1 == 0.0

    def test_against_oracle_random(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            a = [str(x) for x in rng.integers(0, 5, size=rng.integers(0, 11))]
            b = [str(x) for x in rng.integers(0, 5, size=rng.integers(0, 11))]
            assert lcs_tokens(a, b) == oracle_lcs(a, b)

    @given(tokens_st, tokens_st)
    @settings(max_examples=200, deadline=None)
    def test_lcs_matches_oracle(self, a, b):
        assert lcs_tokens(a, b) == oracle_lcs(a, b)

    @given(tokens_st, tokens_st)
    @settings(max_examples=100, deadline=None)
    def test_f1_symmetric_and_bounded(self, a, b):
        s_ab = metrics.rouge_l(a, b)
        s_ba = metrics.rouge_l(b, a)
        assert s_ab.f1 == pytest.approx(s_ba.f1)
        assert 0.0 <= s_ab.f1 <= 1.0
        assert s_ab.precision == pytest.approx(s_ba.recall)


class TestRougeN:
    def test_unigram_counts_clip(self):
        # hyp has 'a' twice but ref only once: clipped to 1 match
        s = metrics.rouge_n(["a", "a", "b"], ["a", "b"], 1)
        np.testing.assert_allclose(s.precision, 2 / 3)
        np.testing.assert_allclose(s.recall, 1.0)

    def test_bigram(self):
        s = metrics.rouge_n(list("abcd"), list("abd"), 2)
        # shared bigram: only (a,b); hyp has 3 bigrams, ref has 2
        np.testing.assert_allclose([s.precision, s.recall], [1 / 3, 1 / 2])

    def test_n_longer_than_input(self):
        assert metrics.rouge_n(["a"], ["a"], 3).f1 == 0.0

    def test_bad_n(self):
        with pytest.raises(ValueError):
            metrics.ngram_counts(["a"], 0)

    @given(tokens_st, tokens_st, st.integers(1, 3))
    @settings(max_examples=150, deadline=None)
    def test_matches_clipped_oracle(self, a, b, n):
        s = metrics.rouge_n(a, b, n)
        matches = oracle_clipped_matches(a, b, n)
        hyp_total = max(len(a) - n + 1, 0)
        ref_total = max(len(b) - n + 1, 0)
        if hyp_total:
            np.testing.assert_allclose(s.precision, matches / hyp_total)
        else:
            assert s.precision == 0.0
        if ref_total:
            np.testing.assert_allclose(s.recall, matches / ref_total)
        else:
            assert s.recall == 0.0


class TestSummaryLevel:
    def test_concat_order_matters(self):
        hyp = [["a", "b"], ["c"]]
        ref = [["a", "b", "c"]]
        assert metrics.rouge_l_summary(hyp, ref).f1 == 1.0

    def test_matches_flat_equivalent(self):
        hyp = [["x", "y"], ["z"]]
        ref = [["x"], ["y", "q"]]
        flat = metrics.rouge_l(["x", "y", "z"], ["x", "y", "q"])
        assert metrics.rouge_l_summary(hyp, ref) == flat

    def test_rouge_n_summary_is_stop_reward_shape(self):
        assert metrics.rouge_n_summary([], [["a"]], 1).f1 == 0.0


class TestNovelty:
    def test_all_copied(self):
        assert metrics.novel_ngram_ratio([["a", "b"]], [["a", "b", "c"]], 1) == 0.0

    def test_all_novel(self):
        assert metrics.novel_ngram_ratio([["x", "y"]], [["a", "b"]], 1) == 1.0

    def test_mixed_bigrams(self):
        # summary bigrams: (a,b) present in doc, (b,x) novel
        ratio = metrics.novel_ngram_ratio([["a", "b", "x"]], [["a", "b"]], 2)
        assert ratio == pytest.approx(0.5)

    def test_novel_counts_distinct_grams(self):
        # repeated novel gram counts once
        ratio = metrics.novel_ngram_ratio([["x", "x"]], [["a"]], 1)
        assert ratio == 1.0

    def test_empty_summary(self):
        assert metrics.novel_ngram_ratio([], [["a"]], 1) == 0.0

    def test_grams_never_span_sentence_boundaries(self):
        # (b, c) only exists across a doc sentence break, so it counts as novel
        ratio = metrics.novel_ngram_ratio([["b", "c"]], [["a", "b"], ["c"]], 2)
        assert ratio == 1.0
        # same on the summary side: no (b, c) bigram is formed at all
        ratio = metrics.novel_ngram_ratio([["b"], ["c"]], [["a"]], 2)
        assert ratio == 0.0


class TestStemming:
    @pytest.mark.parametrize("token,stem", [
        ("running", "runn"), ("cats", "cat"), ("played", "play"),
        ("the", "the"), ("ss", "ss"),
    ])
    def test_light_stem(self, token, stem):
        assert metrics.light_stem(token) == stem

    def test_stem_tokens(self):
        assert metrics.stem_tokens(["cats", "dogs"]) == ["cat", "dog"]


def test_score_shape():
    s = metrics.rouge_n(["a"], ["a"], 1)
    assert s.precision == s.recall == s.f1 == 1.0
    with pytest.raises(AttributeError):
        s.f1 = 0.5  # frozen

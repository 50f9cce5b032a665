"""ROUGE-1/2/L scoring and the novel n-gram (abstractiveness) ratio.

These scorers are the reward kernel of the whole system: proxy labels,
reinforcement rewards and the evaluation reports all go through here.
Scores follow the clipped n-gram / LCS definitions; degenerate inputs
(empty hypothesis or reference) score 0 rather than raising.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, Sequence

from summ.kernels import lcs_tokens

Tokens = Sequence[str]


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _score(matches: float, hyp_total: float, ref_total: float) -> RougeScore:
    p = matches / hyp_total if hyp_total > 0 else 0.0
    r = matches / ref_total if ref_total > 0 else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(p, r, f1)


def ngram_counts(tokens: Tokens, n: int) -> Counter:
    """All contiguous n-grams with multiplicity; empty if the input is shorter than n."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(hyp: Tokens, ref: Tokens, n: int) -> RougeScore:
    """Clipped n-gram overlap: recall over reference grams, precision over hypothesis grams."""
    hyp_counts = ngram_counts(hyp, n)
    ref_counts = ngram_counts(ref, n)
    matches = sum((hyp_counts & ref_counts).values())
    return _score(matches, sum(hyp_counts.values()), sum(ref_counts.values()))


def rouge_l(hyp: Tokens, ref: Tokens) -> RougeScore:
    """Sentence-level ROUGE-L from the longest common subsequence."""
    lcs = lcs_tokens(hyp, ref)
    return _score(lcs, len(hyp), len(ref))


def rouge_l_recall(hyp: Tokens, ref: Tokens) -> float:
    return rouge_l(hyp, ref).recall


def rouge_l_f1(hyp: Tokens, ref: Tokens) -> float:
    return rouge_l(hyp, ref).f1


def concat_sentences(sents: Iterable[Tokens]) -> List[str]:
    out: List[str] = []
    for s in sents:
        out.extend(s)
    return out


def rouge_l_summary(hyp_sents: Iterable[Tokens], ref_sents: Iterable[Tokens]) -> RougeScore:
    """ROUGE-L of the two sides concatenated in order."""
    return rouge_l(concat_sentences(hyp_sents), concat_sentences(ref_sents))


def rouge_n_summary(hyp_sents: Iterable[Tokens], ref_sents: Iterable[Tokens], n: int) -> RougeScore:
    """ROUGE-N of the two sides concatenated in order (n=1 is the stop-action reward)."""
    return rouge_n(concat_sentences(hyp_sents), concat_sentences(ref_sents), n)


def novel_ngram_ratio(summary_sents: Iterable[Tokens], doc_sents: Iterable[Tokens], n: int) -> float:
    """Fraction of distinct summary n-grams that never occur in the document.

    Grams are collected per sentence on both sides, so an n-gram never spans
    a sentence boundary.
    """
    summary_grams = set()
    for sent in summary_sents:
        summary_grams.update(ngram_counts(sent, n))
    if not summary_grams:
        return 0.0
    doc_grams = set()
    for sent in doc_sents:
        doc_grams.update(ngram_counts(sent, n))
    novel = sum(1 for g in summary_grams if g not in doc_grams)
    return novel / len(summary_grams)


_SUFFIXES = ("ational", "tional", "iveness", "fulness", "ousness", "ization",
             "ations", "ingly", "ation", "ement", "ments", "ness", "ing",
             "edly", "ions", "ies", "ied", "ed", "es", "ly", "s")


def light_stem(token: str) -> str:
    """Crude suffix-stripping stemmer for the evaluation CLI's --stem flag.

    Reward-path ROUGE never stems; this only exists so evaluation reports
    can approximate stemmed scoring.
    """
    for suf in _SUFFIXES:
        if token.endswith(suf) and len(token) - len(suf) >= 3:
            return token[: -len(suf)]
    return token


def stem_tokens(tokens: Tokens) -> List[str]:
    return [light_stem(t) for t in tokens]

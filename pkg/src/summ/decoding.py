"""Inference-time decoding: diverse beam search with trigram blocking, the
cross-sentence combination reranker, and parallel per-sentence rewriting.

Each extracted sentence is rewritten independently, so a summary of n
sentences with beam width k yields k^n candidate combinations; the
reranker picks the one with the fewest repeated bigrams.  Independence
also makes the fork-based parallel path trivially order-preserving and
bit-identical to the sequential one.
"""

import itertools
import logging
import multiprocessing
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple

import torch

from summ.abstractor import Abstractor, extend_source
from summ.data import Document, END_ID, START_ID, UNK_ID, Vocabulary
from summ.extractor import (FeedForwardExtractor, PointerExtractor,
                            select_top_k, sentences_to_ids)
from summ.metrics import ngram_counts

logger = logging.getLogger(__name__)

RERANK_NGRAM = 2
RERANK_CAP = 10 ** 6


@dataclass
class BeamHypothesis:
    tokens: List[str]
    log_prob: float                 # raw accumulated log-probability
    trigrams: Set[Tuple[str, str, str]] = field(default_factory=set)
    attention_maxes: List[int] = field(default_factory=list)
    finished: bool = False
    # live decoding state, dropped once finished
    state: Optional[tuple] = None
    prev_id: int = START_ID
    penalized: float = 0.0          # log_prob minus accumulated diversity penalties

    @property
    def normalized_score(self) -> float:
        """Log-probability per decoding step, counting the end marker."""
        return self.log_prob / (len(self.tokens) + 1)


def beam_width_for(n: int) -> int:
    """Beam width pruned by summary length: 5 up to 5 sentences, then 4, 3, 2."""
    if n < 1:
        raise ValueError("sentence count must be >= 1")
    if n <= 5:
        return 5
    if n == 6:
        return 4
    if n <= 8:
        return 3
    return 2


def _surface(choice: int, alpha: torch.Tensor, source: Sequence[str],
             oov: Sequence[str], vocab: Vocabulary, vocab_size: int) -> str:
    """Token string for an extended-vocab id; UNK becomes the source token
    under the attention peak."""
    if choice == UNK_ID:
        return source[int(alpha.argmax())]
    if choice >= vocab_size:
        return oov[choice - vocab_size]
    return vocab.decode(choice)


def beam_search(
    source: Sequence[str],
    abstractor: Abstractor,
    vocab: Vocabulary,
    k: int,
    diversity: float = 1.0,
    max_len: int = 30,
) -> List[BeamHypothesis]:
    """Up to k finished hypotheses, sorted by normalized score, descending.

    Expansions that would repeat a trigram already in the hypothesis get
    -inf.  Among one parent's surviving expansions, the r-th ranked one is
    penalized by diversity * r (rank starts at 1); penalties steer beam
    pruning but final scores are raw log-probabilities.  Any hypothesis
    still live at max_len is finished by forcing the end token, so at
    least one hypothesis always comes back.
    """
    if k < 1:
        raise ValueError("beam width must be >= 1")
    input_ids, ext_ids, oov = extend_source(source, vocab)
    ext_ids_t = torch.tensor(ext_ids, dtype=torch.long)
    n_oov = len(oov)
    with torch.no_grad():
        enc_states, state0 = abstractor.encode(input_ids)
    beam = [BeamHypothesis([], 0.0, state=state0)]
    finished: List[BeamHypothesis] = []

    for step in range(max_len + 1):
        pool: List[Tuple[float, int, int, BeamHypothesis]] = []
        for parent_idx, parent in enumerate(beam):
            with torch.no_grad():
                dist, alpha, new_state = abstractor.decode_step(
                    parent.state, parent.prev_id, enc_states, ext_ids_t, n_oov)
            log_dist = torch.log(dist)
            att_max = int(alpha.argmax())
            if step == max_len:
                # out of budget: force the end token
                child = _finish(parent, float(log_dist[END_ID]), att_max)
                finished.append(child)
                continue
            scored = []
            for choice in range(len(dist)):
                lp = float(log_dist[choice])
                if choice != END_ID and len(parent.tokens) >= 2:
                    token = _surface(choice, alpha, source, oov, vocab,
                                     abstractor.vocab_size)
                    tri = (parent.tokens[-2], parent.tokens[-1], token)
                    if tri in parent.trigrams:
                        lp = float("-inf")
                scored.append((lp, choice))
            scored.sort(key=lambda t: (-t[0], t[1]))
            for rank, (lp, choice) in enumerate(scored[:k], start=1):
                if lp == float("-inf"):
                    continue
                pool.append((parent.penalized + lp - diversity * rank,
                             parent_idx, choice,
                             _expand(parent, choice, lp, alpha, source, oov,
                                     vocab, abstractor.vocab_size, new_state)))
        if step == max_len:
            break
        # deterministic pruning: penalized score, then parent order, then token id
        pool.sort(key=lambda t: (-t[0], t[1], t[2]))
        beam = []
        for penalized, _, _, child in pool:
            if child.finished:
                finished.append(child)
            else:
                child.penalized = penalized
                beam.append(child)
            if len(beam) == k:
                break
        if not beam:
            break

    unique = {}
    for hyp in finished:
        key = tuple(hyp.tokens)
        if key not in unique or hyp.log_prob > unique[key].log_prob:
            unique[key] = hyp
    result = sorted(unique.values(),
                    key=lambda h: (-h.normalized_score, tuple(h.tokens)))
    return result[:k]


def _expand(parent: BeamHypothesis, choice: int, lp: float, alpha: torch.Tensor,
            source, oov, vocab, vocab_size: int, new_state) -> BeamHypothesis:
    att_max = int(alpha.argmax())
    if choice == END_ID:
        return _finish(parent, lp, att_max)
    token = _surface(choice, alpha, source, oov, vocab, vocab_size)
    tokens = parent.tokens + [token]
    trigrams = set(parent.trigrams)
    if len(tokens) >= 3:
        trigrams.add(tuple(tokens[-3:]))
    return BeamHypothesis(
        tokens, parent.log_prob + lp, trigrams,
        parent.attention_maxes + [att_max], finished=False,
        state=new_state, prev_id=vocab.encode(token),
    )


def _finish(parent: BeamHypothesis, end_lp: float, att_max: int) -> BeamHypothesis:
    return BeamHypothesis(
        list(parent.tokens), parent.log_prob + end_lp, set(parent.trigrams),
        parent.attention_maxes + [att_max], finished=True,
    )


def repeated_ngram_count(tokens: Sequence[str], n: int) -> int:
    """Total n-grams minus distinct n-grams."""
    counts = ngram_counts(list(tokens), n)
    return sum(counts.values()) - len(counts)


@dataclass
class SummaryCandidate:
    hypotheses: List[BeamHypothesis]   # one per extracted sentence
    indices: Tuple[int, ...]           # beam index chosen per sentence
    repeated_ngrams: int
    tie_score: float                   # sum of normalized scores

    @property
    def sentences(self) -> List[List[str]]:
        return [list(h.tokens) for h in self.hypotheses]


def rerank(beams_per_sentence: Sequence[Sequence[BeamHypothesis]],
           n: int = RERANK_NGRAM, cap: int = RERANK_CAP) -> SummaryCandidate:
    """Pick the combination of per-sentence hypotheses with the fewest
    repeated n-grams in the concatenated summary.

    Ties go to the higher sum of length-normalized log-probabilities, then
    to the lexicographically smallest beam-index tuple.  A product larger
    than ``cap`` falls back to the per-sentence best with a warning.
    """
    if any(len(beams) == 0 for beams in beams_per_sentence):
        raise ValueError("every sentence needs at least one hypothesis")
    total = 1
    for beams in beams_per_sentence:
        total *= len(beams)
    if total > cap:
        logger.warning("rerank product %d exceeds cap %d; using per-sentence best",
                       total, cap)
        choice = tuple(0 for _ in beams_per_sentence)
        return _candidate(beams_per_sentence, choice, n)
    best = None
    for combo in itertools.product(*[range(len(b)) for b in beams_per_sentence]):
        cand = _candidate(beams_per_sentence, combo, n)
        key = (cand.repeated_ngrams, -cand.tie_score, cand.indices)
        if best is None or key < best[0]:
            best = (key, cand)
    return best[1]


def _candidate(beams_per_sentence, combo: Tuple[int, ...], n: int) -> SummaryCandidate:
    hyps = [beams_per_sentence[i][j] for i, j in enumerate(combo)]
    flat = [tok for h in hyps for tok in h.tokens]
    return SummaryCandidate(
        hyps, tuple(combo), repeated_ngram_count(flat, n),
        sum(h.normalized_score for h in hyps),
    )


# ---------------------------------------------------------------------------
# parallel per-sentence rewriting

_POOL_CTX: tuple = ()  # (abstractor, vocab, kwargs), inherited by forked workers


def _greedy_task(sentence: List[str]) -> List[str]:
    abstractor, vocab, kwargs = _POOL_CTX
    return abstractor.greedy_decode(sentence, vocab, max_len=kwargs["max_len"])


def _beam_task(sentence: List[str]) -> List[BeamHypothesis]:
    abstractor, vocab, kwargs = _POOL_CTX
    hyps = beam_search(sentence, abstractor, vocab, k=kwargs["k"],
                       diversity=kwargs["diversity"], max_len=kwargs["max_len"])
    for h in hyps:
        h.state = None  # decoder state does not need to cross the process boundary
    return hyps


def _parallel_map(task, sentences: Sequence[List[str]], abstractor, vocab,
                  workers: int, **kwargs) -> list:
    global _POOL_CTX
    _POOL_CTX = (abstractor, vocab, kwargs)
    try:
        if workers == 1 or len(sentences) <= 1:
            return [task(s) for s in sentences]
        # fork keeps the parent's model memory; tasks are independent and
        # single-threaded, so ordering and results match the sequential path
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=workers) as pool:
            return pool.map(task, sentences)
    finally:
        _POOL_CTX = ()


def parallel_abstract(sentences: Sequence[List[str]], abstractor: Abstractor,
                      vocab: Vocabulary, workers: int = 1, max_len: int = 30
                      ) -> List[List[str]]:
    """Rewrite every sentence with greedy decoding, order-preserving and
    bit-identical for any worker count."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return _parallel_map(_greedy_task, sentences, abstractor, vocab, workers,
                         max_len=max_len)


def parallel_beam(sentences: Sequence[List[str]], abstractor: Abstractor,
                  vocab: Vocabulary, k: int, diversity: float = 1.0,
                  workers: int = 1, max_len: int = 30) -> List[List[BeamHypothesis]]:
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return _parallel_map(_beam_task, sentences, abstractor, vocab, workers,
                         k=k, diversity=diversity, max_len=max_len)


# ---------------------------------------------------------------------------
# whole-document inference

def extract_indices(doc: Document, extractor, vocab: Vocabulary,
                    max_sentences: int = 8, fixed_k: Optional[int] = None
                    ) -> List[int]:
    """Greedy extraction with the learned stop, or a fixed sentence count.

    The feed-forward baseline has no stop action, so it requires fixed_k.
    """
    ids = sentences_to_ids(doc, vocab)
    if isinstance(extractor, FeedForwardExtractor):
        if fixed_k is None:
            raise ValueError("the feed-forward extractor needs fixed_k")
        with torch.no_grad():
            probs = [float(p) for p in extractor(ids)]
        return select_top_k(probs, fixed_k)
    if isinstance(extractor, PointerExtractor):
        with torch.no_grad():
            h = extractor.encode(ids)
            if fixed_k is not None:
                picked, _, _ = extractor.run(h, mode="greedy",
                                             max_steps=min(fixed_k, doc.n_sentences),
                                             use_stop=False)
            else:
                picked, _, _ = extractor.run(h, mode="greedy",
                                             max_steps=min(max_sentences, doc.n_sentences),
                                             use_stop=True)
        return picked
    raise TypeError(f"unsupported extractor type {type(extractor).__name__}")


def summarize(
    doc: Document,
    extractor,
    abstractor: Optional[Abstractor],
    vocab: Vocabulary,
    mode: str = "rerank",
    workers: int = 1,
    max_sentences: int = 8,
    fixed_k: Optional[int] = None,
    max_len: int = 30,
    diversity: float = 1.0,
) -> Tuple[List[List[str]], List[int]]:
    """Extract then rewrite one document; returns (summary sentences, indices).

    Modes: "extract-only" returns the chosen sentences verbatim, "greedy"
    rewrites each with greedy decoding, "rerank" decodes k-wide diverse
    beams per sentence and picks the least-repetitive combination.
    """
    if mode not in ("extract-only", "greedy", "rerank"):
        raise ValueError(f"unknown mode {mode!r}")
    indices = extract_indices(doc, extractor, vocab, max_sentences, fixed_k)
    if not indices:
        return [], []
    extracted = [doc.sentences[j] for j in indices]
    if mode == "extract-only":
        return [list(s) for s in extracted], indices
    if abstractor is None:
        raise ValueError(f"mode {mode!r} needs an abstractor")
    if mode == "greedy":
        return parallel_abstract(extracted, abstractor, vocab, workers, max_len), indices
    k = beam_width_for(len(extracted))
    beams = parallel_beam(extracted, abstractor, vocab, k, diversity, workers, max_len)
    return rerank(beams).sentences, indices


def benchmark_decoding(sentences: Sequence[List[str]], abstractor: Abstractor,
                       vocab: Vocabulary, workers_list: Sequence[int] = (1, 2, 4, 8),
                       max_len: int = 30) -> dict:
    """Words/sec of the parallel greedy rewriter per worker count.

    Outputs are checked identical across worker counts while timing.
    """
    results = {}
    reference = None
    for workers in workers_list:
        start = time.perf_counter()
        out = parallel_abstract(sentences, abstractor, vocab, workers, max_len)
        elapsed = time.perf_counter() - start
        if reference is None:
            reference = out
        elif out != reference:
            raise AssertionError(f"worker count {workers} changed decoder output")
        words = sum(len(s) for s in out)
        results[workers] = {"seconds": elapsed, "words_per_sec": words / elapsed}
    return results

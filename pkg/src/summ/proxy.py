"""Proxy extraction labels and abstractor training pairs.

Summarization corpora come as document-summary pairs with no saliency
annotation, so each summary sentence is matched to the document sentence
with the highest ROUGE-L recall; those matches supervise the extractor
and pair up the abstractor's training sentences.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from summ.data import SummaryPair
from summ.metrics import rouge_l_recall

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProxyLabels:
    pair_id: str
    indices: List[int]  # one document-sentence index per summary sentence


def match_proxy_labels(pair: SummaryPair) -> ProxyLabels:
    """argmax ROUGE-L recall match per summary sentence; ties take the lowest index."""
    indices = []
    for t, target in enumerate(pair.summary):
        best_idx, best = 0, -1.0
        for i, sent in enumerate(pair.document.sentences):
            score = rouge_l_recall(sent, target)
            if score > best:
                best_idx, best = i, score
        if best == 0.0:
            logger.warning("pair %s: summary sentence %d overlaps no document sentence",
                           pair.id, t)
        indices.append(best_idx)
    return ProxyLabels(pair.id, indices)


def build_abstractor_pairs(pair: SummaryPair, labels: ProxyLabels
                           ) -> List[Tuple[List[str], List[str]]]:
    """(matched document sentence, summary sentence) pairs, one per summary sentence."""
    if labels.pair_id != pair.id or len(labels.indices) != len(pair.summary):
        raise ValueError(f"labels do not match pair {pair.id}")
    n = pair.document.n_sentences
    out = []
    for idx, target in zip(labels.indices, pair.summary):
        if not 0 <= idx < n:
            raise ValueError(f"label index {idx} out of range for pair {pair.id}")
        out.append((pair.document.sentences[idx], target))
    return out


def label_corpus(pairs: Sequence[SummaryPair]) -> List[ProxyLabels]:
    return [match_proxy_labels(p) for p in pairs]

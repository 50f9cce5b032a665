"""Corpus handling: tokenization, vocabulary, truncation, JSONL ingestion
and the synthetic corpus generator used by the desk-scale experiments."""

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

PAD, UNK, START, END = "<pad>", "<unk>", "<s>", "</s>"
PAD_ID, UNK_ID, START_ID, END_ID = 0, 1, 2, 3
RESERVED = (PAD, UNK, START, END)

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def tokenize(text: str) -> List[str]:
    """Lowercase and split on whitespace, with punctuation as separate tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Document:
    """Ordered, pre-split sentences of one article; tokens are lowercase strings."""

    id: str
    sentences: List[List[str]]

    def __post_init__(self):
        kept = [s for s in self.sentences if s]
        if len(kept) != len(self.sentences):
            logger.warning("document %s: dropped %d empty sentence(s)",
                           self.id, len(self.sentences) - len(kept))
            self.sentences = kept
        if not self.sentences:
            raise ValueError(f"document {self.id} has no non-empty sentences")

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)


@dataclass
class SummaryPair:
    """One supervised record: a document and its ordered reference summary."""

    document: Document
    summary: List[List[str]]
    salient_indices: Optional[List[int]] = None  # ground truth, synthetic data only

    def __post_init__(self):
        kept = [s for s in self.summary if s]
        if len(kept) != len(self.summary):
            logger.warning("pair %s: dropped %d empty summary sentence(s)",
                           self.document.id, len(self.summary) - len(kept))
            self.summary = kept
        if not self.summary:
            raise ValueError(f"pair {self.document.id} has an empty summary")

    @property
    def id(self) -> str:
        return self.document.id


class Vocabulary:
    """Bijective token<->id map with fixed reserved ids for PAD/UNK/START/END."""

    def __init__(self, tokens: Sequence[str]):
        self._token_to_id: Dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for t in tokens:
            if t in self._token_to_id:
                raise ValueError(f"duplicate or reserved token in vocabulary: {t!r}")
            self._token_to_id[t] = len(self._token_to_id)
        self._id_to_token = {i: t for t, i in self._token_to_id.items()}

    def __len__(self) -> int:
        return len(self._token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def encode(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        return self._id_to_token[idx]

    def encode_sentence(self, tokens: Sequence[str]) -> List[int]:
        return [self.encode(t) for t in tokens]

    def tokens(self) -> List[str]:
        """Non-reserved tokens in id order."""
        return [self._id_to_token[i] for i in range(len(RESERVED), len(self))]

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.tokens()), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(pairs: Sequence[SummaryPair], cap: int) -> Vocabulary:
    """Vocabulary of the most frequent corpus tokens, capped at ``cap`` total ids.

    ``cap`` includes the 4 reserved ids.  Frequency ties break lexicographically.
    """
    if cap < len(RESERVED):
        raise ValueError(f"cap must be >= {len(RESERVED)}, got {cap}")
    if not pairs:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    freqs: Counter = Counter()
    for pair in pairs:
        for sent in pair.document.sentences:
            freqs.update(sent)
        for sent in pair.summary:
            freqs.update(sent)
    ranked = sorted(freqs.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [tok for tok, _ in ranked[: cap - len(RESERVED)]]
    return Vocabulary(keep)


def truncate_pair(pair: SummaryPair, max_src: int, max_tgt: int) -> SummaryPair:
    """Cut document sentences to ``max_src`` tokens and summary sentences to ``max_tgt``."""
    if max_src < 1 or max_tgt < 1:
        raise ValueError("truncation lengths must be >= 1")
    doc = Document(pair.document.id, [s[:max_src] for s in pair.document.sentences])
    return SummaryPair(doc, [s[:max_tgt] for s in pair.summary], pair.salient_indices)


# ---------------------------------------------------------------------------
# JSONL data format: one {"id", "article": [...], "abstract": [...]} per line.
# The synthetic generator additionally writes "salient_indices".
# ---------------------------------------------------------------------------

def pair_from_record(record: dict) -> SummaryPair:
    doc = Document(str(record["id"]), [tokenize(s) for s in record["article"]])
    summary = [tokenize(s) for s in record["abstract"]]
    salient = record.get("salient_indices")
    return SummaryPair(doc, summary, list(salient) if salient is not None else None)


def pair_to_record(pair: SummaryPair) -> dict:
    record = {
        "id": pair.id,
        "article": [" ".join(s) for s in pair.document.sentences],
        "abstract": [" ".join(s) for s in pair.summary],
    }
    if pair.salient_indices is not None:
        record["salient_indices"] = pair.salient_indices
    return record


def load_pairs(path: Path) -> List[SummaryPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(pair_from_record(json.loads(line)))
    return pairs


def save_pairs(pairs: Iterable[SummaryPair], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair_to_record(pair), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_MIN_SENT_LEN, _MAX_SENT_LEN = 8, 14


def _subsequence(rng: np.random.Generator, tokens: List[str]) -> List[str]:
    """Random compressed copy: each token kept with p=0.6, at least one kept."""
    keep = rng.random(len(tokens)) < 0.6
    if not keep.any():
        keep[rng.integers(len(tokens))] = True
    return [t for t, k in zip(tokens, keep) if k]


def generate_synthetic_corpus(
    n_docs: int,
    vocab_size: int,
    sents_per_doc: int,
    salient_per_doc: int,
    noise_rate: float,
    seed: int,
) -> List[SummaryPair]:
    """Deterministic toy corpus whose reference summaries are compressed,
    noised copies of designated salient sentences.

    Salient sentences draw from the first 60% of the word list and filler
    sentences from the last 40%, so saliency is learnable from content.
    Each record stores the ground-truth salient indices.  With
    ``noise_rate=0`` every summary sentence is an exact subsequence of its
    source and is guaranteed (by rejection) to be closest to it under
    ROUGE-L recall.
    """
    if n_docs < 1 or vocab_size < 8 or sents_per_doc < 1:
        raise ValueError("n_docs, vocab_size and sents_per_doc must be positive (vocab >= 8)")
    if not 0 <= salient_per_doc <= sents_per_doc or salient_per_doc < 1:
        raise ValueError("salient_per_doc must be in [1, sents_per_doc]")
    if not 0.0 <= noise_rate <= 1.0:
        raise ValueError("noise_rate must be in [0, 1]")

    from summ.metrics import rouge_l_recall  # local import avoids a cycle

    rng = np.random.default_rng(seed)
    words = [f"w{i:04d}" for i in range(vocab_size)]
    n_content = max(4, int(0.6 * vocab_size))
    content, filler = words[:n_content], words[n_content:]

    pairs = []
    for d in range(n_docs):
        for _attempt in range(50):
            salient_at = sorted(rng.choice(sents_per_doc, size=salient_per_doc, replace=False))
            sentences, summary = [], []
            for j in range(sents_per_doc):
                length = int(rng.integers(_MIN_SENT_LEN, _MAX_SENT_LEN + 1))
                pool = content if j in salient_at else filler
                sentences.append([pool[i] for i in rng.integers(len(pool), size=length)])
            for j in salient_at:
                target = _subsequence(rng, sentences[j])
                if noise_rate > 0:
                    target = [
                        words[rng.integers(vocab_size)] if rng.random() < noise_rate else t
                        for t in target
                    ]
                summary.append(target)
            # Reject the rare document where a summary sentence matches some
            # other sentence at least as well as its designated source.
            ok = all(
                all(
                    rouge_l_recall(sentences[i], tgt) < rouge_l_recall(sentences[j], tgt)
                    for i in range(sents_per_doc)
                    if i != j
                )
                for j, tgt in zip(salient_at, summary)
            )
            if ok:
                break
        else:
            # high noise rates can make strict dominance unattainable
            logger.warning("document %d: kept a sample without dominance after 50 tries", d)
        doc = Document(f"synth-{seed}-{d:05d}", sentences)
        pairs.append(SummaryPair(doc, summary, [int(j) for j in salient_at]))
    return pairs


def split_pairs(pairs: Sequence[SummaryPair], val_fraction: float, seed: int
                ) -> Tuple[List[SummaryPair], List[SummaryPair]]:
    """Seeded shuffle split into (train, validation)."""
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_val = int(round(val_fraction * len(pairs)))
    val_idx = set(order[:n_val].tolist())
    train = [pairs[i] for i in range(len(pairs)) if i not in val_idx]
    val = [pairs[i] for i in sorted(val_idx)]
    return train, val

"""Maximum-likelihood training loops for the rewriter and both extractors.

All three share the same regime: Adam, global-norm clipping, seeded
shuffling, per-epoch validation, learning-rate halving on plateau and
early stop after the halving budget.  The best-validation parameters are
restored before returning.
"""

import logging
from copy import deepcopy
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from summ.abstractor import Abstractor
from summ.data import SummaryPair, Vocabulary
from summ.extractor import (FeedForwardExtractor, PointerExtractor,
                            sentences_to_ids)
from summ.optim import Trainer
from summ.proxy import ProxyLabels

logger = logging.getLogger(__name__)

TokenPair = Tuple[List[str], List[str]]


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def _index_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size].tolist()


def _fit(loss_fn, val_fn, model, n_train: int, lr: float, batch_size: int,
         max_epochs: int, seed: int, name: str) -> List[EpochStats]:
    """Generic epoch loop; ``loss_fn(indices)`` returns a scalar batch loss."""
    if n_train < 1:
        raise ValueError("training set is empty")
    trainer = Trainer(model, lr=lr)
    rng = np.random.default_rng(seed)
    history: List[EpochStats] = []
    best_val = float("inf")
    best_state = None
    for epoch in range(1, max_epochs + 1):
        losses = []
        for batch in _index_batches(n_train, batch_size, rng):
            losses.append(trainer.step(loss_fn(batch)))
        with torch.no_grad():
            val_loss = val_fn()
        history.append(EpochStats(epoch, float(np.mean(losses)), val_loss,
                                  trainer.state.lr))
        logger.info("%s epoch %d train %.4f val %.4f lr %.2e",
                    name, epoch, history[-1].train_loss, val_loss, trainer.state.lr)
        if val_loss < best_val:
            best_val = val_loss
            best_state = deepcopy(model.state_dict())
        if trainer.end_epoch(val_loss):
            logger.info("%s stopped early at epoch %d", name, epoch)
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    return history


def train_abstractor(
    model: Abstractor,
    train_pairs: Sequence[TokenPair],
    val_pairs: Sequence[TokenPair],
    vocab: Vocabulary,
    lr: float = 1e-3,
    batch_size: int = 32,
    max_epochs: int = 30,
    seed: int = 0,
) -> List[EpochStats]:
    """Cross-entropy training on (document sentence, summary sentence) pairs."""
    def loss_fn(batch):
        return model.ml_loss([train_pairs[i] for i in batch], vocab)

    def val_fn():
        return float(model.ml_loss(val_pairs, vocab)) if val_pairs else float("inf")

    return _fit(loss_fn, val_fn, model, len(train_pairs), lr, batch_size,
                max_epochs, seed, "abstractor")


def _check_labels(pairs: Sequence[SummaryPair], labels: Sequence[ProxyLabels]):
    if len(pairs) != len(labels):
        raise ValueError("pairs and labels differ in length")
    for pair, lab in zip(pairs, labels):
        if pair.id != lab.pair_id:
            raise ValueError(f"label id {lab.pair_id!r} does not match pair {pair.id!r}")


def train_pointer_extractor(
    model: PointerExtractor,
    train_pairs: Sequence[SummaryPair],
    train_labels: Sequence[ProxyLabels],
    val_pairs: Sequence[SummaryPair],
    val_labels: Sequence[ProxyLabels],
    vocab: Vocabulary,
    lr: float = 1e-3,
    batch_size: int = 32,
    max_epochs: int = 30,
    seed: int = 0,
) -> List[EpochStats]:
    """Teacher-forced selection training on proxy label sequences.

    The batch loss is the summed step cross-entropy divided by the number
    of labeled steps in the batch.
    """
    _check_labels(train_pairs, train_labels)
    _check_labels(val_pairs, val_labels)
    id_cache = {}

    def doc_ids(pair):
        if pair.id not in id_cache:
            id_cache[pair.id] = sentences_to_ids(pair.document, vocab)
        return id_cache[pair.id]

    def batch_loss(pairs, labels, batch):
        total = None
        steps = 0
        for i in batch:
            loss = model.ml_loss(model.encode(doc_ids(pairs[i])), labels[i].indices)
            total = loss if total is None else total + loss
            steps += len(labels[i].indices)
        return total / steps

    def loss_fn(batch):
        return batch_loss(train_pairs, train_labels, batch)

    def val_fn():
        if not val_pairs:
            return float("inf")
        return float(batch_loss(val_pairs, val_labels, range(len(val_pairs))))

    return _fit(loss_fn, val_fn, model, len(train_pairs), lr, batch_size,
                max_epochs, seed, "rnn-ext")


def train_ff_extractor(
    model: FeedForwardExtractor,
    train_pairs: Sequence[SummaryPair],
    train_labels: Sequence[ProxyLabels],
    val_pairs: Sequence[SummaryPair],
    val_labels: Sequence[ProxyLabels],
    vocab: Vocabulary,
    lr: float = 1e-3,
    batch_size: int = 32,
    max_epochs: int = 30,
    seed: int = 0,
) -> List[EpochStats]:
    """Per-sentence binary cross-entropy against the proxy index set."""
    _check_labels(train_pairs, train_labels)
    _check_labels(val_pairs, val_labels)

    def batch_loss(pairs, labels, batch):
        total = None
        n_sents = 0
        for i in batch:
            ids = sentences_to_ids(pairs[i].document, vocab)
            loss = model.loss(ids, labels[i].indices)
            total = loss if total is None else total + loss
            n_sents += pairs[i].document.n_sentences
        return total / n_sents

    def loss_fn(batch):
        return batch_loss(train_pairs, train_labels, batch)

    def val_fn():
        if not val_pairs:
            return float("inf")
        return float(batch_loss(val_pairs, val_labels, range(len(val_pairs))))

    return _fit(loss_fn, val_fn, model, len(train_pairs), lr, batch_size,
                max_epochs, seed, "ff-ext")

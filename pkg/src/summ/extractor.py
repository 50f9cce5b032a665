"""Sentence extraction models.

``PointerExtractor`` encodes a document hierarchically (per-sentence
convolutions, then a bidirectional LSTM over sentences) and selects
sentences with a recurrent pointer decoder that runs a two-hop
attention: a glimpse pass builds a context vector, a second pass scores
the candidates.  A learned stop row can join the candidate set so the
policy decides its own summary length.  ``FeedForwardExtractor`` is the
non-recurrent baseline that scores every sentence independently.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from summ.data import PAD_ID, Document, Vocabulary

STOP = -1  # action marker for "end of extraction" in index lists

MIN_CONV_LEN = 5  # sentences are padded so the widest filter window fits


def sentences_to_ids(doc: Document, vocab: Vocabulary) -> torch.Tensor:
    """(n_sents, max_len) id matrix, PAD-padded to at least MIN_CONV_LEN."""
    width = max(MIN_CONV_LEN, max(len(s) for s in doc.sentences))
    out = torch.full((doc.n_sentences, width), PAD_ID, dtype=torch.long)
    for i, sent in enumerate(doc.sentences):
        out[i, : len(sent)] = torch.tensor(vocab.encode_sentence(sent), dtype=torch.long)
    return out


class ConvSentenceEncoder(nn.Module):
    """Embed tokens and pool convolution features over time, one vector per sentence."""

    def __init__(self, vocab_size: int, emb_dim: int, n_filters: int,
                 windows: Sequence[int] = (3, 4, 5)):
        super().__init__()
        self.embedding = nn.Parameter(torch.zeros(vocab_size, emb_dim))
        self.convs = nn.ModuleList(
            [nn.Conv1d(emb_dim, n_filters, w) for w in windows]
        )
        self.out_dim = n_filters * len(windows)

    def forward(self, sent_ids: torch.Tensor) -> torch.Tensor:
        emb = F.embedding(sent_ids, self.embedding).transpose(1, 2)  # (n, emb, len)
        pooled = [conv(emb).relu().max(dim=2).values for conv in self.convs]
        return torch.cat(pooled, dim=1)


class DocumentEncoder(nn.Module):
    """Context-aware sentence vectors: convolution features through a biLSTM."""

    def __init__(self, vocab_size: int, emb_dim: int, n_filters: int, enc_hidden: int):
        super().__init__()
        self.sent_encoder = ConvSentenceEncoder(vocab_size, emb_dim, n_filters)
        self.lstm = nn.LSTM(self.sent_encoder.out_dim, enc_hidden, bidirectional=True)
        self.init_h = nn.Parameter(torch.zeros(2, 1, enc_hidden))
        self.init_c = nn.Parameter(torch.zeros(2, 1, enc_hidden))
        self.out_dim = 2 * enc_hidden

    def forward(self, sent_ids: torch.Tensor) -> torch.Tensor:
        conv = self.sent_encoder(sent_ids)  # (n, conv_dim)
        out, _ = self.lstm(conv.unsqueeze(1), (self.init_h, self.init_c))
        return out.squeeze(1)  # (n, 2*enc_hidden)


@dataclass
class StepOutput:
    """One pointer-decoder step: scores over candidates plus updated state."""

    logits: torch.Tensor   # (n_candidates,), -inf at masked slots
    probs: torch.Tensor    # exact zeros at masked slots
    glimpse: torch.Tensor  # context vector from the first attention hop
    state: Tuple[torch.Tensor, torch.Tensor]


class PointerDecoder(nn.Module):
    """Recurrent selector over sentence vectors with two-hop attention."""

    def __init__(self, input_dim: int, dec_hidden: int, att_dim: int):
        super().__init__()
        self.cell = nn.LSTMCell(input_dim, dec_hidden)
        self.start_input = nn.Parameter(torch.zeros(input_dim))
        self.init_h = nn.Parameter(torch.zeros(dec_hidden))
        self.init_c = nn.Parameter(torch.zeros(dec_hidden))
        # first hop (glimpse); its candidate projection is reused for the context sum
        self.glimpse_cand = nn.Linear(input_dim, att_dim, bias=False)
        self.glimpse_state = nn.Linear(dec_hidden, att_dim, bias=False)
        self.glimpse_v = nn.Parameter(torch.zeros(att_dim))
        # second hop (pointer scores)
        self.pointer_cand = nn.Linear(input_dim, att_dim, bias=False)
        self.pointer_ctx = nn.Linear(att_dim, att_dim, bias=False)
        self.pointer_v = nn.Parameter(torch.zeros(att_dim))
        # stop action embedding, same dimension as a sentence vector
        self.stop_embedding = nn.Parameter(torch.zeros(input_dim))

    def initial_state(self) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.init_h.unsqueeze(0), self.init_c.unsqueeze(0)

    def candidates(self, h: torch.Tensor, include_stop: bool) -> torch.Tensor:
        if include_stop:
            return torch.cat([h, self.stop_embedding.unsqueeze(0)], dim=0)
        return h

    def step(
        self,
        h: torch.Tensor,
        state: Tuple[torch.Tensor, torch.Tensor],
        decoder_input: torch.Tensor,
        selected: Sequence[int],
        include_stop: bool,
        apply_mask: bool,
    ) -> StepOutput:
        """Advance the decoder one step and score every candidate.

        ``selected`` sentence indices are force-zeroed (-inf logits) when
        ``apply_mask`` is set; the stop slot, when present, is never masked.
        """
        new_h, new_c = self.cell(decoder_input.unsqueeze(0), state)
        z = new_h.squeeze(0)

        cands = self.candidates(h, include_stop)
        proj = self.glimpse_cand(cands)  # (n_cand, att)
        scores = torch.tanh(proj + self.glimpse_state(z)) @ self.glimpse_v
        alpha = F.softmax(scores, dim=0)
        glimpse = alpha @ proj

        logits = torch.tanh(self.pointer_cand(cands) + self.pointer_ctx(glimpse)) @ self.pointer_v
        if apply_mask and selected:
            mask = torch.zeros(len(cands), dtype=torch.bool)
            mask[list(selected)] = True
            if include_stop:
                mask[-1] = False
            logits = logits.masked_fill(mask, float("-inf"))
        probs = F.softmax(logits, dim=0)
        return StepOutput(logits, probs, glimpse, (new_h, new_c))


class PointerExtractor(nn.Module):
    def __init__(self, vocab_size: int, emb_dim: int = 128, n_filters: int = 100,
                 enc_hidden: int = 256, dec_hidden: int = 256,
                 att_dim: Optional[int] = None):
        super().__init__()
        self.doc_encoder = DocumentEncoder(vocab_size, emb_dim, n_filters, enc_hidden)
        self.decoder = PointerDecoder(self.doc_encoder.out_dim, dec_hidden,
                                      att_dim or dec_hidden)
        self.double()

    def encode(self, sent_ids: torch.Tensor) -> torch.Tensor:
        return self.doc_encoder(sent_ids)

    def run(
        self,
        h: torch.Tensor,
        mode: str = "greedy",
        max_steps: int = 4,
        use_stop: bool = True,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[List[int], List[torch.Tensor], bool]:
        """Decode a selection trajectory over pre-encoded sentence vectors.

        Returns (indices, per-step log-probabilities, stopped).  Already
        selected sentences are always masked here, so indices never repeat;
        with ``use_stop`` the trajectory may end early on the stop action.
        """
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        n = h.shape[0]
        state = self.decoder.initial_state()
        decoder_input = self.decoder.start_input
        indices: List[int] = []
        log_probs: List[torch.Tensor] = []
        stopped = False
        for _ in range(min(max_steps, n) if not use_stop else max_steps):
            out = self.decoder.step(h, state, decoder_input, indices,
                                    include_stop=use_stop, apply_mask=True)
            if mode == "greedy":
                choice = int(out.probs.argmax())
            elif mode == "sample":
                choice = int(torch.multinomial(out.probs, 1, generator=generator))
            else:
                raise ValueError(f"unknown mode {mode!r}")
            log_probs.append(F.log_softmax(out.logits, dim=0)[choice])
            state = out.state
            if use_stop and choice == n:
                stopped = True
                break
            indices.append(choice)
            decoder_input = h[choice]
            if len(indices) == n:
                break
        return indices, log_probs, stopped

    def ml_loss(self, h: torch.Tensor, label_indices: Sequence[int]) -> torch.Tensor:
        """Teacher-forced cross-entropy, summed over steps.

        The repeat mask is deliberately absent here (it only applies to RL
        rollouts and inference) and there is no stop candidate.
        """
        n = h.shape[0]
        for idx in label_indices:
            if not 0 <= idx < n:
                raise ValueError(f"label index {idx} out of range for {n} sentences")
        state = self.decoder.initial_state()
        decoder_input = self.decoder.start_input
        loss = h.new_zeros(())
        for idx in label_indices:
            out = self.decoder.step(h, state, decoder_input, [],
                                    include_stop=False, apply_mask=False)
            loss = loss - F.log_softmax(out.logits, dim=0)[idx]
            state = out.state
            decoder_input = h[idx]
        return loss


class FeedForwardExtractor(nn.Module):
    """Historyless baseline: independent keep/skip probability per sentence."""

    def __init__(self, vocab_size: int, emb_dim: int = 128, n_filters: int = 100,
                 enc_hidden: int = 256):
        super().__init__()
        self.doc_encoder = DocumentEncoder(vocab_size, emb_dim, n_filters, enc_hidden)
        d = self.doc_encoder.out_dim
        self.doc_proj = nn.Linear(d, d)          # document summary vector
        self.sent_weight = nn.Linear(d, 1, bias=False)
        self.bilinear = nn.Parameter(torch.zeros(d, d))
        self.bias = nn.Parameter(torch.zeros(()))
        self.double()

    def forward(self, sent_ids: torch.Tensor) -> torch.Tensor:
        h = self.doc_encoder(sent_ids)  # (n, d)
        doc_vec = torch.tanh(self.doc_proj(h.mean(dim=0)))
        scores = self.sent_weight(h).squeeze(1) + h @ self.bilinear @ doc_vec + self.bias
        return torch.sigmoid(scores)

    def loss(self, sent_ids: torch.Tensor, positive_indices: Sequence[int]) -> torch.Tensor:
        """Binary cross-entropy against the proxy index set (duplicates count once)."""
        probs = self.forward(sent_ids)
        labels = torch.zeros_like(probs)
        labels[sorted(set(positive_indices))] = 1.0
        return F.binary_cross_entropy(probs, labels, reduction="sum")


def select_top_k(probs: Sequence[float], k: int) -> List[int]:
    """Indices of the k highest probabilities, in document order; ties keep
    the lower index; k beyond the document returns every index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    return sorted(order[: min(k, len(probs))])


def init_params(module: nn.Module, seed: int) -> None:
    """Seeded init: scaled-normal embeddings, uniform [-0.1, 0.1] elsewhere."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if "embedding" in name:
                p.normal_(0.0, 0.1, generator=gen)
            else:
                p.uniform_(-0.1, 0.1, generator=gen)

"""Sentence rewriter: encoder-aligner-decoder with a copy gate.

One source sentence in, one compressed/paraphrased sentence out.  The
decoder mixes a generation softmax over the fixed vocabulary with copied
attention mass scattered onto the source tokens, so out-of-vocabulary
source words remain producible.  The embedding matrix is shared between
source side, target side and the output projection.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from summ.data import END_ID, START_ID, UNK_ID, Vocabulary

logger = logging.getLogger(__name__)

State = Tuple[torch.Tensor, torch.Tensor]


def extend_source(tokens: Sequence[str], vocab: Vocabulary
                  ) -> Tuple[List[int], List[int], List[str]]:
    """Map source tokens to (input ids, extended-vocab ids, OOV token list).

    Input ids feed the encoder embedding (OOV -> UNK); extended ids index
    the copy distribution, with OOV tokens numbered past the vocabulary in
    order of first occurrence.
    """
    input_ids: List[int] = []
    ext_ids: List[int] = []
    oov: List[str] = []
    oov_slot: Dict[str, int] = {}
    for tok in tokens:
        idx = vocab.encode(tok)
        input_ids.append(idx)
        if idx == UNK_ID and tok != vocab.decode(UNK_ID):
            if tok not in oov_slot:
                oov_slot[tok] = len(vocab) + len(oov)
                oov.append(tok)
            ext_ids.append(oov_slot[tok])
        else:
            ext_ids.append(idx)
    return input_ids, ext_ids, oov


def target_to_extended(tokens: Sequence[str], vocab: Vocabulary,
                       oov: Sequence[str]) -> List[int]:
    """Extended ids for a target sentence; unseen OOV targets fall back to UNK."""
    oov_slot = {tok: len(vocab) + i for i, tok in enumerate(oov)}
    out = []
    for tok in tokens:
        idx = vocab.encode(tok)
        if idx == UNK_ID and tok in oov_slot:
            idx = oov_slot[tok]
        elif idx == UNK_ID:
            logger.warning("target token %r neither in vocabulary nor source; scored as UNK", tok)
        out.append(idx)
    return out


class Abstractor(nn.Module):
    def __init__(self, vocab_size: int, emb_dim: int = 128, enc_hidden: int = 256,
                 dec_hidden: int = 256):
        super().__init__()
        self.vocab_size = vocab_size
        self.embedding = nn.Parameter(torch.zeros(vocab_size, emb_dim))
        self.encoder = nn.LSTM(emb_dim, enc_hidden, bidirectional=True)
        self.bridge_h = nn.Linear(2 * enc_hidden, dec_hidden)
        self.bridge_c = nn.Linear(2 * enc_hidden, dec_hidden)
        self.cell = nn.LSTMCell(emb_dim, dec_hidden)
        self.attn_bilinear = nn.Parameter(torch.zeros(2 * enc_hidden, dec_hidden))
        self.out_proj = nn.Linear(dec_hidden + 2 * enc_hidden, emb_dim)
        self.copy_ctx = nn.Linear(2 * enc_hidden, 1, bias=False)
        self.copy_state = nn.Linear(dec_hidden, 1, bias=False)
        self.copy_input = nn.Linear(emb_dim, 1, bias=False)
        self.copy_bias = nn.Parameter(torch.zeros(()))
        self.double()

    def encode(self, input_ids: Sequence[int]) -> Tuple[torch.Tensor, State]:
        ids = torch.tensor(list(input_ids), dtype=torch.long)
        emb = F.embedding(ids, self.embedding).unsqueeze(1)  # (L, 1, emb)
        out, (hn, cn) = self.encoder(emb)
        final_h = torch.cat([hn[0], hn[1]], dim=1)  # (1, 2*enc_hidden)
        final_c = torch.cat([cn[0], cn[1]], dim=1)
        return out.squeeze(1), (self.bridge_h(final_h), self.bridge_c(final_c))

    def attend(self, enc_states: torch.Tensor, z: torch.Tensor
               ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Bilinear attention: context vector and weights over source positions."""
        scores = enc_states @ self.attn_bilinear @ z
        alpha = F.softmax(scores, dim=0)
        return alpha @ enc_states, alpha

    def decode_step(
        self,
        state: State,
        prev_id: int,
        enc_states: torch.Tensor,
        ext_ids: torch.Tensor,
        n_oov: int,
        force_copy: Optional[float] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor, State]:
        """One decoder step; returns (extended distribution, attention, new state).

        ``force_copy`` pins the copy gate for tests.  The extended
        distribution places (1 - p_copy) * softmax mass on the fixed
        vocabulary and scatters p_copy * attention onto the source's
        extended ids, summing duplicates.
        """
        prev_emb = F.embedding(torch.tensor([prev_id]), self.embedding)  # (1, emb)
        new_h, new_c = self.cell(prev_emb, state)
        z = new_h.squeeze(0)
        context, alpha = self.attend(enc_states, z)
        gen_feat = self.out_proj(torch.cat([z, context]))
        gen_probs = F.softmax(self.embedding @ gen_feat, dim=0)
        if force_copy is None:
            p_copy = torch.sigmoid(
                self.copy_ctx(context) + self.copy_state(z)
                + self.copy_input(prev_emb.squeeze(0)) + self.copy_bias
            ).squeeze()
        else:
            p_copy = gen_probs.new_tensor(force_copy)
        extended = gen_probs.new_zeros(self.vocab_size + n_oov)
        extended[: self.vocab_size] = (1.0 - p_copy) * gen_probs
        extended = extended.index_add(0, ext_ids, p_copy * alpha)
        return extended, alpha, (new_h, new_c)

    def ml_loss(self, pairs: Sequence[Tuple[Sequence[str], Sequence[str]]],
                vocab: Vocabulary) -> torch.Tensor:
        """Teacher-forced mean NLL per target token (END appended), using the
        extended distribution so copying an OOV target counts as correct."""
        total = None
        n_tokens = 0
        for source, target in pairs:
            if not source or not target:
                raise ValueError("abstractor pairs need non-empty source and target")
            input_ids, ext_ids, oov = extend_source(source, vocab)
            ext_ids_t = torch.tensor(ext_ids, dtype=torch.long)
            enc_states, state = self.encode(input_ids)
            target_ext = target_to_extended(target, vocab, oov) + [END_ID]
            # decoder inputs use vocabulary ids (OOV targets enter as UNK)
            input_stream = [START_ID] + [vocab.encode(t) for t in target]
            for prev_id, gold in zip(input_stream, target_ext):
                dist, _, state = self.decode_step(state, prev_id, enc_states,
                                                  ext_ids_t, len(oov))
                nll = -torch.log(dist[gold])
                total = nll if total is None else total + nll
                n_tokens += 1
        return total / n_tokens

    @torch.no_grad()
    def greedy_decode(self, source: Sequence[str], vocab: Vocabulary,
                      max_len: int = 30) -> List[str]:
        """Argmax decoding until END or ``max_len``; emitted UNKs are replaced
        by the source token with the highest attention weight at that step."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        input_ids, ext_ids, oov = extend_source(source, vocab)
        ext_ids_t = torch.tensor(ext_ids, dtype=torch.long)
        enc_states, state = self.encode(input_ids)
        out: List[str] = []
        prev_id = START_ID
        for _ in range(max_len):
            dist, alpha, state = self.decode_step(state, prev_id, enc_states,
                                                  ext_ids_t, len(oov))
            choice = int(dist.argmax())
            if choice == END_ID:
                break
            if choice == UNK_ID:
                token = source[int(alpha.argmax())]
            elif choice >= self.vocab_size:
                token = oov[choice - self.vocab_size]
            else:
                token = vocab.decode(choice)
            out.append(token)
            prev_id = vocab.encode(token)
        return out

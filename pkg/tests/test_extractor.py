import numpy as np
import pytest
import torch

from summ.data import PAD_ID, Document, Vocabulary
from summ.extractor import (MIN_CONV_LEN, ConvSentenceEncoder, DocumentEncoder,
                            FeedForwardExtractor, PointerExtractor,
                            init_params, select_top_k, sentences_to_ids)

VOCAB = Vocabulary([f"t{i}" for i in range(16)])


def make_doc(n_sents=4, length=6, seed=0):
    rng = np.random.default_rng(seed)
    sents = [[f"t{j}" for j in rng.integers(0, 16, size=length)] for _ in range(n_sents)]
    return Document("doc", sents)


def make_extractor(seed=0, **kw):
    kw.setdefault("emb_dim", 8)
    kw.setdefault("n_filters", 4)
    kw.setdefault("enc_hidden", 6)
    kw.setdefault("dec_hidden", 6)
    ext = PointerExtractor(len(VOCAB), **kw)
    init_params(ext, seed)
    return ext


class TestSentencesToIds:
    def test_pads_to_min_conv_len(self):
        doc = Document("d", [["t0", "t1"]])
        ids = sentences_to_ids(doc, VOCAB)
        assert ids.shape == (1, MIN_CONV_LEN)
        assert ids[0, 2:].tolist() == [PAD_ID] * 3

    def test_pads_to_longest(self):
        doc = Document("d", [["t0"] * 7, ["t1"]])
        ids = sentences_to_ids(doc, VOCAB)
        assert ids.shape == (2, 7)
        assert ids[1, 1:].tolist() == [PAD_ID] * 6

    def test_unknown_tokens(self):
        ids = sentences_to_ids(Document("d", [["zebra"] * 5]), VOCAB)
        assert ids[0, 0].item() == VOCAB.encode("zebra")  # UNK id


def test_conv_encoder_shape():
    enc = ConvSentenceEncoder(len(VOCAB), emb_dim=8, n_filters=4).double()
    init_params(enc, 1)
    out = enc(sentences_to_ids(make_doc(3), VOCAB))
    assert out.shape == (3, 12)  # 3 windows x 4 filters


def test_document_encoder_shape():
    enc = DocumentEncoder(len(VOCAB), 8, 4, enc_hidden=6).double()
    init_params(enc, 1)
    out = enc(sentences_to_ids(make_doc(5), VOCAB))
    assert out.shape == (5, 12)


def test_document_encoder_direction_swap_oracle():
    """Reversing the document and swapping the LSTM's direction weights must
    reverse the output rows and swap their forward/backward halves."""
    torch.manual_seed(0)
    enc = DocumentEncoder(len(VOCAB), 8, 4, enc_hidden=6).double()
    init_params(enc, 3)
    mirror = DocumentEncoder(len(VOCAB), 8, 4, enc_hidden=6).double()
    with torch.no_grad():
        mirror.load_state_dict(enc.state_dict())
        for stem in ("weight_ih_l0", "weight_hh_l0", "bias_ih_l0", "bias_hh_l0"):
            fwd = getattr(enc.lstm, stem).clone()
            bwd = getattr(enc.lstm, stem + "_reverse").clone()
            getattr(mirror.lstm, stem).copy_(bwd)
            getattr(mirror.lstm, stem + "_reverse").copy_(fwd)
        mirror.init_h.copy_(enc.init_h.flip(0))
        mirror.init_c.copy_(enc.init_c.flip(0))

    ids = sentences_to_ids(make_doc(5, seed=7), VOCAB)
    out = enc(ids)
    H = 6
    mirrored = mirror(ids.flip(0)).flip(0)
    swapped = torch.cat([mirrored[:, H:], mirrored[:, :H]], dim=1)
    np.testing.assert_allclose(out.detach().numpy(), swapped.detach().numpy(),
                               rtol=1e-10, atol=1e-12)


class TestPointerDecoder:
    def setup_method(self):
        self.ext = make_extractor(seed=5)
        self.h = self.ext.encode(sentences_to_ids(make_doc(4), VOCAB))

    def test_mask_zeroes_selected(self):
        out = self.ext.decoder.step(self.h, self.ext.decoder.initial_state(),
                                    self.ext.decoder.start_input, [1, 3],
                                    include_stop=True, apply_mask=True)
        probs = out.probs.detach()
        assert probs[1].item() == 0.0 and probs[3].item() == 0.0
        assert probs[4].item() > 0.0  # stop slot never masked
        np.testing.assert_allclose(float(probs.sum()), 1.0, rtol=1e-12)

    def test_no_mask_in_teacher_forcing_path(self):
        out = self.ext.decoder.step(self.h, self.ext.decoder.initial_state(),
                                    self.ext.decoder.start_input, [1],
                                    include_stop=False, apply_mask=False)
        assert (out.probs.detach() > 0).all()
        assert out.probs.shape == (4,)

    def test_candidates_with_stop(self):
        cands = self.ext.decoder.candidates(self.h, include_stop=True)
        assert cands.shape == (5, self.h.shape[1])
        assert torch.equal(cands[-1], self.ext.decoder.stop_embedding)


class TestRun:
    def setup_method(self):
        self.ext = make_extractor(seed=9)
        self.h = self.ext.encode(sentences_to_ids(make_doc(5), VOCAB))

    def test_greedy_no_repeats(self):
        indices, log_probs, stopped = self.ext.run(self.h, "greedy", max_steps=5,
                                                   use_stop=False)
        assert len(indices) == len(set(indices)) == 5
        assert len(log_probs) == 5
        assert not stopped

    def test_fixed_budget_without_stop(self):
        indices, log_probs, _ = self.ext.run(self.h, "greedy", max_steps=3,
                                             use_stop=False)
        assert len(indices) == 3

    def test_stop_action_sets_flag_and_is_excluded(self):
        # force the stop logit high so greedy picks it immediately
        with torch.no_grad():
            self.ext.decoder.stop_embedding.fill_(5.0)
        indices, log_probs, stopped = self.ext.run(self.h, "greedy", max_steps=5,
                                                   use_stop=True)
        if stopped:
            assert 5 not in indices
            assert len(log_probs) == len(indices) + 1  # stop step logged

    def test_sampling_deterministic_under_generator(self):
        g1 = torch.Generator().manual_seed(7)
        g2 = torch.Generator().manual_seed(7)
        a = self.ext.run(self.h, "sample", max_steps=4, use_stop=True, generator=g1)
        b = self.ext.run(self.h, "sample", max_steps=4, use_stop=True, generator=g2)
        assert a[0] == b[0] and a[2] == b[2]

    def test_sampling_varies_across_seeds(self):
        outs = set()
        for seed in range(12):
            g = torch.Generator().manual_seed(seed)
            indices, _, stopped = self.ext.run(self.h, "sample", max_steps=4,
                                               use_stop=True, generator=g)
            outs.add((tuple(indices), stopped))
        assert len(outs) > 1

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            self.ext.run(self.h, "beam")

    def test_max_steps_validator(self):
        with pytest.raises(ValueError):
            self.ext.run(self.h, max_steps=0)


class TestMlLoss:
    def test_matches_manual_teacher_forcing(self):
        ext = make_extractor(seed=2)
        h = ext.encode(sentences_to_ids(make_doc(4), VOCAB))
        labels = [2, 0]
        loss = ext.ml_loss(h, labels)

        state = ext.decoder.initial_state()
        inp = ext.decoder.start_input
        total = 0.0
        for idx in labels:
            out = ext.decoder.step(h, state, inp, [], include_stop=False,
                                   apply_mask=False)
            total -= float(torch.log_softmax(out.logits, dim=0)[idx].detach())
            state, inp = out.state, h[idx]
        np.testing.assert_allclose(float(loss.detach()), total, rtol=1e-12)

    def test_label_out_of_range(self):
        ext = make_extractor()
        h = ext.encode(sentences_to_ids(make_doc(3), VOCAB))
        with pytest.raises(ValueError):
            ext.ml_loss(h, [3])

    def test_loss_positive_and_differentiable(self):
        ext = make_extractor()
        h = ext.encode(sentences_to_ids(make_doc(3), VOCAB))
        loss = ext.ml_loss(h, [0, 2])
        assert float(loss.detach()) > 0
        grads = torch.autograd.grad(loss, ext.decoder.pointer_v)
        assert torch.isfinite(grads[0]).all()


class TestFeedForward:
    def test_scores_in_unit_interval(self):
        ff = FeedForwardExtractor(len(VOCAB), emb_dim=8, n_filters=4, enc_hidden=6)
        init_params(ff, 4)
        scores = ff(sentences_to_ids(make_doc(5), VOCAB)).detach()
        assert scores.shape == (5,)
        assert ((scores > 0) & (scores < 1)).all()

    def test_loss_matches_manual_bce(self):
        ff = FeedForwardExtractor(len(VOCAB), emb_dim=8, n_filters=4, enc_hidden=6)
        init_params(ff, 4)
        ids = sentences_to_ids(make_doc(4), VOCAB)
        probs = ff(ids).detach().numpy()
        labels = np.array([1.0, 0.0, 1.0, 0.0])
        manual = -(labels * np.log(probs) + (1 - labels) * np.log(1 - probs)).sum()
        loss = float(ff.loss(ids, [0, 2]).detach())
        np.testing.assert_allclose(loss, manual, rtol=1e-10)

    def test_duplicate_positives_count_once(self):
        ff = FeedForwardExtractor(len(VOCAB), emb_dim=8, n_filters=4, enc_hidden=6)
        init_params(ff, 4)
        ids = sentences_to_ids(make_doc(4), VOCAB)
        a = float(ff.loss(ids, [0, 2]).detach())
        b = float(ff.loss(ids, [0, 2, 2, 0]).detach())
        assert a == b


class TestSelectTopK:
    def test_returns_document_order(self):
        assert select_top_k([0.1, 0.9, 0.5, 0.8], 2) == [1, 3]
        assert select_top_k([0.9, 0.1, 0.8], 2) == [0, 2]

    def test_ties_prefer_lower_index(self):
        assert select_top_k([0.5, 0.5, 0.5], 2) == [0, 1]

    def test_k_exceeds_length(self):
        assert select_top_k([0.2, 0.1], 5) == [0, 1]

    def test_k_validation(self):
        with pytest.raises(ValueError):
            select_top_k([0.5], 0)


class TestInit:
    def test_deterministic(self):
        a, b = make_extractor(seed=11), make_extractor(seed=11)
        for (n1, p1), (n2, p2) in zip(a.named_parameters(), b.named_parameters()):
            assert n1 == n2 and torch.equal(p1, p2)

    def test_seed_changes_values(self):
        a, b = make_extractor(seed=11), make_extractor(seed=12)
        assert not torch.equal(a.decoder.pointer_v, b.decoder.pointer_v)

    def test_non_embedding_params_bounded(self):
        ext = make_extractor(seed=11)
        for name, p in ext.named_parameters():
            if "embedding" not in name:
                assert p.detach().abs().max() <= 0.1

    def test_embedding_normal_tail(self):
        ext = make_extractor(seed=11)
        emb = ext.doc_encoder.sent_encoder.embedding.detach()
        assert emb.abs().max() > 0.1  # normal(0, 0.1) exceeds the uniform bound

import json

import pytest

from summ import pipeline
from summ.config import RunConfig
from summ.data import load_pairs
from summ.pipeline import (EvalReport, MissingStageError, StagePaths, _set_f1,
                           compare_models, load_model, run_experiment)


def micro_config(out_dir, **overrides):
    base = dict(
        out_dir=str(out_dir), val_fraction=0.2,
        synth_docs=20, synth_vocab=30, synth_sents=4, synth_salient=2,
        synth_noise=0.0,
        vocab_cap=40, emb_dim=8, n_filters=4, enc_hidden=8, dec_hidden=8,
        ml_lr=1e-2, rl_lr=1e-3, batch_size=4, max_epochs=2,
        rl_updates=6, rl_batch=4, rl_log_every=3,
        beam_k=3, max_decode_len=8, max_sentences=4, fixed_k=2,
        workers=1, seed=5,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    """One micro pipeline run shared by the whole module."""
    root = tmp_path_factory.mktemp("run")
    cfg = micro_config(root)
    run_experiment(cfg, "ml-abs")
    run_experiment(cfg, "ml-ext")
    run_experiment(cfg, "rl")
    reports = run_experiment(cfg, "eval")
    return cfg, StagePaths(root), reports


class TestPrepareData:
    def test_generates_and_persists(self, tmp_path):
        cfg = micro_config(tmp_path / "a")
        train, val, vocab = pipeline.prepare_data(cfg)
        paths = StagePaths(cfg.out_dir)
        assert paths.corpus.exists() and paths.vocab.exists()
        assert len(train) == 16 and len(val) == 4
        # second call reloads the persisted corpus: identical ids
        train2, val2, _ = pipeline.prepare_data(cfg)
        assert [p.id for p in train] == [p.id for p in train2]
        assert [p.id for p in val] == [p.id for p in val2]

    def test_external_data_path(self, tmp_path):
        cfg = micro_config(tmp_path / "a")
        pipeline.prepare_data(cfg)
        corpus = StagePaths(cfg.out_dir).corpus
        cfg2 = micro_config(tmp_path / "b", data_path=str(corpus))
        train, val, _ = pipeline.prepare_data(cfg2)
        assert len(train) + len(val) == len(load_pairs(corpus))


class TestStageOrdering:
    def test_rl_requires_ml_stages(self, tmp_path):
        cfg = micro_config(tmp_path / "fresh")
        with pytest.raises(MissingStageError) as exc:
            run_experiment(cfg, "rl")
        assert exc.value.needed_stage == "ml-abs"

    def test_eval_requires_artifacts(self, tmp_path):
        cfg = micro_config(tmp_path / "fresh2")
        with pytest.raises(MissingStageError):
            run_experiment(cfg, "eval")

    def test_unknown_stage(self, tmp_path):
        with pytest.raises(ValueError, match="unknown stage"):
            run_experiment(micro_config(tmp_path / "x"), "train")


class TestArtifacts:
    def test_all_files_written(self, trained_run):
        _, paths, _ = trained_run
        for p in (paths.corpus, paths.vocab, paths.abstractor, paths.rnn_ext,
                  paths.ff_ext, paths.rl_actor, paths.critic,
                  paths.reward_curve, paths.report, paths.report_table,
                  paths.timings):
            assert p.exists(), p

    def test_checkpoints_are_self_contained(self, trained_run):
        cfg, paths, _ = trained_run
        for path, kind in ((paths.abstractor, "abstractor"),
                           (paths.rnn_ext, "rnn-ext"),
                           (paths.ff_ext, "ff-ext"),
                           (paths.rl_actor, "rnn-ext"),
                           (paths.critic, "critic")):
            module, vocab, header = load_model(path)
            assert header["extra"]["model"] == kind
            assert len(vocab) == len(header["extra"]["vocab"]) + 4
            assert header["config_hash"] == cfg.hash()

    def test_reward_curve_format(self, trained_run):
        _, paths, _ = trained_run
        lines = paths.reward_curve.read_text().strip().splitlines()
        assert lines[0] == "step,mean_reward,eoe_rate"
        assert len(lines) == 3  # 6 updates / log_every 3

    def test_report_json_canonical_and_timing_free(self, trained_run):
        cfg, paths, _ = trained_run
        body = json.loads(paths.report.read_text())
        assert body["config_hash"] == cfg.hash()
        models = [m["model"] for m in body["models"]]
        assert models == list(pipeline.MODEL_VARIANTS)
        assert all("seconds" not in m for m in body["models"])
        timings = json.loads(paths.timings.read_text())
        assert set(timings) == set(pipeline.MODEL_VARIANTS)

    def test_eval_reruns_byte_identical(self, trained_run):
        cfg, paths, _ = trained_run
        first = paths.report.read_bytes()
        run_experiment(cfg, "eval")
        assert paths.report.read_bytes() == first


class TestEvalReports:
    def test_five_variants(self, trained_run):
        _, _, reports = trained_run
        assert [r.model for r in reports] == list(pipeline.MODEL_VARIANTS)
        for r in reports:
            assert 0.0 <= r.rouge1_f1 <= 1.0
            assert 0.0 <= r.rouge_l_f1 <= 1.0
            assert set(r.novel_ngrams) == {1, 2, 3, 4}
            assert r.extraction_f1 is not None  # synthetic corpus
            assert 0.0 <= r.len_within_one <= 1.0
            assert r.seconds > 0

    def test_extract_only_has_zero_novelty(self, trained_run):
        _, _, reports = trained_run
        by_name = {r.model: r for r in reports}
        assert by_name["ff-ext"].novel_ngrams[1] == 0.0
        assert by_name["rnn-ext"].novel_ngrams[1] == 0.0

    def test_metric_dict_excludes_timing(self):
        r = EvalReport("m", 0.123456789, 0.2, 0.3, {1: 0.5}, 4.0, 1.0,
                       None, 0.75, seconds=9.9)
        d = r.metric_dict()
        assert "seconds" not in d
        assert d["rouge1_f1"] == 0.123457
        assert d["extraction_f1"] is None
        assert d["novel_ngrams"] == {"1": 0.5}


class TestConfigHashGuard:
    def test_mismatch_rejected_and_override(self, trained_run, tmp_path):
        cfg, paths, _ = trained_run
        changed = micro_config(paths.root, ml_lr=5e-3)
        with pytest.raises(ValueError, match="allow_mismatch"):
            pipeline.run_eval(changed)
        reports = pipeline.run_eval(changed, allow_mismatch=True)
        assert len(reports) == 5
        # restore the canonical report for neighbours relying on it
        pipeline.run_eval(cfg)


class TestSetF1:
    @pytest.mark.parametrize("sel,truth,expected", [
        ([0, 1], [0, 1], 1.0),
        ([0, 1], [2, 3], 0.0),
        ([0, 1, 2], [1, 2, 3], 2 / 3),
        ([], [], 1.0),
        ([], [0], 0.0),
        ([0], [], 0.0),
    ])
    def test_cases(self, sel, truth, expected):
        assert _set_f1(sel, truth) == pytest.approx(expected)


class TestCompareModels:
    def _report(self, name, r1):
        return EvalReport(name, r1, 0.1, 0.2, {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0},
                          5.0, 0.5, None, None)

    def test_table_marks_best(self):
        table = compare_models([self._report("a", 0.3), self._report("b", 0.6)])
        lines = table.splitlines()
        assert lines[0].startswith("model")
        assert "0.6000*" in lines[2]
        assert "0.3000*" not in lines[1]

    def test_needs_two(self):
        with pytest.raises(ValueError):
            compare_models([self._report("a", 0.3)])

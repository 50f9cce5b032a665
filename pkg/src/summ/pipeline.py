"""Experiment orchestration: data preparation, the ml-abs / ml-ext / rl /
eval stages, and report generation.

Every stage is deterministic given (config, seed): corpus generation,
splits, parameter init and training all draw from seeded generators, and
checkpoints/reports are written in canonical byte layouts.  Wall-clock
timings are kept out of the canonical report file on purpose; they land
in a sibling file that is excluded from reproducibility comparisons.
"""

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace
from typing import Dict, List, Optional, Sequence, Tuple

from summ import checkpoint as ckpt
from summ.abstractor import Abstractor
from summ.config import RunConfig
from summ.data import (SummaryPair, Vocabulary, build_vocab,
                       generate_synthetic_corpus, load_pairs, save_pairs,
                       split_pairs)
from summ.decoding import summarize
from summ.extractor import (FeedForwardExtractor, PointerExtractor, init_params)
from summ.metrics import novel_ngram_ratio, rouge_l_summary, rouge_n_summary
from summ.proxy import build_abstractor_pairs, label_corpus
from summ.rl import (Critic, cached_abstractor_rewrite, identity_rewrite,
                     selection_reward, train_rl, write_reward_curve)
from summ.train import train_abstractor, train_ff_extractor, train_pointer_extractor

logger = logging.getLogger(__name__)

STAGES = ("ml-abs", "ml-ext", "rl", "eval")

MODEL_VARIANTS = (
    "ff-ext",
    "rnn-ext",
    "rnn-ext+abs",
    "rnn-ext+abs+RL",
    "rnn-ext+abs+RL+rerank",
)


class MissingStageError(RuntimeError):
    def __init__(self, needed_stage: str, path: Path):
        super().__init__(
            f"missing artifact {path}; run stage {needed_stage!r} first")
        self.needed_stage = needed_stage


@dataclass
class StagePaths:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def corpus(self): return self.root / "corpus.jsonl"
    @property
    def vocab(self): return self.root / "vocab.json"
    @property
    def abstractor(self): return self.root / "abstractor.ckpt"
    @property
    def rnn_ext(self): return self.root / "rnn_ext.ckpt"
    @property
    def ff_ext(self): return self.root / "ff_ext.ckpt"
    @property
    def rl_actor(self): return self.root / "rl_actor.ckpt"
    @property
    def critic(self): return self.root / "critic.ckpt"
    @property
    def reward_curve(self): return self.root / "reward_curve.csv"
    @property
    def report(self): return self.root / "report.json"
    @property
    def report_table(self): return self.root / "report.txt"
    @property
    def timings(self): return self.root / "timings.json"


def prepare_data(cfg: RunConfig) -> Tuple[List[SummaryPair], List[SummaryPair], Vocabulary]:
    """Load or generate the corpus, split it, and build/reload the vocabulary."""
    paths = StagePaths(cfg.out_dir)
    paths.root.mkdir(parents=True, exist_ok=True)
    if cfg.data_path:
        pairs = load_pairs(cfg.data_path)
    elif paths.corpus.exists():
        pairs = load_pairs(paths.corpus)
    else:
        pairs = generate_synthetic_corpus(
            cfg.synth_docs, cfg.synth_vocab, cfg.synth_sents,
            cfg.synth_salient, cfg.synth_noise, cfg.seed)
        save_pairs(pairs, paths.corpus)
    if paths.vocab.exists():
        vocab = Vocabulary.load(paths.vocab)
    else:
        vocab = build_vocab(pairs, cfg.vocab_cap)
        vocab.save(paths.vocab)
    train, val = split_pairs(pairs, cfg.val_fraction, cfg.seed)
    return train, val, vocab


def _build_abstractor(cfg, vocab) -> Abstractor:
    model = Abstractor(len(vocab), cfg.emb_dim, cfg.enc_hidden, cfg.dec_hidden)
    init_params(model, cfg.seed + 11)
    return model


def _build_rnn_ext(cfg, vocab) -> PointerExtractor:
    model = PointerExtractor(len(vocab), cfg.emb_dim, cfg.n_filters,
                             cfg.enc_hidden, cfg.dec_hidden)
    init_params(model, cfg.seed + 12)
    return model


def _build_ff_ext(cfg, vocab) -> FeedForwardExtractor:
    model = FeedForwardExtractor(len(vocab), cfg.emb_dim, cfg.n_filters,
                                 cfg.enc_hidden)
    init_params(model, cfg.seed + 13)
    return model


def _build_critic(cfg) -> Critic:
    model = Critic(2 * cfg.enc_hidden, cfg.dec_hidden)
    init_params(model, cfg.seed + 14)
    return model


def _save(path: Path, module, cfg: RunConfig, stage: str, vocab: Vocabulary,
          kind: str) -> None:
    # vocab rides along in the header so a checkpoint alone can summarize
    ckpt.save_checkpoint(path, dict(module.named_parameters()), cfg.to_dict(),
                         extra={"stage": stage, "model": kind,
                                "vocab": vocab.tokens()})


_BUILDERS = {
    "abstractor": _build_abstractor,
    "rnn-ext": _build_rnn_ext,
    "ff-ext": _build_ff_ext,
}


def load_model(path: Path):
    """Rebuild a model from a checkpoint alone: (module, vocabulary, header)."""
    params, header = ckpt.load_checkpoint(path)
    extra = header.get("extra", {})
    if "model" not in extra or "vocab" not in extra:
        raise ValueError(f"checkpoint {path} lacks model/vocab metadata")
    vocab = Vocabulary(extra["vocab"])
    # dims only; bypass RunConfig validation and env overrides
    cfg = SimpleNamespace(**header["config"])
    kind = extra["model"]
    if kind == "critic":
        module = _build_critic(cfg)
    elif kind in _BUILDERS:
        module = _BUILDERS[kind](cfg, vocab)
    else:
        raise ValueError(f"unknown model kind {kind!r} in {path}")
    ckpt.load_into_module(module, params)
    return module, vocab, header


def _load(path: Path, module, cfg: RunConfig, needed_stage: str,
          allow_mismatch: bool = False):
    if not path.exists():
        raise MissingStageError(needed_stage, path)
    params, header = ckpt.load_checkpoint(path)
    if header["config_hash"] != cfg.hash() and not allow_mismatch:
        raise ValueError(
            f"checkpoint {path} was produced under config hash "
            f"{header['config_hash']}, current is {cfg.hash()}; "
            f"pass allow_mismatch to evaluate anyway")
    ckpt.load_into_module(module, params)
    return module


def run_ml_abs(cfg: RunConfig) -> Path:
    train, val, vocab = prepare_data(cfg)
    labels_t, labels_v = label_corpus(train), label_corpus(val)
    pairs_t = [p for pair, lab in zip(train, labels_t)
               for p in build_abstractor_pairs(pair, lab)]
    pairs_v = [p for pair, lab in zip(val, labels_v)
               for p in build_abstractor_pairs(pair, lab)]
    model = _build_abstractor(cfg, vocab)
    train_abstractor(model, pairs_t, pairs_v, vocab, lr=cfg.ml_lr,
                     batch_size=cfg.batch_size, max_epochs=cfg.max_epochs,
                     seed=cfg.seed + 21)
    paths = StagePaths(cfg.out_dir)
    _save(paths.abstractor, model, cfg, "ml-abs", vocab, "abstractor")
    return paths.abstractor


def run_ml_ext(cfg: RunConfig) -> Tuple[Path, Path]:
    train, val, vocab = prepare_data(cfg)
    labels_t, labels_v = label_corpus(train), label_corpus(val)
    paths = StagePaths(cfg.out_dir)

    rnn = _build_rnn_ext(cfg, vocab)
    train_pointer_extractor(rnn, train, labels_t, val, labels_v, vocab,
                            lr=cfg.ml_lr, batch_size=cfg.batch_size,
                            max_epochs=cfg.max_epochs, seed=cfg.seed + 22)
    _save(paths.rnn_ext, rnn, cfg, "ml-ext", vocab, "rnn-ext")

    ff = _build_ff_ext(cfg, vocab)
    train_ff_extractor(ff, train, labels_t, val, labels_v, vocab,
                       lr=cfg.ml_lr, batch_size=cfg.batch_size,
                       max_epochs=cfg.max_epochs, seed=cfg.seed + 23)
    _save(paths.ff_ext, ff, cfg, "ml-ext", vocab, "ff-ext")
    return paths.rnn_ext, paths.ff_ext


def run_rl(cfg: RunConfig) -> Path:
    train, val, vocab = prepare_data(cfg)
    paths = StagePaths(cfg.out_dir)
    abstractor = _load(paths.abstractor, _build_abstractor(cfg, vocab), cfg, "ml-abs")
    actor = _load(paths.rnn_ext, _build_rnn_ext(cfg, vocab), cfg, "ml-ext")
    critic = _build_critic(cfg)
    rewrite = cached_abstractor_rewrite(abstractor, vocab,
                                        max_len=cfg.max_decode_len)
    curve, best_val = train_rl(
        train, val, actor, critic, vocab, rewrite,
        gamma=cfg.gamma, lr=cfg.rl_lr, batch_size=cfg.rl_batch,
        n_updates=cfg.rl_updates, log_every=cfg.rl_log_every,
        max_cap=cfg.max_sentences, seed=cfg.seed + 24)
    logger.info("rl finished, best validation reward %.4f", best_val)
    _save(paths.rl_actor, actor, cfg, "rl", vocab, "rnn-ext")
    _save(paths.critic, critic, cfg, "rl", vocab, "critic")
    write_reward_curve(curve, paths.reward_curve)
    return paths.rl_actor


@dataclass
class EvalReport:
    model: str
    rouge1_f1: float
    rouge2_f1: float
    rouge_l_f1: float
    novel_ngrams: Dict[int, float]      # n -> ratio over the source document
    mean_summary_len: float
    mean_reward: float
    extraction_f1: Optional[float]      # synthetic corpora only
    len_within_one: Optional[float]     # |n_extracted - n_refs| <= 1 rate
    seconds: float = 0.0

    def metric_dict(self) -> Dict[str, object]:
        """Canonical key order; timing deliberately excluded."""
        return {
            "model": self.model,
            "rouge1_f1": round(self.rouge1_f1, 6),
            "rouge2_f1": round(self.rouge2_f1, 6),
            "rouge_l_f1": round(self.rouge_l_f1, 6),
            "novel_ngrams": {str(n): round(v, 6)
                             for n, v in sorted(self.novel_ngrams.items())},
            "mean_summary_len": round(self.mean_summary_len, 6),
            "mean_reward": round(self.mean_reward, 6),
            "extraction_f1": None if self.extraction_f1 is None
            else round(self.extraction_f1, 6),
            "len_within_one": None if self.len_within_one is None
            else round(self.len_within_one, 6),
        }


def _set_f1(selected: Sequence[int], truth: Sequence[int]) -> float:
    sel, ref = set(selected), set(truth)
    if not sel and not ref:
        return 1.0
    if not sel or not ref:
        return 0.0
    p = len(sel & ref) / len(sel)
    r = len(sel & ref) / len(ref)
    return 2 * p * r / (p + r) if p + r else 0.0


def evaluate_variant(
    name: str,
    pairs: Sequence[SummaryPair],
    extractor,
    abstractor: Optional[Abstractor],
    vocab: Vocabulary,
    cfg: RunConfig,
    mode: str,
    fixed_k: Optional[int],
    rewrite_for_reward,
) -> EvalReport:
    """Summarize every held-out pair with one model variant and aggregate."""
    r1 = r2 = rl_ = total_len = reward = 0.0
    novel = {n: 0.0 for n in (1, 2, 3, 4)}
    ext_f1: List[float] = []
    within: List[float] = []
    start = time.perf_counter()
    for pair in pairs:
        sents, indices = summarize(
            pair.document, extractor, abstractor, vocab, mode=mode,
            workers=cfg.workers, max_sentences=cfg.max_sentences,
            fixed_k=fixed_k, max_len=cfg.max_decode_len,
            diversity=cfg.diversity)
        r1 += rouge_n_summary(sents, pair.summary, 1).f1
        r2 += rouge_n_summary(sents, pair.summary, 2).f1
        rl_ += rouge_l_summary(sents, pair.summary).f1
        for n in novel:
            novel[n] += novel_ngram_ratio(sents, pair.document.sentences, n)
        total_len += sum(len(s) for s in sents)
        stopped = fixed_k is None
        reward += selection_reward(pair, indices, stopped, rewrite_for_reward)
        if pair.salient_indices is not None:
            ext_f1.append(_set_f1(indices, pair.salient_indices))
        within.append(1.0 if abs(len(indices) - len(pair.summary)) <= 1 else 0.0)
    seconds = time.perf_counter() - start
    n = max(1, len(pairs))
    return EvalReport(
        model=name,
        rouge1_f1=r1 / n, rouge2_f1=r2 / n, rouge_l_f1=rl_ / n,
        novel_ngrams={k: v / n for k, v in novel.items()},
        mean_summary_len=total_len / n,
        mean_reward=reward / n,
        extraction_f1=(sum(ext_f1) / len(ext_f1)) if ext_f1 else None,
        len_within_one=sum(within) / n if within else None,
        seconds=seconds,
    )


def run_eval(cfg: RunConfig, allow_mismatch: bool = False) -> List[EvalReport]:
    _, val, vocab = prepare_data(cfg)
    paths = StagePaths(cfg.out_dir)
    abstractor = _load(paths.abstractor, _build_abstractor(cfg, vocab), cfg,
                       "ml-abs", allow_mismatch)
    rnn = _load(paths.rnn_ext, _build_rnn_ext(cfg, vocab), cfg,
                "ml-ext", allow_mismatch)
    ff = _load(paths.ff_ext, _build_ff_ext(cfg, vocab), cfg,
               "ml-ext", allow_mismatch)
    actor = _load(paths.rl_actor, _build_rnn_ext(cfg, vocab), cfg,
                  "rl", allow_mismatch)
    rewrite = cached_abstractor_rewrite(abstractor, vocab,
                                        max_len=cfg.max_decode_len)
    reports = [
        evaluate_variant("ff-ext", val, ff, None, vocab, cfg,
                         mode="extract-only", fixed_k=cfg.fixed_k,
                         rewrite_for_reward=identity_rewrite),
        evaluate_variant("rnn-ext", val, rnn, None, vocab, cfg,
                         mode="extract-only", fixed_k=cfg.fixed_k,
                         rewrite_for_reward=identity_rewrite),
        evaluate_variant("rnn-ext+abs", val, rnn, abstractor, vocab, cfg,
                         mode="greedy", fixed_k=cfg.fixed_k,
                         rewrite_for_reward=rewrite),
        evaluate_variant("rnn-ext+abs+RL", val, actor, abstractor, vocab, cfg,
                         mode="greedy", fixed_k=None,
                         rewrite_for_reward=rewrite),
        evaluate_variant("rnn-ext+abs+RL+rerank", val, actor, abstractor,
                         vocab, cfg, mode="rerank", fixed_k=None,
                         rewrite_for_reward=rewrite),
    ]
    write_reports(reports, cfg, paths)
    return reports


def write_reports(reports: Sequence[EvalReport], cfg: RunConfig,
                  paths: StagePaths) -> None:
    body = {
        "config_hash": cfg.hash(),
        "models": [r.metric_dict() for r in reports],
    }
    paths.report.write_text(
        json.dumps(body, sort_keys=True, indent=2) + "\n")
    paths.report_table.write_text(compare_models(list(reports)) + "\n")
    paths.timings.write_text(json.dumps(
        {r.model: round(r.seconds, 3) for r in reports}, sort_keys=True,
        indent=2) + "\n")


def compare_models(reports: List[EvalReport]) -> str:
    """Aligned comparison table; the best value in each column gets a '*'."""
    if len(reports) < 2:
        raise ValueError("compare_models needs at least 2 reports")
    columns = ["rouge1_f1", "rouge2_f1", "rouge_l_f1", "mean_reward",
               "novel1", "mean_len"]

    def cell_value(r: EvalReport, col: str):
        if col == "novel1":
            return r.novel_ngrams[1]
        if col == "mean_len":
            return r.mean_summary_len
        return getattr(r, col)

    best = {col: max(cell_value(r, col) for r in reports) for col in columns}
    widths = {col: max(len(col), 10) for col in columns}
    name_w = max(len(r.model) for r in reports)
    lines = ["model".ljust(name_w) + "  " +
             "  ".join(col.rjust(widths[col]) for col in columns)]
    for r in reports:
        cells = []
        for col in columns:
            v = cell_value(r, col)
            mark = "*" if v == best[col] else " "
            cells.append(f"{v:.4f}{mark}".rjust(widths[col]))
        lines.append(r.model.ljust(name_w) + "  " + "  ".join(cells))
    return "\n".join(lines)


def run_experiment(cfg: RunConfig, stage: str, allow_mismatch: bool = False):
    """Dispatch one pipeline stage; later stages check their prerequisites."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    if stage == "ml-abs":
        return run_ml_abs(cfg)
    if stage == "ml-ext":
        return run_ml_ext(cfg)
    if stage == "rl":
        return run_rl(cfg)
    return run_eval(cfg, allow_mismatch=allow_mismatch)

"""Command-line entry points under the ``summ`` umbrella."""

import json
import logging
import sys
from pathlib import Path

import click

from summ.config import RunConfig
from summ.data import (build_vocab, generate_synthetic_corpus, load_pairs,
                       save_pairs, split_pairs, tokenize)
from summ.metrics import (novel_ngram_ratio, rouge_l_summary, rouge_n_summary,
                          stem_tokens)
from summ.proxy import ProxyLabels, build_abstractor_pairs, label_corpus

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@click.group()
def main():
    """Train, run and inspect the extract-then-rewrite summarizer."""


def _load_config(config_path, **overrides) -> RunConfig:
    if config_path:
        cfg = RunConfig.from_file(config_path)
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg
    clean = {k: v for k, v in overrides.items() if v is not None}
    return RunConfig(**clean)


# ---------------------------------------------------------------------------
# data


@main.command("synth-data")
@click.option("--n-docs", type=int, default=300, show_default=True)
@click.option("--vocab-size", type=int, default=500, show_default=True)
@click.option("--sents", type=int, default=8, show_default=True)
@click.option("--salient", type=int, default=3, show_default=True)
@click.option("--noise", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def synth_data(n_docs, vocab_size, sents, salient, noise, seed, out):
    """Generate a deterministic synthetic corpus as JSONL."""
    pairs = generate_synthetic_corpus(n_docs, vocab_size, sents, salient, noise, seed)
    save_pairs(pairs, out)
    click.echo(f"wrote {len(pairs)} documents to {out}")


@main.command("make-labels")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def make_labels(data, out):
    """Assign a document-sentence index to every reference summary sentence."""
    pairs = load_pairs(data)
    with open(out, "w", encoding="utf-8") as fh:
        for lab in label_corpus(pairs):
            fh.write(json.dumps({"id": lab.pair_id,
                                 "extract_indices": lab.indices},
                                sort_keys=True) + "\n")
    click.echo(f"labeled {len(pairs)} documents -> {out}")


def _load_labels(path) -> dict:
    by_id = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                by_id[str(rec["id"])] = ProxyLabels(str(rec["id"]),
                                                    list(rec["extract_indices"]))
    return by_id


def _aligned_labels(pairs, labels_by_id):
    missing = [p.id for p in pairs if p.id not in labels_by_id]
    if missing:
        raise click.ClickException(f"labels missing for ids: {missing[:5]}")
    return [labels_by_id[p.id] for p in pairs]


# ---------------------------------------------------------------------------
# evaluation


@main.command("evaluate")
@click.option("--hyp", type=click.Path(exists=True), required=True,
              help="JSONL with {'id', 'summary': [...]} records")
@click.option("--ref", type=click.Path(exists=True), required=True,
              help="corpus JSONL with reference abstracts")
@click.option("--stem", is_flag=True, help="apply light suffix stemming first")
@click.option("--novel-ngrams", default="1,2,3,4", show_default=True)
def evaluate(hyp, ref, stem, novel_ngrams):
    """Score hypothesis summaries against references."""
    refs = {p.id: p for p in load_pairs(ref)}
    orders = [int(x) for x in novel_ngrams.split(",") if x]
    rows = []
    with open(hyp, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if str(rec["id"]) not in refs:
                raise click.ClickException(f"no reference for id {rec['id']!r}")
            pair = refs[str(rec["id"])]
            sents = [tokenize(s) for s in rec["summary"]]
            ref_sents = pair.summary
            doc_sents = pair.document.sentences
            if stem:
                sents = [stem_tokens(s) for s in sents]
                ref_sents = [stem_tokens(s) for s in ref_sents]
                doc_sents = [stem_tokens(s) for s in doc_sents]
            rows.append({
                "r1": rouge_n_summary(sents, ref_sents, 1).f1,
                "r2": rouge_n_summary(sents, ref_sents, 2).f1,
                "rl": rouge_l_summary(sents, ref_sents).f1,
                **{f"novel{n}": novel_ngram_ratio(sents, doc_sents, n)
                   for n in orders},
            })
    if not rows:
        raise click.ClickException("no hypothesis records found")
    keys = ["r1", "r2", "rl"] + [f"novel{n}" for n in orders]
    header = ["ROUGE-1", "ROUGE-2", "ROUGE-L"] + [f"novel-{n}" for n in orders]
    click.echo("  ".join(f"{h:>9s}" for h in header))
    means = [sum(r[k] for r in rows) / len(rows) for k in keys]
    click.echo("  ".join(f"{m:9.4f}" for m in means))


# ---------------------------------------------------------------------------
# training


@main.command("train-abstractor")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--labels", type=click.Path(exists=True), required=True)
@click.option("--out-ckpt", type=click.Path(), required=True)
@click.option("--config", type=click.Path(exists=True), default=None)
def train_abstractor_cmd(data, labels, out_ckpt, config):
    """ML-train the sentence rewriter on proxy-matched sentence pairs."""
    from summ import checkpoint as ckpt
    from summ.pipeline import _build_abstractor
    from summ.train import train_abstractor

    cfg = _load_config(config, data_path=data)
    pairs = load_pairs(data)
    vocab = build_vocab(pairs, cfg.vocab_cap)
    by_id = _load_labels(labels)
    train, val = split_pairs(pairs, cfg.val_fraction, cfg.seed)
    flat_t = [tp for p in train
              for tp in build_abstractor_pairs(p, _aligned_labels([p], by_id)[0])]
    flat_v = [tp for p in val
              for tp in build_abstractor_pairs(p, _aligned_labels([p], by_id)[0])]
    model = _build_abstractor(cfg, vocab)
    history = train_abstractor(model, flat_t, flat_v, vocab, lr=cfg.ml_lr,
                               batch_size=cfg.batch_size,
                               max_epochs=cfg.max_epochs, seed=cfg.seed + 21)
    ckpt.save_checkpoint(Path(out_ckpt), dict(model.named_parameters()),
                         cfg.to_dict(),
                         extra={"stage": "ml-abs", "model": "abstractor",
                                "vocab": vocab.tokens()})
    click.echo(f"trained {len(history)} epochs, best val "
               f"{min(h.val_loss for h in history):.4f} -> {out_ckpt}")


@main.command("train-extractor")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--labels", type=click.Path(exists=True), required=True)
@click.option("--arch", type=click.Choice(["rnn", "ff"]), default="rnn",
              show_default=True)
@click.option("--out-ckpt", type=click.Path(), required=True)
@click.option("--config", type=click.Path(exists=True), default=None)
def train_extractor_cmd(data, labels, arch, out_ckpt, config):
    """ML-train the pointer extractor or the feed-forward baseline."""
    from summ import checkpoint as ckpt
    from summ.pipeline import _build_ff_ext, _build_rnn_ext
    from summ.train import train_ff_extractor, train_pointer_extractor

    cfg = _load_config(config, data_path=data)
    pairs = load_pairs(data)
    vocab = build_vocab(pairs, cfg.vocab_cap)
    by_id = _load_labels(labels)
    train, val = split_pairs(pairs, cfg.val_fraction, cfg.seed)
    labels_t, labels_v = _aligned_labels(train, by_id), _aligned_labels(val, by_id)
    if arch == "rnn":
        model = _build_rnn_ext(cfg, vocab)
        history = train_pointer_extractor(model, train, labels_t, val, labels_v,
                                          vocab, lr=cfg.ml_lr,
                                          batch_size=cfg.batch_size,
                                          max_epochs=cfg.max_epochs,
                                          seed=cfg.seed + 22)
        kind = "rnn-ext"
    else:
        model = _build_ff_ext(cfg, vocab)
        history = train_ff_extractor(model, train, labels_t, val, labels_v,
                                     vocab, lr=cfg.ml_lr,
                                     batch_size=cfg.batch_size,
                                     max_epochs=cfg.max_epochs,
                                     seed=cfg.seed + 23)
        kind = "ff-ext"
    ckpt.save_checkpoint(Path(out_ckpt), dict(model.named_parameters()),
                         cfg.to_dict(),
                         extra={"stage": "ml-ext", "model": kind,
                                "vocab": vocab.tokens()})
    click.echo(f"trained {len(history)} epochs -> {out_ckpt}")


@main.command("train-rl")
@click.option("--actor-ckpt", type=click.Path(exists=True), required=True)
@click.option("--abs-ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--gamma", type=float, default=0.95, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--updates", type=int, default=300, show_default=True)
@click.option("--batch", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-ckpt", type=click.Path(), required=True)
@click.option("--log", "log_path", type=click.Path(), required=True)
def train_rl_cmd(actor_ckpt, abs_ckpt, data, gamma, lr, updates, batch, seed,
                 out_ckpt, log_path):
    """Actor-critic training of the extraction policy (rewriter frozen)."""
    from summ import checkpoint as ckpt
    from summ.pipeline import _build_critic, load_model
    from summ.rl import Critic, cached_abstractor_rewrite, train_rl, write_reward_curve
    from summ.extractor import init_params

    actor, vocab, header = load_model(Path(actor_ckpt))
    abstractor, abs_vocab, _ = load_model(Path(abs_ckpt))
    if abs_vocab.tokens() != vocab.tokens():
        raise click.ClickException("actor and abstractor were trained on different vocabularies")
    pairs = load_pairs(data)
    cfg_dict = header["config"]
    train, val = split_pairs(pairs, cfg_dict.get("val_fraction", 0.1), seed)
    critic = Critic(2 * cfg_dict["enc_hidden"], cfg_dict["dec_hidden"])
    init_params(critic, seed + 14)
    rewrite = cached_abstractor_rewrite(abstractor, vocab,
                                        max_len=cfg_dict.get("max_decode_len", 30))
    curve, best = train_rl(train, val, actor, critic, vocab, rewrite,
                           gamma=gamma, lr=lr, batch_size=batch,
                           n_updates=updates, seed=seed)
    ckpt.save_checkpoint(Path(out_ckpt), dict(actor.named_parameters()), cfg_dict,
                         extra={"stage": "rl", "model": "rnn-ext",
                                "vocab": vocab.tokens()})
    write_reward_curve(curve, log_path)
    click.echo(f"best validation reward {best:.4f} -> {out_ckpt}; curve -> {log_path}")


# ---------------------------------------------------------------------------
# inference


@main.command("extract")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=None, help="fixed number of sentences")
@click.option("--eoe", is_flag=True, help="let the learned stop action decide")
@click.option("--out", type=click.Path(), default=None,
              help="output JSONL (defaults to stdout)")
def extract_cmd(ckpt, data, k, eoe, out):
    """Select sentences only; writes {'id', 'extract_indices'} JSONL."""
    from summ.decoding import extract_indices
    from summ.pipeline import load_model

    if k is None and not eoe:
        raise click.ClickException("pass either --k or --eoe")
    model, vocab, _ = load_model(Path(ckpt))
    pairs = load_pairs(data)
    lines = []
    for pair in pairs:
        picked = extract_indices(pair.document, model, vocab,
                                 fixed_k=None if eoe else k)
        lines.append(json.dumps({"id": pair.id, "extract_indices": picked},
                                sort_keys=True))
    if out:
        Path(out).write_text("\n".join(lines) + "\n")
        click.echo(f"extracted {len(pairs)} documents -> {out}")
    else:
        for line in lines:
            click.echo(line)


@main.command("rewrite")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--sentence", type=str, required=True)
def rewrite_cmd(ckpt, sentence):
    """Rewrite one sentence with the trained rewriter (greedy)."""
    from summ.pipeline import load_model

    model, vocab, _ = load_model(Path(ckpt))
    tokens = tokenize(sentence)
    if not tokens:
        raise click.ClickException("sentence is empty after tokenization")
    click.echo(" ".join(model.greedy_decode(tokens, vocab)))


@main.command("summarize")
@click.option("--ext-ckpt", type=click.Path(exists=True), required=True)
@click.option("--abs-ckpt", type=click.Path(exists=True), default=None)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["greedy", "rerank", "extract-only"]),
              default="rerank", show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--k", type=int, default=None, help="fixed extraction count")
@click.option("--out", type=click.Path(), required=True)
def summarize_cmd(ext_ckpt, abs_ckpt, data, mode, workers, k, out):
    """Summarize a corpus; writes {'id', 'summary', 'extract_indices'} JSONL."""
    from summ.decoding import summarize
    from summ.pipeline import load_model

    extractor, vocab, _ = load_model(Path(ext_ckpt))
    abstractor = None
    if abs_ckpt:
        abstractor, _, _ = load_model(Path(abs_ckpt))
    elif mode != "extract-only":
        raise click.ClickException(f"mode {mode!r} needs --abs-ckpt")
    pairs = load_pairs(data)
    with open(out, "w", encoding="utf-8") as fh:
        for pair in pairs:
            sents, indices = summarize(pair.document, extractor, abstractor,
                                       vocab, mode=mode, workers=workers,
                                       fixed_k=k)
            fh.write(json.dumps({"id": pair.id,
                                 "summary": [" ".join(s) for s in sents],
                                 "extract_indices": indices},
                                sort_keys=True) + "\n")
    click.echo(f"summarized {len(pairs)} documents -> {out}")


# ---------------------------------------------------------------------------
# pipeline, reporting, benchmarks


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--stage", type=click.Choice(["ml-abs", "ml-ext", "rl", "eval", "all"]),
              required=True)
@click.option("--allow-mismatch", is_flag=True,
              help="evaluate despite a config-hash mismatch")
def run_cmd(config_path, stage, allow_mismatch):
    """Run pipeline stages from a TOML config."""
    from summ.pipeline import run_experiment

    cfg = RunConfig.from_file(config_path)
    stages = ["ml-abs", "ml-ext", "rl", "eval"] if stage == "all" else [stage]
    for s in stages:
        click.echo(f"=== stage {s}")
        result = run_experiment(cfg, s, allow_mismatch=allow_mismatch)
    if stages[-1] == "eval":
        from summ.pipeline import compare_models
        click.echo(compare_models(result))


@main.command("plot-curve")
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), default=None,
              help="output PNG (defaults to <log>.png)")
def plot_curve(log_path, out):
    """Plot mean reward and stop-action rate over training updates."""
    import csv

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps, rewards, rates = [], [], []
    with open(log_path, newline="") as fh:
        for row in csv.DictReader(fh):
            steps.append(int(row["step"]))
            rewards.append(float(row["mean_reward"]))
            rates.append(float(row["eoe_rate"]))
    if not steps:
        raise click.ClickException("curve file is empty")
    out = out or str(log_path) + ".png"
    fig, ax1 = plt.subplots(figsize=(7, 4))
    ax1.plot(steps, rewards, color="tab:blue", label="mean reward")
    ax1.set_xlabel("update")
    ax1.set_ylabel("mean episode reward", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(steps, rates, color="tab:orange", label="stop-action rate")
    ax2.set_ylabel("stop-action rate", color="tab:orange")
    ax2.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    click.echo(f"wrote {out}")


@main.command("benchmark")
@click.option("--abs-ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--workers", default="1,2,4,8", show_default=True)
@click.option("--limit", type=int, default=64, show_default=True,
              help="number of sentences to decode")
def benchmark_cmd(abs_ckpt, data, workers, limit):
    """Words/sec of parallel sentence rewriting per worker count."""
    from summ.decoding import benchmark_decoding
    from summ.pipeline import load_model

    abstractor, vocab, _ = load_model(Path(abs_ckpt))
    pairs = load_pairs(data)
    sentences = [s for p in pairs for s in p.document.sentences][:limit]
    if len(sentences) < 2:
        raise click.ClickException("need at least 2 sentences to benchmark")
    worker_list = [int(w) for w in workers.split(",") if w]
    results = benchmark_decoding(sentences, abstractor, vocab, worker_list)
    click.echo(f"{len(sentences)} sentences")
    base = results[worker_list[0]]["words_per_sec"]
    for w in worker_list:
        r = results[w]
        click.echo(f"workers {w}: {r['words_per_sec']:8.1f} words/sec "
                   f"({r['words_per_sec'] / base:.2f}x)")


@main.command("bench-kernels")
@click.option("--pairs", type=int, default=200, show_default=True)
@click.option("--length", type=int, default=80, show_default=True)
def bench_kernels(pairs, length):
    """Compare the compiled and pure-Python LCS kernels."""
    from summ.kernels import BACKEND, benchmark_backends

    out = benchmark_backends(n_pairs=pairs, length=length)
    click.echo(f"active backend: {BACKEND}")
    click.echo(f"pure python: {out['python_seconds'] * 1000:.1f} ms")
    if out["compiled_seconds"] is None:
        click.echo("compiled kernel not built")
    else:
        click.echo(f"compiled:    {out['compiled_seconds'] * 1000:.1f} ms "
                   f"({out['speedup']:.1f}x)")


if __name__ == "__main__":
    sys.exit(main())

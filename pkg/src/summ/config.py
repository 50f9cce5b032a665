"""Run configuration: TOML file with fixed sections, validated on load.

Unknown sections or keys are rejected so a typo cannot silently fall
back to a default.  ``SUMM_SEED`` in the environment overrides the
configured seed.
"""

import os

try:
    import tomllib
except ModuleNotFoundError:  # stdlib from 3.11; same API
    import tomli as tomllib
from dataclasses import asdict, dataclass
from pathlib import Path

from summ.checkpoint import config_hash


@dataclass
class RunConfig:
    # data
    data_path: str = ""            # JSONL corpus; generated when empty and synth_docs > 0
    out_dir: str = "runs/default"
    val_fraction: float = 0.1
    # synthetic corpus generation
    synth_docs: int = 0
    synth_vocab: int = 500
    synth_sents: int = 8
    synth_salient: int = 3
    synth_noise: float = 0.1
    # model
    vocab_cap: int = 30000
    emb_dim: int = 128
    n_filters: int = 100
    enc_hidden: int = 256
    dec_hidden: int = 256
    # optimizer
    ml_lr: float = 1e-3
    rl_lr: float = 1e-4
    clip_norm: float = 2.0
    batch_size: int = 32
    gamma: float = 0.95
    max_epochs: int = 30
    rl_updates: int = 300
    rl_batch: int = 8
    rl_log_every: int = 10
    # decoding
    rerank_ngram: int = 2
    beam_k: int = 5
    diversity: float = 1.0
    max_decode_len: int = 30
    max_sentences: int = 8
    fixed_k: int = 3               # extraction count for the ML-only variants
    workers: int = 1
    # run
    seed: int = 0

    _SECTIONS = {
        "data": ("data_path", "out_dir", "val_fraction"),
        "synth": ("synth_docs", "synth_vocab", "synth_sents", "synth_salient",
                  "synth_noise"),
        "model": ("vocab_cap", "emb_dim", "n_filters", "enc_hidden", "dec_hidden"),
        "optim": ("ml_lr", "rl_lr", "clip_norm", "batch_size", "gamma",
                  "max_epochs", "rl_updates", "rl_batch", "rl_log_every"),
        "decoding": ("rerank_ngram", "beam_k", "diversity", "max_decode_len",
                     "max_sentences", "fixed_k", "workers"),
        "run": ("seed",),
    }

    def __post_init__(self):
        env_seed = os.environ.get("SUMM_SEED")
        if env_seed is not None:
            self.seed = int(env_seed)
        self.validate()

    def validate(self) -> None:
        positive = ("vocab_cap", "emb_dim", "n_filters", "enc_hidden", "dec_hidden",
                    "batch_size", "max_epochs", "rl_updates", "rl_batch",
                    "rl_log_every", "rerank_ngram", "beam_k", "max_decode_len",
                    "max_sentences", "fixed_k", "workers")
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"config field {name!r} must be >= 1")
        for name in ("ml_lr", "rl_lr", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name!r} must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if not 0.0 <= self.synth_noise <= 1.0:
            raise ValueError("synth_noise must be in [0, 1]")
        if self.synth_docs < 0 or self.diversity < 0:
            raise ValueError("synth_docs and diversity must be non-negative")
        if not self.data_path and self.synth_docs == 0:
            raise ValueError("config needs data_path or a [synth] section with synth_docs > 0")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        known = {sec: set(keys) for sec, keys in cls._SECTIONS.items()}
        values = {}
        for section, body in raw.items():
            if section not in known:
                raise ValueError(f"unknown config section {section!r}")
            if not isinstance(body, dict):
                raise ValueError(f"config section {section!r} must be a table")
            for key, value in body.items():
                if key not in known[section]:
                    raise ValueError(f"unknown key {key!r} in section {section!r}")
                values[key] = value
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def dump_toml(self) -> str:
        lines = []
        for section, keys in self._SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                value = getattr(self, key)
                if isinstance(value, str):
                    lines.append(f'{key} = "{value}"')
                elif isinstance(value, bool):
                    lines.append(f"{key} = {str(value).lower()}")
                else:
                    lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def write_default_config(path, **overrides) -> RunConfig:
    cfg = RunConfig(**overrides)
    Path(path).write_text(cfg.dump_toml())
    return cfg

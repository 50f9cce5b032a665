"""Actor-critic training that bridges the extractor and the rewriter.

Each episode extracts sentences from one document with the sampled,
masked pointer policy.  Step rewards score the rewritten sentence
against the reference sentence at the same position; choosing the stop
action earns a terminal reward over the whole summary instead.  The
rewriter stays frozen throughout: rewards are plain numbers and carry no
gradient.  The critic reuses the actor's encoder output, so encoder
weights learn from both losses.
"""

import csv
import logging
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from summ.data import Document, SummaryPair, Vocabulary
from summ.extractor import STOP, PointerExtractor, sentences_to_ids
from summ.metrics import concat_sentences, rouge_l, rouge_n
from summ.optim import Trainer

logger = logging.getLogger(__name__)

# reference sentences become one token list each; the rewrite callable maps
# (document, sentence index) to the generated token list
RewriteFn = Callable[[Document, int], List[str]]


def identity_rewrite(doc: Document, idx: int) -> List[str]:
    """Bypass the rewriter: the extracted sentence is the output sentence."""
    return list(doc.sentences[idx])


def cached_abstractor_rewrite(abstractor, vocab: Vocabulary,
                              cache: Optional[Dict[Tuple[str, int], List[str]]] = None,
                              max_len: int = 30) -> RewriteFn:
    """Greedy-decode rewrite with memoization per (document id, sentence index).

    Valid because the rewriter is frozen during this training phase.
    """
    store: Dict[Tuple[str, int], List[str]] = {} if cache is None else cache

    def rewrite(doc: Document, idx: int) -> List[str]:
        key = (doc.id, idx)
        if key not in store:
            with torch.no_grad():
                store[key] = abstractor.greedy_decode(doc.sentences[idx], vocab,
                                                      max_len=max_len)
        return store[key]

    return rewrite


@dataclass
class Episode:
    doc_id: str
    actions: List[int]              # sentence indices, STOP last if ended early
    log_probs: List[torch.Tensor]   # per action, graph-attached
    rewards: List[float]
    enc_states: torch.Tensor        # encoder output, reused by the critic
    returns: List[float] = field(default_factory=list)
    baselines: List[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.rewards) != len(self.actions):
            raise ValueError("rewards and actions must have equal length")
        picked = [a for a in self.actions if a != STOP]
        if len(set(picked)) != len(picked):
            raise ValueError("duplicate sentence index in episode actions")

    @property
    def stopped(self) -> bool:
        return bool(self.actions) and self.actions[-1] == STOP

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


class Critic(nn.Module):
    """Value head with the same shape of computation as the pointer decoder:
    its own recurrence and glimpse over the shared sentence vectors, ending
    in a scalar per step."""

    def __init__(self, input_dim: int, dec_hidden: int, att_dim: Optional[int] = None):
        super().__init__()
        att_dim = att_dim or dec_hidden
        self.cell = nn.LSTMCell(input_dim, dec_hidden)
        self.start_input = nn.Parameter(torch.zeros(input_dim))
        self.init_h = nn.Parameter(torch.zeros(dec_hidden))
        self.init_c = nn.Parameter(torch.zeros(dec_hidden))
        self.cand_proj = nn.Linear(input_dim, att_dim, bias=False)
        self.state_proj = nn.Linear(dec_hidden, att_dim, bias=False)
        self.att_v = nn.Parameter(torch.zeros(att_dim))
        self.value_head = nn.Linear(dec_hidden + att_dim, 1)
        self.double()

    def values(self, enc_states: torch.Tensor, actions: Sequence[int]) -> torch.Tensor:
        """State values b(c_t) for every step of an episode, shape (T,).

        The input stream mirrors the actor's decoder: a learned start vector,
        then the sentence vector chosen at the previous step.
        """
        inputs = [self.start_input]
        for a in actions[:-1]:
            if a == STOP:
                raise ValueError("stop action only allowed in terminal position")
            inputs.append(enc_states[a])
        state = (self.init_h.unsqueeze(0), self.init_c.unsqueeze(0))
        proj = self.cand_proj(enc_states)
        out = []
        for inp in inputs:
            new_h, new_c = self.cell(inp.unsqueeze(0), state)
            z = new_h.squeeze(0)
            alpha = F.softmax(torch.tanh(proj + self.state_proj(z)) @ self.att_v, dim=0)
            ctx = alpha @ proj
            out.append(self.value_head(torch.cat([z, ctx])).squeeze())
            state = (new_h, new_c)
        return torch.stack(out)


def rollout(
    pair: SummaryPair,
    actor: PointerExtractor,
    vocab: Vocabulary,
    rewrite: RewriteFn,
    max_steps: int,
    generator: Optional[torch.Generator] = None,
    greedy: bool = False,
) -> Episode:
    """Sample one extraction episode and assign its rewards.

    Step t, sentence chosen: reward is sentence-level longest-common-
    subsequence F1 of the rewritten sentence against reference sentence t,
    or exactly 0 past the last reference.  Stop action: reward is unigram
    F1 of the concatenated rewritten output against the concatenated
    reference (it replaces any per-sentence reward for that step).
    """
    doc, refs = pair.document, pair.summary
    steps = min(max_steps, doc.n_sentences)
    enc_states = actor.encode(sentences_to_ids(doc, vocab))
    indices, log_probs, stopped = actor.run(
        enc_states, mode="greedy" if greedy else "sample",
        max_steps=steps, use_stop=True, generator=generator,
    )
    generated = [rewrite(doc, j) for j in indices]
    rewards = assign_rewards(generated, refs, stopped)
    actions = list(indices) + ([STOP] if stopped else [])
    return Episode(doc.id, actions, list(log_probs), rewards, enc_states)


def assign_rewards(generated: Sequence[List[str]], refs: Sequence[List[str]],
                   stopped: bool) -> List[float]:
    """Per-step rewards for a generated-sentence sequence, terminal included."""
    rewards = [
        rouge_l(gen, refs[t]).f1 if t < len(refs) else 0.0
        for t, gen in enumerate(generated)
    ]
    if stopped:
        rewards.append(rouge_n(concat_sentences(generated),
                               concat_sentences(refs), 1).f1)
    return rewards


def selection_reward(pair: SummaryPair, indices: Sequence[int], stopped: bool,
                     rewrite: RewriteFn) -> float:
    """Total episode reward a given extraction would earn; lets non-RL
    pipelines be scored on the same scale as RL rollouts."""
    generated = [rewrite(pair.document, j) for j in indices]
    return float(sum(assign_rewards(generated, pair.summary, stopped)))


def compute_returns(rewards: Sequence[float], gamma: float) -> List[float]:
    """Suffix-discounted returns: R_t = sum over k >= t of gamma^(k-t) * r_k."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def standardize_returns(episodes: Sequence[Episode]) -> Sequence[Episode]:
    """Center and scale returns over the whole batch (all steps pooled).

    A batch with a single return value is centered only.  Mutates and
    returns the episodes; the standardized values feed both the advantage
    and the critic targets.
    """
    flat = [r for ep in episodes for r in ep.returns]
    if not flat:
        return episodes
    mean = float(np.mean(flat))
    if len(flat) < 2:
        scale = 1.0
    else:
        scale = float(np.std(flat)) + 1e-8
    for ep in episodes:
        ep.returns = [(r - mean) / scale for r in ep.returns]
    return episodes


def a2c_update(episodes: Sequence[Episode], critic: Critic, trainer: Trainer
               ) -> Dict[str, float]:
    """One synchronous gradient step from a batch of completed episodes.

    Actor loss: -(1 / total steps) * sum of log-prob * advantage, with the
    advantage detached so no gradient reaches the actor through the critic.
    Critic loss: mean squared error of the value against the (standardized)
    return; the return target itself carries no gradient.
    """
    total_steps = sum(len(ep.actions) for ep in episodes)
    if total_steps == 0:
        raise ValueError("cannot update from empty episodes")
    actor_terms = []
    critic_terms = []
    for ep in episodes:
        values = critic.values(ep.enc_states, ep.actions)
        returns = values.new_tensor(ep.returns)
        advantage = (returns - values).detach()
        ep.baselines = [float(v) for v in values.detach()]
        actor_terms.append(-(torch.stack(ep.log_probs) * advantage).sum())
        critic_terms.append(((values - returns) ** 2).sum())
    actor_loss = torch.stack(actor_terms).sum() / total_steps
    critic_loss = torch.stack(critic_terms).sum() / total_steps
    loss = actor_loss + critic_loss
    actor_val, critic_val = float(actor_loss.detach()), float(critic_loss.detach())
    if not torch.isfinite(loss):
        raise FloatingPointError(
            f"non-finite A2C loss (actor {actor_val}, critic {critic_val})"
        )
    trainer.step(loss)
    return {"actor_loss": actor_val, "critic_loss": critic_val}


@dataclass
class CurvePoint:
    step: int
    mean_reward: float
    eoe_rate: float


def write_reward_curve(rows: Sequence[CurvePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "mean_reward", "eoe_rate"])
        for row in rows:
            writer.writerow([row.step, f"{row.mean_reward:.6f}", f"{row.eoe_rate:.6f}"])


def evaluate_policy(pairs: Sequence[SummaryPair], actor: PointerExtractor,
                    vocab: Vocabulary, rewrite: RewriteFn, max_cap: int = 8
                    ) -> float:
    """Mean greedy episode reward over a validation set."""
    total = 0.0
    with torch.no_grad():
        for pair in pairs:
            ep = rollout(pair, actor, vocab, rewrite,
                         max_steps=max_cap, greedy=True)
            total += ep.total_reward
    return total / max(1, len(pairs))


def train_rl(
    train_pairs: Sequence[SummaryPair],
    val_pairs: Sequence[SummaryPair],
    actor: PointerExtractor,
    critic: Critic,
    vocab: Vocabulary,
    rewrite: RewriteFn,
    gamma: float = 0.95,
    lr: float = 1e-4,
    batch_size: int = 8,
    n_updates: int = 300,
    log_every: int = 10,
    max_cap: int = 8,
    seed: int = 0,
) -> Tuple[List[CurvePoint], float]:
    """Iterate rollout, returns, standardization, update.

    Logs one curve point per ``log_every`` updates: mean undiscounted
    episode reward and the fraction of episodes ending in the stop action.
    Keeps the best-validation-reward actor and restores it at the end.
    Returns (curve, best validation reward).
    """
    if not train_pairs:
        raise ValueError("train_rl needs a non-empty training set")
    trainer = Trainer([actor, critic], lr=lr)
    sample_gen = torch.Generator().manual_seed(seed)
    order_rng = np.random.default_rng(seed + 1)
    curve: List[CurvePoint] = []
    window: List[Episode] = []
    best_val = float("-inf")
    best_state = None
    cursor: List[int] = []
    for update in range(1, n_updates + 1):
        batch = []
        for _ in range(batch_size):
            if not cursor:
                cursor = order_rng.permutation(len(train_pairs)).tolist()
            pair = train_pairs[cursor.pop()]
            ep = rollout(pair, actor, vocab, rewrite,
                         max_steps=max_cap, generator=sample_gen)
            ep.returns = compute_returns(ep.rewards, gamma)
            batch.append(ep)
        standardize_returns(batch)
        a2c_update(batch, critic, trainer)
        window.extend(batch)
        if update % log_every == 0 or update == n_updates:
            mean_reward = float(np.mean([ep.total_reward for ep in window]))
            eoe_rate = float(np.mean([1.0 if ep.stopped else 0.0 for ep in window]))
            curve.append(CurvePoint(update, mean_reward, eoe_rate))
            window = []
            val_reward = evaluate_policy(val_pairs or train_pairs, actor, vocab,
                                         rewrite, max_cap=max_cap)
            if val_reward > best_val:
                best_val = val_reward
                best_state = {
                    "actor": deepcopy(actor.state_dict()),
                    "critic": deepcopy(critic.state_dict()),
                }
            logger.info("update %d mean_reward %.4f eoe_rate %.3f val %.4f",
                        update, mean_reward, eoe_rate, val_reward)
    if best_state is not None:
        actor.load_state_dict(best_state["actor"])
        critic.load_state_dict(best_state["critic"])
    return curve, best_val

"""Training substrate: Adam updates, global-norm gradient clipping and
plateau-based learning-rate halving over named parameter collections.

Parameters are torch double tensors addressed by name; gradients come
from autograd but the update rules here are explicit so their contracts
(zero-grad no-op, non-finite detection, single-step magnitude) stay
directly testable.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

import torch

Params = Dict[str, torch.Tensor]
Grads = Dict[str, torch.Tensor]


@dataclass
class OptimState:
    """Adam accumulators plus the mutable learning rate."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    n_halvings: int = 0
    moments: Dict[str, tuple] = field(default_factory=dict)  # name -> (m, v)

    def moments_for(self, name: str, like: torch.Tensor):
        if name not in self.moments:
            self.moments[name] = (torch.zeros_like(like), torch.zeros_like(like))
        return self.moments[name]


def adam_step(params: Params, grads: Grads, state: OptimState) -> None:
    """One Adam update, in place.  Raises on any non-finite gradient."""
    for name, grad in grads.items():
        if not torch.isfinite(grad).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if grad.shape != params[name].shape:
            raise ValueError(f"gradient shape {tuple(grad.shape)} does not match "
                             f"parameter {name!r} {tuple(params[name].shape)}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    with torch.no_grad():
        for name, grad in grads.items():
            m, v = state.moments_for(name, grad)
            m.mul_(state.beta1).add_(grad, alpha=1.0 - state.beta1)
            v.mul_(state.beta2).addcmul_(grad, grad, value=1.0 - state.beta2)
            update = (m / bc1) / ((v / bc2).sqrt() + state.eps)
            params[name].sub_(update, alpha=state.lr)


def clip_gradients(grads: Grads, max_norm: float) -> Grads:
    """Scale all gradients so the global 2-norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        with torch.no_grad():
            for g in grads.values():
                g.mul_(scale)
    return grads


def halve_lr_on_plateau(state: OptimState, val_history: Sequence[float]) -> OptimState:
    """Halve the learning rate when the latest validation loss stops improving."""
    if len(val_history) >= 2 and val_history[-1] >= min(val_history[:-1]):
        state.lr /= 2.0
        state.n_halvings += 1
    return state


class Trainer:
    """Couples a module's named parameters to Adam + clipping + plateau halving."""

    def __init__(self, modules, lr: float, clip_norm: float = 2.0,
                 max_halvings: int = 3):
        if not isinstance(modules, (list, tuple)):
            modules = [modules]
        self.params: Params = {}
        for i, module in enumerate(modules):
            prefix = f"m{i}." if len(modules) > 1 else ""
            for name, p in module.named_parameters():
                self.params[prefix + name] = p
        self.state = OptimState(lr=lr)
        self.clip_norm = clip_norm
        self.max_halvings = max_halvings
        self.val_history: List[float] = []

    def step(self, loss: torch.Tensor) -> float:
        grads_list = torch.autograd.grad(loss, list(self.params.values()), allow_unused=True)
        # contiguous(): autograd may hand back expanded views, which the
        # in-place clip below cannot write to
        grads = {
            name: (g.contiguous() if g is not None else torch.zeros_like(p))
            for (name, p), g in zip(self.params.items(), grads_list)
        }
        clip_gradients(grads, self.clip_norm)
        adam_step(self.params, grads, self.state)
        return float(loss.detach())

    def end_epoch(self, val_loss: float) -> bool:
        """Record a validation loss; returns True when training should stop."""
        self.val_history.append(val_loss)
        halve_lr_on_plateau(self.state, self.val_history)
        return self.state.n_halvings > self.max_halvings

"""Central-difference verification of analytic gradients.

Every trainable component in the package is required to pass this check
at tiny shapes; it is the contract that lets the forward/backward code
lean on autograd internally.
"""

from typing import Callable, Dict, Iterable, Tuple

import numpy as np
import torch


def finite_difference_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Dict[str, torch.Tensor],
    epsilon: float = 1e-5,
    max_entries: int = 10_000,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``loss_fn`` must be a deterministic scalar function of ``params``.
    Errors are measured as |analytic - numeric| / max(1, |analytic|, |numeric|),
    so near-zero gradients are compared absolutely.  Above ``max_entries``
    total entries a seeded random sample of coordinates is checked.
    """
    names = sorted(params)
    tensors = [params[n] for n in names]
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    grads = [g if g is not None else torch.zeros_like(p) for g, p in zip(grads, tensors)]

    entries = []
    for name, p in zip(names, tensors):
        entries.extend((name, i) for i in range(p.numel()))
    if len(entries) > max_entries:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[i] for i in sorted(picks)]

    by_name = dict(zip(names, tensors))
    grad_by_name = dict(zip(names, grads))
    worst = 0.0
    for name, flat_idx in entries:
        flat = by_name[name].view(-1)  # view keeps writes visible to the module
        analytic = float(grad_by_name[name].reshape(-1)[flat_idx])
        with torch.no_grad():
            orig = float(flat[flat_idx])
            flat[flat_idx] = orig + epsilon
            up = float(loss_fn())
            flat[flat_idx] = orig - epsilon
            down = float(loss_fn())
            flat[flat_idx] = orig
        numeric = (up - down) / (2.0 * epsilon)
        err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
        worst = max(worst, err)
    return worst

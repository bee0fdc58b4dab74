"""Finite-difference verification of the hand-written gradients."""
from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from .losses import LossWeights, TokenizedExample, objective
from .model import ToyModel
from .train import batch_loss_and_grads

REL_FLOOR = 1e-7


def total_loss(model: ToyModel, batch: Sequence[TokenizedExample], w: LossWeights, teacher_logits=None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        outs = [model.forward(ex.input_ids, ex.prompt_len) for ex in batch]
        return objective(outs, batch, w, teacher_logits)[0].total


def analytic_grad(model: ToyModel, batch, w: LossWeights, assistant: ToyModel | None = None) -> np.ndarray:
    tl = None if assistant is None else [assistant.forward(ex.input_ids, ex.prompt_len) for ex in batch]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        _, grads = batch_loss_and_grads(model, batch, w, tl)
    return np.concatenate([grads[k].ravel() for k in model.params])


def numeric_grad(model: ToyModel, batch, w: LossWeights, assistant: ToyModel | None = None,
                 indices=None, step: float = 1e-5) -> np.ndarray:
    tl = None if assistant is None else [assistant.forward(ex.input_ids, ex.prompt_len) for ex in batch]
    theta = model.flat()
    indices = np.arange(theta.size) if indices is None else np.asarray(indices)
    out = np.empty(indices.size)
    probe = model.copy()
    for n, i in enumerate(indices):
        t = theta.copy()
        t[i] += step
        probe.set_flat(t)
        up = total_loss(probe, batch, w, tl)
        t[i] -= 2 * step
        probe.set_flat(t)
        down = total_loss(probe, batch, w, tl)
        out[n] = (up - down) / (2 * step)
    return out


def grad_check(model: ToyModel, batch: Sequence[TokenizedExample], w: LossWeights,
               assistant: ToyModel | None = None, max_probes: int = 500, step: float = 1e-5,
               seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    At most ``max_probes`` parameters are probed (all of them if fewer).
    Relative error is ``|a - n| / max(|a|, |n|, 1e-7)``.
    """
    theta = model.flat()
    if theta.size <= max_probes:
        idx = np.arange(theta.size)
    else:
        idx = np.sort(np.random.default_rng(seed).choice(theta.size, max_probes, replace=False))
    a = analytic_grad(model, batch, w, assistant)[idx]
    n = numeric_grad(model, batch, w, assistant, idx, step)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
    return float(np.max(np.abs(a - n) / denom))

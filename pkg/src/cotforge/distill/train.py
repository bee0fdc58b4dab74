"""AdamW training loop with gradient accumulation and plateau-halving learning rate."""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .losses import LossWeights, TokenizedExample, objective
from .model import ToyModel

log = logging.getLogger(__name__)

ASSISTANT, STUDENT = "assistant", "student"


class TrainingDivergedError(FloatingPointError):
    def __init__(self, batch_id: str, value: float):
        self.batch_id = batch_id
        super().__init__(f"non-finite loss {value} at {batch_id}")


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 3e-4
    plateau_patience: int = 2
    lr_factor: float = 0.5
    min_lr: float = 1e-6
    batch_size: int = 2
    grad_accumulation: int = 20
    max_epochs: int = 20
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1 or self.grad_accumulation < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, grad_accumulation and max_epochs must be >= 1")
        if not 0 < self.min_lr <= self.initial_lr:
            raise ValueError("need 0 < min_lr <= initial_lr")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# Large-model defaults above barely move a toy model within 20 epochs; this
# preset is for desk-scale runs on the synthetic task and mock pipeline.
DESK_CONFIG = TrainConfig(initial_lr=1e-2, grad_accumulation=4)


class PlateauHalving:
    """Halve the learning rate after ``patience`` epochs without improvement.

    ``step(metric)`` is called once per epoch with a lower-is-better metric and
    returns the learning rate for the next epoch.
    """

    def __init__(self, lr: float, patience: int = 2, factor: float = 0.5, min_lr: float = 1e-6):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


class AdamW:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            p *= 1.0 - lr * c.weight_decay
            p -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


def batch_loss_and_grads(model: ToyModel, batch: Sequence[TokenizedExample], w: LossWeights,
                         teacher_logits=None):
    outs, caches = [], []
    for ex in batch:
        o, cache = model.forward(ex.input_ids, ex.prompt_len, return_cache=True)
        outs.append(o)
        caches.append(cache)
    parts, d_tok, d_cls = objective(outs, batch, w, teacher_logits)
    grads = None
    for cache, gt, gc in zip(caches, d_tok, d_cls):
        grads = model.backward(cache, gt, gc, grads)
    return parts, grads


def evaluate_loss(model: ToyModel, data: Sequence[TokenizedExample], w: LossWeights, batch_size: int,
                  teacher_logits=None) -> float:
    total, n = 0.0, 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for start in range(0, len(data), batch_size):
            batch = data[start:start + batch_size]
            outs = [model.forward(ex.input_ids, ex.prompt_len) for ex in batch]
            tl = None if teacher_logits is None else teacher_logits[start:start + batch_size]
            parts, _, _ = objective(outs, batch, w, tl)
            total += parts.total * len(batch)
            n += len(batch)
    return total / max(n, 1)


def accuracy(model: ToyModel, data: Sequence[TokenizedExample]) -> float:
    if not data:
        return 0.0
    hits = sum(model.predict_class(ex.input_ids, ex.prompt_len) == ex.class_target for ex in data)
    return hits / len(data)


@dataclass
class TrainResult:
    model: ToyModel
    log: list[dict] = field(default_factory=list)
    updates: int = 0

    def log_jsonl(self) -> str:
        return "".join(json.dumps(row, sort_keys=False) + "\n" for row in self.log)


def train(model: ToyModel, data: Sequence[TokenizedExample], cfg: TrainConfig = TrainConfig(),
          w: LossWeights = LossWeights(), role: str = ASSISTANT, assistant: ToyModel | None = None,
          val_data: Sequence[TokenizedExample] | None = None, plateau_metric=None) -> TrainResult:
    """Train ``model`` in place and return it with a per-epoch log.

    ``role="assistant"`` optimises the multitask hard-label loss;
    ``role="student"`` adds the KL terms against the frozen ``assistant``,
    whose logits are computed once per example before training.

    Parameters update once every ``cfg.grad_accumulation`` micro-batches, with
    the accumulation window carried across epoch boundaries.  A trailing
    partial window at the end of training is discarded.  The plateau schedule
    watches the validation loss (training loss when no ``val_data``);
    ``plateau_metric(epoch, default)`` overrides it.
    """
    data = list(data)
    if not data:
        raise ValueError("training data is empty")
    if role not in (ASSISTANT, STUDENT):
        raise ValueError(f"unknown role {role!r}")
    if role == STUDENT and assistant is None:
        raise ValueError("student training needs a frozen assistant model")
    if assistant is not None and assistant.vocab_size != model.vocab_size:
        raise ValueError("assistant and student must share a vocabulary")

    teacher_logits = None
    val_teacher = None
    if role == STUDENT:
        teacher_logits = [assistant.forward(ex.input_ids, ex.prompt_len) for ex in data]
        if val_data:
            val_teacher = [assistant.forward(ex.input_ids, ex.prompt_len) for ex in val_data]

    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(model.params, cfg)
    sched = PlateauHalving(cfg.initial_lr, cfg.plateau_patience, cfg.lr_factor, cfg.min_lr)
    lr = cfg.initial_lr
    acc_grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    pending = 0
    result = TrainResult(model)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(data))
        sums = np.zeros(5)
        n_batches = 0
        updates_before = result.updates
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            batch = [data[i] for i in idx]
            tl = None if teacher_logits is None else [teacher_logits[i] for i in idx]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    parts, grads = batch_loss_and_grads(model, batch, w, tl)
            except FloatingPointError:
                raise TrainingDivergedError(f"epoch {epoch} batch {bi}", float("nan")) from None
            if not math.isfinite(parts.total):
                raise TrainingDivergedError(f"epoch {epoch} batch {bi}", parts.total)
            for k in acc_grads:
                acc_grads[k] += grads[k] / cfg.grad_accumulation
            pending += 1
            sums += [parts.total, parts.hard_cls, parts.hard_rea, parts.soft_cls, parts.soft_rea]
            n_batches += 1
            if pending == cfg.grad_accumulation:
                opt.step(model.params, acc_grads, lr)
                result.updates += 1
                for g in acc_grads.values():
                    g.fill(0.0)
                pending = 0
        means = sums / n_batches
        row = {
            "epoch": epoch,
            "loss_total": float(means[0]),
            "loss_hard_cls": float(means[1]),
            "loss_hard_rea": float(means[2]),
            "loss_soft_cls": float(means[3]),
            "loss_soft_rea": float(means[4]),
            "lr": lr,
            "updates": result.updates - updates_before,
        }
        metric = row["loss_total"]
        if val_data:
            metric = evaluate_loss(model, list(val_data), w, cfg.batch_size, val_teacher)
            row["val_loss"] = metric
        if plateau_metric is not None:
            metric = plateau_metric(epoch, metric)
        result.log.append(row)
        log.info("epoch %d %s", epoch, row)
        lr = sched.step(metric)
    return result


def config_dict(cfg: TrainConfig, w: LossWeights) -> dict:
    return {"train": asdict(cfg), "weights": asdict(w)}

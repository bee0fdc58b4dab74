"""Hard-label, soft-label and combined objectives for assistant and student training.

Reductions:

* token NLL is summed over the unmasked positions of a sample and averaged
  over the batch;
* the reasoning-branch KL is averaged over unmasked positions of a sample,
  then over the samples that have any;
* the classification KL and NLL are averaged over the batch.

The KL is not multiplied by ``tau**2`` unless ``LossWeights.scale_kd_by_tau2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import kernels
from ..kernels import IGNORE_INDEX

PROB_FLOOR = 1e-12
N_CLASSES = 3


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 0.2
    lambda_rea: float = 0.8
    lambda_kd: float = 0.3
    tau: float = 2.0
    soft_lambda_cls: float | None = None
    soft_lambda_rea: float | None = None
    scale_kd_by_tau2: bool = False

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_rea", "lambda_kd"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("soft_lambda_cls", "soft_lambda_rea"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")

    @property
    def soft_cls(self) -> float:
        return self.lambda_cls if self.soft_lambda_cls is None else self.soft_lambda_cls

    @property
    def soft_rea(self) -> float:
        return self.lambda_rea if self.soft_lambda_rea is None else self.soft_lambda_rea

    @property
    def kd_scale(self) -> float:
        return self.tau ** 2 if self.scale_kd_by_tau2 else 1.0

    def replace(self, **kw) -> "LossWeights":
        d = dict(self.__dict__)
        d.update(kw)
        return LossWeights(**d)


@dataclass(frozen=True)
class TokenizedExample:
    input_ids: np.ndarray
    target_ids: np.ndarray
    class_target: int
    prompt_len: int = 1

    def __post_init__(self):
        inp = np.asarray(self.input_ids, dtype=np.int64)
        tgt = np.asarray(self.target_ids, dtype=np.int64)
        if inp.shape != tgt.shape or inp.ndim != 1 or inp.size == 0:
            raise ValueError("input_ids and target_ids must be equal-length non-empty 1-D sequences")
        if not 0 <= int(self.class_target) < N_CLASSES:
            raise ValueError(f"class_target out of range: {self.class_target}")
        if not 1 <= self.prompt_len <= inp.size:
            raise ValueError("prompt_len must be in [1, len(input_ids)]")
        object.__setattr__(self, "input_ids", inp)
        object.__setattr__(self, "target_ids", tgt)
        object.__setattr__(self, "class_target", int(self.class_target))

    @property
    def mask(self) -> np.ndarray:
        return self.target_ids != IGNORE_INDEX

    def __len__(self) -> int:
        return int(self.input_ids.size)


@dataclass(frozen=True)
class LogitTensor:
    token_logits: np.ndarray  # (l, V)
    class_logits: np.ndarray  # (3,)

    def __post_init__(self):
        t = np.asarray(self.token_logits, dtype=np.float64)
        c = np.asarray(self.class_logits, dtype=np.float64).reshape(-1)
        if t.ndim != 2 or c.shape != (N_CLASSES,):
            raise ValueError("token_logits must be (l, V) and class_logits a 3-vector")
        if not (np.isfinite(t).all() and np.isfinite(c).all()):
            raise FloatingPointError("non-finite logits")
        object.__setattr__(self, "token_logits", t)
        object.__setattr__(self, "class_logits", c)


# ----------------------------------------------------------- scalar building blocks


def temp_softmax(z, tau: float) -> np.ndarray:
    """Softmax of ``z / tau`` computed with max subtraction."""
    if not tau > 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    z = np.asarray(z, dtype=np.float64)
    s = z / tau
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def kl_divergence(p_a, p_s, floor: float = PROB_FLOOR) -> float:
    """KL(p_a || p_s) in nats, with ``p_s`` floored at ``floor``."""
    p_a = np.asarray(p_a, dtype=np.float64)
    p_s = np.asarray(p_s, dtype=np.float64)
    if p_a.shape != p_s.shape:
        raise ValueError(f"shape mismatch: {p_a.shape} vs {p_s.shape}")
    for name, p in (("p_a", p_a), ("p_s", p_s)):
        if abs(p.sum() - 1.0) > 1e-6 or (p < 0).any():
            raise ValueError(f"{name} is not a probability vector")
    q = np.maximum(p_s, floor)
    nz = p_a > 0
    return float(max(0.0, np.sum(p_a[nz] * (np.log(p_a[nz]) - np.log(q[nz])))))


def multitask_loss(l_cls: float, l_rea: float, w: LossWeights, soft: bool = False) -> float:
    if soft:
        return w.soft_cls * l_cls + w.soft_rea * l_rea
    return w.lambda_cls * l_cls + w.lambda_rea * l_rea


def total_student_loss(hard: tuple[float, float], soft: tuple[float, float], w: LossWeights) -> float:
    """``(1 - lambda) * hard multitask + lambda * soft multitask``."""
    lam = w.lambda_kd
    return (1.0 - lam) * multitask_loss(*hard, w) + lam * multitask_loss(*soft, w, soft=True)


# ------------------------------------------------------------- batched losses


def _warn_all_masked():
    warnings.warn("every target position in the batch is masked; reasoning loss set to 0", RuntimeWarning,
                  stacklevel=3)


def masked_token_nll(logits: Sequence[LogitTensor], targets: Sequence[TokenizedExample]) -> float:
    """Per-sample summed token NLL over unmasked positions, averaged over the batch."""
    if len(logits) != len(targets) or not logits:
        raise ValueError("need matching, non-empty logits and targets")
    total = 0.0
    any_unmasked = False
    for lt, ex in zip(logits, targets):
        if lt.token_logits.shape[0] != len(ex):
            raise ValueError("token_logits rows must equal sequence length")
        loss, _ = kernels.masked_nll(lt.token_logits, ex.target_ids)
        total += loss
        any_unmasked = any_unmasked or bool(ex.mask.any())
    if not any_unmasked:
        _warn_all_masked()
    return total / len(logits)


def class_nll(logits: Sequence[LogitTensor], targets: Sequence[TokenizedExample]) -> float:
    total = 0.0
    for lt, ex in zip(logits, targets):
        loss, _ = kernels.masked_nll(lt.class_logits[None, :], np.array([ex.class_target]))
        total += loss
    return total / len(logits)


def soft_losses(student: Sequence[LogitTensor], assistant: Sequence[LogitTensor],
                targets: Sequence[TokenizedExample], w: LossWeights) -> tuple[float, float]:
    """(classification KL, reasoning KL) of assistant vs student at temperature tau."""
    parts = _soft_parts(student, assistant, targets, w, need_grad=False)
    return parts[0], parts[1]


def _soft_parts(student, assistant, targets, w: LossWeights, need_grad: bool):
    B = len(student)
    if not (B == len(assistant) == len(targets)) or B == 0:
        raise ValueError("need matching, non-empty student/assistant/target batches")
    tau = w.tau
    scale = w.kd_scale
    cls_total = 0.0
    rea_total = 0.0
    n_rea = sum(1 for ex in targets if ex.mask.any())
    g_tok, g_cls = [], []
    for st, at, ex in zip(student, assistant, targets):
        if st.token_logits.shape != at.token_logits.shape:
            raise ValueError("student and assistant token logits must share shape (shared vocabulary)")
        kl_c, gc = kernels.kl_rows(at.class_logits[None, :], st.class_logits[None, :], tau, np.ones(1, np.uint8))
        cls_total += kl_c[0]
        mask = ex.mask
        n = int(mask.sum())
        kl_t, gt = kernels.kl_rows(at.token_logits, st.token_logits, tau, mask.astype(np.uint8))
        if n:
            rea_total += kl_t.sum() / n
        if need_grad:
            g_cls.append(scale * gc[0] / B)
            g_tok.append(scale * gt / (n * n_rea) if n else np.zeros_like(st.token_logits))
    l_cls = scale * cls_total / B
    l_rea = scale * rea_total / n_rea if n_rea else 0.0
    return l_cls, l_rea, g_tok, g_cls


@dataclass
class LossBreakdown:
    total: float
    hard_cls: float
    hard_rea: float
    soft_cls: float = 0.0
    soft_rea: float = 0.0

    def as_dict(self) -> dict:
        return {
            "loss_total": self.total,
            "loss_hard_cls": self.hard_cls,
            "loss_hard_rea": self.hard_rea,
            "loss_soft_cls": self.soft_cls,
            "loss_soft_rea": self.soft_rea,
        }


def objective(student: Sequence[LogitTensor], targets: Sequence[TokenizedExample], w: LossWeights,
              assistant: Sequence[LogitTensor] | None = None):
    """Loss and its gradients w.r.t. the student's token and class logits.

    Without ``assistant`` this is the multitask hard-label loss used to train
    the assistant; with it, the full student objective.  Returns
    ``(LossBreakdown, [d token_logits], [d class_logits])``.
    """
    B = len(student)
    if B == 0 or B != len(targets):
        raise ValueError("need matching, non-empty logits and targets")
    hard_rea = 0.0
    hard_cls = 0.0
    g_rea, g_cls = [], []
    for st, ex in zip(student, targets):
        lr, gr = kernels.masked_nll(st.token_logits, ex.target_ids)
        lc, gc = kernels.masked_nll(st.class_logits[None, :], np.array([ex.class_target], dtype=np.int64))
        hard_rea += lr
        hard_cls += lc
        g_rea.append(gr / B)
        g_cls.append(gc[0] / B)
    hard_rea /= B
    hard_cls /= B
    if not any(ex.mask.any() for ex in targets):
        _warn_all_masked()

    if assistant is None:
        total = multitask_loss(hard_cls, hard_rea, w)
        d_tok = [w.lambda_rea * g for g in g_rea]
        d_cls = [w.lambda_cls * g for g in g_cls]
        return LossBreakdown(total, hard_cls, hard_rea), d_tok, d_cls

    soft_cls, soft_rea, gs_tok, gs_cls = _soft_parts(student, assistant, targets, w, need_grad=True)
    lam = w.lambda_kd
    total = total_student_loss((hard_cls, hard_rea), (soft_cls, soft_rea), w)
    d_tok = [(1 - lam) * w.lambda_rea * gh + lam * w.soft_rea * gs for gh, gs in zip(g_rea, gs_tok)]
    d_cls = [(1 - lam) * w.lambda_cls * gh + lam * w.soft_cls * gs for gh, gs in zip(g_cls, gs_cls)]
    return LossBreakdown(total, hard_cls, hard_rea, soft_cls, soft_rea), d_tok, d_cls



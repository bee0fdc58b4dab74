"""Pure-NumPy reference kernels.

Same signatures as the compiled ``_ckernels`` module.  Used when the
extension is not built, and as the comparison route in the test-suite.
"""
from __future__ import annotations

import numpy as np

IGNORE_INDEX = -100


def log_softmax_rows(z):
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def masked_nll(logits, targets):
    """Summed negative log-likelihood over rows whose target != -100.

    Returns ``(loss, grad)`` where ``grad`` is d loss / d logits.  Masked rows
    are never read, so their content cannot influence the result.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    grad = np.zeros_like(logits)
    rows = np.flatnonzero(targets != IGNORE_INDEX)
    if rows.size == 0:
        return 0.0, grad
    logp = log_softmax_rows(logits[rows])
    tgt = targets[rows]
    loss = 0.0
    for r in range(rows.size):
        loss -= logp[r, tgt[r]]
    g = np.exp(logp)
    g[np.arange(rows.size), tgt] -= 1.0
    grad[rows] = g
    return float(loss), grad


def kl_rows(teacher_logits, student_logits, tau, mask):
    """Per-row KL(softmax(t/tau) || softmax(s/tau)) and its gradient w.r.t. s.

    Rows with ``mask == 0`` get KL 0 and zero gradient.
    """
    t = np.asarray(teacher_logits, dtype=np.float64)
    s = np.asarray(student_logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    n = t.shape[0]
    kl = np.zeros(n)
    grad = np.zeros_like(s)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        return kl, grad
    lp_t = log_softmax_rows(t[rows] / tau)
    lp_s = log_softmax_rows(s[rows] / tau)
    p_t = np.exp(lp_t)
    terms = np.where(p_t > 0.0, p_t * (lp_t - lp_s), 0.0)
    kl[rows] = terms.sum(axis=1)
    grad[rows] = (np.exp(lp_s) - p_t) / tau
    return kl, grad


def lcs_length(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n, m = a.size, b.size
    if n == 0 or m == 0:
        return 0
    prev = [0] * (m + 1)
    for i in range(n):
        cur = [0] * (m + 1)
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = cur[j] if cur[j] > prev[j + 1] else prev[j + 1]
        prev = cur
    return prev[m]

"""Classification and reasoning-generation metrics.

All generation metrics take pre-tokenized input; use :func:`cotforge.text.tokenize`
so every metric sees the same tokens.
"""
from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import LABELS, SentimentLabel
from .text import tokenize


# ------------------------------------------------------------ classification


@dataclass
class ClassificationReport:
    accuracy: float
    weighted_f1: float
    macro_f1: float
    per_class: dict
    confusion: list  # rows = gold, columns = predicted, order negative/neutral/positive
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def classification_metrics(gold: Sequence, pred: Sequence) -> ClassificationReport:
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
    if not gold:
        raise ValueError("need at least one label")
    g = [SentimentLabel.parse(x).index for x in gold]
    p = [SentimentLabel.parse(x).index for x in pred]
    cm = np.zeros((3, 3), dtype=np.int64)
    for a, b in zip(g, p):
        cm[a, b] += 1
    n = int(cm.sum())
    per_class = {}
    f1s, supports = [], []
    for k, label in enumerate(LABELS):
        tp = cm[k, k]
        prec = _safe_div(tp, cm[:, k].sum())
        rec = _safe_div(tp, cm[k, :].sum())
        f1 = _safe_div(2 * prec * rec, prec + rec)
        support = int(cm[k, :].sum())
        per_class[label.value] = {"precision": float(prec), "recall": float(rec), "f1": float(f1), "support": support}
        f1s.append(f1)
        supports.append(support)
    weighted = float(np.dot(f1s, supports) / n)
    return ClassificationReport(
        accuracy=float(np.trace(cm) / n),
        weighted_f1=weighted,
        macro_f1=float(np.mean(f1s)),
        per_class=per_class,
        confusion=cm.tolist(),
        n=n,
    )


# --------------------------------------------------------------------- BLEU


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(hyp: Sequence[str], refs: Sequence[Sequence[str]], max_n: int):
    matches, totals = [], []
    for n in range(1, max_n + 1):
        h = ngrams(hyp, n)
        max_ref: Counter = Counter()
        for r in refs:
            for gram, c in ngrams(r, n).items():
                if c > max_ref[gram]:
                    max_ref[gram] = c
        matches.append(sum(min(c, max_ref[gram]) for gram, c in h.items()))
        totals.append(max(len(hyp) - n + 1, 0))
    ref_len = min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
    return matches, totals, len(hyp), ref_len


def _bleu_from_stats(matches, totals, hyp_len, ref_len, smooth: bool) -> float:
    if hyp_len == 0:
        return 0.0
    log_p = []
    for n, (m, t) in enumerate(zip(matches, totals), 1):
        if t == 0:
            continue  # order longer than the hypothesis: not scored
        if m == 0:
            if n == 1 or not smooth:
                return 0.0
            log_p.append(math.log(1.0 / (t + 1)))
        else:
            log_p.append(math.log(m / t))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(sum(log_p) / len(log_p))


def bleu(hypothesis: Sequence[str], references: Sequence[Sequence[str]], max_n: int = 4, smooth: bool = True) -> float:
    """Sentence BLEU-4 with brevity penalty.

    Zero-match orders n >= 2 are smoothed to 1 / (total + 1).  Orders for
    which the hypothesis has no n-grams at all are left out of the mean.
    """
    if isinstance(references, str) or (references and isinstance(references[0], str)):
        references = [references]
    if not references:
        raise ValueError("need at least one reference")
    return _bleu_from_stats(*_bleu_stats(list(hypothesis), [list(r) for r in references], max_n), smooth)


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[Sequence[str]]],
                max_n: int = 4, smooth: bool = True) -> float:
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references differ in length")
    M = np.zeros(max_n, dtype=np.int64)
    T = np.zeros(max_n, dtype=np.int64)
    hl = rl = 0
    for h, refs in zip(hypotheses, references):
        if refs and isinstance(refs[0], str):
            refs = [refs]
        m, t, a, b = _bleu_stats(list(h), [list(r) for r in refs], max_n)
        M += m
        T += t
        hl += a
        rl += b
    return _bleu_from_stats(M.tolist(), T.tolist(), hl, rl, smooth)


# ------------------------------------------------------------------ ROUGE-L


def _as_ids(a: Sequence[str], b: Sequence[str]):
    table: dict[str, int] = {}
    ia = np.array([table.setdefault(t, len(table)) for t in a], dtype=np.int64)
    ib = np.array([table.setdefault(t, len(table)) for t in b], dtype=np.int64)
    return ia, ib


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    return kernels.lcs_length(*_as_ids(a, b))


def rouge_l(hypothesis: Sequence[str], reference: Sequence[str]) -> float:
    """LCS F-measure with beta = 1."""
    if not hypothesis and not reference:
        warnings.warn("rouge_l on two empty sequences; returning 0", RuntimeWarning, stacklevel=2)
        return 0.0
    if not hypothesis or not reference:
        return 0.0
    lcs = lcs_length(hypothesis, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(hypothesis)
    r = lcs / len(reference)
    return 2 * p * r / (p + r)


# ------------------------------------------------------------------- METEOR

_SUFFIXES = ("ingly", "edly", "ing", "ed", "ies", "es", "ly", "s")


def stem(word: str) -> str:
    for suf in _SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 3:
            return word[: -len(suf)] + ("y" if suf == "ies" else "")
    return word


def _align(hyp: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Exact matches first, then stem matches; each side used at most once."""
    used_h, used_r = set(), set()
    pairs = []
    for key in (lambda w: w, stem):
        for i, w in enumerate(hyp):
            if i in used_h:
                continue
            kw = key(w)
            for j, r in enumerate(ref):
                if j not in used_r and key(r) == kw:
                    pairs.append((i, j))
                    used_h.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def meteor_lite(hypothesis: Sequence[str], reference: Sequence[str], alpha: float = 0.9, beta: float = 3.0,
                gamma: float = 0.5) -> float:
    """METEOR without the synonym stage: exact + suffix-stripped unigram matches."""
    if not reference:
        warnings.warn("meteor_lite with an empty reference; returning 0", RuntimeWarning, stacklevel=2)
        return 0.0
    if not hypothesis:
        return 0.0
    pairs = _align(hypothesis, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p = m / len(hypothesis)
    r = m / len(reference)
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    penalty = gamma * (chunks / m) ** beta
    return fmean * (1 - penalty)


# ---------------------------------------------------------------- Distinct-N


def distinct_n(hypotheses: Sequence[Sequence[str]], n: int) -> float:
    if n not in (1, 2):
        raise ValueError("distinct_n supports n = 1 or 2")
    pool: Counter = Counter()
    for h in hypotheses:
        pool.update(ngrams(list(h), n))
    total = sum(pool.values())
    if total == 0:
        warnings.warn(f"no {n}-grams to score; distinct-{n} is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return len(pool) / total


# ------------------------------------------------------- embedding similarity


def cosine(u, v) -> float | None:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"vector dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return None
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def embedding_similarity(hypotheses: Sequence[str] | None = None, references: Sequence[str] | None = None,
                         embed: Callable[[list[str]], list] | None = None, hyp_vectors=None, ref_vectors=None):
    """Mean cosine similarity and per-pair scores (None where a vector is zero).

    Either pass ``embed`` (e.g. ``gateway.embed``) with the texts, or
    precomputed ``hyp_vectors`` / ``ref_vectors``.
    """
    if hyp_vectors is None or ref_vectors is None:
        if embed is None:
            raise ValueError("need an embedding function or precomputed vectors")
        hyp_vectors = embed(list(hypotheses))
        ref_vectors = embed(list(references))
    if len(hyp_vectors) != len(ref_vectors):
        raise ValueError("hypothesis and reference vector counts differ")
    scores = [cosine(u, v) for u, v in zip(hyp_vectors, ref_vectors)]
    valid = [s for s in scores if s is not None]
    if len(valid) < len(scores):
        warnings.warn(f"skipped {len(scores) - len(valid)} pair(s) with a zero vector", RuntimeWarning, stacklevel=2)
    mean = float(np.mean(valid)) if valid else 0.0
    return mean, scores


# ------------------------------------------------------------------ reports


@dataclass
class GenerationReport:
    sim: float | None
    meteor_lite: float
    bleu: float
    bleu_sentence: float
    rouge_l: float
    dist1: float
    dist2: float
    per_sample: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def generation_metrics(hypotheses: Sequence[str], references: Sequence[str], embed=None,
                       ids: Sequence[str] | None = None) -> GenerationReport:
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references differ in length")
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    ids = list(ids) if ids is not None else [str(i) for i in range(len(hypotheses))]
    H = [tokenize(h) for h in hypotheses]
    R = [tokenize(r) for r in references]
    sims = [None] * len(H)
    sim = None
    if embed is not None:
        sim, sims = embedding_similarity(hypotheses, references, embed)
    rows = []
    for i, (h, r) in enumerate(zip(H, R)):
        rows.append({
            "id": ids[i],
            "bleu": bleu(h, [r]),
            "rouge_l": rouge_l(h, r),
            "meteor_lite": meteor_lite(h, r),
            "sim": sims[i],
        })
    return GenerationReport(
        sim=sim,
        meteor_lite=float(np.mean([x["meteor_lite"] for x in rows])),
        bleu=corpus_bleu(H, [[r] for r in R]),
        bleu_sentence=float(np.mean([x["bleu"] for x in rows])),
        rouge_l=float(np.mean([x["rouge_l"] for x in rows])),
        dist1=distinct_n(H, 1),
        dist2=distinct_n(H, 2),
        per_sample=rows,
    )


def pct(x: float | None) -> float | None:
    return None if x is None else round(100.0 * x, 1)


def headline(cls: ClassificationReport | None = None, gen: GenerationReport | None = None) -> dict:
    """Table-style columns as percentages with one decimal (None when not computed)."""
    return {
        "Acc": pct(cls.accuracy) if cls else None,
        "w-F1": pct(cls.weighted_f1) if cls else None,
        "m-F1": pct(cls.macro_f1) if cls else None,
        "Sim": pct(gen.sim) if gen else None,
        "Meteor": pct(gen.meteor_lite) if gen else None,
        "Bleu": pct(gen.bleu) if gen else None,
        "Rouge-L": pct(gen.rouge_l) if gen else None,
        "Dist-1": pct(gen.dist1) if gen else None,
        "Dist-2": pct(gen.dist2) if gen else None,
    }

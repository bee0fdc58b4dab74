"""Two-stage teacher synthesis, assistant augmentation and final dataset assembly."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    ReasoningDataset,
    ReasoningRecord,
    Role,
    Sample,
    Source,
    Split,
    ValidationError,
    merge_datasets,
)
from .parsing import ArcFailure, ArcPolicy, generate_with_arc, parse
from .prompts import EXPLAIN, PREDICT

log = logging.getLogger(__name__)

CHECKPOINT_EVERY = 100

# Train/dev/test sizes, expanded training-set sizes for the two teachers,
# and assistant accuracy (%) on the training split under each teacher.
CORPUS_STATS = {
    "MVSA-Single": {"train": 3608, "dev": 451, "test": 452, "train_g": 6483, "train_q": 6350, "acc_g": 79.7, "acc_q": 76.0},
    "MVSA-Multiple": {"train": 13619, "dev": 1702, "test": 1702, "train_g": 23424, "train_q": 23697, "acc_g": 72.0, "acc_q": 74.0},
    "Twitter-2015": {"train": 3179, "dev": 1122, "test": 1037, "train_g": 6166, "train_q": 6218, "acc_g": 94.0, "acc_q": 95.6},
    "Twitter-2017": {"train": 3562, "dev": 1176, "test": 1234, "train_g": 6652, "train_q": 6871, "acc_g": 86.8, "acc_q": 92.9},
}
COUNT_TOLERANCE = 3


def expected_full_size(n_train: int, assistant_accuracy: float) -> int:
    """Size of the merged training set: one teacher record per sample plus the assistant-correct subset."""
    return n_train + round(assistant_accuracy * n_train)


def count_consistency(n_train: int, assistant_accuracy: float, reported_total: int,
                      tolerance: int = COUNT_TOLERANCE) -> tuple[int, int, bool]:
    predicted = expected_full_size(n_train, assistant_accuracy)
    diff = predicted - reported_total
    return predicted, diff, abs(diff) <= tolerance


# ------------------------------------------------------------------ checkpoint


class Checkpoint:
    """Append-only log of finished per-sample outcomes for one stage."""

    def __init__(self, path: str | os.PathLike | None, stage: str):
        self.path = Path(path) if path is not None else None
        self.stage = stage
        self.done: dict[str, ReasoningRecord | ArcFailure] = {}
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    d = json.loads(line)
                    if d["stage"] != stage:
                        continue
                    if d["kind"] == "record":
                        self.done[d["sample_id"]] = ReasoningRecord.from_dict(d["payload"])
                    else:
                        self.done[d["sample_id"]] = ArcFailure(**d["payload"])

    def write(self, results: Sequence[tuple[str, ReasoningRecord | ArcFailure]]) -> None:
        for sid, res in results:
            self.done[sid] = res
        if self.path is None or not results:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            for sid, res in results:
                kind = "record" if isinstance(res, ReasoningRecord) else "failure"
                fh.write(json.dumps({"stage": self.stage, "sample_id": sid, "kind": kind,
                                     "payload": res.to_dict()}, ensure_ascii=False) + "\n")


def run_arc(samples: Iterable[Sample], stage: str, gateway, templates, policy: ArcPolicy,
            source: Source | None = None, checkpoint: Checkpoint | None = None):
    """ARC over samples in id order; concurrency bounded by the gateway cap."""
    ordered = sorted(samples, key=lambda s: s.id)
    ckpt = checkpoint or Checkpoint(None, stage)
    todo = [s for s in ordered if s.id not in ckpt.done]
    workers = max(1, gateway.cfg.max_in_flight)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, len(todo), CHECKPOINT_EVERY):
            chunk = todo[start:start + CHECKPOINT_EVERY]
            futures = [pool.submit(generate_with_arc, s, stage, gateway, templates, policy, source) for s in chunk]
            finished = []
            try:
                for s, fut in zip(chunk, futures):
                    finished.append((s.id, fut.result()))
            finally:
                ckpt.write(finished)
    return [(s, ckpt.done[s.id]) for s in ordered]


# --------------------------------------------------------------------- stages


@dataclass
class StageResult:
    dataset: ReasoningDataset
    rejected: list[Sample] = field(default_factory=list)
    failures: list[ArcFailure] = field(default_factory=list)


def run_stage1(corpus: Iterable[Sample], gateway, templates, policy: ArcPolicy = ArcPolicy(),
               checkpoint_path=None, name: str = "teacher_stage1") -> StageResult:
    """Label-free prediction; keep only records whose prediction matches gold.

    Mispredictions and ARC failures both go to ``rejected`` for stage 2.
    """
    kept, rejected, failures = [], [], []
    for sample, res in run_arc(corpus, PREDICT, gateway, templates, policy, Source.TEACHER_STAGE1,
                               Checkpoint(checkpoint_path, "stage1")):
        if isinstance(res, ArcFailure):
            failures.append(res)
            rejected.append(sample)
        elif res.predicted_label is sample.gold_label:
            kept.append((sample, res))
        else:
            rejected.append(sample)
    ds = ReasoningDataset(name, Role.TEACHER_STAGE1, kept,
                          {"operation": "stage1", "model": gateway.cfg.model_name, "max_attempts": policy.max_attempts})
    return StageResult(ds, rejected, failures)


def run_stage2(mispredicted: Iterable[Sample], gateway, templates, policy: ArcPolicy = ArcPolicy(),
               checkpoint_path=None, name: str = "teacher_stage2") -> StageResult:
    """Label-conditioned explanation for stage-1 rejects; ARC failures are quarantined."""
    kept, failures = [], []
    mismatches = 0
    for sample, res in run_arc(mispredicted, EXPLAIN, gateway, templates, policy, Source.TEACHER_STAGE2,
                               Checkpoint(checkpoint_path, "stage2")):
        if isinstance(res, ArcFailure):
            failures.append(res)
            continue
        emitted = parse(res.raw_response).label
        if emitted is not sample.gold_label:
            mismatches += 1
        kept.append((sample, res))
    ds = ReasoningDataset(name, Role.TEACHER_STAGE2, kept,
                          {"operation": "stage2", "model": gateway.cfg.model_name, "max_attempts": policy.max_attempts,
                           "label_mismatches": mismatches})
    return StageResult(ds, [], failures)


def check_train_only(samples: Iterable[Sample]) -> list[Sample]:
    samples = list(samples)
    leaked = [s.id for s in samples if s.split is not Split.TRAIN]
    if leaked:
        raise ValidationError(f"augmentation input must be train-split only; found non-train samples {leaked[:5]}")
    return samples


@dataclass
class AugmentResult:
    dataset: ReasoningDataset
    accuracy: float
    failures: list[ArcFailure] = field(default_factory=list)


def augment_with_assistant(train_corpus: Iterable[Sample], assistant_gateway, templates,
                           policy: ArcPolicy = ArcPolicy(), checkpoint_path=None,
                           name: str = "assistant_aug") -> AugmentResult:
    """Keep assistant generations whose predicted label is correct.

    Every sample must be from the train split; this is checked before the
    first endpoint call.  ARC failures count as incorrect for the accuracy.
    """
    samples = check_train_only(train_corpus)
    kept, failures = [], []
    for sample, res in run_arc(samples, PREDICT, assistant_gateway, templates, policy, Source.ASSISTANT,
                               Checkpoint(checkpoint_path, "augment")):
        if isinstance(res, ArcFailure):
            failures.append(res)
        elif res.predicted_label is sample.gold_label:
            kept.append((sample, res))
    acc = len(kept) / len(samples) if samples else 0.0
    ds = ReasoningDataset(name, Role.ASSISTANT_AUG, kept,
                          {"operation": "augment", "model": assistant_gateway.cfg.model_name,
                           "assistant_accuracy": round(acc, 6)})
    return AugmentResult(ds, acc, failures)


def teacher_union(d_t1: ReasoningDataset, d_t2: ReasoningDataset, name: str = "teacher_full") -> ReasoningDataset:
    return merge_datasets(d_t1, d_t2, name=name, role=Role.TEACHER_FULL)


def build_full(d_teacher: ReasoningDataset, d_assistant: ReasoningDataset, name: str = "full") -> ReasoningDataset:
    if d_teacher.role is not Role.TEACHER_FULL:
        raise ValidationError(f"teacher dataset has role {d_teacher.role.value}, expected teacher_full")
    if d_assistant.role is not Role.ASSISTANT_AUG:
        raise ValidationError(f"assistant dataset has role {d_assistant.role.value}, expected assistant_aug")
    full = merge_datasets(d_teacher, d_assistant, name=name, role=Role.FULL)
    full.leakage_check()
    return full


# --------------------------------------------------------------------- report


@dataclass
class BuildReport:
    corpus: str = ""
    n: int = 0
    n_t1: int = 0
    n_t2: int = 0
    quarantined_stage1: int = 0
    quarantined_stage2: int = 0
    stage2_label_mismatches: int = 0
    n_teacher: int = 0
    n_a: int = 0
    n_full: int = 0
    assistant_accuracy: float | None = None
    quarantine_count: int = 0
    calls: int = 0
    wall_clock_s: float = 0.0

    def check(self) -> None:
        if self.n_t1 + self.n_t2 + self.quarantined_stage2 != self.n:
            raise ValidationError(
                f"partition broken: {self.n_t1} + {self.n_t2} + {self.quarantined_stage2} != {self.n}")
        if self.n_full and self.n_full != self.n_teacher + self.n_a:
            raise ValidationError(f"full dataset size {self.n_full} != {self.n_teacher} + {self.n_a}")

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_clock_s")
        return d

    def table(self) -> str:
        cols = ["Dataset", "Train", "Stage-1", "Stage-2", "Quarantine", "Asst acc", "Asst kept", "Train+"]
        acc = "n/a" if self.assistant_accuracy is None else f"{100 * self.assistant_accuracy:.1f}"
        row = [self.corpus or "-", str(self.n), str(self.n_t1), str(self.n_t2), str(self.quarantined_stage2),
               acc, str(self.n_a), str(self.n_full) if self.n_full else "n/a"]
        return format_table(cols, [row])


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) if i else str(c).ljust(w)  # noqa: E731
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), sep, *(line(r) for r in rows)]) + "\n"


def write_quarantine(failures: Iterable[ArcFailure], path: str | os.PathLike) -> int:
    failures = sorted(failures, key=lambda f: (f.stage, f.sample_id))
    with open(path, "w", encoding="utf-8") as fh:
        for f in failures:
            fh.write(json.dumps(f.to_dict(), ensure_ascii=False) + "\n")
    return len(failures)


@dataclass
class SynthesisRun:
    """Everything produced by stage 1 + stage 2 over one corpus."""

    stage1: StageResult
    stage2: StageResult
    teacher: ReasoningDataset
    report: BuildReport


def synthesize(corpus: Sequence[Sample], gateway, templates, policy: ArcPolicy = ArcPolicy(),
               checkpoint_dir=None, corpus_name: str = "") -> SynthesisRun:
    t0 = time.perf_counter()
    calls0 = gateway.stats.calls
    ck = (lambda n: Path(checkpoint_dir) / f"{n}.ckpt.jsonl") if checkpoint_dir else (lambda n: None)
    s1 = run_stage1(corpus, gateway, templates, policy, ck("stage1"))
    s2 = run_stage2(s1.rejected, gateway, templates, policy, ck("stage2"))
    teacher = teacher_union(s1.dataset, s2.dataset)
    report = BuildReport(
        corpus=corpus_name,
        n=len(corpus),
        n_t1=len(s1.dataset),
        n_t2=len(s2.dataset),
        quarantined_stage1=len(s1.failures),
        quarantined_stage2=len(s2.failures),
        stage2_label_mismatches=s2.dataset.provenance.get("label_mismatches", 0),
        n_teacher=len(teacher),
        quarantine_count=len(s2.failures),
        calls=gateway.stats.calls - calls0,
        wall_clock_s=time.perf_counter() - t0,
    )
    report.check()
    return SynthesisRun(s1, s2, teacher, report)

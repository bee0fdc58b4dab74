"""Parse model responses into reasoning chains and run the bounded regeneration loop.

A valid response carries the four section headers in order, each with a
non-empty body, and ends with exactly one ``Sentiment: <label>`` line.
Headers are matched case-insensitively and may be decorated with markdown
(``#``, ``*``, ``-``, leading whitespace).
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .core import (
    NA_SENTINEL,
    ReasoningChain,
    ReasoningRecord,
    Sample,
    SentimentLabel,
    Source,
    ValidationError,
)
from .prompts import EXPLAIN, PREDICT, SECTION_HEADERS, render

log = logging.getLogger(__name__)

SECTION_NAMES = ReasoningChain.SECTIONS
_DECOR = r"[\s#*>\-_`]*"


def _header_pattern(header: str) -> re.Pattern:
    words = r"\s+".join(map(re.escape, header.rstrip(":").split()))
    return re.compile(rf"^{_DECOR}{words}{_DECOR}:(?:\s*[*_]+)?\s*(.*)$", re.IGNORECASE)


_HEADER_RE = [_header_pattern(h) for h in SECTION_HEADERS]
_LABEL_RE = re.compile(rf"^{_DECOR}sentiment(?:\s+label)?{_DECOR}:\s*(.*)$", re.IGNORECASE)
_TOKEN_STRIP = " \t*_`'\"<>[]().,;!"

RETRY_TEMPERATURE = 0.7


@dataclass(frozen=True)
class Defect:
    kind: str  # missing_section | empty_section | duplicate_section | section_order | missing_label | invalid_label | multiple_labels | label_not_terminal | na_image_analysis
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.detail})" if self.detail else self.kind


@dataclass(frozen=True)
class ParseOutcome:
    chain: ReasoningChain | None = None
    label: SentimentLabel | None = None
    defects: tuple[Defect, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.defects

    def kinds(self) -> set[str]:
        return {d.kind for d in self.defects}


def _match_header(line: str) -> tuple[int, str] | None:
    for i, rx in enumerate(_HEADER_RE):
        m = rx.match(line)
        if m:
            return i, m.group(1)
    return None


def parse(raw: str) -> ParseOutcome:
    """Parse one raw response.  Never raises; problems come back as defects."""
    lines = raw.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    bodies: dict[int, list[str]] = {}
    order: list[int] = []
    label_lines: list[tuple[int, str]] = []
    current: int | None = None
    defects: list[Defect] = []

    for lineno, line in enumerate(lines):
        lm = _LABEL_RE.match(line)
        if lm:
            label_lines.append((lineno, lm.group(1)))
            current = None
            continue
        hm = _match_header(line)
        if hm:
            idx, rest = hm
            if idx in bodies:
                defects.append(Defect("duplicate_section", SECTION_NAMES[idx]))
            else:
                bodies[idx] = []
                order.append(idx)
            current = idx
            if rest.strip():
                bodies[idx].append(rest)
            continue
        if current is not None:
            bodies[current].append(line)

    for idx, name in enumerate(SECTION_NAMES):
        if idx not in bodies:
            defects.append(Defect("missing_section", name))
        elif not "\n".join(bodies[idx]).strip():
            defects.append(Defect("empty_section", name))
    if order != sorted(order):
        defects.append(Defect("section_order", ",".join(SECTION_NAMES[i] for i in order)))

    label = None
    if not label_lines:
        defects.append(Defect("missing_label"))
    elif len(label_lines) > 1:
        defects.append(Defect("multiple_labels", str(len(label_lines))))
    else:
        lineno, token = label_lines[0]
        token = token.strip(_TOKEN_STRIP)
        try:
            label = SentimentLabel.parse(token)
        except ValidationError:
            defects.append(Defect("invalid_label", token))
        trailing = [ln for ln in lines[lineno + 1:] if ln.strip(_TOKEN_STRIP + "\n")]
        if trailing:
            defects.append(Defect("label_not_terminal"))

    if defects:
        return ParseOutcome(defects=tuple(defects))
    chain = ReasoningChain(*("\n".join(bodies[i]).strip() for i in range(len(SECTION_NAMES))))
    return ParseOutcome(chain=chain, label=label)


def format_response(chain: ReasoningChain, label: SentimentLabel) -> str:
    """Canonical textual form of a chain; ``parse`` inverts it."""
    parts = [f"{h} {getattr(chain, n)}" for h, n in zip(SECTION_HEADERS, SECTION_NAMES)]
    parts.append(f"Sentiment: {SentimentLabel.parse(label).value}")
    return "\n".join(parts)


# ----------------------------------------------------------------------- ARC


@dataclass(frozen=True)
class ArcPolicy:
    max_attempts: int = 3
    retry_temperature: float = RETRY_TEMPERATURE

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("ArcPolicy.max_attempts must be >= 1")


@dataclass
class ArcFailure:
    sample_id: str
    stage: str
    source: str
    attempts: int
    responses: list[str] = field(default_factory=list)
    defects: list[list[str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "stage": self.stage,
            "source": self.source,
            "attempts": self.attempts,
            "responses": self.responses,
            "defects": self.defects,
        }


def _default_source(stage: str) -> Source:
    return Source.TEACHER_STAGE2 if stage == EXPLAIN else Source.TEACHER_STAGE1


def check_outcome(outcome: ParseOutcome, sample: Sample) -> ParseOutcome:
    """Sample-dependent validity on top of the grammar."""
    if outcome.ok and sample.image_ref and outcome.chain.image_analysis.strip() == NA_SENTINEL:
        return ParseOutcome(defects=(Defect("na_image_analysis"),))
    return outcome


def generate_with_arc(sample: Sample, stage: str, gateway, templates, policy: ArcPolicy = ArcPolicy(),
                      source: Source | None = None) -> ReasoningRecord | ArcFailure:
    """Query the endpoint until a response parses or ``policy.max_attempts`` is hit.

    The prompt never changes between attempts.  When the endpoint decodes
    greedily, retries switch to ``policy.retry_temperature`` and a shifted
    seed so a regenerated answer can differ from the first one.
    """
    if stage not in (PREDICT, EXPLAIN):
        raise ValueError(f"unknown stage {stage!r}")
    source = Source(source) if source is not None else _default_source(stage)
    prompt = render(sample, templates, stage)
    base_temp = gateway.cfg.temperature
    failure = ArcFailure(sample.id, stage, source.value, 0)
    for attempt in range(1, policy.max_attempts + 1):
        if attempt == 1:
            raw = gateway.complete(prompt)
        else:
            temp = policy.retry_temperature if base_temp == 0 else base_temp
            raw = gateway.complete(prompt, temperature=temp, seed=gateway.cfg.seed + attempt - 1)
        outcome = check_outcome(parse(raw), sample)
        failure.attempts = attempt
        if outcome.ok:
            label = outcome.label
            if stage == EXPLAIN and label is not sample.gold_label:
                log.warning("sample %s: explain output says %s, keeping gold %s", sample.id, label.value,
                            sample.gold_label.value)
                label = sample.gold_label
            return ReasoningRecord(sample.id, outcome.chain, label, source, attempt, raw)
        failure.responses.append(raw)
        failure.defects.append([str(d) for d in outcome.defects])
        log.info("sample %s attempt %d rejected: %s", sample.id, attempt, ", ".join(map(str, outcome.defects)))
    return failure

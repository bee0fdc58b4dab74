"""Domain types and JSON Lines persistence for samples and reasoning datasets."""
from __future__ import annotations

import enum
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class CotforgeError(Exception):
    """Base class for all package errors."""


class ParseError(CotforgeError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(CotforgeError):
    pass


class ConflictError(CotforgeError):
    def __init__(self, collisions: Sequence[tuple[str, str]]):
        self.collisions = list(collisions)
        shown = ", ".join(f"({sid}, {src})" for sid, src in self.collisions[:10])
        more = "" if len(self.collisions) <= 10 else f" ... (+{len(self.collisions) - 10})"
        super().__init__(f"overlapping (sample_id, source) pairs: {shown}{more}")


class SentimentLabel(str, enum.Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"

    @classmethod
    def parse(cls, value: "str | SentimentLabel") -> "SentimentLabel":
        if isinstance(value, SentimentLabel):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"invalid sentiment label: {value!r}") from None

    @property
    def index(self) -> int:
        return _LABEL_ORDER.index(self)

    @classmethod
    def from_index(cls, i: int) -> "SentimentLabel":
        return _LABEL_ORDER[i]

    def __lt__(self, other):  # fixed order used only for tie-breaking
        if not isinstance(other, SentimentLabel):
            return NotImplemented
        return self.index < other.index

    def __str__(self) -> str:
        return self.value


_LABEL_ORDER = (SentimentLabel.NEGATIVE, SentimentLabel.NEUTRAL, SentimentLabel.POSITIVE)
LABELS = _LABEL_ORDER


class Split(str, enum.Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class Source(str, enum.Enum):
    TEACHER_STAGE1 = "teacher_stage1"
    TEACHER_STAGE2 = "teacher_stage2"
    ASSISTANT = "assistant"


class Role(str, enum.Enum):
    TEACHER_STAGE1 = "teacher_stage1"
    TEACHER_STAGE2 = "teacher_stage2"
    TEACHER_FULL = "teacher_full"
    ASSISTANT_AUG = "assistant_aug"
    FULL = "full"


NA_SENTINEL = "N/A"


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    gold_label: SentimentLabel
    split: Split = Split.TRAIN
    image_ref: str | None = None
    aspect: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("sample id must be non-empty")
        if not self.text or not self.text.strip():
            raise ValidationError(f"sample {self.id!r}: text is empty")
        object.__setattr__(self, "gold_label", SentimentLabel.parse(self.gold_label))
        split = self.split.value if isinstance(self.split, Split) else str(self.split).strip().lower()
        try:
            object.__setattr__(self, "split", Split(split))
        except ValueError:
            raise ValidationError(f"sample {self.id!r}: invalid split {self.split!r}") from None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "image_ref": self.image_ref,
            "aspect": self.aspect,
            "gold_label": self.gold_label.value,
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Sample":
        missing = [k for k in ("id", "text", "gold_label", "split") if k not in d]
        if missing:
            raise ValidationError(f"sample record missing fields: {', '.join(missing)}")
        return cls(
            id=str(d["id"]),
            text=d["text"],
            gold_label=d["gold_label"],
            split=d["split"],
            image_ref=d.get("image_ref"),
            aspect=d.get("aspect"),
        )


@dataclass(frozen=True)
class ReasoningChain:
    text_analysis: str
    image_analysis: str
    conflict_resolution: str
    conclusion: str

    SECTIONS = ("text_analysis", "image_analysis", "conflict_resolution", "conclusion")

    def validate(self, text_only: bool = False) -> None:
        for name in self.SECTIONS:
            value = getattr(self, name)
            if not value or not value.strip():
                raise ValidationError(f"reasoning section {name} is empty")
        if self.image_analysis.strip() == NA_SENTINEL and not text_only:
            raise ValidationError("image_analysis may be N/A only for text-only corpora")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.SECTIONS}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReasoningChain":
        return cls(**{name: d[name] for name in cls.SECTIONS})

    def as_text(self) -> str:
        """Flattened chain used as the reasoning target and metric reference."""
        return " ".join(getattr(self, name) for name in self.SECTIONS)


@dataclass(frozen=True)
class ReasoningRecord:
    sample_id: str
    chain: ReasoningChain
    predicted_label: SentimentLabel
    source: Source
    attempts: int = 1
    raw_response: str = ""

    def __post_init__(self):
        object.__setattr__(self, "predicted_label", SentimentLabel.parse(self.predicted_label))
        object.__setattr__(self, "source", Source(self.source))
        if self.attempts < 1:
            raise ValidationError(f"record {self.sample_id!r}: attempts must be >= 1")

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "chain": self.chain.to_dict(),
            "predicted_label": self.predicted_label.value,
            "source": self.source.value,
            "attempts": self.attempts,
            "raw_response": self.raw_response,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReasoningRecord":
        return cls(
            sample_id=str(d["sample_id"]),
            chain=ReasoningChain.from_dict(d["chain"]),
            predicted_label=d["predicted_label"],
            source=d["source"],
            attempts=int(d["attempts"]),
            raw_response=d.get("raw_response", ""),
        )


Entry = tuple  # (Sample, ReasoningRecord)


def _entry_key(entry) -> tuple[str, str]:
    return entry[1].sample_id, entry[1].source.value


@dataclass(frozen=True)
class ReasoningDataset:
    """Role-tagged, canonically ordered collection of (Sample, ReasoningRecord) pairs.

    Entries are sorted by ``(sample_id, source)`` on construction.  Equality
    compares name, role and entries; provenance is metadata and ignored.
    """

    name: str
    role: Role
    entries: tuple = ()
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=_entry_key)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def samples(self) -> list[Sample]:
        return [s for s, _ in self.entries]

    def keys(self) -> set[tuple[str, str]]:
        return {_entry_key(e) for e in self.entries}

    def validate(self, max_attempts: int | None = None) -> None:
        seen = set()
        for sample, rec in self.entries:
            if rec.sample_id != sample.id:
                raise ValidationError(f"record sample_id {rec.sample_id!r} does not match sample {sample.id!r}")
            key = (rec.sample_id, rec.source.value)
            if key in seen:
                raise ValidationError(f"duplicate entry {key}")
            seen.add(key)
            if max_attempts is not None and rec.attempts > max_attempts:
                raise ValidationError(f"record {rec.sample_id!r}: attempts {rec.attempts} exceeds limit {max_attempts}")
            if rec.source is Source.TEACHER_STAGE2 and rec.predicted_label is not sample.gold_label:
                raise ValidationError(f"stage-2 record {rec.sample_id!r} is not label-conditioned")
            if self.role in (Role.TEACHER_STAGE1, Role.ASSISTANT_AUG) and rec.predicted_label is not sample.gold_label:
                raise ValidationError(f"{self.role.value} entry {rec.sample_id!r} has predicted != gold")
            if self.role is Role.ASSISTANT_AUG and sample.split is not Split.TRAIN:
                raise ValidationError(f"assistant_aug entry {rec.sample_id!r} is from split {sample.split.value}")
        expected = _ROLE_SOURCES.get(self.role)
        if expected is not None:
            bad = [rec.sample_id for _, rec in self.entries if rec.source not in expected]
            if bad:
                raise ValidationError(f"role {self.role.value} cannot hold sources of entries {bad[:5]}")

    def leakage_check(self) -> None:
        """Training datasets must not contain dev/test samples."""
        leaked = [s.id for s, _ in self.entries if s.split is not Split.TRAIN]
        if leaked:
            raise ValidationError(f"dataset {self.name!r} contains non-train samples: {leaked[:5]}")

    def with_role(self, role: Role, name: str | None = None, **provenance) -> "ReasoningDataset":
        prov = dict(self.provenance)
        prov.update(provenance)
        return ReasoningDataset(name or self.name, role, self.entries, prov)


_ROLE_SOURCES = {
    Role.TEACHER_STAGE1: {Source.TEACHER_STAGE1},
    Role.TEACHER_STAGE2: {Source.TEACHER_STAGE2},
    Role.TEACHER_FULL: {Source.TEACHER_STAGE1, Source.TEACHER_STAGE2},
    Role.ASSISTANT_AUG: {Source.ASSISTANT},
}


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def entry_to_dict(entry) -> dict:
    sample, rec = entry
    return {"sample": sample.to_dict(), "record": rec.to_dict()}


# ---------------------------------------------------------------- corpus I/O


@dataclass
class Corpus:
    samples: list[Sample]
    fine_grained: bool

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(s.split.value for s in self.samples)
        return {sp.value: c.get(sp.value, 0) for sp in Split}

    def split(self, which: Split | str) -> list[Sample]:
        which = Split(which)
        return [s for s in self.samples if s.split is which]

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def check_corpus(samples: Iterable[Sample], fine_grained: bool) -> list[Sample]:
    samples = list(samples)
    seen: set[str] = set()
    for s in samples:
        if s.id in seen:
            raise ValidationError(f"duplicate sample id {s.id!r}")
        seen.add(s.id)
        has_aspect = s.aspect is not None and s.aspect.strip() != ""
        if has_aspect != fine_grained:
            kind = "fine-grained" if fine_grained else "coarse-grained"
            raise ValidationError(f"sample {s.id!r}: aspect presence inconsistent with {kind} corpus")
    return samples


def load_corpus(path: str | os.PathLike, fine_grained: bool = False) -> Corpus:
    """Read a JSON Lines corpus of sample records."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
            if not isinstance(d, dict):
                raise ParseError("record is not a JSON object", lineno)
            try:
                samples.append(Sample.from_dict(d))
            except (ValidationError, TypeError) as exc:
                raise ParseError(str(exc), lineno) from None
    return Corpus(check_corpus(samples, fine_grained), fine_grained)


def save_corpus(samples: Iterable[Sample], path: str | os.PathLike) -> int:
    data = "".join(_dumps(s.to_dict()) + "\n" for s in samples).encode("utf-8")
    Path(path).write_bytes(data)
    return len(data)


# --------------------------------------------------------------- dataset I/O


def meta_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def dump_dataset(ds: ReasoningDataset) -> bytes:
    return "".join(_dumps(entry_to_dict(e)) + "\n" for e in ds.entries).encode("utf-8")


def save_dataset(ds: ReasoningDataset, path: str | os.PathLike, max_attempts: int | None = None) -> int:
    """Write ``ds`` as JSON Lines plus a ``.meta.json`` header sidecar.

    The dataset is validated first; nothing is written if it violates its role
    invariants.  Returns the number of bytes in the data file.
    """
    ds.validate(max_attempts)
    if ds.role in (Role.ASSISTANT_AUG, Role.FULL, Role.TEACHER_FULL, Role.TEACHER_STAGE1, Role.TEACHER_STAGE2):
        ds.leakage_check()
    path = Path(path)
    if not path.parent.is_dir():
        raise OSError(f"parent directory does not exist: {path.parent}")
    data = dump_dataset(ds)
    header = {
        "format": "cotforge.reasoning_dataset",
        "version": 1,
        "name": ds.name,
        "role": ds.role.value,
        "count": len(ds),
        "provenance": ds.provenance,
    }
    _atomic_write(path, data)
    _atomic_write(meta_path(path), (json.dumps(header, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8"))
    return len(data)


def load_dataset(path: str | os.PathLike) -> ReasoningDataset:
    path = Path(path)
    mp = meta_path(path)
    if not mp.exists():
        raise ParseError(f"missing header sidecar {mp}")
    header = json.loads(mp.read_text(encoding="utf-8"))
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                entries.append((Sample.from_dict(d["sample"]), ReasoningRecord.from_dict(d["record"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValidationError, ValueError) as exc:
                raise ParseError(f"bad dataset entry ({exc})", lineno) from None
    if len(entries) != header.get("count", len(entries)):
        raise ParseError(f"header count {header['count']} != {len(entries)} entries in {path}")
    ds = ReasoningDataset(header["name"], header["role"], entries, header.get("provenance", {}))
    ds.validate()
    return ds


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# ------------------------------------------------------------------- merging

_UNION_ROLES = {
    frozenset({Role.TEACHER_STAGE1, Role.TEACHER_STAGE2}): Role.TEACHER_FULL,
    frozenset({Role.TEACHER_FULL, Role.ASSISTANT_AUG}): Role.FULL,
}


def union_role(a: Role, b: Role) -> Role:
    if a == b:
        return a
    try:
        return _UNION_ROLES[frozenset({a, b})]
    except KeyError:
        raise ValidationError(f"no union semantics for roles {a.value} + {b.value}") from None


def merge_datasets(a: ReasoningDataset, b: ReasoningDataset, name: str | None = None,
                   role: Role | None = None) -> ReasoningDataset:
    """Disjoint union of two datasets; the result role follows the union table.

    An empty operand does not constrain the role: merging an empty dataset
    returns the other side's entries under the union role when one exists.
    """
    collisions = sorted(a.keys() & b.keys())
    if collisions:
        raise ConflictError(collisions)
    if role is None:
        try:
            role = union_role(a.role, b.role)
        except ValidationError:
            if not len(a):
                role = b.role
            elif not len(b):
                role = a.role
            else:
                raise
    prov = {
        "operation": "merge",
        "parents": [
            {"name": a.name, "role": a.role.value, "count": len(a)},
            {"name": b.name, "role": b.role.value, "count": len(b)},
        ],
    }
    out = ReasoningDataset(name or f"{a.name}+{b.name}", role, a.entries + b.entries, prov)
    out.validate()
    return out

"""Two-stage prompt construction: a shared basic template plus predict/explain instructions."""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import CotforgeError, LABELS, Sample

SECTION_HEADERS = ("Text Analysis:", "Image Analysis:", "Conflict Resolution:", "Conclusion:")
LABEL_LINE_PREFIX = "Sentiment:"

PREDICT = "predict"
EXPLAIN = "explain"

_PLACEHOLDER = re.compile(r"\{(text|aspect|gold_label)\}")


class ConfigurationError(CotforgeError):
    pass


class TemplateError(ConfigurationError):
    pass


@dataclass(frozen=True)
class BasicTemplate:
    task_description: str
    sentiment_definition: str
    reasoning_format: str
    fine_grained: bool = False

    def __post_init__(self):
        pos = []
        for header in SECTION_HEADERS:
            n = self.reasoning_format.count(header)
            if n != 1:
                raise TemplateError(f"reasoning format must name {header!r} exactly once (found {n})")
            pos.append(self.reasoning_format.index(header))
        if pos != sorted(pos):
            raise TemplateError("reasoning format sections are out of order")
        if LABEL_LINE_PREFIX not in self.reasoning_format:
            raise TemplateError(f"reasoning format must instruct a final {LABEL_LINE_PREFIX!r} line")

    def render(self) -> str:
        return (
            "### Task Description\n" + self.task_description.strip() + "\n\n"
            "### Sentiment Definition\n" + self.sentiment_definition.strip() + "\n\n"
            "### Reasoning Format\n" + self.reasoning_format.strip() + "\n"
        )


@dataclass(frozen=True)
class TemplateSet:
    base: BasicTemplate
    predict: str
    explain: str

    def __post_init__(self):
        _check_placeholders(self.predict, "predict", self.base.fine_grained, gold=False)
        _check_placeholders(self.explain, "explain", self.base.fine_grained, gold=True)

    @property
    def fine_grained(self) -> bool:
        return self.base.fine_grained


@dataclass(frozen=True)
class RenderedPrompt:
    system_text: str
    user_text: str
    stage: str
    image_ref: str | None = None

    def messages(self) -> list[dict]:
        """OpenAI-style chat messages; the image travels as its own content part."""
        if self.image_ref:
            content = [
                {"type": "text", "text": self.user_text},
                {"type": "image_url", "image_url": {"url": self.image_ref}},
            ]
        else:
            content = self.user_text
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": content},
        ]


def _check_placeholders(text: str, name: str, fine_grained: bool, gold: bool) -> None:
    found = _PLACEHOLDER.findall(text)
    if found.count("text") != 1:
        raise TemplateError(f"{name} template needs exactly one {{text}} placeholder")
    if fine_grained and found.count("aspect") != 1:
        raise TemplateError(f"fine-grained {name} template needs exactly one {{aspect}} placeholder")
    if not fine_grained and "aspect" in found:
        raise TemplateError(f"coarse {name} template must not use {{aspect}}")
    if gold and found.count("gold_label") != 1:
        raise TemplateError(f"{name} template needs exactly one {{gold_label}} placeholder")
    if not gold and "gold_label" in found:
        raise TemplateError(f"{name} template must not reveal {{gold_label}}")
    for label in LABELS:
        if re.search(rf"\b{label.value}\b", _PLACEHOLDER.sub("", text), re.IGNORECASE):
            raise TemplateError(f"{name} template mentions label word {label.value!r} outside placeholders")


def _fill(template: str, values: dict[str, str]) -> str:
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def _read_asset(directory: Path | None, name: str) -> str:
    if directory is not None:
        return (Path(directory) / name).read_text(encoding="utf-8")
    return resources.files("cotforge").joinpath("templates", name).read_text(encoding="utf-8")


def load_templates(directory: str | Path | None = None, fine_grained: bool = False) -> TemplateSet:
    """Load template assets from ``directory`` (default: the bundled ones)."""
    d = Path(directory) if directory is not None else None
    suffix = "_fine" if fine_grained else ""
    try:
        base = BasicTemplate(
            task_description=_read_asset(d, f"task{'_fine' if fine_grained else '_coarse'}.txt"),
            sentiment_definition=_read_asset(d, "sentiment_definition.txt"),
            reasoning_format=_read_asset(d, "reasoning_format.txt"),
            fine_grained=fine_grained,
        )
        return TemplateSet(base, _read_asset(d, f"predict{suffix}.txt"), _read_asset(d, f"explain{suffix}.txt"))
    except FileNotFoundError as exc:
        raise TemplateError(f"missing template asset: {exc.filename}") from None


def _values(sample: Sample, templates: TemplateSet) -> dict[str, str]:
    if (sample.aspect is not None) != templates.fine_grained:
        kind = "fine-grained" if sample.aspect is not None else "coarse"
        raise ConfigurationError(f"{kind} sample {sample.id!r} does not match the loaded templates")
    return {"text": sample.text, "aspect": sample.aspect or ""}


def render_prediction(sample: Sample, templates: TemplateSet) -> RenderedPrompt:
    values = _values(sample, templates)
    return RenderedPrompt(templates.base.render(), _fill(templates.predict, values), PREDICT, sample.image_ref)


def render_explain(sample: Sample, templates: TemplateSet) -> RenderedPrompt:
    values = _values(sample, templates)
    values["gold_label"] = sample.gold_label.value
    return RenderedPrompt(templates.base.render(), _fill(templates.explain, values), EXPLAIN, sample.image_ref)


def render(sample: Sample, templates: TemplateSet, stage: str) -> RenderedPrompt:
    if stage == PREDICT:
        return render_prediction(sample, templates)
    if stage == EXPLAIN:
        return render_explain(sample, templates)
    raise ValueError(f"unknown stage {stage!r}")


def label_mentions(prompt: RenderedPrompt, sample: Sample) -> int:
    """Occurrences of the gold label in the instruction part of the user text.

    Mentions that come from the sample's own text or aspect are not counted.
    """
    pattern = re.compile(rf"\b{sample.gold_label.value}\b", re.IGNORECASE)
    own = len(pattern.findall(sample.text)) + len(pattern.findall(sample.aspect or ""))
    return len(pattern.findall(prompt.user_text)) - own

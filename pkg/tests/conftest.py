import pytest

from cotforge.core import ReasoningChain, Sample, SentimentLabel
from cotforge.gateway import EndpointConfig, Gateway, MockTransport
from cotforge.parsing import format_response
from cotforge.prompts import load_templates


def make_sample(i=0, label="positive", split="train", text=None, image=True, aspect=None):
    return Sample(
        id=f"s{i:04d}",
        text=text or f"post number {i}",
        gold_label=label,
        split=split,
        image_ref=f"img/{i}.jpg" if image else None,
        aspect=aspect,
    )


def chain(tag="x"):
    return ReasoningChain(f"text says {tag}", f"image shows {tag}", f"no conflict {tag}", f"so {tag}")


def good_response(label, tag="x"):
    return format_response(chain(tag), SentimentLabel.parse(label))


def scripted_gateway(script, **cfg):
    transport = MockTransport(script)
    cfg.setdefault("backoff_initial", 0.0)
    return Gateway(EndpointConfig(**cfg), transport, sleep=lambda s: None), transport


@pytest.fixture
def templates():
    return load_templates()


@pytest.fixture
def fine_templates():
    return load_templates(fine_grained=True)


# one summary line per acceptance criterion, filled from the call-phase reports
_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, title = marker.args
    if rep.when == "call" or rep.failed:
        _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")

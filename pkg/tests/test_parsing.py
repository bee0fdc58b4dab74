import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain, good_response, make_sample, scripted_gateway
from cotforge.core import ReasoningChain, SentimentLabel, Source
from cotforge.parsing import ArcFailure, ArcPolicy, format_response, generate_with_arc, parse
from cotforge.prompts import EXPLAIN, PREDICT

BODY = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789 .,!?'-\n", min_size=1, max_size=60).map(
    lambda s: s.strip()).filter(bool)


@settings(max_examples=300, deadline=None)
@given(BODY, BODY, BODY, BODY, st.sampled_from(list(SentimentLabel)))
def test_format_then_parse_roundtrips(a, b, c, d, label):
    ch = ReasoningChain(a, b, c, d)
    out = parse(format_response(ch, label))
    assert out.ok, out.defects
    assert out.chain == ch and out.label is label


def test_tolerates_markdown_decoration():
    raw = "**Text Analysis:** calm words\n## Image Analysis: a dog\n*Conflict Resolution*: none\n" \
          "Conclusion: fine\n**Sentiment:** Positive."
    out = parse(raw)
    assert out.ok and out.label is SentimentLabel.POSITIVE
    assert out.chain.text_analysis == "calm words"


@pytest.mark.parametrize("raw,kind", [
    (good_response("positive").replace("Image Analysis:", "Picture:"), "missing_section"),
    (good_response("positive").replace("image shows x", " "), "empty_section"),
    (good_response("positive").replace("Sentiment: positive", ""), "missing_label"),
    (good_response("positive").replace("Sentiment: positive", "Sentiment: mixed"), "invalid_label"),
    (good_response("positive") + "\nSentiment: negative", "multiple_labels"),
    (good_response("positive") + "\nthanks for reading", "label_not_terminal"),
    (good_response("positive") + "\nText Analysis: again", "duplicate_section"),
])
def test_defects_are_reported(raw, kind):
    out = parse(raw)
    assert not out.ok and kind in out.kinds()


def test_section_order_violation():
    ch = chain()
    raw = "\n".join([f"Image Analysis: {ch.image_analysis}", f"Text Analysis: {ch.text_analysis}",
                     f"Conflict Resolution: {ch.conflict_resolution}", f"Conclusion: {ch.conclusion}",
                     "Sentiment: neutral"])
    assert "section_order" in parse(raw).kinds()


def test_parse_never_raises_on_garbage():
    for raw in ["", "\n\n", "Sentiment:", "::::", "Text Analysis:\x00", "Sentiment: " + "x" * 1000]:
        assert not parse(raw).ok


BAD = good_response("positive").replace("Conflict Resolution:", "Notes:")


@pytest.mark.parametrize("script,expected_attempts", [
    ([good_response("positive")], 1),
    ([BAD, BAD, good_response("positive")], 3),
])
def test_arc_attempt_counts(templates, script, expected_attempts):
    gw, tr = scripted_gateway(script)
    res = generate_with_arc(make_sample(1, "positive"), PREDICT, gw, templates)
    assert res.attempts == expected_attempts and len(tr.requests) == expected_attempts


def test_arc_failure_after_budget(templates):
    gw, tr = scripted_gateway([BAD] * 3)
    res = generate_with_arc(make_sample(1), PREDICT, gw, templates, ArcPolicy(max_attempts=3))
    assert isinstance(res, ArcFailure)
    assert res.attempts == 3 and len(res.responses) == 3 and len(tr.requests) == 3


def test_retries_keep_prompt_and_vary_sampling(templates):
    gw, tr = scripted_gateway([BAD, BAD, good_response("neutral")])
    generate_with_arc(make_sample(1, "neutral"), PREDICT, gw, templates)
    bodies = [b for _, b in tr.requests]
    assert all(b["messages"] == bodies[0]["messages"] for b in bodies)
    assert [b["temperature"] for b in bodies] == [0.0, 0.7, 0.7]
    assert len({b["seed"] for b in bodies}) == 3


def test_na_image_analysis_rejected_when_image_present(templates):
    na = format_response(ReasoningChain("t", "N/A", "c", "d"), SentimentLabel.POSITIVE)
    gw, _ = scripted_gateway([na, na, na])
    assert isinstance(generate_with_arc(make_sample(1), PREDICT, gw, templates), ArcFailure)
    gw, _ = scripted_gateway([na])
    res = generate_with_arc(make_sample(1, image=False), PREDICT, gw, templates)
    assert res.chain.image_analysis == "N/A"


def test_explain_forces_gold_label(templates, caplog):
    gw, _ = scripted_gateway([good_response("negative")])
    res = generate_with_arc(make_sample(1, "positive"), EXPLAIN, gw, templates)
    assert res.predicted_label is SentimentLabel.POSITIVE and res.source is Source.TEACHER_STAGE2
    assert "keeping gold" in caplog.text

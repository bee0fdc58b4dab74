import pytest

from conftest import make_sample
from cotforge.prompts import (
    EXPLAIN,
    PREDICT,
    SECTION_HEADERS,
    BasicTemplate,
    ConfigurationError,
    TemplateError,
    TemplateSet,
    label_mentions,
    load_templates,
    render,
)


@pytest.mark.parametrize("label", ["negative", "neutral", "positive"])
def test_predict_prompt_never_reveals_gold(templates, label):
    s = make_sample(1, label, text="a quiet ride home")
    p = render(s, templates, PREDICT)
    assert label_mentions(p, s) == 0
    e = render(s, templates, EXPLAIN)
    assert label_mentions(e, s) == 1


def test_label_in_sample_text_is_not_counted(templates):
    s = make_sample(1, "positive", text="so positive about this")
    assert label_mentions(render(s, templates, PREDICT), s) == 0


def test_prompts_share_the_basic_template(templates):
    s = make_sample(1, "negative")
    p, e = render(s, templates, PREDICT), render(s, templates, EXPLAIN)
    assert p.system_text == e.system_text
    for h in SECTION_HEADERS:
        assert p.system_text.count(h) == 1


def test_image_travels_as_separate_part(templates):
    msgs = render(make_sample(1), templates, PREDICT).messages()
    parts = msgs[1]["content"]
    assert [x["type"] for x in parts] == ["text", "image_url"]
    text_only = render(make_sample(2, image=False), templates, PREDICT).messages()
    assert isinstance(text_only[1]["content"], str)


def test_fine_grained_prompts_differ_only_by_aspect(templates, fine_templates):
    coarse = make_sample(1, "neutral", text="the bus was late")
    fine = make_sample(1, "neutral", text="the bus was late", aspect="bus")
    pc = render(coarse, templates, PREDICT).user_text
    pf = render(fine, fine_templates, PREDICT).user_text
    extra = [ln for ln in pf.splitlines() if ln not in pc.splitlines()]
    assert extra == ["Aspect term: bus"]


def test_template_corpus_mismatch(templates, fine_templates):
    with pytest.raises(ConfigurationError):
        render(make_sample(1, aspect="bus"), templates, PREDICT)
    with pytest.raises(ConfigurationError):
        render(make_sample(1), fine_templates, PREDICT)


def test_invalid_templates_are_rejected(templates):
    base = templates.base
    with pytest.raises(TemplateError):
        BasicTemplate(base.task_description, base.sentiment_definition,
                      base.reasoning_format.replace("Conflict Resolution:", "Conflicts:"))
    with pytest.raises(TemplateError):
        TemplateSet(base, "Text: {text} gold {gold_label}", templates.explain)
    with pytest.raises(TemplateError):
        TemplateSet(base, "Text: {text} is it positive?", templates.explain)
    with pytest.raises(TemplateError):
        TemplateSet(base, templates.predict, "Text: {text}")


def test_missing_template_directory_asset(tmp_path):
    with pytest.raises(TemplateError):
        load_templates(tmp_path)

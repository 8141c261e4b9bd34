import json

import pytest
from hypothesis import given, strategies as st

from pagebench.geometry import BoundingBox
from pagebench import model
from pagebench.model import (
    BadOrder,
    DegradationLabel,
    EvaluationReport,
    Link,
    MetricScore,
    MissingField,
    SECTION_FIELDS,
    SectionEvaluation,
    SectionRecord,
    TokenUsage,
    UnknownField,
    WrongType,
    label_from_dict,
    parse_section_dict,
    report_from_dict,
    validate_section_json,
)

# Matches the section export format example: a CRM hero section.
EXAMPLE_SECTION = {
    "order": 1,
    "type": "section",
    "heading_h1": "Powerful CRM Platform",
    "heading_h2": "...",
    "heading_h3": "...",
    "heading_h4": "...",
    "heading_h5": "...",
    "heading_h6": "...",
    "body": "...",
    "html": "...",
    "bullets": ["Workflows", "Analytics"],
    "links": [{"label": "Start", "href": "/signup"}],
    "images": {"...": "images/section_01_img_01_hero.png"},
    "screenshot_path": "screenshots/element_01.png",
}


def test_example_section_parses():
    record = validate_section_json(json.dumps(EXAMPLE_SECTION))
    assert record.order == 1
    assert record.heading_h1 == "Powerful CRM Platform"
    assert record.bullets == ("Workflows", "Analytics")
    assert record.links == (Link("Start", "/signup"),)
    assert record.screenshot_path == "screenshots/element_01.png"


def test_missing_order_rejected():
    broken = {k: v for k, v in EXAMPLE_SECTION.items() if k != "order"}
    with pytest.raises(MissingField):
        validate_section_json(json.dumps(broken))


def test_wrong_typed_order_rejected():
    broken = dict(EXAMPLE_SECTION, order="one")
    with pytest.raises(WrongType):
        validate_section_json(json.dumps(broken))


def test_order_below_one_rejected():
    broken = dict(EXAMPLE_SECTION, order=0)
    with pytest.raises(BadOrder):
        validate_section_json(json.dumps(broken))


def test_unknown_field_strict_vs_lenient():
    extended = dict(EXAMPLE_SECTION, mystery=42)
    with pytest.raises(UnknownField):
        validate_section_json(json.dumps(extended))
    record = validate_section_json(json.dumps(extended), strict=False)
    assert dict(record.extra)["mystery"] == 42
    assert record.to_json_dict()["mystery"] == 42


def test_serialized_field_order_is_stable():
    record = parse_section_dict(EXAMPLE_SECTION)
    keys = list(record.to_json_dict().keys())
    assert tuple(keys[: len(SECTION_FIELDS)]) == SECTION_FIELDS
    assert keys[len(SECTION_FIELDS)] == "bbox"


def test_section_round_trip_byte_stable():
    record = parse_section_dict(dict(EXAMPLE_SECTION))
    once = model.dump_json(record.to_json_dict())
    again = model.dump_json(parse_section_dict(json.loads(once)).to_json_dict())
    assert once == again


texts = st.text(max_size=20)


@st.composite
def section_records(draw):
    return SectionRecord(
        order=draw(st.integers(1, 50)),
        type=draw(st.sampled_from(model.CONTAINER_TAGS)),
        heading_h1=draw(texts),
        body=draw(texts),
        html=draw(texts),
        bullets=tuple(draw(st.lists(texts, max_size=3))),
        links=tuple(
            Link(label, href)
            for label, href in draw(st.lists(st.tuples(texts, texts), max_size=3))
        ),
        images=tuple(
            (f"src{i}", f"images/img{i}.png") for i in range(draw(st.integers(0, 3)))
        ),
        screenshot_path=draw(texts),
        bbox=BoundingBox(
            draw(st.floats(0, 100)), draw(st.floats(0, 100)),
            draw(st.floats(0, 100)), draw(st.floats(0, 100)),
        ),
    )


@given(section_records())
def test_section_record_round_trip(record):
    assert parse_section_dict(record.to_json_dict()) == record


def _section_eval(number=1, score=5):
    return SectionEvaluation(
        section_number=number,
        section_name=f"Section {number}",
        description="d",
        scores=tuple(MetricScore(m, score, "r", "f") for m in model.METRICS),
    )


def test_metric_score_range_enforced():
    with pytest.raises(ValueError):
        MetricScore("TA", 6)
    with pytest.raises(ValueError):
        MetricScore("XX", 3)


def test_section_evaluation_requires_all_nine():
    with pytest.raises(ValueError):
        SectionEvaluation(
            section_number=1,
            section_name="s",
            description="",
            scores=tuple(MetricScore(m, 5) for m in model.METRICS[:-1]),
        )


def test_report_round_trip():
    report = EvaluationReport(
        page_id="p1",
        setting="zero_shot",
        sections=(_section_eval(1, 4), _section_eval(2, 5)),
        evaluator_model="mock",
        token_usage=TokenUsage(10, 20),
    )
    assert report_from_dict(report.to_dict()) == report


def test_report_requires_ordered_sections():
    with pytest.raises(ValueError):
        EvaluationReport(
            page_id="p",
            setting="zero_shot",
            sections=(_section_eval(2), _section_eval(1)),
        )


def test_degradation_label_round_trip():
    label = DegradationLabel("p1", 3, "media", "img width forced to 3:1")
    assert label_from_dict(label.to_dict()) == label
    with pytest.raises(ValueError):
        DegradationLabel("p1", 1, "audio", "x")


def test_style_metadata_hex_validation():
    with pytest.raises(ValueError):
        model.StyleMetadata(palette=("red",))
    meta = model.StyleMetadata(palette=("#FFAA00",), font_families=("serif",))
    assert model.style_metadata_from_dict(meta.to_dict()) == meta

import json
from pathlib import Path

import pytest

jsonschema = pytest.importorskip("jsonschema")

from pagebench import schemas
from pagebench.geometry import BoundingBox
from pagebench.model import (
    DegradationLabel,
    EvaluationReport,
    METRICS,
    MetricScore,
    SectionEvaluation,
    SectionRecord,
)

REPO_SCHEMAS = Path(__file__).resolve().parents[1] / "schemas"


def test_published_files_match_definitions():
    for name, schema in schemas.ALL_SCHEMAS.items():
        published = json.loads((REPO_SCHEMAS / name).read_text(encoding="utf-8"))
        assert published == schema, f"{name} is out of sync; regenerate with schemas.publish()"


def test_section_record_validates_against_schema():
    record = SectionRecord(
        order=1,
        type="section",
        heading_h1="T",
        bullets=("a",),
        images=(("x.png", "images/section_01_img_01_x.png"),),
        screenshot_path="screenshots/element_01.png",
        bbox=BoundingBox(0, 0, 100, 50),
    )
    jsonschema.validate(record.to_json_dict(), schemas.SECTION_RECORD_SCHEMA)


def test_evaluation_report_validates_against_schema():
    report = EvaluationReport(
        page_id="p",
        setting="zero_shot",
        sections=(
            SectionEvaluation(
                section_number=1,
                section_name="S",
                description="",
                scores=tuple(MetricScore(m, 5, "r", "f") for m in METRICS),
            ),
        ),
        evaluator_model="mock",
    )
    jsonschema.validate(report.to_dict(), schemas.EVALUATION_REPORT_SCHEMA)


def test_degradation_label_validates_against_schema():
    label = DegradationLabel("p", 2, "layout", "margin")
    jsonschema.validate(label.to_dict(), schemas.DEGRADATION_LABEL_SCHEMA)


def test_schema_rejects_out_of_range_score():
    payload = {
        "page_id": "p",
        "setting": "zero_shot",
        "sections": [
            {
                "section_number": 1,
                **{m: {"score": 6} for m in METRICS},
            }
        ],
    }
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(payload, schemas.EVALUATION_REPORT_SCHEMA)

"""Published JSON Schemas for the pipeline's wire formats.

Every stage reads and writes exactly these shapes; the copies under the
repository's ``schemas/`` directory are generated from here.
"""

from __future__ import annotations

import json
from pathlib import Path

from .model import ASSET_CATEGORIES, DEGRADATION_CATEGORIES, EVAL_SETTINGS, METRICS

_BBOX = {
    "type": "object",
    "properties": {
        "x": {"type": "number"},
        "y": {"type": "number"},
        "width": {"type": "number", "minimum": 0},
        "height": {"type": "number", "minimum": 0},
    },
    "required": ["x", "y", "width", "height"],
    "additionalProperties": False,
}

SECTION_RECORD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SectionRecord",
    "type": "object",
    "properties": {
        "order": {"type": "integer", "minimum": 1},
        "type": {"type": "string"},
        "heading_h1": {"type": "string"},
        "heading_h2": {"type": "string"},
        "heading_h3": {"type": "string"},
        "heading_h4": {"type": "string"},
        "heading_h5": {"type": "string"},
        "heading_h6": {"type": "string"},
        "body": {"type": "string"},
        "html": {"type": "string"},
        "bullets": {"type": "array", "items": {"type": "string"}},
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"label": {"type": "string"}, "href": {"type": "string"}},
                "required": ["label", "href"],
                "additionalProperties": False,
            },
        },
        "images": {"type": "object", "additionalProperties": {"type": "string"}},
        "screenshot_path": {"type": "string"},
        "bbox": _BBOX,
    },
    "required": [
        "order",
        "type",
        "heading_h1",
        "heading_h2",
        "heading_h3",
        "heading_h4",
        "heading_h5",
        "heading_h6",
        "body",
        "html",
        "bullets",
        "links",
        "images",
        "screenshot_path",
    ],
    "additionalProperties": False,
}

_METRIC_ENTRY = {
    "type": "object",
    "properties": {
        "score": {"type": "integer", "minimum": 1, "maximum": 5},
        "reason": {"type": "string"},
        "feedback": {"type": "string"},
    },
    "required": ["score"],
    "additionalProperties": False,
}

EVALUATION_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "EvaluationReport",
    "type": "object",
    "properties": {
        "page_id": {"type": "string"},
        "setting": {"enum": list(EVAL_SETTINGS)},
        "sections": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "section_number": {"type": "integer", "minimum": 1},
                    "section_name": {"type": "string"},
                    "description": {"type": "string"},
                    **{metric: _METRIC_ENTRY for metric in METRICS},
                },
                "required": ["section_number", *METRICS],
                "additionalProperties": False,
            },
        },
        "evaluator_model": {"type": "string"},
        "token_usage": {
            "type": "object",
            "properties": {
                "input_tokens": {"type": "integer", "minimum": 0},
                "output_tokens": {"type": "integer", "minimum": 0},
            },
            "required": ["input_tokens", "output_tokens"],
            "additionalProperties": False,
        },
    },
    "required": ["page_id", "setting", "sections"],
    "additionalProperties": False,
}

DEGRADATION_LABEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "DegradationLabel",
    "type": "object",
    "properties": {
        "page_id": {"type": "string"},
        "section_order": {"type": "integer", "minimum": 1},
        "category": {"enum": list(DEGRADATION_CATEGORIES)},
        "transform": {"type": "string"},
    },
    "required": ["page_id", "section_order", "category", "transform"],
    "additionalProperties": False,
}

ALL_SCHEMAS = {
    "section_record.schema.json": SECTION_RECORD_SCHEMA,
    "evaluation_report.schema.json": EVALUATION_REPORT_SCHEMA,
    "degradation_label.schema.json": DEGRADATION_LABEL_SCHEMA,
}

# Asset category vocabulary is referenced by docs/tests even though assets
# have no standalone published schema.
ASSET_CATEGORY_VALUES = list(ASSET_CATEGORIES)


def publish(directory: str | Path) -> list[Path]:
    """Write all schema files into ``directory``; returns written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, schema in ALL_SCHEMAS.items():
        path = directory / name
        path.write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written

"""Domain types shared by every pipeline stage, plus their JSON forms.

Serialization is deliberately boring: plain dicts with fixed key order so
emitted artifacts are byte-stable and diffable. ``sections.json`` entries
follow the exact field list and ordering of the section export format; the
optional ``bbox`` key is appended last and is understood (not "unknown")
by the validator.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .geometry import BoundingBox

METRICS = ("TA", "TP", "TR", "TIA", "MP", "MSA", "MOR", "ALN", "SPC")

METRIC_GROUPS = {
    "text": ("TA", "TP", "TR"),
    "media": ("TIA", "MP", "MSA"),
    "layout": ("MOR", "ALN", "SPC"),
}

ASSET_CATEGORIES = ("logo", "hero", "background", "feature", "icon")

CONTAINER_TAGS = ("section", "div", "header", "footer", "nav")

DEGRADATION_CATEGORIES = ("text", "layout", "media")

EVAL_SETTINGS = ("zero_shot", "refine_structured", "refine_non_structured")

SECTION_FIELDS = (
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
)

_HEX_COLOR = re.compile(r"^#[0-9A-Fa-f]{6}$")


class SchemaError(ValueError):
    """A document does not conform to its published schema."""


class MissingField(SchemaError):
    pass


class WrongType(SchemaError):
    pass


class BadOrder(SchemaError):
    pass


class UnknownField(SchemaError):
    pass


@dataclass(frozen=True)
class Link:
    label: str
    href: str

    def to_dict(self) -> dict:
        return {"label": self.label, "href": self.href}


@dataclass(frozen=True)
class SectionRecord:
    """One decomposed page section in export order."""

    order: int
    type: str
    heading_h1: str = ""
    heading_h2: str = ""
    heading_h3: str = ""
    heading_h4: str = ""
    heading_h5: str = ""
    heading_h6: str = ""
    body: str = ""
    html: str = ""
    bullets: tuple[str, ...] = ()
    links: tuple[Link, ...] = ()
    images: tuple[tuple[str, str], ...] = ()  # (source ref, saved relative path)
    screenshot_path: str = ""
    bbox: BoundingBox = BoundingBox(0.0, 0.0, 0.0, 0.0)
    extra: tuple[tuple[str, object], ...] = ()  # unknown keys kept in lenient mode

    def heading(self, level: int) -> str:
        return getattr(self, f"heading_h{level}")

    def images_dict(self) -> dict[str, str]:
        return dict(self.images)

    def to_json_dict(self, include_bbox: bool = True) -> dict:
        out: dict = {
            "order": self.order,
            "type": self.type,
            "heading_h1": self.heading_h1,
            "heading_h2": self.heading_h2,
            "heading_h3": self.heading_h3,
            "heading_h4": self.heading_h4,
            "heading_h5": self.heading_h5,
            "heading_h6": self.heading_h6,
            "body": self.body,
            "html": self.html,
            "bullets": list(self.bullets),
            "links": [l.to_dict() for l in self.links],
            "images": dict(self.images),
            "screenshot_path": self.screenshot_path,
        }
        if include_bbox:
            out["bbox"] = {
                "x": self.bbox.x,
                "y": self.bbox.y,
                "width": self.bbox.width,
                "height": self.bbox.height,
            }
        for key, value in self.extra:
            out[key] = value
        return out


def _require(obj: dict, name: str, kinds: tuple[type, ...], kind_label: str):
    if name not in obj:
        raise MissingField(f"missing required field {name!r}")
    value = obj[name]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise WrongType(f"field {name!r} must be {kind_label}, got {type(value).__name__}")
    return value


def parse_section_dict(obj: dict, strict: bool = True) -> SectionRecord:
    """Build a SectionRecord from a decoded JSON object.

    Strict mode rejects keys outside the published field set (plus
    ``bbox``); lenient mode preserves them on ``extra``.
    """
    if not isinstance(obj, dict):
        raise WrongType(f"section entry must be an object, got {type(obj).__name__}")
    order = _require(obj, "order", (int,), "an integer")
    if order < 1:
        raise BadOrder(f"order must be >= 1, got {order}")
    type_ = _require(obj, "type", (str,), "a string")
    texts = {}
    for name in SECTION_FIELDS[2:10]:  # heading_h1..h6, body, html
        texts[name] = _require(obj, name, (str,), "a string")
    bullets = _require(obj, "bullets", (list,), "a list")
    for b in bullets:
        if not isinstance(b, str):
            raise WrongType("bullets entries must be strings")
    raw_links = _require(obj, "links", (list,), "a list")
    links = []
    for entry in raw_links:
        if not isinstance(entry, dict) or "label" not in entry or "href" not in entry:
            raise WrongType("links entries must be objects with label and href")
        links.append(Link(label=str(entry["label"]), href=str(entry["href"])))
    images = _require(obj, "images", (dict,), "an object")
    for k, v in images.items():
        if not isinstance(k, str) or not isinstance(v, str):
            raise WrongType("images must map strings to strings")
    screenshot_path = _require(obj, "screenshot_path", (str,), "a string")

    bbox = BoundingBox(0.0, 0.0, 0.0, 0.0)
    if "bbox" in obj:
        raw = obj["bbox"]
        if not isinstance(raw, dict):
            raise WrongType("bbox must be an object")
        try:
            bbox = BoundingBox(
                float(raw["x"]), float(raw["y"]), float(raw["width"]), float(raw["height"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise WrongType(f"bbox is malformed: {exc}") from exc

    known = set(SECTION_FIELDS) | {"bbox"}
    unknown = [k for k in obj if k not in known]
    if unknown and strict:
        raise UnknownField(f"unknown fields: {sorted(unknown)}")
    extra = tuple((k, obj[k]) for k in obj if k in unknown)

    return SectionRecord(
        order=order,
        type=type_,
        heading_h1=texts["heading_h1"],
        heading_h2=texts["heading_h2"],
        heading_h3=texts["heading_h3"],
        heading_h4=texts["heading_h4"],
        heading_h5=texts["heading_h5"],
        heading_h6=texts["heading_h6"],
        body=texts["body"],
        html=texts["html"],
        bullets=tuple(bullets),
        links=tuple(links),
        images=tuple(images.items()),
        screenshot_path=screenshot_path,
        bbox=bbox,
        extra=extra,
    )


def validate_section_json(document: str, strict: bool = True) -> SectionRecord:
    """Parse one section JSON document into a SectionRecord.

    Raises MissingField / WrongType / BadOrder (all SchemaError) on
    violations; UnknownField in strict mode for keys outside the schema.
    """
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise WrongType(f"not valid JSON: {exc}") from exc
    return parse_section_dict(obj, strict=strict)


@dataclass(frozen=True)
class AssetRecord:
    """One downloaded media asset.

    ``source_url`` is the normalized URL (or ``inline:`` key) the asset was
    fetched from; it is the join key for the usage filter. ``original_name``
    is the filename component of that source.
    """

    original_name: str
    saved_path: str
    width: int = 0
    height: int = 0
    byte_size: int = 0
    semantic_name: str = ""
    category: str = ""
    referenced: bool = False
    source_url: str = ""

    def __post_init__(self) -> None:
        if self.category and self.category not in ASSET_CATEGORIES:
            raise ValueError(f"unknown asset category {self.category!r}")

    def to_dict(self) -> dict:
        return {
            "original_name": self.original_name,
            "saved_path": self.saved_path,
            "width": self.width,
            "height": self.height,
            "byte_size": self.byte_size,
            "semantic_name": self.semantic_name,
            "category": self.category,
            "referenced": self.referenced,
            "source_url": self.source_url,
        }


def asset_from_dict(obj: dict) -> AssetRecord:
    return AssetRecord(
        original_name=obj["original_name"],
        saved_path=obj["saved_path"],
        width=int(obj.get("width", 0)),
        height=int(obj.get("height", 0)),
        byte_size=int(obj.get("byte_size", 0)),
        semantic_name=obj.get("semantic_name", ""),
        category=obj.get("category", ""),
        referenced=bool(obj.get("referenced", False)),
        source_url=obj.get("source_url", ""),
    )


@dataclass(frozen=True)
class StyleMetadata:
    palette: tuple[str, ...] = ()
    font_families: tuple[str, ...] = ()
    per_section_styles: tuple[tuple[int, dict], ...] = ()

    def __post_init__(self) -> None:
        for color in self.palette:
            if not _HEX_COLOR.match(color):
                raise ValueError(f"palette colors must be #RRGGBB, got {color!r}")

    def to_dict(self) -> dict:
        return {
            "palette": list(self.palette),
            "font_families": list(self.font_families),
            "per_section_styles": {str(k): dict(v) for k, v in self.per_section_styles},
        }


def style_metadata_from_dict(obj: dict) -> StyleMetadata:
    return StyleMetadata(
        palette=tuple(obj.get("palette", ())),
        font_families=tuple(obj.get("font_families", ())),
        per_section_styles=tuple(
            (int(k), dict(v)) for k, v in obj.get("per_section_styles", {}).items()
        ),
    )


@dataclass(frozen=True)
class StructuredRepresentation:
    """Per-page bundle of sections, text, assets, style metadata and boxes."""

    page_id: str
    url: str
    sections: tuple[SectionRecord, ...]
    assets: tuple[AssetRecord, ...] = ()
    metadata: StyleMetadata = StyleMetadata()
    full_screenshot_path: str = ""

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "url": self.url,
            "sections": [s.to_json_dict() for s in self.sections],
            "assets": [a.to_dict() for a in self.assets],
            "metadata": self.metadata.to_dict(),
            "full_screenshot_path": self.full_screenshot_path,
        }


def structured_from_dict(obj: dict) -> StructuredRepresentation:
    return StructuredRepresentation(
        page_id=obj["page_id"],
        url=obj["url"],
        sections=tuple(parse_section_dict(s, strict=False) for s in obj["sections"]),
        assets=tuple(asset_from_dict(a) for a in obj.get("assets", ())),
        metadata=style_metadata_from_dict(obj.get("metadata", {})),
        full_screenshot_path=obj.get("full_screenshot_path", ""),
    )


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )

    def to_dict(self) -> dict:
        return {"input_tokens": self.input_tokens, "output_tokens": self.output_tokens}


@dataclass(frozen=True)
class MetricScore:
    metric: str
    score: int
    reason: str = ""
    feedback: str = ""

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.score not in (1, 2, 3, 4, 5):
            raise ValueError(f"score must be 1..5, got {self.score}")


@dataclass(frozen=True)
class SectionEvaluation:
    section_number: int
    section_name: str
    description: str
    scores: tuple[MetricScore, ...]

    def __post_init__(self) -> None:
        if self.section_number < 1:
            raise ValueError("section_number must be >= 1")
        seen = [s.metric for s in self.scores]
        if sorted(seen) != sorted(METRICS):
            raise ValueError(f"expected exactly one score per metric, got {seen}")

    def score(self, metric: str) -> MetricScore:
        for s in self.scores:
            if s.metric == metric:
                return s
        raise KeyError(metric)

    def to_dict(self) -> dict:
        out: dict = {
            "section_number": self.section_number,
            "section_name": self.section_name,
            "description": self.description,
        }
        for metric in METRICS:
            s = self.score(metric)
            out[metric] = {"score": s.score, "reason": s.reason, "feedback": s.feedback}
        return out


@dataclass(frozen=True)
class EvaluationReport:
    page_id: str
    setting: str
    sections: tuple[SectionEvaluation, ...]
    evaluator_model: str = ""
    token_usage: TokenUsage = TokenUsage()

    def __post_init__(self) -> None:
        if self.setting not in EVAL_SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        numbers = [s.section_number for s in self.sections]
        if numbers != sorted(numbers):
            raise ValueError("sections must be ordered by section_number")

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "setting": self.setting,
            "sections": [s.to_dict() for s in self.sections],
            "evaluator_model": self.evaluator_model,
            "token_usage": self.token_usage.to_dict(),
        }


def _parse_metric_entry(metric: str, raw) -> MetricScore:
    if not isinstance(raw, dict):
        raise WrongType(f"metric {metric} entry must be an object")
    if "score" not in raw:
        raise MissingField(f"metric {metric} entry missing score")
    score = raw["score"]
    if not isinstance(score, int) or isinstance(score, bool):
        raise WrongType(f"metric {metric} score must be an integer")
    if score not in (1, 2, 3, 4, 5):
        raise SchemaError(f"metric {metric} score out of range: {score}")
    return MetricScore(
        metric=metric,
        score=score,
        reason=str(raw.get("reason", "")),
        feedback=str(raw.get("feedback", "")),
    )


def parse_section_evaluation(obj: dict, strict: bool = True) -> SectionEvaluation:
    if not isinstance(obj, dict):
        raise WrongType("section evaluation must be an object")
    number = _require(obj, "section_number", (int,), "an integer")
    if number < 1:
        raise BadOrder(f"section_number must be >= 1, got {number}")
    scores = []
    for metric in METRICS:
        if metric not in obj:
            raise MissingField(f"missing metric {metric}")
        scores.append(_parse_metric_entry(metric, obj[metric]))
    known = set(METRICS) | {"section_number", "section_name", "description"}
    unknown = [k for k in obj if k not in known]
    if unknown and strict:
        raise UnknownField(f"unknown fields in section evaluation: {sorted(unknown)}")
    return SectionEvaluation(
        section_number=number,
        section_name=str(obj.get("section_name", "")),
        description=str(obj.get("description", "")),
        scores=tuple(scores),
    )


def report_from_dict(obj: dict, strict: bool = True) -> EvaluationReport:
    sections = obj.get("sections")
    if sections is None:
        raise MissingField("missing required field 'sections'")
    if not isinstance(sections, list):
        raise WrongType("'sections' must be a list")
    parsed = tuple(parse_section_evaluation(s, strict=strict) for s in sections)
    parsed = tuple(sorted(parsed, key=lambda s: s.section_number))
    return EvaluationReport(
        page_id=obj.get("page_id", ""),
        setting=obj.get("setting", "zero_shot"),
        sections=parsed,
        evaluator_model=obj.get("evaluator_model", ""),
        token_usage=TokenUsage(**obj.get("token_usage", {})),
    )


@dataclass(frozen=True)
class DegradationLabel:
    """Ground truth for one injected defect."""

    page_id: str
    section_order: int
    category: str
    transform: str

    def __post_init__(self) -> None:
        if self.category not in DEGRADATION_CATEGORIES:
            raise ValueError(f"unknown degradation category {self.category!r}")

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "section_order": self.section_order,
            "category": self.category,
            "transform": self.transform,
        }


def label_from_dict(obj: dict) -> DegradationLabel:
    return DegradationLabel(
        page_id=obj["page_id"],
        section_order=int(obj["section_order"]),
        category=obj["category"],
        transform=obj["transform"],
    )


def dump_json(obj, path=None) -> str:
    """Canonical JSON form for artifacts: 2-space indent, stable key order
    as constructed, trailing newline."""
    text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text

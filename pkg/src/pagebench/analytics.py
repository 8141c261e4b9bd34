"""Measurement machinery over persisted evaluation reports: low-score
statistics, paired win/tie/loss comparison, degradation injection with
detection scoring, and token-cost accounting.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP

from .dom import parse_html, set_inline_style
from .geometry import BoundingBox
from .llm import ChatRequest, Gateway, TextPart, extract_json, NoJsonFound, ParseError
from .model import (
    DEGRADATION_CATEGORIES,
    DegradationLabel,
    EvaluationReport,
    METRIC_GROUPS,
    METRICS,
)
from .processor import section_wise_decomposition
from .renderer import Renderer, Viewport

logger = logging.getLogger(__name__)

LOW_SCORE_MAX_DEFAULT = 3  # score <= 3, the "<4" reading

TEXT_DEGRADATION_COLOR = "#FAFAFA"
LAYOUT_DEGRADATION_MARGIN_PX = 64
MEDIA_ASPECT_FACTOR = 3


class EmptyReportSet(ValueError):
    pass


class UnpairedPage(ValueError):
    pass


class SectionNotFound(LookupError):
    pass


class CoverageGap(ValueError):
    pass


@dataclass(frozen=True)
class LowScoreStats:
    """Average number of low-scoring sections per page, per metric."""

    per_metric: dict[str, float]
    page_count: int
    low_score_max: int

    def to_dict(self) -> dict:
        return {
            "low_score_max": self.low_score_max,
            "page_count": self.page_count,
            "per_metric": dict(self.per_metric),
        }


def low_score_counts(report: EvaluationReport, low_score_max: int) -> dict[str, int]:
    counts = {metric: 0 for metric in METRICS}
    for section in report.sections:
        for score in section.scores:
            if score.score <= low_score_max:
                counts[score.metric] += 1
    return counts


def low_score_stats(
    reports: list[EvaluationReport], low_score_max: int = LOW_SCORE_MAX_DEFAULT
) -> LowScoreStats:
    if not reports:
        raise EmptyReportSet("no reports to aggregate")
    totals = {metric: 0 for metric in METRICS}
    for report in reports:
        for metric, count in low_score_counts(report, low_score_max).items():
            totals[metric] += count
    n = len(reports)
    return LowScoreStats(
        per_metric={metric: totals[metric] / n for metric in METRICS},
        page_count=n,
        low_score_max=low_score_max,
    )


@dataclass(frozen=True)
class HeadToHead:
    """Per-metric (win, tie, loss) proportions for system A against B."""

    per_metric: dict[str, tuple[float, float, float]]
    page_count: int

    def to_dict(self) -> dict:
        return {
            "page_count": self.page_count,
            "per_metric": {
                metric: {"win": w, "tie": t, "loss": l}
                for metric, (w, t, l) in self.per_metric.items()
            },
        }


def head_to_head(
    reports_a: list[EvaluationReport],
    reports_b: list[EvaluationReport],
    judge: str = "rule",
    *,
    gateway: Gateway | None = None,
    low_score_max: int = LOW_SCORE_MAX_DEFAULT,
) -> HeadToHead:
    """Rule mode: per metric and page, the report with fewer low-scoring
    sections wins. LLM mode asks a pairwise judge instead and is not
    reproducible across judge versions."""
    by_id_a = {r.page_id: r for r in reports_a}
    by_id_b = {r.page_id: r for r in reports_b}
    if set(by_id_a) != set(by_id_b):
        odd = set(by_id_a) ^ set(by_id_b)
        raise UnpairedPage(f"pages present on one side only: {sorted(odd)}")
    if not by_id_a:
        raise EmptyReportSet("no paired pages")
    if judge == "llm":
        if gateway is None:
            raise ValueError("llm judge mode requires a gateway")
        return _head_to_head_llm(by_id_a, by_id_b, gateway)
    if judge != "rule":
        raise ValueError(f"unknown judge mode {judge!r}")

    outcomes = {metric: [0, 0, 0] for metric in METRICS}
    for page_id, a in by_id_a.items():
        b = by_id_b[page_id]
        counts_a = low_score_counts(a, low_score_max)
        counts_b = low_score_counts(b, low_score_max)
        for metric in METRICS:
            if counts_a[metric] < counts_b[metric]:
                outcomes[metric][0] += 1
            elif counts_a[metric] == counts_b[metric]:
                outcomes[metric][1] += 1
            else:
                outcomes[metric][2] += 1
    n = len(by_id_a)
    return HeadToHead(
        per_metric={
            metric: (w / n, t / n, l / n) for metric, (w, t, l) in outcomes.items()
        },
        page_count=n,
    )


_PAIRWISE_SYSTEM = """\
You are a strict web design judge comparing two evaluation reports for the
same page, produced by systems A and B. For each metric decide which system's
page is better. Return VALID JSON: {"<metric>": "A" | "B" | "tie", ...} with
exactly these metrics: TA, TP, TR, TIA, MP, MSA, MOR, ALN, SPC.
"""


def _head_to_head_llm(by_id_a, by_id_b, gateway: Gateway) -> HeadToHead:
    outcomes = {metric: [0, 0, 0] for metric in METRICS}
    for page_id, a in by_id_a.items():
        b = by_id_b[page_id]
        request = ChatRequest(
            system=_PAIRWISE_SYSTEM,
            parts=(
                TextPart(
                    "Report A:\n"
                    + json.dumps(a.to_dict(), indent=2)
                    + "\n\nReport B:\n"
                    + json.dumps(b.to_dict(), indent=2)
                ),
            ),
            model=gateway.backend.model,
            temperature=0.0,
            stage="head_to_head",
        )
        try:
            verdict = extract_json(gateway.complete(request).text)
        except (NoJsonFound, ParseError):
            verdict = {}
        for metric in METRICS:
            choice = str(verdict.get(metric, "tie")).strip().lower()
            slot = {"a": 0, "tie": 1, "b": 2}.get(choice, 1)
            outcomes[metric][slot] += 1
    n = len(by_id_a)
    return HeadToHead(
        per_metric={
            metric: (w / n, t / n, l / n) for metric, (w, t, l) in outcomes.items()
        },
        page_count=n,
    )


# -- degradation injection ----------------------------------------------------


def inject_degradations(
    html: str,
    plan: list[tuple[int, str]],
    *,
    page_id: str = "",
    renderer: Renderer | None = None,
    viewport: Viewport = Viewport(),
    theta_min: float = 50.0,
) -> tuple[str, list[DegradationLabel]]:
    """Apply one deterministic in-place transform per (section, category)
    plan entry and emit exact ground-truth labels.

    text: near-background text color; layout: asymmetric left margin on the
    section's first child block; media: first image stretched to 3x its
    rendered height. Transforms never change section geometry.
    """
    if not plan:
        return html, []
    if renderer is None:
        from .renderer.mock import MockRenderer

        renderer = MockRenderer()
    page = renderer.load_html(html, viewport=viewport)  # type: ignore[attr-defined]
    page.scroll_full()
    structured = section_wise_decomposition(page, theta_min=theta_min, page_id=page_id)
    doc = page.doc
    boxes_by_order: dict[int, BoundingBox] = {s.order: s.bbox for s in structured.sections}

    # locate each section's content element in the source tree
    content_index: dict[int, int] = {}
    element_boxes = {e.dom_index: e for e in page.query_boxes(("section", "div", "header", "footer", "nav"))}
    for section in structured.sections:
        match = None
        for idx, ebox in element_boxes.items():
            if ebox.visible and ebox.bbox.approx_equal(section.bbox):
                match = idx
                break
        if match is None:
            # merged section: fall back to the hull's common ancestor
            inside = [
                idx
                for idx, ebox in element_boxes.items()
                if ebox.visible and section.bbox.contains(ebox.bbox)
            ]
            match = page.common_ancestor(inside) if inside else -1
        content_index[section.order] = match

    edits: dict[int, dict[str, str]] = {}
    labels: list[DegradationLabel] = []
    for section_order, category in plan:
        if category not in DEGRADATION_CATEGORIES:
            raise ValueError(f"unknown degradation category {category!r}")
        if section_order not in boxes_by_order:
            raise SectionNotFound(f"section {section_order} not found")
        root_index = content_index[section_order]
        if root_index < 0:
            raise SectionNotFound(f"section {section_order} has no addressable element")
        root = doc.by_index(root_index)
        if category == "text":
            target, props = root, {"color": TEXT_DEGRADATION_COLOR}
            transform = f"text color set to {TEXT_DEGRADATION_COLOR}"
        elif category == "layout":
            children = [c for c in root.children if c.tag]
            target = children[0] if children else root
            props = {"margin-left": f"{LAYOUT_DEGRADATION_MARGIN_PX}px"}
            transform = f"asymmetric margin-left {LAYOUT_DEGRADATION_MARGIN_PX}px"
        else:  # media
            images = root.find_all("img")
            if not images:
                raise SectionNotFound(
                    f"section {section_order} has no image to degrade"
                )
            target = images[0]
            h = element_height(page, target)
            w = h * MEDIA_ASPECT_FACTOR
            props = {"width": f"{w:g}px", "height": f"{h:g}px"}
            transform = f"image stretched to {MEDIA_ASPECT_FACTOR}:1 ({w:g}x{h:g})"
        edits.setdefault(target.dom_index, {}).update(props)
        labels.append(
            DegradationLabel(
                page_id=page_id,
                section_order=section_order,
                category=category,
                transform=transform,
            )
        )

    result = html
    for dom_index in sorted(edits, key=lambda i: doc.by_index(i).start, reverse=True):
        result = set_inline_style(result, doc.by_index(dom_index), edits[dom_index])
    return result, labels


def element_height(page, node) -> float:
    box = getattr(page, "_boxes", {}).get(node.dom_index)
    if box is not None and box.bbox.height > 0:
        return box.bbox.height
    for attr in ("height",):
        if node.attr(attr):
            try:
                return float(node.attr(attr))
            except ValueError:
                pass
    return 100.0


# -- detection scoring ----------------------------------------------------------

# Predictions: page_id -> section_order -> category -> bool
DetectionOutcome = dict[str, dict[int, dict[str, bool]]]


@dataclass(frozen=True)
class CategoryScores:
    precision: float
    recall: float
    f1: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


@dataclass(frozen=True)
class DetectionScores:
    per_category: dict[str, CategoryScores]
    micro: CategoryScores
    macro: CategoryScores

    def to_dict(self) -> dict:
        out = {
            cat: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
            for cat, s in self.per_category.items()
        }
        out["micro_avg"] = {
            "precision": self.micro.precision, "recall": self.micro.recall, "f1": self.micro.f1
        }
        out["macro_avg"] = {
            "precision": self.macro.precision, "recall": self.macro.recall, "f1": self.macro.f1
        }
        return out


def _prf(tp: int, fp: int, fn: int) -> CategoryScores:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return CategoryScores(precision, recall, f1)


def score_detection(
    predictions: DetectionOutcome, labels: list[DegradationLabel]
) -> DetectionScores:
    """Precision/recall/F1 per category plus micro (pooled counts) and
    macro (unweighted mean) averages."""
    labeled = {(l.page_id, l.section_order, l.category) for l in labels}
    for page_id, section_order, category in labeled:
        page_grid = predictions.get(page_id)
        if page_grid is None or section_order not in page_grid:
            raise CoverageGap(
                f"no predictions for page {page_id!r} section {section_order}"
            )
    counts = {cat: [0, 0, 0] for cat in DEGRADATION_CATEGORIES}  # tp, fp, fn
    for page_id, page_grid in predictions.items():
        for section_order, by_category in page_grid.items():
            missing = set(DEGRADATION_CATEGORIES) - set(by_category)
            if missing:
                raise CoverageGap(
                    f"page {page_id!r} section {section_order} missing categories {sorted(missing)}"
                )
            for category, predicted in by_category.items():
                truth = (page_id, section_order, category) in labeled
                if predicted and truth:
                    counts[category][0] += 1
                elif predicted and not truth:
                    counts[category][1] += 1
                elif not predicted and truth:
                    counts[category][2] += 1
    per_category = {
        cat: _prf(tp, fp, fn) for cat, (tp, fp, fn) in counts.items()
    }
    pooled = [sum(c[i] for c in counts.values()) for i in range(3)]
    micro = _prf(*pooled)
    macro = CategoryScores(
        precision=sum(s.precision for s in per_category.values()) / len(per_category),
        recall=sum(s.recall for s in per_category.values()) / len(per_category),
        f1=sum(s.f1 for s in per_category.values()) / len(per_category),
    )
    return DetectionScores(per_category=per_category, micro=micro, macro=macro)


def detect_from_report(
    report: EvaluationReport, threshold: int = LOW_SCORE_MAX_DEFAULT
) -> dict[int, dict[str, bool]]:
    """Threshold mapping from judge scores to binary degradation calls:
    a section-category pair is predicted degraded when any metric in the
    category's group scores at or below ``threshold``."""
    grid: dict[int, dict[str, bool]] = {}
    for section in report.sections:
        by_category = {}
        for category, metrics in METRIC_GROUPS.items():
            by_category[category] = any(
                section.score(metric).score <= threshold for metric in metrics
            )
        grid[section.section_number] = by_category
    return grid


def format_detection_table(scores: DetectionScores) -> str:
    rows = [("Category", "P", "R", "F1")]
    for category in DEGRADATION_CATEGORIES:
        s = scores.per_category[category]
        rows.append(
            (category.capitalize(), f"{s.precision:.2f}", f"{s.recall:.2f}", f"{s.f1:.2f}")
        )
    rows.append(
        ("Micro Avg", f"{scores.micro.precision:.2f}", f"{scores.micro.recall:.2f}", f"{scores.micro.f1:.2f}")
    )
    rows.append(
        ("Macro Avg", f"{scores.macro.precision:.2f}", f"{scores.macro.recall:.2f}", f"{scores.macro.f1:.2f}")
    )
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for row in rows:
        lines.append(
            row[0].ljust(widths[0])
            + "  "
            + "  ".join(row[i].rjust(widths[i]) for i in range(1, 4))
        )
    return "\n".join(lines)


# -- token cost --------------------------------------------------------------


@dataclass(frozen=True)
class TierRule:
    threshold_tokens: int
    above: tuple[Decimal, Decimal]  # (input, output) USD per million
    below: tuple[Decimal, Decimal]


@dataclass(frozen=True)
class PricingEntry:
    input_usd_per_million: Decimal
    output_usd_per_million: Decimal
    tier: TierRule | None = None

    def __post_init__(self) -> None:
        if self.input_usd_per_million < 0 or self.output_usd_per_million < 0:
            raise ValueError("prices must be >= 0")

    def effective(self, avg_input_tokens: float) -> tuple[Decimal, Decimal]:
        if self.tier is not None:
            if avg_input_tokens > self.tier.threshold_tokens:
                return self.tier.above
            return self.tier.below
        return (self.input_usd_per_million, self.output_usd_per_million)


@dataclass(frozen=True)
class CostBreakdown:
    input_usd: Decimal
    output_usd: Decimal
    total_usd: Decimal
    exact_total_usd: Decimal

    def as_floats(self) -> tuple[float, float, float]:
        return (float(self.input_usd), float(self.output_usd), float(self.total_usd))


_CENT = Decimal("0.01")


def token_cost(
    avg_input_tokens: float,
    avg_output_tokens: float,
    pages: int,
    pricing: PricingEntry,
) -> CostBreakdown:
    """Cost of a run: pages/1e6 * (p_in * t_in + p_out * t_out), computed
    in exact decimal. Presented components round half-up to cents, and the
    presented total is the sum of the rounded components."""
    if avg_input_tokens < 0 or avg_output_tokens < 0 or pages < 0:
        raise ValueError("token averages and page count must be >= 0")
    p_in, p_out = pricing.effective(avg_input_tokens)
    n = Decimal(pages)
    million = Decimal(10) ** 6
    exact_in = n * Decimal(str(avg_input_tokens)) * p_in / million
    exact_out = n * Decimal(str(avg_output_tokens)) * p_out / million
    rounded_in = exact_in.quantize(_CENT, rounding=ROUND_HALF_UP)
    rounded_out = exact_out.quantize(_CENT, rounding=ROUND_HALF_UP)
    return CostBreakdown(
        input_usd=rounded_in,
        output_usd=rounded_out,
        total_usd=rounded_in + rounded_out,
        exact_total_usd=exact_in + exact_out,
    )

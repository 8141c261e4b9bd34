"""Generation, section-wise and whole-page judging, and the one-turn
generate-evaluate-refine loop.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from . import processor, prompts
from .instructor import InstructionSpec
from .llm import ChatRequest, Gateway, GatewayError, ImagePart, NoJsonFound, ParseError, TextPart, extract_json
from .model import (
    EvaluationReport,
    SchemaError,
    SectionEvaluation,
    TokenUsage,
    dump_json,
    parse_section_evaluation,
)
from .renderer import Renderer, Viewport

logger = logging.getLogger(__name__)

TAU_SELECT_DEFAULT = 4

# refinement priority classes, most critical first; remaining metrics share
# the trailing "other" class
PRIORITY_METRICS = ("MSA", "ALN", "SPC", "MP", "TR")

_METRIC_CANON = ("TA", "TP", "TR", "TIA", "MP", "MSA", "MOR", "ALN", "SPC")

_ASSET_PATH = re.compile(r"\./assets?/[A-Za-z0-9~!$&'()*+,;=@%._/-]+")


class EmptyOutput(Exception):
    pass


class NonHtmlOutput(Exception):
    pass


class RefinementPathViolation(Exception):
    def __init__(self, missing: set[str]):
        self.missing = missing
        super().__init__(
            "refinement lost or renamed asset paths: " + ", ".join(sorted(missing))
        )


@dataclass(frozen=True)
class GenerationResult:
    page_id: str
    html: str
    setting: str
    token_usage: TokenUsage
    asset_manifest: tuple[str, ...] = ()


@dataclass(frozen=True)
class CorrectiveTask:
    section_number: int
    metric: str
    score: int
    feedback: str
    priority_rank: int

    def render(self) -> str:
        return f"Section {self.section_number} ({self.metric}, score {self.score}): {self.feedback}"


def strip_code_fences(text: str) -> str:
    text = text.strip()
    m = re.match(r"^```[a-zA-Z0-9_-]*\s*\n(.*?)\n?```$", text, re.DOTALL)
    if m:
        return m.group(1).strip()
    return text


def _require_html_document(text: str) -> str:
    html = strip_code_fences(text)
    if not html.strip():
        raise EmptyOutput("model returned empty output")
    head = html.lstrip().lower()
    if not (head.startswith("<!doctype") or head.startswith("<html")):
        raise NonHtmlOutput("model output is not a complete HTML document")
    return html


def asset_paths(html: str) -> set[str]:
    return set(_ASSET_PATH.findall(html))


def generate_html(
    instruction: InstructionSpec,
    gateway: Gateway,
    *,
    asset_dir: str | Path | None = None,
    page_id: str = "",
    model: str = "",
) -> GenerationResult:
    """Zero-shot generation from the instruction plus reference images,
    interleaved per the generation prompt."""
    manifest = tuple(f"./assets/{name}" for name, _cat, _dims, _size in instruction.assets)
    parts: list[TextPart | ImagePart] = [
        TextPart(prompts.generation_user(instruction.rendered_markdown, list(manifest)))
    ]
    asset_dir = Path(asset_dir) if asset_dir else None
    for name, category, _dims, _size in instruction.assets:
        parts.append(TextPart(prompts.generation_image_caption(f"./assets/{name}", category)))
        if asset_dir is not None:
            path = asset_dir / name
            if path.exists():
                parts.append(ImagePart(path.read_bytes()))
    request = ChatRequest(
        system=prompts.GENERATION_SYSTEM,
        parts=tuple(parts),
        model=model or gateway.backend.model,
        temperature=None,
        stage="generate",
    )
    response = gateway.complete(request)
    html = _require_html_document(response.text)
    return GenerationResult(
        page_id=page_id,
        html=html,
        setting="zero_shot",
        token_usage=response.usage,
        asset_manifest=manifest,
    )


def parse_judge_sections(text: str) -> tuple[SectionEvaluation, ...]:
    """Total parser for judge output: returns a schema-valid section list
    or raises SchemaError. Section numbering must be dense from 1."""
    try:
        obj = extract_json(text)
    except (NoJsonFound, ParseError) as exc:
        raise SchemaError(f"judge output is not JSON: {exc}") from exc
    if not isinstance(obj, dict) or "sections" not in obj:
        raise SchemaError("judge output missing 'sections'")
    raw_sections = obj["sections"]
    if not isinstance(raw_sections, list) or not raw_sections:
        raise SchemaError("'sections' must be a non-empty list")
    sections = tuple(parse_section_evaluation(s, strict=True) for s in raw_sections)
    sections = tuple(sorted(sections, key=lambda s: s.section_number))
    numbers = [s.section_number for s in sections]
    if numbers != list(range(1, len(numbers) + 1)):
        raise SchemaError(f"section numbering must be dense from 1, got {numbers}")
    return sections


def _judge(
    gateway: Gateway, request: ChatRequest
) -> tuple[tuple[SectionEvaluation, ...], TokenUsage, str]:
    usage = TokenUsage()
    response = gateway.complete(request)
    usage = usage + response.usage
    try:
        return parse_judge_sections(response.text), usage, response.model
    except SchemaError as first_error:
        logger.warning("judge output rejected (%s); re-prompting once", first_error)
        retry = gateway.complete(request)
        usage = usage + retry.usage
        return parse_judge_sections(retry.text), usage, retry.model


def _render_for_eval(renderer: Renderer, html: str, workdir: Path, viewport: Viewport):
    workdir.mkdir(parents=True, exist_ok=True)
    page_path = workdir / "page.html"
    page_path.write_text(html, encoding="utf-8")
    page = renderer.load(str(page_path), viewport=viewport)
    page.scroll_full()
    return page


def evaluate_structured(
    html: str,
    instruction: InstructionSpec,
    renderer: Renderer,
    gateway: Gateway,
    *,
    workdir: str | Path,
    page_id: str = "",
    setting: str = "zero_shot",
    model: str = "",
    viewport: Viewport = Viewport(),
    theta_min: float = processor.THETA_MIN_DEFAULT,
) -> EvaluationReport:
    """Re-render and decompose the generated page, then judge it section
    by section with interleaved screenshots and structured text."""
    workdir = Path(workdir)
    page = _render_for_eval(renderer, html, workdir, viewport)
    structured = processor.section_wise_decomposition(
        page, theta_min=theta_min, page_id=page_id, out_dir=workdir
    )
    parts: list[TextPart | ImagePart] = [
        TextPart(prompts.structured_evaluation_intro(instruction.rendered_markdown))
    ]
    for section in structured.sections:
        shot_path = workdir / section.screenshot_path
        if shot_path.exists():
            parts.append(ImagePart(shot_path.read_bytes()))
        record = section.to_json_dict(include_bbox=False)
        parts.append(
            TextPart(prompts.structured_section_data(section.order, dump_json(record).strip()))
        )
    request = ChatRequest(
        system=prompts.STRUCTURED_EVALUATION_SYSTEM,
        parts=tuple(parts),
        model=model or gateway.backend.model,
        temperature=0.0,
        stage="evaluate",
    )
    sections, usage, judge_model = _judge(gateway, request)
    return EvaluationReport(
        page_id=page_id,
        setting=setting,
        sections=sections,
        evaluator_model=judge_model,
        token_usage=usage,
    )


def evaluate_non_structured(
    html: str,
    instruction: InstructionSpec,
    renderer: Renderer,
    gateway: Gateway,
    *,
    workdir: str | Path,
    page_id: str = "",
    setting: str = "zero_shot",
    model: str = "",
    viewport: Viewport = Viewport(),
) -> EvaluationReport:
    """Whole-page judging: one full screenshot plus the entire HTML; the
    judge infers section boundaries itself."""
    workdir = Path(workdir)
    page = _render_for_eval(renderer, html, workdir, viewport)
    shot = page.screenshot()
    parts = (
        TextPart(prompts.non_structured_evaluation_intro(instruction.rendered_markdown)),
        TextPart(prompts.non_structured_html_part(html)),
        ImagePart(shot.data),
    )
    request = ChatRequest(
        system=prompts.NON_STRUCTURED_EVALUATION_SYSTEM,
        parts=parts,
        model=model or gateway.backend.model,
        temperature=0.0,
        stage="evaluate",
    )
    try:
        sections, usage, judge_model = _judge(gateway, request)
    except GatewayError as exc:
        raise type(exc)(f"[evaluate/non_structured] {exc}") from exc
    return EvaluationReport(
        page_id=page_id,
        setting=setting,
        sections=sections,
        evaluator_model=judge_model,
        token_usage=usage,
    )


def _priority_class(metric: str) -> int:
    try:
        return PRIORITY_METRICS.index(metric)
    except ValueError:
        return len(PRIORITY_METRICS)


def extract_corrective_tasks(
    report: EvaluationReport, tau_select: int = TAU_SELECT_DEFAULT
) -> list[CorrectiveTask]:
    """One task per (section, metric) scoring at or below ``tau_select``,
    ordered by priority class then section number."""
    raw = []
    for section in report.sections:
        for score in section.scores:
            if score.score <= tau_select:
                raw.append((section.section_number, score))
    raw.sort(
        key=lambda pair: (
            _priority_class(pair[1].metric),
            pair[0],
            _METRIC_CANON.index(pair[1].metric),
        )
    )
    return [
        CorrectiveTask(
            section_number=number,
            metric=score.metric,
            score=score.score,
            feedback=score.feedback or score.reason,
            priority_rank=rank,
        )
        for rank, (number, score) in enumerate(raw, start=1)
    ]


def refine_html(
    instruction: InstructionSpec,
    html: str,
    tasks: list[CorrectiveTask],
    gateway: Gateway,
    *,
    page_id: str = "",
    setting: str = "refine_structured",
    model: str = "",
) -> GenerationResult:
    """One refinement turn; verifies post-hoc that every asset path in the
    input survives unchanged in the output."""
    if not tasks:
        raise ValueError("refine_html requires a non-empty task list")
    request = ChatRequest(
        system=prompts.REFINEMENT_SYSTEM,
        parts=(
            TextPart(
                prompts.refinement_user(
                    instruction.rendered_markdown, html, [t.render() for t in tasks]
                )
            ),
        ),
        model=model or gateway.backend.model,
        temperature=None,
        stage="refine",
    )
    response = gateway.complete(request)
    refined = strip_code_fences(response.text)
    if not refined.strip():
        raise EmptyOutput("refiner returned empty output")
    before = asset_paths(html)
    after = asset_paths(refined)
    missing = before - after
    if missing:
        raise RefinementPathViolation(missing)
    return GenerationResult(
        page_id=page_id,
        html=refined,
        setting=setting,
        token_usage=response.usage,
        asset_manifest=tuple(sorted(before)),
    )


@dataclass
class LoopOutcome:
    final: GenerationResult
    initial_report: EvaluationReport
    refined_report: EvaluationReport | None
    tasks: list[CorrectiveTask]
    refined: bool


def gen_eval_refine(
    instruction: InstructionSpec,
    renderer: Renderer,
    gateway: Gateway,
    *,
    tau: int = TAU_SELECT_DEFAULT,
    mode: str = "structured",
    workdir: str | Path,
    page_id: str = "",
    asset_dir: str | Path | None = None,
    model: str = "",
    viewport: Viewport = Viewport(),
    strict_trigger: bool = False,
) -> LoopOutcome:
    """Generate, evaluate, and run exactly one refinement turn when the
    trigger condition holds (a score at or below tau; ``strict_trigger``
    restores the literal strictly-below reading)."""
    if mode not in ("structured", "non_structured"):
        raise ValueError(f"unknown mode {mode!r}")
    workdir = Path(workdir)
    evaluate = evaluate_structured if mode == "structured" else evaluate_non_structured
    generation = generate_html(
        instruction, gateway, asset_dir=asset_dir, page_id=page_id, model=model
    )
    initial_report = evaluate(
        generation.html,
        instruction,
        renderer,
        gateway,
        workdir=workdir / "eval_zero_shot",
        page_id=page_id,
        setting="zero_shot",
        model=model,
        viewport=viewport,
    )
    tasks = extract_corrective_tasks(initial_report, tau_select=tau)
    if strict_trigger:
        minimum = min(s.score for sec in initial_report.sections for s in sec.scores)
        should_refine = minimum < tau
    else:
        should_refine = bool(tasks)
    if not should_refine:
        return LoopOutcome(generation, initial_report, None, tasks, refined=False)

    refined_setting = f"refine_{mode}"
    refined = refine_html(
        instruction,
        generation.html,
        tasks,
        gateway,
        page_id=page_id,
        setting=refined_setting,
        model=model,
    )
    refined_report = evaluate(
        refined.html,
        instruction,
        renderer,
        gateway,
        workdir=workdir / f"eval_{refined_setting}",
        page_id=page_id,
        setting=refined_setting,
        model=model,
        viewport=viewport,
    )
    return LoopOutcome(refined, initial_report, refined_report, tasks, refined=True)

"""Stage orchestration: crawl -> process -> instruct -> generate ->
evaluate -> refine -> report, with a run manifest for reproducibility.

Each stage reads only its predecessor's artifacts from disk, skips pages
whose outputs already exist (unless forced), and records a digest of every
artifact it emitted. Digests of files carrying wall-clock fields are
computed over a normalized form so consecutive runs compare equal.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, analytics, crawler, evaluation, instructor, processor
from .config import Config, load_keywords
from .llm import Gateway
from .llm.http_backends import get_backend
from .model import (
    EvaluationReport,
    asset_from_dict,
    dump_json,
    label_from_dict,
    report_from_dict,
    structured_from_dict,
)
from .renderer import NavigationTimeout, Renderer, Viewport

logger = logging.getLogger(__name__)

STAGES = ("crawl", "process", "instruct", "generate", "evaluate", "refine", "report")

# JSON artifacts whose listed keys are wall-clock noise: digests are taken
# over the document with these keys removed.
VOLATILE_KEYS = {"fetched_at", "created_at", "completed_at"}


class PipelineError(Exception):
    pass


class MissingPredecessorArtifacts(PipelineError):
    pass


def _strip_volatile(value):
    if isinstance(value, dict):
        return {k: _strip_volatile(v) for k, v in value.items() if k not in VOLATILE_KEYS}
    if isinstance(value, list):
        return [_strip_volatile(v) for v in value]
    return value


def artifact_digest(path: Path) -> str:
    data = path.read_bytes()
    if path.suffix == ".json":
        try:
            normalized = _strip_volatile(json.loads(data.decode("utf-8")))
            data = json.dumps(normalized, sort_keys=True).encode("utf-8")
        except ValueError:
            pass
    return "sha256:" + hashlib.sha256(data).hexdigest()


class RunManifest:
    def __init__(self, config: Config, backends: dict[str, str]):
        self.created_at = datetime.now(timezone.utc).isoformat()
        self.config = config.to_dict()
        self.backends = backends
        self.stage_versions = {stage: __version__ for stage in STAGES}
        self.stages: dict[str, dict] = {}

    def record_stage(self, stage: str, out_dir: Path, artifacts: list[Path]) -> None:
        digests = {}
        for path in sorted(set(artifacts)):
            if path.exists() and path.is_file():
                digests[str(path.relative_to(out_dir))] = artifact_digest(path)
        self.stages[stage] = {
            "completed_at": datetime.now(timezone.utc).isoformat(),
            "artifacts": digests,
        }

    def to_dict(self) -> dict:
        return {
            "created_at": self.created_at,
            "package_version": __version__,
            "config": self.config,
            "backends": self.backends,
            "stage_versions": self.stage_versions,
            "stages": self.stages,
        }

    def artifact_digests(self) -> dict[str, str]:
        out = {}
        for stage in self.stages.values():
            out.update(stage["artifacts"])
        return out


def build_renderer(config: Config, fetcher: crawler.Fetcher | None = None) -> Renderer:
    if config.renderer.backend == "real":
        from .renderer.cdp import CdpRenderer

        return CdpRenderer()
    from .renderer.mock import MockRenderer

    if fetcher is not None:
        def polite_fetch(url: str) -> str:
            status, body = fetcher.get(url)
            if status != 200:
                raise NavigationTimeout(f"{url} -> {status}")
            return body.decode("utf-8", errors="replace")

        return MockRenderer(fetcher=polite_fetch)
    return MockRenderer()


def build_gateway(config: Config, out_dir: Path) -> Gateway:
    backend = get_backend(
        config.llm.backend, model=config.llm.model, image_cap=config.llm.image_cap
    )
    return Gateway(
        backend,
        max_attempts=config.llm.max_attempts,
        transcript_path=out_dir / "transcripts" / "llm_calls.jsonl",
    )


def viewport_of(config: Config) -> Viewport:
    return Viewport(
        width=config.renderer.viewport_width,
        height=config.renderer.viewport_height,
        device_scale=config.renderer.device_scale,
    )


def _page_dirs(out_dir: Path) -> list[Path]:
    pages = out_dir / "pages"
    if not pages.is_dir():
        return []
    return sorted(p for p in pages.iterdir() if p.is_dir())


def _walk_files(root: Path) -> list[Path]:
    return [p for p in root.rglob("*") if p.is_file()]


def _map_pages(page_dirs: list[Path], fn, jobs: int) -> None:
    if jobs <= 1 or len(page_dirs) <= 1:
        for page_dir in page_dirs:
            fn(page_dir)
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        list(pool.map(fn, page_dirs))


def stage_crawl(config: Config, out_dir: Path, force: bool = False) -> list[Path]:
    policy = crawler.FetchPolicy(
        min_delay_ms=config.crawler.min_delay_ms,
        max_per_host=config.crawler.max_per_host,
        render=config.crawler.render,
        max_bytes=config.crawler.max_bytes,
        viewport=viewport_of(config),
    )
    fetcher = crawler.Fetcher(policy)
    renderer = build_renderer(config, fetcher=fetcher)
    robots = crawler.RobotsCache(fetcher.get_text, policy.user_agent)

    urls = list(config.crawler.urls)
    if not urls:
        import os

        keywords = load_keywords(config.crawler.keywords_file or None)
        queries = crawler.expand_keywords(keywords, config.crawler.suffixes)
        if config.crawler.search_provider == "jsonl":
            if not config.crawler.search_script:
                raise PipelineError("crawler.search_script is required for the jsonl provider")
            provider = crawler.JsonlSearchProvider(config.crawler.search_script)
        else:
            provider = crawler.HttpSearchProvider(
                config.crawler.search_endpoint, os.environ.get("SEARCH_API_KEY", "")
            )
        ranked: list[str] = []
        for query in queries:
            ranked.extend(crawler.search_seeds(query, provider))
        urls = crawler.filter_urls(ranked, config.crawler.blacklist())

    urls = urls[: config.crawler.max_pages]
    records: list[dict] = []
    written = []
    for url in urls:
        page_id = crawler.page_id_for(url)
        page_dir = out_dir / "pages" / page_id
        if (page_dir / "page.html").exists() and not force:
            logger.info("crawl: %s already fetched, skipping", page_id)
            records.append(_load_page_meta(page_dir))
            continue
        record = crawler.fetch_page(
            url, page_dir, policy, renderer, fetcher=fetcher, robots=robots
        )
        meta = record.to_dict()
        meta["page_id"] = page_id
        records.append(meta)
        if record.robots_allowed and record.status == 200:
            dump_json(meta, page_dir / "page.json")
            written.append(page_dir / "page.json")
    records_path = out_dir / "crawl_records.json"
    dump_json(records, records_path)
    written.append(records_path)
    for page_dir in _page_dirs(out_dir):
        written.extend(_walk_files(page_dir))
    return written


def _load_page_meta(page_dir: Path) -> dict:
    meta_path = page_dir / "page.json"
    if meta_path.exists():
        return json.loads(meta_path.read_text(encoding="utf-8"))
    return {"url": "", "page_id": page_dir.name}


def _load_assets(page_dir: Path):
    manifest = page_dir / "assets.json"
    if not manifest.exists():
        return []
    return [asset_from_dict(a) for a in json.loads(manifest.read_text(encoding="utf-8"))]


def stage_process(config: Config, out_dir: Path, force: bool = False) -> list[Path]:
    page_dirs = _page_dirs(out_dir)
    ready = [p for p in page_dirs if (p / "page.html").exists()]
    if not ready:
        raise MissingPredecessorArtifacts("process requires crawled pages (pages/*/page.html)")
    renderer = build_renderer(config)
    viewport = viewport_of(config)

    def process_one(page_dir: Path) -> None:
        if (page_dir / "structured.json").exists() and not force:
            logger.info("process: %s already processed, skipping", page_dir.name)
            return
        meta = _load_page_meta(page_dir)
        page = renderer.load(str(page_dir / "page.html"), viewport=viewport)
        page.scroll_full(max_steps=config.renderer.max_scroll_steps)
        processor.section_wise_decomposition(
            page,
            theta_min=config.processor.theta_min,
            page_id=meta.get("page_id", page_dir.name),
            url=meta.get("url", ""),
            out_dir=page_dir,
            include_nav=config.processor.include_nav,
            adjacency_merge=config.processor.adjacency_merge,
            assets=_load_assets(page_dir),
            base_url=meta.get("url", ""),
            asset_root=page_dir,
        )

    _map_pages(ready, process_one, config.run.jobs)
    artifacts = []
    for page_dir in ready:
        for name in ("sections.json", "structured.json", "screenshot.png"):
            if (page_dir / name).exists():
                artifacts.append(page_dir / name)
        for sub in ("screenshots", "images"):
            if (page_dir / sub).is_dir():
                artifacts.extend(_walk_files(page_dir / sub))
    return artifacts


def stage_instruct(config: Config, out_dir: Path, force: bool = False) -> list[Path]:
    page_dirs = [p for p in _page_dirs(out_dir) if (p / "structured.json").exists()]
    if not page_dirs:
        raise MissingPredecessorArtifacts("instruct requires processed pages (structured.json)")
    gateway = build_gateway(config, out_dir)

    def instruct_one(page_dir: Path) -> None:
        if (page_dir / "instruction.md").exists() and not force:
            logger.info("instruct: %s already done, skipping", page_dir.name)
            return
        structured = structured_from_dict(
            json.loads((page_dir / "structured.json").read_text(encoding="utf-8"))
        )
        page_html = (page_dir / "page.html").read_text(encoding="utf-8")
        css_texts = [
            p.read_text(encoding="utf-8")
            for p in (page_dir / "assets").glob("*.css")
            if p.is_file()
        ] if (page_dir / "assets").is_dir() else []
        refs = processor.extract_reference_set(
            page_html, external_css=css_texts, base=structured.url
        )
        referenced = processor.filter_referenced_assets(
            list(structured.assets), refs, asset_root=page_dir
        )
        classifications = instructor.classify_images(
            referenced,
            structured.sections,
            gateway,
            page_dir=page_dir,
            base_url=structured.url,
            model=config.llm.model,
        )
        instructor.materialize_semantic_assets(classifications, referenced, page_dir)
        summaries = []
        flags = []
        for section in structured.sections:
            summary, truncated = instructor.summarize_section(
                section, gateway, model=config.llm.model
            )
            summaries.append(summary)
            if truncated:
                flags.append(section.order)
        spec = instructor.build_instruction(
            structured, classifications, summaries, page_html=page_html
        )
        (page_dir / "instruction.md").write_text(spec.rendered_markdown, encoding="utf-8")
        dump_json(
            {
                "results": [c.to_dict() for c in classifications],
                "fallbacks": [c.original for c in classifications if c.fallback_used],
            },
            page_dir / "classification.json",
        )
        dump_json(
            {
                "title": spec.title,
                "description": spec.description,
                "assets": [list(row) for row in spec.assets],
                "links": [list(row) for row in spec.links],
                "content_summaries": spec.content_summaries,
                "title_fallback_used": spec.title_fallback_used,
                "truncated_summaries": flags,
            },
            page_dir / "instruction.json",
        )

    _map_pages(page_dirs, instruct_one, config.run.jobs)
    artifacts = []
    for page_dir in page_dirs:
        for name in ("instruction.md", "instruction.json", "classification.json"):
            if (page_dir / name).exists():
                artifacts.append(page_dir / name)
        if (page_dir / "assets").is_dir():
            artifacts.extend(_walk_files(page_dir / "assets"))
    return artifacts


def load_instruction_spec(page_dir: Path) -> instructor.InstructionSpec:
    data = json.loads((page_dir / "instruction.json").read_text(encoding="utf-8"))
    return instructor.InstructionSpec(
        title=data["title"],
        description=data["description"],
        assets=[tuple(row) for row in data["assets"]],
        links=[tuple(row) for row in data["links"]],
        content_summaries=list(data["content_summaries"]),
        rendered_markdown=(page_dir / "instruction.md").read_text(encoding="utf-8"),
        title_fallback_used=data.get("title_fallback_used", False),
    )


def stage_generate(config: Config, out_dir: Path, force: bool = False) -> list[Path]:
    page_dirs = [p for p in _page_dirs(out_dir) if (p / "instruction.md").exists()]
    if not page_dirs:
        raise MissingPredecessorArtifacts("generate requires instructions (instruction.md)")
    gateway = build_gateway(config, out_dir)

    def generate_one(page_dir: Path) -> None:
        target = page_dir / "generated" / "zero_shot" / "page.html"
        if target.exists() and not force:
            logger.info("generate: %s already done, skipping", page_dir.name)
            return
        spec = load_instruction_spec(page_dir)
        result = evaluation.generate_html(
            spec,
            gateway,
            asset_dir=page_dir / "assets",
            page_id=page_dir.name,
            model=config.llm.model,
        )
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(result.html, encoding="utf-8")
        dump_json(
            {
                "page_id": result.page_id,
                "setting": result.setting,
                "token_usage": result.token_usage.to_dict(),
                "asset_manifest": list(result.asset_manifest),
            },
            target.parent / "generation.json",
        )

    _map_pages(page_dirs, generate_one, config.run.jobs)
    return [
        path
        for page_dir in page_dirs
        if (page_dir / "generated").is_dir()
        for path in _walk_files(page_dir / "generated")
    ]


def _evaluate_page(
    config: Config,
    page_dir: Path,
    html_path: Path,
    setting: str,
    renderer: Renderer,
    gateway: Gateway,
) -> EvaluationReport:
    html = html_path.read_text(encoding="utf-8")
    spec = load_instruction_spec(page_dir)
    workdir = page_dir / "eval_work" / setting
    common = dict(
        workdir=workdir,
        page_id=page_dir.name,
        setting=setting,
        model=config.llm.model,
        viewport=viewport_of(config),
    )
    if config.evaluation.mode == "structured":
        return evaluation.evaluate_structured(
            html, spec, renderer, gateway,
            theta_min=config.processor.theta_min, **common,
        )
    return evaluation.evaluate_non_structured(html, spec, renderer, gateway, **common)


def stage_evaluate(config: Config, out_dir: Path, force: bool = False) -> list[Path]:
    page_dirs = [
        p
        for p in _page_dirs(out_dir)
        if (p / "generated" / "zero_shot" / "page.html").exists()
    ]
    if not page_dirs:
        raise MissingPredecessorArtifacts("evaluate requires generated HTML")
    gateway = build_gateway(config, out_dir)
    renderer = build_renderer(config)

    def evaluate_one(page_dir: Path) -> None:
        report_path = page_dir / "eval" / "zero_shot.json"
        if report_path.exists() and not force:
            logger.info("evaluate: %s already done, skipping", page_dir.name)
            return
        report = _evaluate_page(
            config,
            page_dir,
            page_dir / "generated" / "zero_shot" / "page.html",
            "zero_shot",
            renderer,
            gateway,
        )
        report_path.parent.mkdir(parents=True, exist_ok=True)
        dump_json(report.to_dict(), report_path)

    _map_pages(page_dirs, evaluate_one, config.run.jobs)
    return [
        path
        for page_dir in page_dirs
        if (page_dir / "eval").is_dir()
        for path in _walk_files(page_dir / "eval")
    ]


def stage_refine(config: Config, out_dir: Path, force: bool = False) -> list[Path]:
    page_dirs = [
        p for p in _page_dirs(out_dir) if (p / "eval" / "zero_shot.json").exists()
    ]
    if not page_dirs:
        raise MissingPredecessorArtifacts("refine requires zero-shot evaluation reports")
    gateway = build_gateway(config, out_dir)
    renderer = build_renderer(config)
    setting = f"refine_{config.evaluation.mode}"

    def refine_one(page_dir: Path) -> None:
        tasks_path = page_dir / "tasks.json"
        refined_path = page_dir / "generated" / setting / "page.html"
        report_path = page_dir / "eval" / f"{setting}.json"
        if tasks_path.exists() and not force:
            logger.info("refine: %s already done, skipping", page_dir.name)
            return
        report = report_from_dict(
            json.loads((page_dir / "eval" / "zero_shot.json").read_text(encoding="utf-8")),
            strict=False,
        )
        tasks = evaluation.extract_corrective_tasks(report, config.evaluation.tau_select)
        dump_json(
            [
                {
                    "section_number": t.section_number,
                    "metric": t.metric,
                    "score": t.score,
                    "feedback": t.feedback,
                    "priority_rank": t.priority_rank,
                }
                for t in tasks
            ],
            tasks_path,
        )
        if config.evaluation.strict_trigger:
            minimum = min(s.score for sec in report.sections for s in sec.scores)
            should_refine = minimum < config.evaluation.tau_select
        else:
            should_refine = bool(tasks)
        if not should_refine:
            logger.info("refine: %s has no low scores, skipping refinement", page_dir.name)
            return
        spec = load_instruction_spec(page_dir)
        html = (page_dir / "generated" / "zero_shot" / "page.html").read_text(encoding="utf-8")
        result = evaluation.refine_html(
            spec, html, tasks, gateway,
            page_id=page_dir.name, setting=setting, model=config.llm.model,
        )
        refined_path.parent.mkdir(parents=True, exist_ok=True)
        refined_path.write_text(result.html, encoding="utf-8")
        refined_report = _evaluate_page(
            config, page_dir, refined_path, setting, renderer, gateway
        )
        dump_json(refined_report.to_dict(), report_path)

    _map_pages(page_dirs, refine_one, config.run.jobs)
    artifacts = []
    for page_dir in page_dirs:
        if (page_dir / "tasks.json").exists():
            artifacts.append(page_dir / "tasks.json")
        for sub in ("generated", "eval"):
            if (page_dir / sub).is_dir():
                artifacts.extend(_walk_files(page_dir / sub))
    return artifacts


def _load_reports(out_dir: Path, setting: str) -> list[EvaluationReport]:
    reports = []
    for page_dir in _page_dirs(out_dir):
        path = page_dir / "eval" / f"{setting}.json"
        if path.exists():
            reports.append(
                report_from_dict(json.loads(path.read_text(encoding="utf-8")), strict=False)
            )
    return reports


def stage_report(config: Config, out_dir: Path, force: bool = False) -> list[Path]:
    zero_shot = _load_reports(out_dir, "zero_shot")
    if not zero_shot:
        raise MissingPredecessorArtifacts("report requires evaluation reports")
    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []

    low_max = config.analytics.low_score_max
    refined_setting = f"refine_{config.evaluation.mode}"
    refined = _load_reports(out_dir, refined_setting)

    low_scores: dict = {
        "threshold_reading": f"score <= {low_max}",
        "alternate_reading": "score <= 4",
        "zero_shot": analytics.low_score_stats(zero_shot, low_max).to_dict(),
        "zero_shot_alternate": analytics.low_score_stats(zero_shot, 4).to_dict(),
    }
    if refined:
        low_scores[refined_setting] = analytics.low_score_stats(refined, low_max).to_dict()
    path = report_dir / "low_scores.json"
    dump_json(low_scores, path)
    artifacts.append(path)

    if refined:
        paired_ids = {r.page_id for r in zero_shot} & {r.page_id for r in refined}
        a = [r for r in refined if r.page_id in paired_ids]
        b = [r for r in zero_shot if r.page_id in paired_ids]
        if paired_ids:
            h2h = analytics.head_to_head(a, b, low_score_max=low_max)
            path = report_dir / "head_to_head.json"
            dump_json(
                {"comparison": f"{refined_setting} vs zero_shot", **h2h.to_dict()}, path
            )
            artifacts.append(path)

    usage: dict[str, dict] = {}
    transcript = out_dir / "transcripts" / "llm_calls.jsonl"
    if transcript.exists():
        for line in transcript.read_text(encoding="utf-8").splitlines():
            entry = json.loads(line)
            key = f"{entry['model']}/{entry['stage']}"
            slot = usage.setdefault(key, {"input_tokens": 0, "output_tokens": 0, "calls": 0})
            slot["input_tokens"] += entry["usage"]["input_tokens"]
            slot["output_tokens"] += entry["usage"]["output_tokens"]
            slot["calls"] += 1
    path = report_dir / "token_usage.json"
    dump_json(usage, path)
    artifacts.append(path)
    return artifacts


_STAGE_FUNCS = {
    "crawl": stage_crawl,
    "process": stage_process,
    "instruct": stage_instruct,
    "generate": stage_generate,
    "evaluate": stage_evaluate,
    "refine": stage_refine,
    "report": stage_report,
}


def run_pipeline(
    config: Config,
    stages: list[str] | None = None,
    *,
    force: bool = False,
    out_dir: str | Path | None = None,
) -> RunManifest:
    """Execute the requested stages in pipeline order and write the run
    manifest. A stage refuses to run when its predecessor's artifacts are
    missing; completed pages are skipped unless ``force``."""
    requested = list(stages) if stages else list(STAGES)
    unknown = [s for s in requested if s not in STAGES]
    if unknown:
        raise PipelineError(f"unknown stages: {unknown}")
    ordered = [s for s in STAGES if s in requested]

    out_path = Path(out_dir) if out_dir is not None else Path(config.run.out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        config,
        backends={"renderer": config.renderer.backend, "llm": config.llm.backend},
    )
    for stage in ordered:
        logger.info("running stage %s", stage)
        artifacts = _STAGE_FUNCS[stage](config, out_path, force)
        manifest.record_stage(stage, out_path, artifacts)
    dump_json(manifest.to_dict(), out_path / "manifest.json")
    return manifest

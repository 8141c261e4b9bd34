"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 user or configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from decimal import Decimal
from pathlib import Path

from . import analytics, pipeline
from .analytics import PricingEntry, TierRule
from .config import Config, ConfigError, validate_config
from .model import dump_json, label_from_dict, report_from_dict

logger = logging.getLogger(__name__)

# Default per-million-token prices (USD) for the commonly benchmarked
# backbones; override with --pricing-file.
DEFAULT_PRICING: dict[str, PricingEntry] = {
    "claude-4.1-opus": PricingEntry(Decimal("15"), Decimal("75")),
    "gpt-5": PricingEntry(Decimal("1.25"), Decimal("10.00")),
    "gemini-2.5-pro": PricingEntry(
        Decimal("0.625"),
        Decimal("5.00"),
        tier=TierRule(
            threshold_tokens=200_000,
            above=(Decimal("1.25"), Decimal("7.50")),
            below=(Decimal("0.625"), Decimal("5.00")),
        ),
    ),
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to the run configuration file")
    parser.add_argument("--out", help="output directory (overrides run.out_dir)")
    parser.add_argument("--renderer", choices=["mock", "real"], help="renderer backend override")
    parser.add_argument("--backend", help="LLM backend override (e.g. mock:script.jsonl)")
    parser.add_argument("--jobs", type=int, help="parallel page workers")
    parser.add_argument("--force", action="store_true", help="redo completed pages")


def _load_config(args) -> Config:
    config = validate_config(args.config)
    if getattr(args, "renderer", None):
        config.renderer.backend = args.renderer
    if getattr(args, "backend", None):
        config.llm.backend = args.backend
    if getattr(args, "jobs", None):
        config.run.jobs = args.jobs
    if getattr(args, "out", None):
        config.run.out_dir = args.out
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pagebench",
        description="Section-wise webpage benchmark pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in pipeline.STAGES:
        stage_parser = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common(stage_parser)
        if stage == "crawl":
            stage_parser.add_argument("--keywords", help="keywords file (one per line)")
            stage_parser.add_argument("--max-pages", type=int, dest="max_pages")
            stage_parser.add_argument("--blacklist", help="extra blacklist file")
            stage_parser.add_argument(
                "--render", choices=["auto", "always", "never"], dest="render"
            )
        if stage == "evaluate":
            stage_parser.add_argument(
                "--mode", choices=["structured", "non-structured"], dest="mode"
            )

    run_parser = sub.add_parser("run", help="run the full pipeline")
    _add_common(run_parser)
    run_parser.add_argument("--stages", help="comma-separated subset of stages")
    run_parser.add_argument(
        "--one-turn",
        action="store_true",
        help="full generate-evaluate-refine loop (the default behavior)",
    )

    report_parser = sub.add_parser("report", help="aggregate analytics reports")
    _add_common(report_parser)
    report_parser.add_argument(
        "kind", choices=["low-scores", "head-to-head", "cost"], nargs="?", default=None
    )
    report_parser.add_argument("--in", dest="in_dir", help="run directory to aggregate")
    report_parser.add_argument("--report-out", dest="report_out", help="report JSON path")
    report_parser.add_argument("--pricing-file", dest="pricing_file")

    degrade_parser = sub.add_parser("degrade", help="inject labeled degradations")
    _add_common(degrade_parser)
    degrade_parser.add_argument("--plan", required=True, help="degradation plan JSON")

    validate_parser = sub.add_parser("validate-config", help="check a config file")
    validate_parser.add_argument("path", nargs="?", help="config file path")

    return parser


def _cmd_stage(stage: str, args) -> int:
    config = _load_config(args)
    if stage == "crawl":
        if getattr(args, "keywords", None):
            config.crawler.keywords_file = args.keywords
        if getattr(args, "max_pages", None):
            config.crawler.max_pages = args.max_pages
        if getattr(args, "render", None):
            config.crawler.render = args.render
        if getattr(args, "blacklist", None):
            extra = [
                line.strip()
                for line in Path(args.blacklist).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            config.crawler.extra_blacklist.extend(extra)
    if stage == "evaluate" and getattr(args, "mode", None):
        config.evaluation.mode = args.mode.replace("-", "_")
    pipeline.run_pipeline(config, [stage], force=args.force)
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args)
    stages = None
    if args.stages:
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    pipeline.run_pipeline(config, stages, force=args.force)
    return 0


def _load_pricing(path: str | None) -> dict[str, PricingEntry]:
    if not path:
        return dict(DEFAULT_PRICING)
    table = {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    for model, entry in raw.items():
        tier = None
        if "tier" in entry:
            t = entry["tier"]
            tier = TierRule(
                threshold_tokens=int(t["threshold_tokens"]),
                above=(Decimal(str(t["above"][0])), Decimal(str(t["above"][1]))),
                below=(Decimal(str(t["below"][0])), Decimal(str(t["below"][1]))),
            )
        table[model] = PricingEntry(
            Decimal(str(entry["input"])), Decimal(str(entry["output"])), tier=tier
        )
    return table


def _cmd_report(args) -> int:
    config = _load_config(args)
    in_dir = Path(args.in_dir or config.run.out_dir)
    if args.kind is None:
        pipeline.run_pipeline(config, ["report"], force=args.force, out_dir=in_dir)
        return 0
    out_path = Path(args.report_out) if args.report_out else in_dir / "report" / f"{args.kind}.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)

    def load_reports(setting):
        reports = []
        for page_dir in sorted((in_dir / "pages").glob("*/")):
            path = page_dir / "eval" / f"{setting}.json"
            if path.exists():
                reports.append(
                    report_from_dict(json.loads(path.read_text(encoding="utf-8")), strict=False)
                )
        return reports

    if args.kind == "low-scores":
        reports = load_reports("zero_shot")
        if not reports:
            raise pipeline.MissingPredecessorArtifacts("no evaluation reports found")
        stats = analytics.low_score_stats(reports, config.analytics.low_score_max)
        dump_json(
            {"threshold_reading": f"score <= {config.analytics.low_score_max}", **stats.to_dict()},
            out_path,
        )
    elif args.kind == "head-to-head":
        refined_setting = f"refine_{config.evaluation.mode}"
        a, b = load_reports(refined_setting), load_reports("zero_shot")
        paired = {r.page_id for r in a} & {r.page_id for r in b}
        result = analytics.head_to_head(
            [r for r in a if r.page_id in paired],
            [r for r in b if r.page_id in paired],
            low_score_max=config.analytics.low_score_max,
        )
        dump_json({"comparison": f"{refined_setting} vs zero_shot", **result.to_dict()}, out_path)
    else:  # cost
        usage_path = in_dir / "report" / "token_usage.json"
        if not usage_path.exists():
            raise pipeline.MissingPredecessorArtifacts(
                "run the report stage first (report/token_usage.json missing)"
            )
        usage = json.loads(usage_path.read_text(encoding="utf-8"))
        pricing = _load_pricing(args.pricing_file)
        rows = {}
        for key, entry in usage.items():
            model = key.split("/", 1)[0]
            pricing_entry = pricing.get(model)
            row = dict(entry)
            if pricing_entry is not None:
                cost = analytics.token_cost(
                    entry["input_tokens"], entry["output_tokens"], 1, pricing_entry
                )
                row["input_usd"] = str(cost.input_usd)
                row["output_usd"] = str(cost.output_usd)
                row["total_usd"] = str(cost.total_usd)
            rows[key] = row
        dump_json(rows, out_path)
    print(f"wrote {out_path}")
    return 0


def _cmd_degrade(args) -> int:
    config = _load_config(args)
    in_dir = Path(config.run.out_dir)
    plan = json.loads(Path(args.plan).read_text(encoding="utf-8"))
    for entry in plan:
        page_id = entry["page_id"]
        page_dir = in_dir / "pages" / page_id
        html_path = page_dir / "page.html"
        if not html_path.exists():
            raise pipeline.MissingPredecessorArtifacts(f"no crawled page for {page_id}")
        html = html_path.read_text(encoding="utf-8")
        degraded, labels = analytics.inject_degradations(
            html,
            [(int(sec), cat) for sec, cat in entry["plan"]],
            page_id=page_id,
            viewport=pipeline.viewport_of(config),
            theta_min=config.processor.theta_min,
        )
        out_dir = page_dir / "degraded"
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "page.html").write_text(degraded, encoding="utf-8")
        dump_json([l.to_dict() for l in labels], out_dir / "labels.json")
        print(f"degraded {page_id}: {len(labels)} labels")
    return 0


def _cmd_validate_config(args) -> int:
    config = validate_config(args.path)
    print(json.dumps(config.to_dict(), indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "degrade":
            return _cmd_degrade(args)
        if args.command == "validate-config":
            return _cmd_validate_config(args)
        return _cmd_stage(args.command, args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        logger.error("%s", exc)
        return 1
    except pipeline.PipelineError as exc:
        logger.error("%s", exc)
        return 2
    except Exception as exc:  # stage failure
        logger.exception("stage failed: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

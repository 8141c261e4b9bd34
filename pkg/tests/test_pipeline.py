import json
from pathlib import Path

import pytest
import yaml

from pagebench import cli, pipeline
from pagebench.config import ConfigError, load_keywords, validate_config
from pagebench.crawler import page_id_for
from pagebench.model import METRICS


def judge_reply(section_scores):
    sections = []
    for i, overrides in enumerate(section_scores, start=1):
        entry = {
            "section_number": i,
            "section_name": f"Section {i}",
            "description": "d",
        }
        for metric in METRICS:
            entry[metric] = {
                "score": overrides.get(metric, 5),
                "reason": "r",
                "feedback": f"fix {metric} in section {i}",
            }
        sections.append(entry)
    return json.dumps({"sections": sections})


PAGE_ONE = (
    "<html><head><title>One Page</title>"
    '<meta name="description" content="First fixture page."></head>'
    "<body>"
    "<header style='height:100px'><h1>One</h1></header>"
    "<section style='height:400px'><p>Alpha content paragraph.</p>"
    "<img src='/one-hero.png'><a href='/signup'>Sign up</a></section>"
    "<footer style='height:80px'><p>Footer one.</p></footer>"
    "</body></html>"
)

PAGE_TWO = (
    "<html><head><title>Two Page</title></head>"
    "<body>"
    "<section style='height:300px'><h1>Two</h1><p>Beta paragraph text.</p>"
    "<img src='/two-icon.png'></section>"
    "<footer style='height:90px'><p>Footer two.</p></footer>"
    "</body></html>"
)

GENERATED = (
    "<!DOCTYPE html><html><body>"
    "<section style='height:300px'><h1>Generated</h1>"
    "<img src='./assets/one-hero.png'></section>"
    "</body></html>"
)

REFINED = GENERATED.replace("<h1>Generated</h1>", "<h1>Generated v2</h1>")


@pytest.fixture
def e2e_env(web_server, tmp_path, tiny_png):
    web_server.add("/one", PAGE_ONE)
    web_server.add("/two", PAGE_TWO)
    web_server.add("/one-hero.png", tiny_png, "image/png")
    web_server.add("/two-icon.png", tiny_png, "image/png")

    script = tmp_path / "llm_script.jsonl"
    rules = [
        {
            "stage": "classify",
            "contains": "one-hero.png",
            "reply": json.dumps(
                {"original": "one-hero.png", "semantic_name": "one-hero.png", "category": "hero"}
            ),
        },
        {
            "stage": "classify",
            "contains": "two-icon.png",
            "reply": json.dumps(
                {"original": "two-icon.png", "semantic_name": "two-icon.png", "category": "icon"}
            ),
        },
        {"stage": "summarize", "contains": "", "reply": "Fixture content summary."},
        {"stage": "generate", "contains": "", "reply": GENERATED},
        {"stage": "evaluate", "contains": "", "reply": judge_reply([{"SPC": 3}])},
        {"stage": "refine", "contains": "", "reply": REFINED},
    ]
    # stage-only rules need a non-empty match field; use stage matching
    lines = []
    for rule in rules:
        if not rule["contains"]:
            del rule["contains"]
        lines.append(json.dumps(rule))
    script.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def make_config(out_dir):
        return {
            "crawler": {
                "urls": [web_server.base_url + "/one", web_server.base_url + "/two"],
                "min_delay_ms": 0,
                "render": "never",
            },
            "llm": {"backend": f"mock:{script}", "model": "mock-model"},
            "run": {"out_dir": str(out_dir)},
        }

    return web_server, tmp_path, make_config


def _write_config(tmp_path, payload, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload), encoding="utf-8")
    return path


def test_full_pipeline_produces_all_artifacts(e2e_env):
    web_server, tmp_path, make_config = e2e_env
    out_dir = tmp_path / "run1"
    config_path = _write_config(tmp_path, make_config(out_dir))
    config = validate_config(config_path)

    manifest = pipeline.run_pipeline(config)

    page_id = page_id_for(web_server.base_url + "/one")
    page_dir = out_dir / "pages" / page_id
    for artifact in (
        "page.html",
        "sections.json",
        "structured.json",
        "instruction.md",
        "classification.json",
        "generated/zero_shot/page.html",
        "eval/zero_shot.json",
        "tasks.json",
        "generated/refine_structured/page.html",
        "eval/refine_structured.json",
    ):
        assert (page_dir / artifact).exists(), artifact
    assert (out_dir / "manifest.json").exists()
    assert (out_dir / "report" / "low_scores.json").exists()
    assert set(manifest.stages) == set(pipeline.STAGES)
    refined = (page_dir / "generated/refine_structured/page.html").read_text()
    assert refined == REFINED


def test_two_runs_identical_digests(e2e_env):
    web_server, tmp_path, make_config = e2e_env
    config1 = validate_config(_write_config(tmp_path, make_config(tmp_path / "runA"), "a.yaml"))
    config2 = validate_config(_write_config(tmp_path, make_config(tmp_path / "runB"), "b.yaml"))
    manifest1 = pipeline.run_pipeline(config1)
    manifest2 = pipeline.run_pipeline(config2)
    assert manifest1.artifact_digests() == manifest2.artifact_digests()


def test_rerun_without_force_makes_no_llm_calls(e2e_env):
    web_server, tmp_path, make_config = e2e_env
    out_dir = tmp_path / "run1"
    config = validate_config(_write_config(tmp_path, make_config(out_dir)))
    pipeline.run_pipeline(config)
    transcript = out_dir / "transcripts" / "llm_calls.jsonl"
    calls_before = len(transcript.read_text().splitlines())
    pipeline.run_pipeline(config)
    calls_after = len(transcript.read_text().splitlines())
    assert calls_after == calls_before


def test_stage_without_predecessor_fails(e2e_env):
    web_server, tmp_path, make_config = e2e_env
    out_dir = tmp_path / "empty_run"
    config = validate_config(_write_config(tmp_path, make_config(out_dir)))
    with pytest.raises(pipeline.MissingPredecessorArtifacts):
        pipeline.run_pipeline(config, ["evaluate"])


def test_unknown_stage_rejected(e2e_env):
    web_server, tmp_path, make_config = e2e_env
    config = validate_config(_write_config(tmp_path, make_config(tmp_path / "x")))
    with pytest.raises(pipeline.PipelineError):
        pipeline.run_pipeline(config, ["deploy"])


# -- config ---------------------------------------------------------------------


def test_empty_config_is_all_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    config = validate_config(path)
    assert config.processor.theta_min == 50.0
    assert config.evaluation.tau_select == 4
    assert config.analytics.low_score_max == 3
    assert (config.renderer.viewport_width, config.renderer.viewport_height) == (1280, 800)
    assert config.crawler.min_delay_ms == 1000


def test_negative_theta_min_rejected(tmp_path):
    path = _write_config(tmp_path, {"processor": {"theta_min": -1}})
    with pytest.raises(ConfigError) as err:
        validate_config(path)
    assert "processor.theta_min" in str(err.value)


def test_unknown_field_rejected(tmp_path):
    path = _write_config(tmp_path, {"processor": {"theta_minimum": 3}})
    with pytest.raises(ConfigError) as err:
        validate_config(path)
    assert "processor.theta_minimum" in str(err.value)


def test_bundled_keyword_list_loads():
    keywords = load_keywords()
    assert len(keywords) == 300
    assert "crm" in keywords


def test_keywords_file_loadable(tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text("# cat\ncrm\nbooking\n", encoding="utf-8")
    assert load_keywords(path) == ["crm", "booking"]


# -- CLI ---------------------------------------------------------------------------


def test_cli_validate_config_ok(tmp_path, capsys):
    path = _write_config(tmp_path, {"processor": {"theta_min": 42}})
    assert cli.main(["validate-config", str(path)]) == 0
    out = capsys.readouterr().out
    assert '"theta_min": 42' in out


def test_cli_validate_config_error(tmp_path):
    path = _write_config(tmp_path, {"processor": {"theta_min": -5}})
    assert cli.main(["validate-config", str(path)]) == 1


def test_cli_stage_missing_predecessor_exit_2(e2e_env):
    web_server, tmp_path, make_config = e2e_env
    config_path = _write_config(tmp_path, make_config(tmp_path / "cli_run"))
    assert cli.main(["evaluate", "--config", str(config_path)]) == 2


def test_cli_full_run_and_reports(e2e_env, capsys):
    web_server, tmp_path, make_config = e2e_env
    out_dir = tmp_path / "cli_run"
    config_path = _write_config(tmp_path, make_config(out_dir))
    assert cli.main(["run", "--config", str(config_path)]) == 0
    assert cli.main(["report", "low-scores", "--config", str(config_path)]) == 0
    assert cli.main(["report", "head-to-head", "--config", str(config_path)]) == 0
    assert cli.main(["report", "cost", "--config", str(config_path)]) == 0
    low = json.loads((out_dir / "report" / "low-scores.json").read_text())
    assert low["per_metric"]["SPC"] == 1.0  # every page judged with one SPC=3
    cost = json.loads((out_dir / "report" / "cost.json").read_text())
    assert "mock-model/evaluate" in cost


def test_cli_degrade(e2e_env):
    web_server, tmp_path, make_config = e2e_env
    out_dir = tmp_path / "degrade_run"
    config_path = _write_config(tmp_path, make_config(out_dir))
    assert cli.main(["crawl", "--config", str(config_path)]) == 0
    page_id = page_id_for(web_server.base_url + "/one")
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps([{"page_id": page_id, "plan": [[2, "media"]]}]))
    assert cli.main(["degrade", "--config", str(config_path), "--plan", str(plan)]) == 0
    degraded_dir = out_dir / "pages" / page_id / "degraded"
    assert (degraded_dir / "page.html").exists()
    labels = json.loads((degraded_dir / "labels.json").read_text())
    assert labels[0]["category"] == "media"

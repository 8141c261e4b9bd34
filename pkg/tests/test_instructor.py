import json
from pathlib import Path

import pytest

from pagebench.geometry import BoundingBox
from pagebench.instructor import (
    ClassificationResult,
    assign_link_priorities,
    build_instruction,
    classify_images,
    format_asset_line,
    materialize_semantic_assets,
    sanitize_semantic_name,
    summarize_section,
)
from pagebench.llm import Gateway
from pagebench.llm.mock import ScriptRule, ScriptedBackend
from pagebench.model import AssetRecord, Link, SectionRecord, StructuredRepresentation

FIXTURES = Path(__file__).parent / "fixtures"


def _section(order, *, h1="", h2="", body="", bullets=(), links=(), images=()):
    return SectionRecord(
        order=order,
        type="section",
        heading_h1=h1,
        heading_h2=h2,
        body=body,
        bullets=tuple(bullets),
        links=tuple(Link(*l) for l in links),
        images=tuple(images),
        screenshot_path=f"screenshots/element_{order:02d}.png",
        bbox=BoundingBox(0, (order - 1) * 100, 1280, 100),
    )


def _gateway(rules, **kwargs):
    backend = ScriptedBackend(rules, **kwargs)
    return Gateway(backend, sleep=lambda s: None), backend


def _make_asset(tmp_path, name, width, height, size=1024, content=b"x"):
    path = tmp_path / "assets" / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(content * size if len(content) == 1 else content)
    return AssetRecord(
        original_name=name,
        saved_path=str(path),
        width=width,
        height=height,
        byte_size=path.stat().st_size,
        referenced=True,
        source_url=f"http://acme.example/{name}",
    )


def test_classify_icon_from_scripted_reply(tmp_path):
    asset = _make_asset(tmp_path, "check-icon.png", 16, 16)
    reply = json.dumps(
        {"original": "check-icon.png", "semantic_name": "check-icon.png", "category": "icon"}
    )
    gateway, backend = _gateway([ScriptRule(reply=reply, contains="check-icon.png")])
    sections = (_section(1, h1="Features", images=(("check-icon.png", "assets/check-icon.png"),)),)
    results = classify_images(
        [asset], sections, gateway, page_dir=tmp_path, base_url="http://acme.example/"
    )
    assert results == [ClassificationResult("check-icon.png", "check-icon.png", "icon")]
    assert backend.call_count == 1


def test_classify_illegal_category_reprompts_then_falls_back(tmp_path):
    asset = _make_asset(tmp_path, "odd.png", 16, 16)
    reply = json.dumps({"original": "odd.png", "semantic_name": "odd.png", "category": "banner"})
    gateway, backend = _gateway([ScriptRule(reply=reply, contains="odd.png")])
    results = classify_images([asset], (_section(1),), gateway, page_dir=tmp_path)
    assert backend.call_count == 2  # one re-prompt
    assert results[0].fallback_used
    assert results[0].category == "icon"  # 16x16 -> size rule


def test_classify_fallback_large_asset_is_feature(tmp_path):
    asset = _make_asset(tmp_path, "big.png", 800, 600)
    gateway, backend = _gateway([ScriptRule(reply="not json at all", contains="big.png")])
    results = classify_images([asset], (_section(1),), gateway, page_dir=tmp_path)
    assert results[0].category == "feature"
    assert results[0].fallback_used


def test_classify_no_assets_no_calls(tmp_path):
    gateway, backend = _gateway([])
    assert classify_images([], (_section(1),), gateway, page_dir=tmp_path) == []
    assert backend.call_count == 0


def test_classify_one_call_per_asset(tmp_path):
    assets = [
        _make_asset(tmp_path, f"img{i}.png", 100, 100) for i in range(3)
    ]
    rules = [
        ScriptRule(
            reply=json.dumps(
                {"original": f"img{i}.png", "semantic_name": f"img{i}.png", "category": "feature"}
            ),
            contains=f"img{i}.png",
        )
        for i in range(3)
    ]
    gateway, backend = _gateway(rules)
    results = classify_images(assets, (_section(1),), gateway, page_dir=tmp_path)
    assert backend.call_count == 3
    assert [r.original for r in results] == ["img0.png", "img1.png", "img2.png"]


def test_sanitize_semantic_name():
    assert sanitize_semantic_name("My Cool Image!.PNG", "photo.png", set()) == "my-cool-image.png"
    assert sanitize_semantic_name("hero.png", "hero.jpg", set()) == "hero.jpg"
    taken = {"hero.png"}
    assert sanitize_semantic_name("hero.png", "hero.png", taken) == "hero-2.png"


def test_summarize_section_scripted():
    gateway, backend = _gateway(
        [ScriptRule(reply="Pricing information with different plan options.", stage="summarize")]
    )
    summary, truncated = summarize_section(_section(1, h2="Pricing", body="Plans"), gateway)
    assert summary == "Pricing information with different plan options."
    assert not truncated


def test_summarize_long_reply_truncated():
    long_reply = " ".join(f"w{i}" for i in range(45))
    gateway, backend = _gateway([ScriptRule(reply=long_reply, stage="summarize")])
    summary, truncated = summarize_section(_section(1, body="text"), gateway)
    assert truncated
    assert len(summary.split()) == 30


def test_summarize_empty_section_no_call():
    gateway, backend = _gateway([])
    summary, truncated = summarize_section(_section(1), gateway)
    assert summary == "Empty section."
    assert backend.call_count == 0


def test_link_priorities_by_section_then_dom_order():
    sections = (
        _section(1, links=(("Sign up", "/signup"),)),
        _section(2),
        _section(3, links=(("Docs", "/docs"),)),
    )
    assert assign_link_priorities(sections) == [
        ("Sign up", 1, "/signup"),
        ("Docs", 2, "/docs"),
    ]


def test_duplicate_hrefs_collapse_to_first():
    sections = (
        _section(1, links=(("Sign up", "/go"),)),
        _section(4, links=(("Also go", "/go"), ("Other", "/other"))),
    )
    assert assign_link_priorities(sections) == [
        ("Sign up", 1, "/go"),
        ("Other", 2, "/other"),
    ]


def test_no_links_is_empty():
    assert assign_link_priorities((_section(1),)) == []


def test_asset_line_format():
    line = format_asset_line("hero-dashboard.png", "hero", 1920, 1080, 340 * 1024)
    assert line == "- `hero-dashboard.png`: Hero (1920x1080, 340KB)"


def _golden_structured(tmp_path):
    hero = _make_asset(tmp_path, "hero-dashboard.png", 1920, 1080, size=340 * 1024)
    icon = _make_asset(tmp_path, "check-icon.png", 16, 16, size=1024)
    sections = (
        _section(
            1,
            h1="Powerful CRM Platform",
            body="Manage leads with ease. Close deals faster.",
            links=(("Start", "/signup"),),
            images=(("hero-dashboard.png", "images/section_01_img_01_hero-dashboard.png"),),
        ),
        _section(2, h2="Pricing", body="Plans for teams.", links=(("Docs", "/docs"),)),
    )
    return StructuredRepresentation(
        page_id="acme",
        url="http://acme.example/",
        sections=sections,
        assets=(hero, icon),
    )


def test_build_instruction_matches_golden(tmp_path):
    structured = _golden_structured(tmp_path)
    classifications = [
        ClassificationResult("hero-dashboard.png", "hero-dashboard.png", "hero"),
        ClassificationResult("check-icon.png", "check-icon.png", "icon"),
    ]
    summaries = [
        "Customer relationship tools overview.",
        "Pricing information with different plan options.",
    ]
    page_html = (
        "<html><head><title>Acme CRM</title>"
        '<meta name="description" content="The CRM for everyone."></head>'
        "<body></body></html>"
    )
    spec = build_instruction(structured, classifications, summaries, page_html=page_html)
    golden = (FIXTURES / "instruction_golden.md").read_text(encoding="utf-8")
    assert spec.rendered_markdown == golden
    assert spec.rendered_markdown.startswith("# Web Page Design Requirements")


def test_build_instruction_zero_assets(tmp_path):
    structured = StructuredRepresentation(
        page_id="p", url="http://x.example/", sections=(_section(1, h1="T"),)
    )
    spec = build_instruction(structured, [], [])
    assert "## Available Assets (0 images)" in spec.rendered_markdown


def test_title_falls_back_to_host(tmp_path):
    structured = StructuredRepresentation(
        page_id="p", url="http://fallback.example/page", sections=(_section(1),)
    )
    spec = build_instruction(structured, [], [])
    assert spec.title == "fallback.example"
    assert spec.title_fallback_used


def test_materialize_semantic_assets(tmp_path):
    asset = _make_asset(tmp_path, "orig.png", 10, 10)
    results = [ClassificationResult("orig.png", "brand-logo.png", "logo")]
    materialize_semantic_assets(results, [asset], tmp_path)
    assert (tmp_path / "assets" / "brand-logo.png").read_bytes() == Path(asset.saved_path).read_bytes()

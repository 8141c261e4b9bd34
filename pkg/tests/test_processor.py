import itertools
import json

import pytest

from pagebench.geometry import BoundingBox
from pagebench.model import AssetRecord, validate_section_json
from pagebench.processor import (
    ReferenceSet,
    _Group,
    _merge_to_fixpoint,
    extract_reference_set,
    extract_style_metadata,
    filter_referenced_assets,
    section_wise_decomposition,
)
from pagebench.renderer import Viewport
from pagebench.renderer.mock import MockRenderer

VIEWPORT = Viewport(1280, 800)


def load(html):
    return MockRenderer().load_html(html, viewport=VIEWPORT)


FIXTURE_A = (
    "<body>"
    "<header style='height:80px'><h1>Site</h1></header>"
    "<section style='height:600px'><p>Main copy.</p></section>"
    "<div style='height:40px'>tiny</div>"
    "<footer style='height:120px'><p>Foot</p></footer>"
    "</body>"
)


def test_fixture_a_three_sections_below_threshold_excluded():
    structured = section_wise_decomposition(load(FIXTURE_A), theta_min=50)
    assert [s.order for s in structured.sections] == [1, 2, 3]
    assert [s.type for s in structured.sections] == ["header", "section", "footer"]
    assert structured.sections[0].bbox == BoundingBox(0, 0, 1280, 80)
    assert structured.sections[1].bbox == BoundingBox(0, 80, 1280, 600)
    assert structured.sections[2].bbox == BoundingBox(0, 720, 1280, 120)


FIXTURE_B = (
    "<body>"
    "<div style='height:300px'><p>upper</p></div>"
    "<div style='height:300px; margin-top:-50px'><p>lower</p></div>"
    "</body>"
)


def test_fixture_b_overlap_merged_to_hull():
    structured = section_wise_decomposition(load(FIXTURE_B), theta_min=50)
    assert len(structured.sections) == 1
    section = structured.sections[0]
    assert section.bbox == BoundingBox(0, 0, 1280, 550)
    assert section.type == "div"
    # merged content comes from the common ancestor, covering both divs
    assert "upper" in section.body and "lower" in section.body


def test_empty_body_yields_no_sections():
    structured = section_wise_decomposition(load("<body></body>"))
    assert structured.sections == ()


def test_nested_candidate_dropped():
    html = (
        "<body><section style='height:400px'>"
        "<div style='height:300px'><p>inner</p></div>"
        "</section></body>"
    )
    structured = section_wise_decomposition(load(html))
    assert len(structured.sections) == 1
    assert structured.sections[0].type == "section"


def test_overflowing_child_merges_with_parent():
    html = (
        "<body><div style='height:100px'>"
        "<div style='height:300px'><p>big child</p></div>"
        "</div></body>"
    )
    structured = section_wise_decomposition(load(html))
    assert len(structured.sections) == 1
    assert structured.sections[0].bbox == BoundingBox(0, 0, 1280, 300)


def test_nav_candidate_flag():
    html = "<body><nav style='height:60px'>n</nav><section style='height:200px'></section></body>"
    with_nav = section_wise_decomposition(load(html), include_nav=True)
    without = section_wise_decomposition(load(html), include_nav=False)
    assert [s.type for s in with_nav.sections] == ["nav", "section"]
    assert [s.type for s in without.sections] == ["section"]


def test_final_boxes_pairwise_disjoint():
    structured = section_wise_decomposition(load(FIXTURE_A))
    from pagebench.geometry import iou

    boxes = [s.bbox for s in structured.sections]
    for a, b in itertools.combinations(boxes, 2):
        assert iou(a, b) == 0.0


def test_merge_is_confluent_under_permutation():
    base_groups = [
        _Group([0], BoundingBox(0, 0, 100, 100)),
        _Group([1], BoundingBox(50, 50, 100, 100)),
        _Group([2], BoundingBox(400, 0, 50, 50)),
        _Group([3], BoundingBox(120, 120, 60, 60)),
    ]
    results = set()
    for perm in itertools.permutations(base_groups):
        merged = _merge_to_fixpoint(list(perm), adjacency=False)
        results.add(frozenset((tuple(sorted(g.indexes)), g.box.as_tuple()) for g in merged))
    assert len(results) == 1


def test_adjacency_merge_flag():
    html = (
        "<body><div style='height:100px'></div><div style='height:100px'></div></body>"
    )
    strict = section_wise_decomposition(load(html), adjacency_merge=False)
    adjacent = section_wise_decomposition(load(html), adjacency_merge=True)
    assert len(strict.sections) == 2
    assert len(adjacent.sections) == 1
    assert adjacent.sections[0].bbox == BoundingBox(0, 0, 1280, 200)


def test_decomposition_artifacts_validate(tmp_path):
    structured = section_wise_decomposition(
        load(FIXTURE_A), page_id="p", url="http://x/", out_dir=tmp_path
    )
    raw = json.loads((tmp_path / "sections.json").read_text())
    for entry in raw:
        validate_section_json(json.dumps(entry))
    shots = sorted(p.name for p in (tmp_path / "screenshots").iterdir())
    assert shots == ["element_01.png", "element_02.png", "element_03.png"]
    assert (tmp_path / "screenshot.png").exists()
    assert len(structured.sections) == 3


# -- reference extraction -------------------------------------------------


def test_img_src_reference():
    refs = extract_reference_set('<img src="a.png">', base="http://site/")
    assert refs.referenced == {"http://site/a.png": "img_src"}


def test_srcset_keeps_all_candidates():
    refs = extract_reference_set(
        '<img srcset="a-1x.png 1x, a-2x.png 2x">', base="http://site/"
    )
    assert refs.referenced == {
        "http://site/a-1x.png": "srcset",
        "http://site/a-2x.png": "srcset",
    }


def test_picture_source_tagged():
    refs = extract_reference_set(
        "<picture><source srcset='wide.png 1024w'><img src='fallback.png'></picture>",
        base="http://site/",
    )
    assert refs.referenced["http://site/wide.png"] == "picture_source"
    assert refs.referenced["http://site/fallback.png"] == "img_src"


def test_inline_style_url():
    refs = extract_reference_set(
        "<div style=\"background:url('bg.png')\"></div>", base="http://site/"
    )
    assert refs.referenced == {"http://site/bg.png": "css_url"}


def test_embedded_and_external_css_urls():
    refs = extract_reference_set(
        "<style>.a{background-image:url(embedded.png)}</style>",
        external_css=["h1::before{content:url('pseudo.png')}"],
        base="http://site/",
    )
    assert refs.referenced["http://site/embedded.png"] == "css_url"
    assert refs.referenced["http://site/pseudo.png"] == "css_url"


def test_inline_base64_gets_synthetic_key():
    refs = extract_reference_set(
        '<img src="data:image/png;base64,AAAA">', base="http://site/"
    )
    (key,) = refs.referenced
    assert key.startswith("inline:")
    assert refs.referenced[key] == "inline_base64"


def test_first_provenance_wins():
    refs = extract_reference_set(
        "<img src='two.png'><style>.x{background:url(two.png)}</style>",
        base="http://site/",
    )
    assert refs.referenced == {"http://site/two.png": "img_src"}


def test_percent_decoding_normalization():
    refs = extract_reference_set('<img src="my%20pic.png">', base="http://site/")
    assert "http://site/my pic.png" in refs.referenced


# -- usage filter ----------------------------------------------------------


def _asset(tmp_path, name, content, source):
    path = tmp_path / name
    path.write_bytes(content)
    return AssetRecord(
        original_name=name,
        saved_path=str(path),
        byte_size=len(content),
        source_url=source,
    )


def test_filter_keeps_only_referenced(tmp_path):
    a = _asset(tmp_path, "a.png", b"A", "http://site/a.png")
    b = _asset(tmp_path, "b.png", b"B", "http://site/b.png")
    refs = ReferenceSet(referenced={"http://site/a.png": "img_src"})
    kept = filter_referenced_assets([a, b], refs)
    assert [k.original_name for k in kept] == ["a.png"]
    assert kept[0].referenced is True


def test_filter_dedups_identical_bytes(tmp_path):
    a = _asset(tmp_path, "one.png", b"SAME", "http://site/one.png")
    b = _asset(tmp_path, "two.png", b"SAME", "http://site/two.png")
    refs = ReferenceSet(
        referenced={
            "http://site/one.png": "img_src",
            "http://site/two.png": "img_src",
        }
    )
    kept = filter_referenced_assets([a, b], refs)
    assert [k.original_name for k in kept] == ["one.png"]


def test_filter_empty_refs_keeps_nothing(tmp_path):
    a = _asset(tmp_path, "a.png", b"A", "http://site/a.png")
    assert filter_referenced_assets([a], ReferenceSet()) == []


# -- style metadata ---------------------------------------------------------


def test_style_metadata_two_colors_one_font():
    html = (
        "<body><section style='height:100px;background-color:#aabbcc;color:#112233'>x</section></body>"
    )
    page = load(html)
    structured = section_wise_decomposition(page)
    meta = structured.metadata
    assert sorted(meta.palette) == ["#112233", "#AABBCC"]
    assert meta.font_families == ("serif",)
    styles = dict(meta.per_section_styles)
    assert styles[1]["background_color"] == "#AABBCC"
    assert styles[1]["dominant_text_color"] == "#112233"


def test_palette_truncated_to_eight_by_frequency_then_first_seen():
    parts = []
    colors = [
        ("#000001", "#000002"),
        ("#000003", "#000004"),
        ("#000005", "#000006"),
        ("#000007", "#000008"),
        ("#000009", "#00000a"),
    ]
    for bg, fg in colors:
        parts.append(
            f"<section style='height:100px;background-color:{bg};color:{fg}'>x</section>"
        )
    page = load("<body>" + "".join(parts) + "</body>")
    meta = section_wise_decomposition(page).metadata
    assert len(meta.palette) == 8
    assert meta.palette == (
        "#000001", "#000002", "#000003", "#000004",
        "#000005", "#000006", "#000007", "#000008",
    )

import pytest

from pagebench.geometry import BoundingBox
from pagebench.renderer import EmptyRegion, NavigationTimeout, Viewport
from pagebench.renderer.mock import MockRenderer, inject_base_tag

VIEWPORT = Viewport(width=1280, height=800)


def load(html: str):
    return MockRenderer().load_html(html, viewport=VIEWPORT)


def test_two_stacked_sections():
    page = load(
        "<html><body>"
        '<section style="height:600px"></section>'
        '<section style="height:600px"></section>'
        "</body></html>"
    )
    boxes = page.query_boxes(("section",))
    assert len(boxes) == 2
    assert boxes[0].bbox == BoundingBox(0, 0, 1280, 600)
    assert boxes[1].bbox == BoundingBox(0, 600, 1280, 600)
    assert page.document_size() == (1280.0, 1200.0)


def test_display_none_flagged_hidden():
    page = load('<body><div style="display:none; height:100px">x</div></body>')
    (box,) = page.query_boxes(("div",))
    assert not box.visible
    assert box.bbox.area == 0


def test_nested_div_reported_with_dom_order():
    page = load(
        "<body><section style='height:300px'><div style='height:100px'></div></section></body>"
    )
    boxes = page.query_boxes(("section", "div"))
    assert [b.tag for b in boxes] == ["section", "div"]
    assert boxes[0].dom_index < boxes[1].dom_index
    assert boxes[1].bbox == BoundingBox(0, 0, 1280, 100)


def test_margins_and_text_height():
    # div: margin-top 10, one text line (20px tall); following div starts at 30.
    page = load(
        "<body><div style='margin-top:10px'>hello</div><div style='height:50px'></div></body>"
    )
    first, second = page.query_boxes(("div",))
    assert first.bbox == BoundingBox(0, 10, 1280, 20)
    assert second.bbox == BoundingBox(0, 30, 1280, 50)


def test_empty_html_has_zero_height_document():
    page = load("")
    assert page.document_size() == (1280.0, 0.0)
    page2 = load("<body></body>")
    assert page2.document_size()[1] == 0.0


def test_computed_style_inline_hex_normalized():
    page = load("<body><p style='color:#ff0000'>t</p></body>")
    idx = page.doc.root.find_all("p")[0].dom_index
    assert page.computed_style(idx)["color"] == "#FF0000"


def test_computed_style_defaults_for_unstyled():
    page = load("<body><p>t</p></body>")
    idx = page.doc.root.find_all("p")[0].dom_index
    style = page.computed_style(idx)
    assert style == {
        "background_color": "#FFFFFF",
        "color": "#000000",
        "font_family": "serif",
        "font_size_px": "16",
    }


def test_computed_style_class_rule_resolved():
    page = load(
        "<head><style>.hero{background-color:#112233; font-family: Inter, sans-serif}</style></head>"
        "<body><div class='hero'>x</div></body>"
    )
    idx = page.doc.root.find_all("div")[0].dom_index
    style = page.computed_style(idx)
    assert style["background_color"] == "#112233"
    assert style["font_family"] == "Inter"


def test_scroll_steps_probe_three_viewports():
    page = load("<body><div style='height:2400px'></div></body>")
    steps = page.scroll_full()
    assert steps == 2
    # probe sees both down-steps plus the return to top
    assert page.scroll_positions == [800.0, 1600.0, 0.0]
    assert len(page.scroll_positions) >= 3


def test_scroll_noop_for_short_page():
    page = load("<body><div style='height:100px'></div></body>")
    assert page.scroll_full() == 0
    assert page.scroll_positions == []


def test_infinite_scroll_capped():
    page = load(
        "<body data-infinite-growth='800'><div style='height:1600px'></div></body>"
    )
    steps = page.scroll_full(max_steps=5)
    assert steps == 5


def test_lazy_images_resolved_after_scroll():
    page = load("<body><div style='height:2000px'><img data-src='late.png'></div></body>")
    idx = page.doc.root.find_all("div")[0].dom_index
    assert page.element_detail(idx).images == []
    page.scroll_full()
    idx = page.doc.root.find_all("div")[0].dom_index
    assert page.element_detail(idx).images == ["late.png"]
    assert 'src="late.png"' in page.source()


def test_full_screenshot_dimensions():
    page = load("<body><div style='height:3000px'></div></body>")
    shot = page.screenshot()
    assert (shot.width, shot.height) == (1280, 3000)


def test_device_scale_multiplies_dimensions():
    page = MockRenderer().load_html(
        "<body><div style='height:100px'></div></body>",
        viewport=Viewport(width=640, height=480, device_scale=2.0),
    )
    shot = page.screenshot()
    assert (shot.width, shot.height) == (1280, 200)


def test_region_screenshot_crops_exactly():
    page = load("<body><div style='height:500px'></div></body>")
    shot = page.screenshot(BoundingBox(0, 0, 100, 50))
    assert (shot.width, shot.height) == (100, 50)


def test_region_outside_document_raises():
    page = load("<body><div style='height:100px'></div></body>")
    with pytest.raises(EmptyRegion):
        page.screenshot(BoundingBox(5000, 5000, 10, 10))


def test_screenshot_is_pure():
    html = (
        "<body><section style='height:200px;background-color:#aabbcc'>x</section>"
        "<section style='height:100px;background:teal'></section></body>"
    )
    a = MockRenderer().load_html(html, viewport=VIEWPORT).screenshot()
    b = MockRenderer().load_html(html, viewport=VIEWPORT).screenshot()
    assert a.data == b.data


def test_screenshot_paints_background():
    from PIL import Image
    import io

    page = load("<body><div style='height:10px;background-color:#ff0000'></div></body>")
    img = Image.open(io.BytesIO(page.screenshot().data))
    assert img.getpixel((5, 5)) == (255, 0, 0)


def test_element_detail_extraction():
    page = load(
        "<body><section>"
        "<h1>Big Title</h1><h2>Sub</h2>"
        "<p>First para.</p><p>Second para.</p>"
        "<ul><li>One</li><li>Two</li></ul>"
        "<a href='/go'>Go now</a>"
        "<img src='pic.png'>"
        "<div style=\"background:url('bg.png')\"></div>"
        "</section></body>"
    )
    idx = page.doc.root.find_all("section")[0].dom_index
    detail = page.element_detail(idx)
    assert detail.headings[1] == "Big Title"
    assert detail.headings[2] == "Sub"
    assert detail.body == "First para. Second para."
    assert detail.bullets == ["One", "Two"]
    assert detail.links == [("Go now", "/go")]
    assert detail.images == ["pic.png", "bg.png"]
    assert detail.html.startswith("<section>")


def test_common_ancestor():
    page = load(
        "<body><div id='wrap'><div id='a'></div><div id='b'></div></div></body>"
    )
    nodes = {n.attr("id"): n.dom_index for n in page.doc.root.find_all("div")}
    nca = page.common_ancestor([nodes["a"], nodes["b"]])
    assert page.doc.by_index(nca).attr("id") == "wrap"
    assert page.contains(nodes["wrap"], nodes["a"])
    assert not page.contains(nodes["a"], nodes["wrap"])


def test_load_local_file_injects_base(tmp_path):
    content = "<html><head><title>T</title></head><body><p>hi</p></body></html>"
    path = tmp_path / "page.html"
    path.write_text(content, encoding="utf-8")
    page = MockRenderer().load(str(path))
    expected = inject_base_tag(content, path.resolve().parent.as_uri() + "/")
    assert page.source() == expected
    assert "<base href=" in page.source()


def test_load_unreachable_url_times_out():
    def failing_fetch(url):
        raise NavigationTimeout(f"no route to {url}")

    with pytest.raises(NavigationTimeout):
        MockRenderer(fetcher=failing_fetch).load("http://nowhere.invalid/")

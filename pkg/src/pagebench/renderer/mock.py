"""Deterministic mock layout engine.

The layout model is intentionally tiny so fixture geometry can be traced
by hand:

* every in-flow element is a block spanning its container's content width;
  children stack vertically in document order;
* ``width``/``height`` (style or attribute, px only) override the defaults;
  auto height = sum of child stacks plus one 20px line when the element has
  any non-empty direct text;
* supported CSS: ``display`` (none), ``width``, ``height``, ``margin`` and
  per-side margins, ``background``/``background-color``, ``color``,
  ``font-family``, ``font-size``; sources are tag/.class/#id rules from
  ``<style>`` blocks (later rules win) and inline ``style`` (wins overall);
* ``head``, ``script``, ``style``, ``title``, ``meta`` and ``link`` never
  enter the flow; ``display:none`` removes a subtree and flags it hidden;
* images declare their size via attributes or style, else 0x0; an ``img``
  with ``data-src`` and no ``src`` is lazy and only gains its ``src`` after
  a full scroll.

Screenshots paint declared background colors onto a white canvas, so the
engine is a pure function: identical HTML in, byte-identical PNG out.
``scroll_positions`` records every scroll event (viewport-height steps
down, then the return to top) as an in-page probe would see them.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urljoin

from PIL import Image, ImageDraw

from ..geometry import BoundingBox
from ..dom import Document, Node, parse_html, parse_style_attr
from . import (
    ElementBox,
    ElementDetail,
    NavigationTimeout,
    RenderedPage,
    Renderer,
    Screenshot,
    Viewport,
)

LINE_HEIGHT = 20.0

NON_FLOW_TAGS = {"head", "script", "style", "title", "meta", "link", "base", "template"}

NAMED_COLORS = {
    "white": "#FFFFFF",
    "black": "#000000",
    "red": "#FF0000",
    "green": "#008000",
    "blue": "#0000FF",
    "yellow": "#FFFF00",
    "gray": "#808080",
    "grey": "#808080",
    "silver": "#C0C0C0",
    "navy": "#000080",
    "teal": "#008080",
    "purple": "#800080",
    "orange": "#FFA500",
}

DEFAULT_STYLE = {
    "background_color": "#FFFFFF",
    "color": "#000000",
    "font_family": "serif",
    "font_size_px": "16",
}

_PX = re.compile(r"^(-?\d+(?:\.\d+)?)px$")
_URL_IN_STYLE = re.compile(r"""url\(\s*['"]?([^'")]+)['"]?\s*\)""", re.IGNORECASE)


def normalize_color(value: str) -> str | None:
    value = value.strip().lower()
    if not value:
        return None
    if value in NAMED_COLORS:
        return NAMED_COLORS[value]
    if re.match(r"^#[0-9a-f]{3}$", value):
        return "#" + "".join(c * 2 for c in value[1:]).upper()
    if re.match(r"^#[0-9a-f]{6}$", value):
        return value.upper()
    m = re.match(r"^rgb\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)$", value)
    if m:
        r, g, b = (min(255, int(v)) for v in m.groups())
        return f"#{r:02X}{g:02X}{b:02X}"
    return None


def _px(value: str) -> float | None:
    m = _PX.match(value.strip())
    if m:
        return float(m.group(1))
    try:
        return float(value.strip())
    except ValueError:
        return None


class _StyleResolver:
    """tag/.class/#id rules from <style> blocks, later rules winning,
    inline style winning overall."""

    def __init__(self, doc: Document):
        self.rules: list[tuple[str, dict[str, str]]] = []
        for block in doc.style_blocks():
            block = re.sub(r"/\*.*?\*/", " ", block, flags=re.DOTALL)
            for m in re.finditer(r"([^{}]+)\{([^{}]*)\}", block):
                props = parse_style_attr(m.group(2))
                for selector in m.group(1).split(","):
                    selector = selector.strip()
                    if selector:
                        self.rules.append((selector, props))

    @staticmethod
    def _matches(selector: str, node: Node) -> bool:
        if selector.startswith("."):
            return selector[1:] in node.attr("class").split()
        if selector.startswith("#"):
            return selector[1:] == node.attr("id")
        return selector.lower() == node.tag

    def declared(self, node: Node) -> dict[str, str]:
        props: dict[str, str] = {}
        for selector, rule_props in self.rules:
            if self._matches(selector, node):
                props.update(rule_props)
        props.update(parse_style_attr(node.attr("style")))
        return props


@dataclass
class _LayoutBox:
    bbox: BoundingBox
    visible: bool
    background: str | None  # declared background color, if any


class MockPage(RenderedPage):
    def __init__(self, html: str, viewport: Viewport, base_url: str = ""):
        self.viewport = viewport
        self.base_url = base_url
        self.scroll_positions: list[float] = []
        self._scrolled = False
        self._load(html)

    # -- layout ---------------------------------------------------------

    def _load(self, html: str) -> None:
        self._html = html
        self.doc = parse_html(html)
        self._styles = _StyleResolver(self.doc)
        self._boxes: dict[int, _LayoutBox] = {}
        self._layout_document()

    def _declared(self, node: Node) -> dict[str, str]:
        return self._styles.declared(node)

    def _layout_document(self) -> None:
        body = self.doc.body
        self._doc_height = 0.0
        root_children = [body] if body is not None else [
            c for c in self.doc.root.children if c.tag not in NON_FLOW_TAGS and c.tag != "html"
        ]
        if body is None:
            html_nodes = [c for c in self.doc.root.children if c.tag == "html"]
            for h in html_nodes:
                root_children.extend(c for c in h.children if c.tag not in NON_FLOW_TAGS)
        cursor = 0.0
        for child in root_children:
            if child is None:
                continue
            cursor = self._layout_node(child, 0.0, cursor, float(self.viewport.width))
        self._doc_height = cursor
        self._base_doc_height = cursor
        growth = 0.0
        if body is not None and body.attr("data-infinite-growth"):
            try:
                growth = float(body.attr("data-infinite-growth"))
            except ValueError:
                growth = 0.0
        self._growth_per_step = growth

    def _layout_node(self, node: Node, x: float, y_cursor: float, avail_w: float) -> float:
        """Lay out ``node`` with the stacking cursor at ``y_cursor``;
        returns the cursor advanced past this node and its margins."""
        if node.tag in NON_FLOW_TAGS:
            return y_cursor
        props = self._declared(node)
        if props.get("display", "").strip().lower() == "none":
            self._hide_subtree(node)
            return y_cursor
        margin = _px(props.get("margin", "")) or 0.0
        mt = _px(props.get("margin-top", "")) if "margin-top" in props else margin
        mb = _px(props.get("margin-bottom", "")) if "margin-bottom" in props else margin
        ml = _px(props.get("margin-left", "")) if "margin-left" in props else margin
        mr = _px(props.get("margin-right", "")) if "margin-right" in props else margin
        mt, mb, ml, mr = (v or 0.0 for v in (mt, mb, ml, mr))

        width = self._explicit_dim(node, props, "width")
        height = self._explicit_dim(node, props, "height")
        box_x = x + ml
        box_y = y_cursor + mt
        content_w = width if width is not None else max(0.0, avail_w - ml - mr)

        cursor = box_y
        for child in node.children:
            cursor = self._layout_node(child, box_x, cursor, content_w)
        auto_h = cursor - box_y
        if node.direct_text():
            auto_h += LINE_HEIGHT
        box_h = height if height is not None else auto_h

        bbox = BoundingBox(box_x, box_y, content_w, max(0.0, box_h))
        self._boxes[node.dom_index] = _LayoutBox(
            bbox=bbox,
            visible=bbox.area > 0,
            background=self._declared_background(props),
        )
        return box_y + max(0.0, box_h) + mb

    def _explicit_dim(self, node: Node, props: dict[str, str], name: str) -> float | None:
        if name in props:
            v = _px(props[name])
            if v is not None:
                return max(0.0, v)
        if node.attr(name):
            v = _px(node.attr(name))
            if v is not None:
                return max(0.0, v)
        return None

    def _declared_background(self, props: dict[str, str]) -> str | None:
        for key in ("background-color", "background"):
            if key in props:
                color = normalize_color(props[key].split("url(")[0].strip())
                if color:
                    return color
        return None

    def _hide_subtree(self, node: Node) -> None:
        for n in node.iter():
            self._boxes[n.dom_index] = _LayoutBox(
                bbox=BoundingBox(0.0, 0.0, 0.0, 0.0), visible=False, background=None
            )

    # -- RenderedPage interface ------------------------------------------

    def source(self) -> str:
        return self._html

    def document_size(self) -> tuple[float, float]:
        return (float(self.viewport.width), self._doc_height)

    def scroll_full(self, max_steps: int = 50, settle_delay: float = 0.0) -> int:
        vh = float(self.viewport.height)
        pos = 0.0
        steps = 0
        while steps < max_steps:
            doc_h = self._base_doc_height + self._growth_per_step * steps
            if pos + vh >= doc_h:
                break
            pos = min(pos + vh, doc_h - vh + self._growth_per_step)
            steps += 1
            self.scroll_positions.append(pos)
        self._doc_height = self._base_doc_height + self._growth_per_step * steps
        if steps:
            self.scroll_positions.append(0.0)  # return to top
        if not self._scrolled:
            self._scrolled = True
            self._resolve_lazy_images()
        return steps

    def _resolve_lazy_images(self) -> None:
        html = self._html
        edits = []
        for node in self.doc.root.iter():
            if node.tag == "img" and node.attr("data-src") and not node.attr("src"):
                edits.append(node)
        for node in sorted(edits, key=lambda n: n.start, reverse=True):
            raw = html[node.start : node.start_end]
            closer = raw.rfind("/>")
            if closer == -1:
                closer = raw.rfind(">")
            new_raw = raw[:closer] + f' src="{node.attr("data-src")}"' + raw[closer:]
            html = html[: node.start] + new_raw + html[node.start_end :]
        if edits:
            positions = list(self.scroll_positions)
            scrolled = self._scrolled
            self._load(html)
            self.scroll_positions = positions
            self._scrolled = scrolled

    def screenshot(self, region: BoundingBox | None = None) -> Screenshot:
        doc_w, doc_h = self.document_size()
        if region is None:
            clip = BoundingBox(0.0, 0.0, doc_w, max(doc_h, 1.0))
        else:
            x0 = max(0.0, region.x)
            y0 = max(0.0, region.y)
            x1 = min(doc_w, region.right)
            y1 = min(doc_h, region.bottom)
            if x1 <= x0 or y1 <= y0:
                from . import EmptyRegion

                raise EmptyRegion(f"region {region.as_tuple()} outside document")
            clip = BoundingBox(x0, y0, x1 - x0, y1 - y0)
        scale = self.viewport.device_scale
        w = max(1, round(clip.width * scale))
        h = max(1, round(clip.height * scale))
        img = Image.new("RGB", (w, h), "#FFFFFF")
        draw = ImageDraw.Draw(img)
        for node in self.doc.root.iter():
            box = self._boxes.get(node.dom_index)
            if box is None or not box.visible or box.background is None:
                continue
            self._paint(img, draw, box, clip, scale)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Screenshot(data=buf.getvalue(), width=w, height=h)

    @staticmethod
    def _paint(img, draw, box: _LayoutBox, clip: BoundingBox, scale: float) -> None:
        x0 = max(0, round((box.bbox.x - clip.x) * scale))
        y0 = max(0, round((box.bbox.y - clip.y) * scale))
        x1 = min(img.width, round((box.bbox.right - clip.x) * scale))
        y1 = min(img.height, round((box.bbox.bottom - clip.y) * scale))
        if x1 <= x0 or y1 <= y0:
            return
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], fill=box.background)

    def query_boxes(self, tags: tuple[str, ...]) -> list[ElementBox]:
        out = []
        for node in self.doc.root.iter():
            if node.tag not in tags:
                continue
            box = self._boxes.get(node.dom_index)
            if box is None:
                # not laid out (outside body flow): report hidden zero box
                out.append(
                    ElementBox(node.dom_index, node.tag, BoundingBox(0, 0, 0, 0), False)
                )
                continue
            out.append(ElementBox(node.dom_index, node.tag, box.bbox, box.visible))
        out.sort(key=lambda e: e.dom_index)
        return out

    def computed_style(self, dom_index: int) -> dict[str, str]:
        node = self.doc.by_index(dom_index)
        resolved = dict(DEFAULT_STYLE)
        props = self._declared(node)
        bg = self._declared_background(props)
        if bg:
            resolved["background_color"] = bg
        if "color" in props:
            color = normalize_color(props["color"])
            if color:
                resolved["color"] = color
        if "font-family" in props:
            resolved["font_family"] = props["font-family"].split(",")[0].strip().strip("'\"")
        if "font-size" in props:
            size = _px(props["font-size"])
            if size is not None:
                resolved["font_size_px"] = f"{size:g}"
        return resolved

    def element_detail(self, dom_index: int) -> ElementDetail:
        if dom_index < 0:
            node = self.doc.body or self.doc.root
        else:
            node = self.doc.by_index(dom_index)
        detail = ElementDetail(tag=node.tag)
        for level in range(1, 7):
            texts = [h.all_text() for h in node.find_all(f"h{level}")]
            detail.headings[level] = " ".join(t for t in texts if t)
        detail.body = " ".join(p.all_text() for p in node.find_all("p") if p.all_text())
        detail.bullets = [li.all_text() for li in node.find_all("li")]
        detail.links = [
            (a.all_text(), a.attr("href"))
            for a in node.find_all("a")
            if a.attr("href")
        ]
        detail.images = self._collect_image_refs(node)
        detail.html = self.doc.outer_html(node) if dom_index >= 0 else self._html
        return detail

    def _collect_image_refs(self, node: Node) -> list[str]:
        refs = []
        for n in node.iter():
            if n.tag == "img" and n.attr("src"):
                refs.append(n.attr("src"))
            style = n.attr("style")
            if style:
                refs.extend(m.group(1) for m in _URL_IN_STYLE.finditer(style))
        seen = set()
        unique = []
        for r in refs:
            if r not in seen:
                seen.add(r)
                unique.append(r)
        return unique

    def common_ancestor(self, dom_indexes: list[int]) -> int:
        if not dom_indexes:
            return -1
        paths = []
        for idx in dom_indexes:
            node = self.doc.by_index(idx)
            chain = [node] + list(node.ancestors())
            paths.append(list(reversed(chain)))
        common: Node | None = None
        for nodes in zip(*paths):
            first = nodes[0]
            if all(n is first for n in nodes):
                common = first
            else:
                break
        if common is None or common.dom_index < 0:
            return -1
        return common.dom_index

    def contains(self, ancestor_index: int, descendant_index: int) -> bool:
        ancestor = self.doc.by_index(ancestor_index)
        descendant = self.doc.by_index(descendant_index)
        return ancestor.is_ancestor_of(descendant)


class MockRenderer(Renderer):
    """Pure, in-process backend; http(s) sources go through ``fetcher``."""

    def __init__(self, fetcher=None):
        self._fetcher = fetcher

    def load(self, source: str, viewport: Viewport = Viewport()) -> MockPage:
        if source.startswith(("http://", "https://")):
            html = self._fetch(source)
            return MockPage(html, viewport, base_url=source)
        path = Path(source)
        try:
            content = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise NavigationTimeout(f"cannot load {source}: {exc}") from exc
        base = path.resolve().parent.as_uri() + "/"
        html = inject_base_tag(content, base)
        return MockPage(html, viewport, base_url=base)

    def load_html(self, html: str, viewport: Viewport = Viewport(), base_url: str = "") -> MockPage:
        return MockPage(html, viewport, base_url=base_url)

    def _fetch(self, url: str) -> str:
        if self._fetcher is not None:
            return self._fetcher(url)
        import requests

        try:
            resp = requests.get(url, timeout=10)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise NavigationTimeout(f"cannot load {url}: {exc}") from exc
        return resp.text


def inject_base_tag(html: str, base_href: str) -> str:
    tag = f'<base href="{base_href}">'
    m = re.search(r"<head[^>]*>", html, re.IGNORECASE)
    if m:
        return html[: m.end()] + tag + html[m.end() :]
    return tag + html

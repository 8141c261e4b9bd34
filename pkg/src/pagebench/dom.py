"""Lightweight DOM over the stdlib HTML parser.

Keeps source offsets for every start tag so callers can splice attributes
back into the original markup (used by the degradation injector) and slice
out an element's exact outer HTML. Parsing is tolerant: stray end tags are
ignored and unclosed elements are closed at their parent's end.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

VOID_TAGS = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
}

_WS = re.compile(r"\s+")


def collapse_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


@dataclass
class Node:
    tag: str
    attrs: dict[str, str]
    dom_index: int
    parent: "Node | None" = None
    children: list["Node"] = field(default_factory=list)
    texts: list[str] = field(default_factory=list)  # direct text pieces, in order
    start: int = 0          # offset of '<' of the start tag
    start_end: int = 0      # offset just past '>' of the start tag
    end: int = 0            # offset just past the end tag (or start tag when void)

    def attr(self, name: str, default: str = "") -> str:
        return self.attrs.get(name, default)

    def iter(self):
        yield self
        for child in self.children:
            yield from child.iter()

    def find_all(self, *tags: str) -> list["Node"]:
        wanted = set(tags)
        return [n for n in self.iter() if n.tag in wanted]

    def direct_text(self) -> str:
        return collapse_ws(" ".join(self.texts))

    def all_text(self, skip: frozenset[str] = frozenset({"script", "style"})) -> str:
        if self.tag in skip:
            return ""
        pieces = [self.direct_text()]
        pieces.extend(c.all_text(skip) for c in self.children)
        return collapse_ws(" ".join(p for p in pieces if p))

    def ancestors(self):
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def is_ancestor_of(self, other: "Node") -> bool:
        return any(a is self for a in other.ancestors())


class Document:
    def __init__(self, html: str, root: Node, order: list[Node]):
        self.html = html
        self.root = root
        self.order = order  # all elements by dom_index

    def by_index(self, dom_index: int) -> Node:
        return self.order[dom_index]

    @property
    def body(self) -> Node | None:
        for node in self.root.iter():
            if node.tag == "body":
                return node
        return None

    @property
    def head(self) -> Node | None:
        for node in self.root.iter():
            if node.tag == "head":
                return node
        return None

    def title(self) -> str:
        for node in self.root.iter():
            if node.tag == "title":
                return node.direct_text()
        return ""

    def meta_description(self) -> str:
        for node in self.root.iter():
            if node.tag == "meta" and node.attr("name").lower() == "description":
                return node.attr("content")
        return ""

    def base_href(self) -> str:
        for node in self.root.iter():
            if node.tag == "base" and node.attr("href"):
                return node.attr("href")
        return ""

    def style_blocks(self) -> list[str]:
        blocks = []
        for node in self.root.iter():
            if node.tag == "style":
                blocks.append(" ".join(node.texts))
        return blocks

    def stylesheet_links(self) -> list[str]:
        hrefs = []
        for node in self.root.iter():
            if node.tag == "link" and "stylesheet" in node.attr("rel").lower():
                if node.attr("href"):
                    hrefs.append(node.attr("href"))
        return hrefs

    def visible_text_length(self) -> int:
        body = self.body
        return len(body.all_text()) if body is not None else 0

    def outer_html(self, node: Node) -> str:
        return self.html[node.start : node.end]


class _TreeBuilder(HTMLParser):
    def __init__(self, html: str):
        super().__init__(convert_charrefs=True)
        self._html = html
        self._line_offsets = [0]
        for m in re.finditer("\n", html):
            self._line_offsets.append(m.end())
        self.root = Node(tag="#document", attrs={}, dom_index=-1)
        self.root.end = len(html)
        self._stack = [self.root]
        self.order: list[Node] = []

    def _offset(self) -> int:
        line, col = self.getpos()
        return self._line_offsets[line - 1] + col

    def _open(self, tag: str, attrs, self_closing: bool) -> None:
        start = self._offset()
        raw = self.get_starttag_text() or f"<{tag}>"
        node = Node(
            tag=tag,
            attrs={k: (v if v is not None else "") for k, v in attrs},
            dom_index=len(self.order),
            parent=self._stack[-1],
            start=start,
            start_end=start + len(raw),
        )
        node.end = node.start_end
        self._stack[-1].children.append(node)
        self.order.append(node)
        if not self_closing and tag not in VOID_TAGS:
            self._stack.append(node)

    def handle_starttag(self, tag, attrs):
        self._open(tag, attrs, self_closing=False)

    def handle_startendtag(self, tag, attrs):
        self._open(tag, attrs, self_closing=True)

    def handle_endtag(self, tag):
        close_at = self._offset()
        end = close_at + len(tag) + 3  # '</' + tag + '>'
        for depth in range(len(self._stack) - 1, 0, -1):
            if self._stack[depth].tag == tag:
                while len(self._stack) > depth:
                    popped = self._stack.pop()
                    popped.end = end if popped.tag == tag else close_at
                return
        # stray end tag: ignore

    def handle_data(self, data):
        if data:
            self._stack[-1].texts.append(data)

    def close_remaining(self) -> None:
        while len(self._stack) > 1:
            self._stack.pop().end = len(self._html)


def parse_html(html: str) -> Document:
    builder = _TreeBuilder(html)
    builder.feed(html)
    builder.close_remaining()
    return Document(html, builder.root, builder.order)


def parse_style_attr(value: str) -> dict[str, str]:
    """'color: red; width:10px' -> {'color': 'red', 'width': '10px'}"""
    props: dict[str, str] = {}
    for part in value.split(";"):
        if ":" not in part:
            continue
        name, _, val = part.partition(":")
        name = name.strip().lower()
        if name:
            props[name] = val.strip()
    return props


def set_inline_style(html: str, node: Node, props: dict[str, str]) -> str:
    """Return new markup with ``props`` merged into the element's style
    attribute. Splices the original start tag in place; offsets of other
    nodes become stale, so re-parse if further edits are needed."""
    raw = html[node.start : node.start_end]
    addition = "; ".join(f"{k}: {v}" for k, v in props.items())
    m = re.search(r"""style\s*=\s*(['"])(.*?)\1""", raw, re.IGNORECASE | re.DOTALL)
    if m:
        existing = m.group(2).rstrip()
        sep = "" if not existing or existing.endswith(";") else "; "
        new_raw = raw[: m.start(2)] + existing + sep + addition + raw[m.end(2) :]
    else:
        closer = raw.rfind("/>")
        if closer == -1:
            closer = raw.rfind(">")
        new_raw = raw[:closer] + f' style="{addition}"' + raw[closer:]
    return html[: node.start] + new_raw + html[node.start_end :]

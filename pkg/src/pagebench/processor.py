"""Section decomposition and asset analysis over a rendered page.

Turns one rendered page into the structured bundle used everywhere else:
section records with boxes and per-section screenshots, the referenced-
asset set harvested from HTML/CSS, and style metadata. The same entry
points re-process generated HTML during evaluation and ingest local HTML
files from other corpora.
"""

from __future__ import annotations

import hashlib
import logging
import re
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path
from urllib.parse import unquote, urljoin

from .dom import parse_html
from .geometry import BoundingBox, iou, merge_boxes, vertically_adjacent
from .model import (
    AssetRecord,
    Link,
    SectionRecord,
    StructuredRepresentation,
    StyleMetadata,
    dump_json,
)
from .renderer import RenderedPage

logger = logging.getLogger(__name__)

THETA_MIN_DEFAULT = 50.0

CANDIDATE_TAGS = ("section", "div", "header", "footer")

_URL_RE = re.compile(r"""url\(\s*['"]?([^'")]+)['"]?\s*\)""", re.IGNORECASE)


class SectionNotFound(LookupError):
    pass


@dataclass
class _Group:
    indexes: list[int]
    box: BoundingBox

    @property
    def survivor(self) -> int:
        return min(self.indexes)


def _merge_to_fixpoint(groups: list[_Group], adjacency: bool) -> list[_Group]:
    groups = [replace_group(g) for g in groups]
    changed = True
    while changed:
        changed = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                a, b = groups[i], groups[j]
                touching = iou(a.box, b.box) > 0 or (
                    adjacency and vertically_adjacent(a.box, b.box)
                )
                if touching:
                    groups[i] = _Group(
                        indexes=sorted(a.indexes + b.indexes),
                        box=merge_boxes(a.box, b.box),
                    )
                    del groups[j]
                    changed = True
                    break
            if changed:
                break
    return groups


def replace_group(g: _Group) -> _Group:
    return _Group(indexes=list(g.indexes), box=g.box)


def candidate_groups(
    page: RenderedPage,
    theta_min: float = THETA_MIN_DEFAULT,
    *,
    include_nav: bool = True,
    adjacency_merge: bool = False,
) -> list[_Group]:
    """Accepted candidate containers merged to a fixpoint, sorted by
    (y, earliest DOM index). Exposed separately so merge decisions are
    directly observable."""
    tags = CANDIDATE_TAGS + (("nav",) if include_nav else ())
    element_boxes = {e.dom_index: e for e in page.query_boxes(tags)}
    candidates = [
        e
        for e in element_boxes.values()
        if e.visible and e.bbox.height > theta_min
    ]
    candidates.sort(key=lambda e: e.dom_index)

    accepted_indexes = [e.dom_index for e in candidates]
    kept = []
    for e in candidates:
        in_ancestor = any(
            other != e.dom_index
            and page.contains(other, e.dom_index)
            and element_boxes[other].bbox.contains(e.bbox)
            for other in accepted_indexes
        )
        if not in_ancestor:
            kept.append(e)

    groups = _merge_to_fixpoint(
        [_Group(indexes=[e.dom_index], box=e.bbox) for e in kept],
        adjacency=adjacency_merge,
    )
    groups.sort(key=lambda g: (g.box.y, g.survivor))

    for i, a in enumerate(groups):
        for b in groups[i + 1 :]:
            if iou(a.box, b.box) > 0:
                raise AssertionError(
                    f"post-merge overlap between {a.indexes} and {b.indexes}"
                )
    return groups


def section_wise_decomposition(
    page: RenderedPage,
    theta_min: float = THETA_MIN_DEFAULT,
    *,
    page_id: str = "",
    url: str = "",
    out_dir: str | Path | None = None,
    include_nav: bool = True,
    adjacency_merge: bool = False,
    assets: list[AssetRecord] | None = None,
    base_url: str = "",
    asset_root: str | Path | None = None,
) -> StructuredRepresentation:
    """Decompose a loaded, fully scrolled page into ordered sections.

    Candidates are visible top-level containers taller than ``theta_min``;
    candidates fully contained in an accepted DOM-ancestor candidate are
    dropped, the rest are merged to a fixpoint while any pair of boxes
    overlaps. Survivor identity is the earliest DOM index, the merged box
    is the hull, and a merged group's content comes from the nearest
    common ancestor element.
    """
    groups = candidate_groups(
        page, theta_min, include_nav=include_nav, adjacency_merge=adjacency_merge
    )

    out_path = Path(out_dir) if out_dir is not None else None
    root = Path(asset_root) if asset_root is not None else out_path
    if out_path is not None:
        (out_path / "screenshots").mkdir(parents=True, exist_ok=True)
        (out_path / "images").mkdir(parents=True, exist_ok=True)

    asset_by_source = {}
    for record in assets or []:
        asset_by_source.setdefault(unquote(record.source_url), record)

    sections = []
    for number, group in enumerate(groups, start=1):
        if len(group.indexes) == 1:
            content_index = group.indexes[0]
        else:
            content_index = page.common_ancestor(group.indexes)
        detail = page.element_detail(content_index)
        survivor_tag = page.element_detail(group.survivor).tag

        screenshot_rel = f"screenshots/element_{number:02d}.png"
        if out_path is not None:
            shot = page.screenshot(group.box)
            (out_path / screenshot_rel).write_bytes(shot.data)

        images = []
        for img_number, ref in enumerate(detail.images, start=1):
            saved = _place_section_image(
                ref, number, img_number, asset_by_source, base_url, out_path, root
            )
            images.append((ref, saved))

        sections.append(
            SectionRecord(
                order=number,
                type=survivor_tag,
                heading_h1=detail.headings.get(1, ""),
                heading_h2=detail.headings.get(2, ""),
                heading_h3=detail.headings.get(3, ""),
                heading_h4=detail.headings.get(4, ""),
                heading_h5=detail.headings.get(5, ""),
                heading_h6=detail.headings.get(6, ""),
                body=detail.body,
                html=detail.html,
                bullets=tuple(detail.bullets),
                links=tuple(Link(label, href) for label, href in detail.links),
                images=tuple(images),
                screenshot_path=screenshot_rel,
                bbox=group.box,
            )
        )

    metadata = extract_style_metadata(page, [(s.order, g.survivor) for s, g in zip(sections, groups)])

    full_rel = "screenshot.png"
    if out_path is not None:
        (out_path / full_rel).write_bytes(page.screenshot().data)

    structured = StructuredRepresentation(
        page_id=page_id,
        url=url,
        sections=tuple(sections),
        assets=tuple(assets or ()),
        metadata=metadata,
        full_screenshot_path=full_rel if out_path is not None else "",
    )
    if out_path is not None:
        dump_json([s.to_json_dict() for s in structured.sections], out_path / "sections.json")
        dump_json(structured.to_dict(), out_path / "structured.json")
    return structured


def _place_section_image(
    ref: str,
    section_number: int,
    img_number: int,
    asset_by_source: dict[str, AssetRecord],
    base_url: str,
    out_path: Path | None,
    asset_root: Path | None,
) -> str:
    resolved = unquote(urljoin(base_url, ref)) if base_url else unquote(ref)
    record = asset_by_source.get(resolved)
    if record is None or out_path is None:
        return ref
    stem = Path(record.original_name).stem or "img"
    suffix = Path(record.original_name).suffix or ".png"
    rel = f"images/section_{section_number:02d}_img_{img_number:02d}_{stem}{suffix}"
    src = (asset_root / record.saved_path) if asset_root else Path(record.saved_path)
    if src.exists():
        shutil.copyfile(src, out_path / rel)
        return rel
    return ref


def extract_style_metadata(
    page: RenderedPage, section_elements: list[tuple[int, int]]
) -> StyleMetadata:
    """Palette and typography summary across final sections.

    Palette keeps the 8 most frequent background/text colors (ties broken
    by first appearance); font families are distinct resolved names in
    document order.
    """
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    fonts: list[str] = []
    per_section = []
    for position, (order, dom_index) in enumerate(section_elements):
        style = page.computed_style(dom_index)
        for key in ("background_color", "color"):
            color = style[key]
            counts[color] = counts.get(color, 0) + 1
            first_seen.setdefault(color, position)
        family = style["font_family"]
        if family not in fonts:
            fonts.append(family)
        per_section.append(
            (
                order,
                {
                    "background_color": style["background_color"],
                    "dominant_text_color": style["color"],
                    "font_size_px": style["font_size_px"],
                },
            )
        )
    palette = sorted(counts, key=lambda c: (-counts[c], first_seen[c]))[:8]
    return StyleMetadata(
        palette=tuple(palette),
        font_families=tuple(fonts),
        per_section_styles=tuple(per_section),
    )


@dataclass
class ReferenceSet:
    """Normalized asset references found in a page's HTML and CSS,
    tagged with where each was first seen."""

    referenced: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def add(self, ref: str, tag: str, base: str) -> None:
        if not ref.strip():
            return
        ref = ref.strip()
        if ref.startswith("data:"):
            key = inline_data_key(ref)
            self.referenced.setdefault(key, "inline_base64")
            return
        normalized = unquote(urljoin(base, ref)) if base else unquote(ref)
        self.referenced.setdefault(normalized, tag)

    def paths(self) -> set[str]:
        return set(self.referenced)


def inline_data_key(data_uri: str) -> str:
    digest = hashlib.sha1(data_uri.encode("utf-8")).hexdigest()[:12]
    return f"inline:{digest}"


def _srcset_candidates(value: str) -> list[str]:
    out = []
    for candidate in value.split(","):
        candidate = candidate.strip()
        if not candidate:
            continue
        out.append(candidate.split()[0])
    return out


def extract_reference_set(
    html: str,
    inline_css: list[str] | None = None,
    external_css: list[str] | None = None,
    base: str = "",
) -> ReferenceSet:
    """Collect every image reference a page actually makes.

    Sources, in precedence order for provenance tagging: <img src>,
    <img srcset>, <picture><source srcset>, url(...) in style attributes,
    embedded <style> blocks (plus any passed in ``inline_css``) and
    external stylesheets. Inline base64 images are recorded under a
    synthetic ``inline:`` key.
    """
    refs = ReferenceSet()
    doc = parse_html(html)
    for node in doc.root.iter():
        if node.tag == "img":
            if node.attr("src"):
                refs.add(node.attr("src"), "img_src", base)
            if node.attr("srcset"):
                for candidate in _srcset_candidates(node.attr("srcset")):
                    refs.add(candidate, "srcset", base)
        elif node.tag == "source":
            in_picture = any(a.tag == "picture" for a in node.ancestors())
            if in_picture and node.attr("srcset"):
                for candidate in _srcset_candidates(node.attr("srcset")):
                    refs.add(candidate, "picture_source", base)
        style = node.attr("style")
        if style:
            _harvest_css_urls(style, refs, base, origin="style attribute")
    css_sources = list(doc.style_blocks())
    css_sources.extend(inline_css or [])
    css_sources.extend(external_css or [])
    for css in css_sources:
        _harvest_css_urls(css, refs, base, origin="stylesheet")
    return refs


def _harvest_css_urls(css: str, refs: ReferenceSet, base: str, origin: str) -> None:
    try:
        css = re.sub(r"/\*.*?\*/", " ", css, flags=re.DOTALL)
        for m in _URL_RE.finditer(css):
            refs.add(m.group(1), "css_url", base)
    except re.error as exc:  # pragma: no cover - defensive
        refs.warnings.append(f"skipped malformed css in {origin}: {exc}")
        logger.warning("skipped malformed css in %s: %s", origin, exc)


def filter_referenced_assets(
    assets: list[AssetRecord],
    refs: ReferenceSet,
    asset_root: str | Path | None = None,
) -> list[AssetRecord]:
    """Keep downloaded assets that are actually referenced, dropping
    content-hash duplicates (first occurrence wins)."""
    wanted = refs.paths()
    seen_hashes = set()
    kept = []
    for record in assets:
        if unquote(record.source_url) not in wanted:
            continue
        digest = _content_hash(record, asset_root)
        if digest in seen_hashes:
            continue
        seen_hashes.add(digest)
        kept.append(replace(record, referenced=True))
    return kept


def _content_hash(record: AssetRecord, asset_root: str | Path | None = None) -> str:
    path = (Path(asset_root) / record.saved_path) if asset_root else Path(record.saved_path)
    if path.exists():
        return hashlib.sha256(path.read_bytes()).hexdigest()
    return "src:" + record.source_url

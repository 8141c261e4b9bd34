"""Builds the per-page design instruction: classify referenced images,
summarize section content, and instantiate the Markdown template.
"""

from __future__ import annotations

import logging
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import unquote, urljoin, urlparse

from . import prompts
from .dom import parse_html
from .llm import ChatRequest, Gateway, ImagePart, NoJsonFound, ParseError, TextPart, extract_json
from .model import ASSET_CATEGORIES, AssetRecord, SectionRecord, StructuredRepresentation

logger = logging.getLogger(__name__)

SUMMARY_WORD_LIMIT = 30
ICON_FALLBACK_MAX_EDGE = 64


class MissingTitle(Exception):
    pass


@dataclass(frozen=True)
class ClassificationResult:
    original: str
    semantic_name: str
    category: str
    fallback_used: bool = False

    def to_dict(self) -> dict:
        return {
            "original": self.original,
            "semantic_name": self.semantic_name,
            "category": self.category,
        }


@dataclass
class InstructionSpec:
    title: str
    description: str
    assets: list[tuple[str, str, str, str]]  # (semantic_name, category, WxH, size)
    links: list[tuple[str, int, str]]        # (label, priority, href)
    content_summaries: list[str]
    rendered_markdown: str
    title_fallback_used: bool = False


def sanitize_semantic_name(name: str, original_name: str, taken: set[str]) -> str:
    """Lowercase hyphenated ASCII name carrying the original's extension;
    collisions get -2, -3 suffixes."""
    original_ext = Path(original_name).suffix.lower()
    stem = Path(name).stem if name else Path(original_name).stem
    stem = stem.encode("ascii", "ignore").decode("ascii").lower()
    stem = re.sub(r"[^a-z0-9]+", "-", stem).strip("-") or "asset"
    candidate = f"{stem}{original_ext}"
    counter = 2
    while candidate in taken:
        candidate = f"{stem}-{counter}{original_ext}"
        counter += 1
    return candidate


def _section_for_asset(
    asset: AssetRecord, sections: tuple[SectionRecord, ...], base_url: str
) -> SectionRecord | None:
    for section in sections:
        for ref, _saved in section.images:
            if ref.startswith("data:"):
                continue
            resolved = unquote(urljoin(base_url, ref)) if base_url else unquote(ref)
            if resolved == unquote(asset.source_url):
                return section
    return sections[0] if sections else None


def _context_text(section: SectionRecord | None, limit: int = 600) -> str:
    if section is None:
        return ""
    pieces = [section.heading(level) for level in range(1, 7)]
    pieces.append(section.body)
    pieces.extend(section.bullets)
    pieces.extend(link.label for link in section.links)
    text = " ".join(p for p in pieces if p)
    return text[:limit]


def _parse_classification(text: str, original: str) -> tuple[str, str] | None:
    try:
        obj = extract_json(text)
    except (NoJsonFound, ParseError):
        return None
    if not isinstance(obj, dict):
        return None
    category = str(obj.get("category", "")).strip().lower()
    semantic = str(obj.get("semantic_name", "")).strip()
    if category not in ASSET_CATEGORIES:
        return None
    return semantic or original, category


def classify_images(
    assets: list[AssetRecord],
    sections: tuple[SectionRecord, ...],
    gateway: Gateway,
    *,
    page_dir: str | Path,
    base_url: str = "",
    model: str = "",
) -> list[ClassificationResult]:
    """One classification call per referenced asset (plus at most one
    re-prompt); unparseable or illegal replies fall back to the size rule
    (small square assets become icons, everything else a feature)."""
    page_dir = Path(page_dir)
    results: list[ClassificationResult] = []
    taken: set[str] = set()
    for asset in assets:
        section = _section_for_asset(asset, sections, base_url)
        parts: list[TextPart | ImagePart] = [TextPart(prompts.IMAGE_CLASSIFICATION_USER_INTRO)]
        asset_path = page_dir / asset.saved_path
        if asset_path.exists():
            parts.append(ImagePart(asset_path.read_bytes(), mime=_mime_for(asset_path)))
        if section is not None and section.screenshot_path:
            shot_path = page_dir / section.screenshot_path
            if shot_path.exists():
                parts.append(TextPart(prompts.IMAGE_CLASSIFICATION_SECTION_SHOT))
                parts.append(ImagePart(shot_path.read_bytes()))
        parts.append(
            TextPart(
                prompts.image_classification_user_tail(
                    _context_text(section), asset.original_name
                )
            )
        )
        request = ChatRequest(
            system=prompts.IMAGE_CLASSIFICATION_SYSTEM,
            parts=tuple(parts),
            model=model or gateway.backend.model,
            temperature=0.0,
            stage="classify",
        )
        parsed = _parse_classification(gateway.complete(request).text, asset.original_name)
        if parsed is None:
            parsed = _parse_classification(gateway.complete(request).text, asset.original_name)
        if parsed is None:
            category = (
                "icon"
                if 0 < min(asset.width, asset.height) <= ICON_FALLBACK_MAX_EDGE
                else "feature"
            )
            logger.warning(
                "classification fell back to %s for %s", category, asset.original_name
            )
            name = sanitize_semantic_name("", asset.original_name, taken)
            taken.add(name)
            results.append(
                ClassificationResult(asset.original_name, name, category, fallback_used=True)
            )
            continue
        semantic, category = parsed
        name = sanitize_semantic_name(semantic, asset.original_name, taken)
        taken.add(name)
        results.append(ClassificationResult(asset.original_name, name, category))
    return results


def _mime_for(path: Path) -> str:
    table = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg",
             ".gif": "image/gif", ".webp": "image/webp", ".svg": "image/svg+xml"}
    return table.get(path.suffix.lower(), "image/png")


def materialize_semantic_assets(
    results: list[ClassificationResult],
    assets: list[AssetRecord],
    page_dir: str | Path,
) -> None:
    """Ensure every semantic filename exists in the page's asset directory."""
    by_original = {a.original_name: a for a in assets}
    page_dir = Path(page_dir)
    asset_dir = page_dir / "assets"
    asset_dir.mkdir(parents=True, exist_ok=True)
    for result in results:
        asset = by_original.get(result.original)
        if asset is None:
            continue
        target = asset_dir / result.semantic_name
        source = page_dir / asset.saved_path
        if source.exists() and source.resolve() != target.resolve():
            shutil.copyfile(source, target)


def section_text(section: SectionRecord) -> str:
    pieces = [section.heading(level) for level in range(1, 7)]
    pieces.append(section.body)
    pieces.extend(section.bullets)
    return " ".join(p for p in pieces if p).strip()


def summarize_section(
    section: SectionRecord, gateway: Gateway, model: str = ""
) -> tuple[str, bool]:
    """Returns (summary, truncated_flag). Empty sections answer locally."""
    content = section_text(section)
    if not content:
        return "Empty section.", False
    request = ChatRequest(
        system=prompts.SUMMARIZATION_SYSTEM,
        parts=(TextPart(prompts.summarization_user(content)),),
        model=model or gateway.backend.model,
        temperature=0.0,
        stage="summarize",
    )
    summary = gateway.complete(request).text.strip()
    words = summary.split()
    if len(words) > SUMMARY_WORD_LIMIT:
        logger.warning("summary truncated to %d words", SUMMARY_WORD_LIMIT)
        return " ".join(words[:SUMMARY_WORD_LIMIT]), True
    return summary, False


def assign_link_priorities(
    sections: tuple[SectionRecord, ...]
) -> list[tuple[str, int, str]]:
    """Priorities 1..N by (section order, in-section order); duplicate
    hrefs collapse to their highest-priority occurrence."""
    out: list[tuple[str, int, str]] = []
    seen: set[str] = set()
    priority = 1
    for section in sorted(sections, key=lambda s: s.order):
        for link in section.links:
            if link.href in seen:
                continue
            seen.add(link.href)
            out.append((link.label, priority, link.href))
            priority += 1
    return out


def format_asset_line(semantic_name: str, category: str, width: int, height: int, byte_size: int) -> str:
    size_kb = round(byte_size / 1024)
    return f"- `{semantic_name}`: {category.capitalize()} ({width}x{height}, {size_kb}KB)"


def format_link_line(label: str, priority: int, href: str) -> str:
    return f"- {label} (priority {priority}) -> {href}"


def build_instruction(
    structured: StructuredRepresentation,
    classifications: list[ClassificationResult],
    summaries: list[str],
    links: list[tuple[str, int, str]] | None = None,
    *,
    page_html: str = "",
) -> InstructionSpec:
    """Instantiate the instruction Markdown from classified assets, link
    priorities and section summaries. Title comes from the document title
    tag, then the first h1, then the URL host (flagged)."""
    by_original = {a.original_name: a for a in structured.assets}
    asset_rows: list[tuple[str, str, str, str]] = []
    asset_lines = []
    for result in classifications:
        asset = by_original.get(result.original)
        if asset is None:
            raise ValueError(f"classified asset {result.original!r} is not in the bundle")
        line = format_asset_line(
            result.semantic_name, result.category, asset.width, asset.height, asset.byte_size
        )
        asset_lines.append(line)
        asset_rows.append(
            (
                result.semantic_name,
                result.category,
                f"{asset.width}x{asset.height}",
                f"{round(asset.byte_size / 1024)}KB",
            )
        )

    if links is None:
        links = assign_link_priorities(structured.sections)
    link_lines = [format_link_line(label, priority, href) for label, priority, href in links]
    summary_lines = [f"- {s}" for s in summaries]

    title, description, fallback = _title_and_description(structured, page_html)

    markdown = prompts.INSTRUCTION_TEMPLATE.format(
        title=title,
        description=description,
        asset_count=len(asset_lines),
        images_section="\n".join(asset_lines),
        link_list="\n".join(link_lines),
        content_summaries="\n".join(summary_lines),
    )
    return InstructionSpec(
        title=title,
        description=description,
        assets=asset_rows,
        links=list(links),
        content_summaries=list(summaries),
        rendered_markdown=markdown,
        title_fallback_used=fallback,
    )


def _title_and_description(
    structured: StructuredRepresentation, page_html: str
) -> tuple[str, str, bool]:
    title = ""
    description = ""
    if page_html:
        doc = parse_html(page_html)
        title = doc.title()
        description = doc.meta_description()
    if not title:
        for section in structured.sections:
            if section.heading_h1:
                title = section.heading_h1
                break
    fallback = False
    if not title:
        fallback = True
        host = urlparse(structured.url).netloc
        title = host or Path(structured.url).stem or structured.page_id
        logger.warning("page has no title tag or h1; falling back to %r", title)
    if not description:
        for section in structured.sections:
            if section.body:
                first = section.body.split(". ")[0].strip()
                if first and not first.endswith("."):
                    first += "."
                description = first
                break
    return title, description, fallback

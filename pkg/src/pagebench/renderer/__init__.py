"""Browser abstraction: load a page, scroll it fully, capture screenshots,
and query element geometry/styles.

Two backends implement the same interface: a deterministic mock layout
engine (:mod:`pagebench.renderer.mock`) used throughout the test suite,
and a headless-browser client speaking the devtools wire protocol
(:mod:`pagebench.renderer.cdp`).
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

from ..geometry import BoundingBox

DEFAULT_VIEWPORT_WIDTH = 1280
DEFAULT_VIEWPORT_HEIGHT = 800


class RendererError(Exception):
    pass


class NavigationTimeout(RendererError):
    pass


class BackendUnavailable(RendererError):
    pass


class EmptyRegion(RendererError):
    """Requested capture region does not intersect the document."""


class RenderFailure(RendererError):
    pass


@dataclass(frozen=True)
class Viewport:
    width: int = DEFAULT_VIEWPORT_WIDTH
    height: int = DEFAULT_VIEWPORT_HEIGHT
    device_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("viewport dimensions must be positive")


@dataclass(frozen=True)
class ElementBox:
    dom_index: int
    tag: str
    bbox: BoundingBox
    visible: bool


@dataclass(frozen=True)
class Screenshot:
    data: bytes
    width: int
    height: int


@dataclass
class ElementDetail:
    """Content extracted from one element subtree."""

    tag: str = ""
    headings: dict[int, str] = field(default_factory=dict)
    body: str = ""
    bullets: list[str] = field(default_factory=list)
    links: list[tuple[str, str]] = field(default_factory=list)  # (label, href)
    images: list[str] = field(default_factory=list)             # raw refs, document order
    html: str = ""


class RenderedPage(abc.ABC):
    """Handle to one loaded page; owned by a single worker at a time."""

    viewport: Viewport

    @abc.abstractmethod
    def source(self) -> str:
        """Serialized DOM after load (and any lazy-load resolution)."""

    @abc.abstractmethod
    def document_size(self) -> tuple[float, float]:
        ...

    @abc.abstractmethod
    def scroll_full(self, max_steps: int = 50, settle_delay: float = 0.0) -> int:
        """Scroll to the bottom in viewport-height steps, then back to the
        top; returns the number of scroll steps performed."""

    @abc.abstractmethod
    def screenshot(self, region: BoundingBox | None = None) -> Screenshot:
        """Capture the full document (region=None) or exactly ``region``
        clamped to the document bounds."""

    @abc.abstractmethod
    def query_boxes(self, tags: tuple[str, ...]) -> list[ElementBox]:
        ...

    @abc.abstractmethod
    def computed_style(self, dom_index: int) -> dict[str, str]:
        """Resolved {background_color, color, font_family, font_size_px}."""

    @abc.abstractmethod
    def element_detail(self, dom_index: int) -> ElementDetail:
        ...

    @abc.abstractmethod
    def common_ancestor(self, dom_indexes: list[int]) -> int:
        """dom_index of the nearest common ancestor element."""

    @abc.abstractmethod
    def contains(self, ancestor_index: int, descendant_index: int) -> bool:
        ...


class Renderer(abc.ABC):
    @abc.abstractmethod
    def load(self, source: str, viewport: Viewport = Viewport()) -> RenderedPage:
        """Load a URL or local HTML file path."""


def get_renderer(name: str, **kwargs) -> Renderer:
    if name == "mock":
        from .mock import MockRenderer

        return MockRenderer(**kwargs)
    if name == "real":
        from .cdp import CdpRenderer

        return CdpRenderer(**kwargs)
    raise ValueError(f"unknown renderer {name!r} (expected 'mock' or 'real')")

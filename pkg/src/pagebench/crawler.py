"""Seed search, URL filtering, and polite robots-aware page fetching.

Every HTTP request (robots.txt, pages, stylesheets, images) passes through
a per-host scheduler that enforces a concurrency cap and a minimum
inter-request delay, and nothing is written to disk for a URL that
robots.txt disallows.
"""

from __future__ import annotations

import abc
import base64
import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from io import BytesIO
from pathlib import Path
from urllib import robotparser
from urllib.parse import unquote, urljoin, urlparse, urlunparse

import requests

from .dom import parse_html
from .model import AssetRecord
from .processor import ReferenceSet, extract_reference_set
from .renderer import Renderer, Viewport

logger = logging.getLogger(__name__)

DEFAULT_SUFFIXES = ("pricing", "free trial", "contact us")

DEFAULT_BLACKLIST = (
    "youtube.com",
    "facebook.com",
    "twitter.com",
    "x.com",
    "instagram.com",
    "tiktok.com",
    "linkedin.com",
    "pinterest.com",
    "reddit.com",
    "vimeo.com",
    "dailymotion.com",
    "twitch.tv",
    "snapchat.com",
)

USER_AGENT = "pagebench-crawler/0.1"


class CrawlerError(Exception):
    pass


class EmptyKeywordList(CrawlerError):
    pass


class ProviderError(CrawlerError):
    def __init__(self, message: str, query: "SeedQuery | None" = None):
        self.query = query
        super().__init__(message)


class QuotaExceeded(ProviderError):
    pass


class RobotsDisallowed(CrawlerError):
    pass


class FetchTimeout(CrawlerError):
    pass


class TooLarge(CrawlerError):
    pass


@dataclass(frozen=True)
class SeedQuery:
    base_keyword: str
    suffix: str

    @property
    def full_query(self) -> str:
        return f"{self.base_keyword} {self.suffix}"


def expand_keywords(
    keywords: list[str], suffixes: list[str] | tuple[str, ...] = DEFAULT_SUFFIXES
) -> list[SeedQuery]:
    """Keyword-major expansion into high-intent queries."""
    if not keywords:
        raise EmptyKeywordList("keyword list is empty")
    return [SeedQuery(k, s) for k in keywords for s in suffixes]


class SearchProvider(abc.ABC):
    @abc.abstractmethod
    def search(self, query: SeedQuery) -> list[str]:
        """Ranked candidate URLs, provider order preserved."""


class JsonlSearchProvider(SearchProvider):
    """Offline provider: JSON lines of {"query": ..., "urls": [...]}."""

    def __init__(self, path: str | Path):
        self.results: dict[str, list[str]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            self.results[obj["query"]] = list(obj["urls"])

    def search(self, query: SeedQuery) -> list[str]:
        return list(self.results.get(query.full_query, []))


class HttpSearchProvider(SearchProvider):
    """Minimal JSON search API client; expects {"results": [{"url": ...}]}."""

    def __init__(self, endpoint: str, api_key: str):
        if not api_key:
            raise ProviderError("search API key is not configured")
        self.endpoint = endpoint
        self.api_key = api_key

    def search(self, query: SeedQuery) -> list[str]:
        try:
            resp = requests.get(
                self.endpoint,
                params={"q": query.full_query, "api_key": self.api_key},
                timeout=30,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"search transport failure: {exc}", query) from exc
        if resp.status_code == 429:
            raise QuotaExceeded(f"search quota exceeded for {query.full_query!r}", query)
        if resp.status_code >= 400:
            raise ProviderError(
                f"search returned {resp.status_code} for {query.full_query!r}", query
            )
        try:
            return [entry["url"] for entry in resp.json().get("results", [])]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError(f"malformed search response: {exc}", query) from exc


def search_seeds(query: SeedQuery, provider: SearchProvider) -> list[str]:
    """Provider order passed through untouched; dedup happens later."""
    return provider.search(query)


def normalize_url(url: str) -> str:
    parts = urlparse(url.strip())
    host = parts.hostname.lower() if parts.hostname else ""
    port = parts.port
    if port and not (
        (parts.scheme == "http" and port == 80)
        or (parts.scheme == "https" and port == 443)
    ):
        host = f"{host}:{port}"
    return urlunparse((parts.scheme.lower(), host, parts.path, parts.params, parts.query, ""))


def _host_matches(host: str, domain: str) -> bool:
    host = host.lower().split(":")[0]
    domain = domain.lower()
    return host == domain or host.endswith("." + domain)


def filter_urls(
    urls: list[str],
    blacklist: tuple[str, ...] = DEFAULT_BLACKLIST,
    seen: set[str] | None = None,
) -> list[str]:
    """Normalized, deduplicated http(s) URLs with blacklisted registrable
    domains removed; ``seen`` entries are skipped."""
    seen = set(seen or ())
    out = []
    for url in urls:
        parts = urlparse(url.strip())
        if parts.scheme not in ("http", "https") or not parts.hostname:
            continue
        normalized = normalize_url(url)
        if normalized in seen:
            continue
        if any(_host_matches(parts.hostname, domain) for domain in blacklist):
            continue
        seen.add(normalized)
        out.append(normalized)
    return out


@dataclass
class FetchPolicy:
    timeout_s: float = 15.0
    max_bytes: int = 10 * 1024 * 1024
    min_delay_ms: int = 1000
    max_per_host: int = 1
    render: str = "auto"  # auto | always | never
    min_visible_chars: int = 200
    viewport: Viewport = field(default_factory=Viewport)
    user_agent: str = USER_AGENT


class HostScheduler:
    """Per-host politeness: at most ``max_per_host`` in flight and at least
    ``min_delay_ms`` between request starts."""

    def __init__(self, min_delay_ms: int = 1000, max_per_host: int = 1, clock=time.monotonic, sleep=time.sleep):
        self.min_delay = min_delay_ms / 1000.0
        self.max_per_host = max_per_host
        self._clock = clock
        self._sleep = sleep
        self._global_lock = threading.Lock()
        self._hosts: dict[str, dict] = {}

    def _state(self, host: str) -> dict:
        with self._global_lock:
            if host not in self._hosts:
                self._hosts[host] = {
                    "semaphore": threading.BoundedSemaphore(self.max_per_host),
                    "lock": threading.Lock(),
                    "next_allowed": 0.0,
                }
            return self._hosts[host]

    def acquire(self, host: str) -> None:
        state = self._state(host)
        state["semaphore"].acquire()
        with state["lock"]:
            wait = state["next_allowed"] - self._clock()
            if wait > 0:
                self._sleep(wait)
            state["next_allowed"] = self._clock() + self.min_delay

    def release(self, host: str) -> None:
        self._state(host)["semaphore"].release()

    def slot(self, host: str):
        return _Slot(self, host)


class _Slot:
    def __init__(self, scheduler: HostScheduler, host: str):
        self.scheduler = scheduler
        self.host = host

    def __enter__(self):
        self.scheduler.acquire(self.host)
        return self

    def __exit__(self, *exc):
        self.scheduler.release(self.host)
        return False


@dataclass
class CrawlRecord:
    url: str
    fetch_mode: str  # static | rendered
    status: int
    html_path: str = ""
    screenshot_path: str = ""
    asset_dir: str = ""
    fetched_at: str = ""
    robots_allowed: bool = True

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "fetch_mode": self.fetch_mode,
            "status": self.status,
            "html_path": self.html_path,
            "screenshot_path": self.screenshot_path,
            "asset_dir": self.asset_dir,
            "fetched_at": self.fetched_at,
            "robots_allowed": self.robots_allowed,
        }


class RobotsCache:
    """Per-host robots.txt, fetched politely once; fetch failures allow."""

    def __init__(self, fetch_text, user_agent: str = USER_AGENT):
        self._fetch_text = fetch_text
        self._user_agent = user_agent
        self._parsers: dict[str, robotparser.RobotFileParser] = {}
        self._lock = threading.Lock()

    def allowed(self, url: str) -> bool:
        parts = urlparse(url)
        origin = f"{parts.scheme}://{parts.netloc}"
        with self._lock:
            parser = self._parsers.get(origin)
        if parser is None:
            parser = robotparser.RobotFileParser()
            text = self._fetch_text(origin + "/robots.txt")
            if text is None:
                parser.parse([])  # no robots file: allow all
            else:
                parser.parse(text.splitlines())
            with self._lock:
                self._parsers[origin] = parser
        return parser.can_fetch(self._user_agent, url)


def page_id_for(url: str) -> str:
    parts = urlparse(url)
    slug = re.sub(r"[^a-z0-9]+", "-", (parts.hostname or "local").lower()).strip("-")
    digest = hashlib.sha1(normalize_url(url).encode("utf-8")).hexdigest()[:8]
    return f"{slug}-{digest}"


def needs_rendering(html: str, min_visible_chars: int = 200) -> bool:
    """Static DOM too empty to trust: little visible text, or a single
    empty mount div typical of client-rendered apps."""
    doc = parse_html(html)
    if doc.visible_text_length() < min_visible_chars:
        return True
    body = doc.body
    if body is not None:
        children = [c for c in body.children if c.tag not in ("script", "style")]
        if (
            len(children) == 1
            and children[0].tag == "div"
            and not children[0].children
            and not children[0].direct_text()
        ):
            return True
    return False


class Fetcher:
    """HTTP access shared by the crawler: every request goes through the
    politeness scheduler."""

    def __init__(self, policy: FetchPolicy, scheduler: HostScheduler | None = None):
        self.policy = policy
        self.scheduler = scheduler or HostScheduler(
            min_delay_ms=policy.min_delay_ms, max_per_host=policy.max_per_host
        )
        self.session = requests.Session()
        self.session.headers["User-Agent"] = policy.user_agent

    def get(self, url: str) -> tuple[int, bytes]:
        host = urlparse(url).netloc
        with self.scheduler.slot(host):
            try:
                resp = self.session.get(url, timeout=self.policy.timeout_s, stream=True)
            except requests.Timeout as exc:
                raise FetchTimeout(f"timeout fetching {url}") from exc
            except requests.RequestException as exc:
                raise FetchTimeout(f"cannot fetch {url}: {exc}") from exc
            body = BytesIO()
            for chunk in resp.iter_content(chunk_size=65536):
                body.write(chunk)
                if body.tell() > self.policy.max_bytes:
                    resp.close()
                    raise TooLarge(f"{url} exceeds {self.policy.max_bytes} bytes")
            return resp.status_code, body.getvalue()

    def get_text(self, url: str) -> str | None:
        try:
            status, body = self.get(url)
        except CrawlerError:
            return None
        if status != 200:
            return None
        return body.decode("utf-8", errors="replace")


def fetch_page(
    url: str,
    out_dir: str | Path,
    policy: FetchPolicy | None = None,
    renderer: Renderer | None = None,
    *,
    fetcher: Fetcher | None = None,
    robots: RobotsCache | None = None,
) -> CrawlRecord:
    """Fetch one page with robots compliance and save its artifacts
    (HTML, full screenshot in rendered mode, embedded assets)."""
    policy = policy or FetchPolicy()
    fetcher = fetcher or Fetcher(policy)
    robots = robots or RobotsCache(fetcher.get_text, policy.user_agent)
    url = normalize_url(url)
    fetched_at = datetime.now(timezone.utc).isoformat()

    if not robots.allowed(url):
        logger.info("robots.txt disallows %s; skipping", url)
        return CrawlRecord(
            url=url,
            fetch_mode="static",
            status=0,
            fetched_at=fetched_at,
            robots_allowed=False,
        )

    page_dir = Path(out_dir)
    page_dir.mkdir(parents=True, exist_ok=True)
    asset_dir = page_dir / "assets"

    mode = "static"
    status, body = fetcher.get(url)
    html = body.decode("utf-8", errors="replace")
    screenshot_rel = ""

    should_render = policy.render == "always" or (
        policy.render == "auto" and status == 200 and needs_rendering(html, policy.min_visible_chars)
    )
    if should_render and renderer is not None:
        mode = "rendered"
        # politeness for the navigation itself rides on the renderer's
        # fetch path (wire the mock renderer's fetcher through this
        # crawler's Fetcher when constructing it)
        page = renderer.load(url, viewport=policy.viewport)
        page.scroll_full()
        html = page.source()
        shot = page.screenshot()
        screenshot_rel = "screenshot.png"
        (page_dir / screenshot_rel).write_bytes(shot.data)

    record = CrawlRecord(
        url=url,
        fetch_mode=mode,
        status=status,
        fetched_at=fetched_at,
        robots_allowed=True,
    )
    if status != 200:
        return record

    (page_dir / "page.html").write_text(html, encoding="utf-8")
    record.html_path = "page.html"
    record.screenshot_path = screenshot_rel

    assets = download_assets(html, url, asset_dir, fetcher, robots)
    record.asset_dir = "assets"
    manifest = [a.to_dict() for a in assets]
    (page_dir / "assets.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return record


_DATA_URI = re.compile(r"data:(image/[a-zA-Z+.-]+);base64,([A-Za-z0-9+/=]+)")

_EXT_FOR_MIME = {
    "image/png": ".png",
    "image/jpeg": ".jpg",
    "image/gif": ".gif",
    "image/webp": ".webp",
    "image/svg+xml": ".svg",
}


def inline_data_assets(html: str) -> dict[str, tuple[str, bytes]]:
    """Decode base64 data URIs, keyed exactly like the reference set."""
    from .processor import inline_data_key

    out = {}
    for m in _DATA_URI.finditer(html):
        uri = m.group(0)
        key = inline_data_key(uri)
        if key in out:
            continue
        try:
            out[key] = (m.group(1), base64.b64decode(m.group(2)))
        except ValueError:
            logger.warning("undecodable data URI (%s...)", uri[:40])
    return out


def _image_dimensions(data: bytes) -> tuple[int, int]:
    try:
        from PIL import Image

        with Image.open(BytesIO(data)) as img:
            return img.width, img.height
    except Exception:
        return 0, 0


def _unique_name(name: str, taken: set[str]) -> str:
    stem = Path(name).stem or "asset"
    suffix = Path(name).suffix
    candidate = f"{stem}{suffix}"
    counter = 2
    while candidate in taken:
        candidate = f"{stem}-{counter}{suffix}"
        counter += 1
    taken.add(candidate)
    return candidate


def download_assets(
    html: str,
    base_url: str,
    asset_dir: Path,
    fetcher: Fetcher,
    robots: RobotsCache,
) -> list[AssetRecord]:
    """Download every embedded asset the page references: images from
    HTML/CSS, external stylesheets, and inlined base64 images."""
    asset_dir.mkdir(parents=True, exist_ok=True)
    taken: set[str] = set()
    doc = parse_html(html)
    css_texts = []
    for href in doc.stylesheet_links():
        css_url = urljoin(base_url, href)
        if not robots.allowed(css_url):
            continue
        text = fetcher.get_text(css_url)
        if text is not None:
            css_texts.append(text)
            name = _unique_name(Path(urlparse(css_url).path).name or "style.css", taken)
            (asset_dir / name).write_text(text, encoding="utf-8")

    refs = extract_reference_set(html, external_css=css_texts, base=base_url)
    records: list[AssetRecord] = []

    inline = inline_data_assets(html)
    for key, (mime, data) in inline.items():
        ext = _EXT_FOR_MIME.get(mime, ".bin")
        name = _unique_name(f"{key.replace(':', '_')}{ext}", taken)
        (asset_dir / name).write_bytes(data)
        width, height = _image_dimensions(data)
        records.append(
            AssetRecord(
                original_name=name,
                saved_path=f"{asset_dir.name}/{name}",
                width=width,
                height=height,
                byte_size=len(data),
                source_url=key,
            )
        )

    for ref, provenance in refs.referenced.items():
        if ref.startswith("inline:"):
            continue
        if urlparse(ref).scheme not in ("http", "https", "file", ""):
            continue
        if ref.lower().endswith(".css"):
            continue
        if not robots.allowed(ref):
            logger.info("robots.txt disallows asset %s; skipping", ref)
            continue
        try:
            status, data = fetcher.get(ref)
        except CrawlerError as exc:
            logger.warning("asset fetch failed for %s: %s", ref, exc)
            continue
        if status != 200:
            continue
        original = Path(unquote(urlparse(ref).path)).name or "asset"
        name = _unique_name(original, taken)
        (asset_dir / name).write_bytes(data)
        width, height = _image_dimensions(data)
        records.append(
            AssetRecord(
                original_name=original,
                saved_path=f"{asset_dir.name}/{name}",
                width=width,
                height=height,
                byte_size=len(data),
                source_url=ref,
            )
        )
    return records


def crawl(
    urls: list[str],
    out_dir: str | Path,
    policy: FetchPolicy | None = None,
    renderer: Renderer | None = None,
    *,
    max_pages: int | None = None,
) -> list[CrawlRecord]:
    """Fetch a list of already-filtered URLs into pages/<page_id>/ dirs."""
    policy = policy or FetchPolicy()
    fetcher = Fetcher(policy)
    robots = RobotsCache(fetcher.get_text, policy.user_agent)
    out_dir = Path(out_dir)
    records = []
    for url in urls[: max_pages if max_pages is not None else len(urls)]:
        page_dir = out_dir / "pages" / page_id_for(url)
        try:
            record = fetch_page(
                url, page_dir, policy, renderer, fetcher=fetcher, robots=robots
            )
        except CrawlerError as exc:
            logger.warning("fetch failed for %s: %s", url, exc)
            record = CrawlRecord(
                url=normalize_url(url),
                fetch_mode="static",
                status=-1,
                fetched_at=datetime.now(timezone.utc).isoformat(),
            )
        records.append(record)
    (out_dir / "crawl_records.json").write_text(
        json.dumps([r.to_dict() for r in records], indent=2) + "\n", encoding="utf-8"
    )
    return records

"""Headless-browser backend over the devtools wire protocol.

The protocol logic (command sequences, JS snippets, result mapping) is
separated from the transport so it can be exercised against a fake
transport in tests; the real transport is a minimal WebSocket client over
a local socket. Select with ``--renderer real``; the endpoint comes from
``RENDERER_ENDPOINT`` (default ``http://127.0.0.1:9222``).
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import secrets
import socket
import struct
import time
from pathlib import Path
from urllib.parse import urlparse
from urllib.request import Request, urlopen

from ..geometry import BoundingBox
from . import (
    BackendUnavailable,
    ElementBox,
    ElementDetail,
    EmptyRegion,
    NavigationTimeout,
    RenderedPage,
    Renderer,
    Screenshot,
    Viewport,
)

DEFAULT_ENDPOINT = "http://127.0.0.1:9222"
DEFAULT_TIMEOUT_S = 30.0
SCROLL_SETTLE_S = 0.25

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


# -- minimal RFC6455 client frames (pure helpers, unit-testable) -------------


def websocket_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def encode_text_frame(payload: bytes, mask: bytes | None = None) -> bytes:
    """Client-to-server masked text frame (FIN set)."""
    mask = mask if mask is not None else secrets.token_bytes(4)
    length = len(payload)
    header = bytearray([0x81])
    if length < 126:
        header.append(0x80 | length)
    elif length < 1 << 16:
        header.append(0x80 | 126)
        header += struct.pack(">H", length)
    else:
        header.append(0x80 | 127)
        header += struct.pack(">Q", length)
    header += mask
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return bytes(header) + masked


def decode_frame(buffer: bytes) -> tuple[int, bytes, int] | None:
    """(opcode, payload, consumed) for one complete frame, else None."""
    if len(buffer) < 2:
        return None
    opcode = buffer[0] & 0x0F
    masked = bool(buffer[1] & 0x80)
    length = buffer[1] & 0x7F
    offset = 2
    if length == 126:
        if len(buffer) < 4:
            return None
        length = struct.unpack(">H", buffer[2:4])[0]
        offset = 4
    elif length == 127:
        if len(buffer) < 10:
            return None
        length = struct.unpack(">Q", buffer[2:10])[0]
        offset = 10
    mask = b""
    if masked:
        if len(buffer) < offset + 4:
            return None
        mask = buffer[offset : offset + 4]
        offset += 4
    if len(buffer) < offset + length:
        return None
    payload = buffer[offset : offset + length]
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload, offset + length


class WsTransport:
    """Blocking WebSocket transport for devtools command traffic."""

    def __init__(self, ws_url: str, timeout_s: float = DEFAULT_TIMEOUT_S):
        parts = urlparse(ws_url)
        if parts.scheme != "ws":
            raise BackendUnavailable(f"unsupported scheme in {ws_url!r}")
        self._timeout = timeout_s
        try:
            self._sock = socket.create_connection(
                (parts.hostname, parts.port or 80), timeout=timeout_s
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot connect to {ws_url}: {exc}") from exc
        self._handshake(parts)
        self._buffer = b""
        self._next_id = 0
        self._events: list[dict] = []

    def _handshake(self, parts) -> None:
        key = base64.b64encode(secrets.token_bytes(16)).decode("ascii")
        path = parts.path or "/"
        if parts.query:
            path += "?" + parts.query
        request = (
            f"GET {path} HTTP/1.1\r\n"
            f"Host: {parts.hostname}:{parts.port or 80}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n\r\n"
        )
        self._sock.sendall(request.encode("ascii"))
        response = b""
        while b"\r\n\r\n" not in response:
            chunk = self._sock.recv(4096)
            if not chunk:
                raise BackendUnavailable("connection closed during handshake")
            response += chunk
        head, _, rest = response.partition(b"\r\n\r\n")
        if b"101" not in head.split(b"\r\n", 1)[0]:
            raise BackendUnavailable(f"handshake rejected: {head[:120]!r}")
        m = re.search(rb"Sec-WebSocket-Accept:\s*(\S+)", head, re.IGNORECASE)
        if not m or m.group(1).decode("ascii") != websocket_accept_key(key):
            raise BackendUnavailable("handshake accept key mismatch")
        self._buffer = rest

    def _recv_message(self) -> dict:
        deadline = time.monotonic() + self._timeout
        fragments = b""
        while True:
            frame = decode_frame(self._buffer)
            if frame is not None:
                opcode, payload, consumed = frame
                self._buffer = self._buffer[consumed:]
                if opcode == 0x9:  # ping -> pong
                    pong = encode_text_frame(payload)
                    self._sock.sendall(bytes([0x8A]) + pong[1:])
                    continue
                if opcode == 0x8:
                    raise BackendUnavailable("browser closed the connection")
                if opcode in (0x1, 0x0):
                    fragments += payload
                    if opcode == 0x1 or fragments:
                        return json.loads(fragments.decode("utf-8"))
                continue
            if time.monotonic() > deadline:
                raise NavigationTimeout("timed out waiting for devtools message")
            chunk = self._sock.recv(65536)
            if not chunk:
                raise BackendUnavailable("connection closed")
            self._buffer += chunk

    def call(self, method: str, params: dict | None = None) -> dict:
        self._next_id += 1
        message_id = self._next_id
        frame = encode_text_frame(
            json.dumps({"id": message_id, "method": method, "params": params or {}}).encode("utf-8")
        )
        self._sock.sendall(frame)
        while True:
            message = self._recv_message()
            if message.get("id") == message_id:
                if "error" in message:
                    raise BackendUnavailable(f"{method} failed: {message['error']}")
                return message.get("result", {})
            self._events.append(message)

    def wait_event(self, method: str, timeout_s: float | None = None) -> dict:
        for i, event in enumerate(self._events):
            if event.get("method") == method:
                return self._events.pop(i)
        deadline = time.monotonic() + (timeout_s or self._timeout)
        while time.monotonic() < deadline:
            message = self._recv_message()
            if message.get("method") == method:
                return message
            self._events.append(message)
        raise NavigationTimeout(f"timed out waiting for {method}")

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


_QUERY_BOXES_JS = """
(function(tags) {
  const all = Array.from(document.querySelectorAll('*'));
  const out = [];
  all.forEach((el, idx) => {
    if (!tags.includes(el.tagName.toLowerCase())) return;
    const r = el.getBoundingClientRect();
    const style = getComputedStyle(el);
    const hidden = style.display === 'none' || r.width <= 0 || r.height <= 0;
    out.push({
      dom_index: idx,
      tag: el.tagName.toLowerCase(),
      x: r.x + window.scrollX,
      y: r.y + window.scrollY,
      width: r.width,
      height: r.height,
      visible: !hidden,
    });
  });
  return JSON.stringify(out);
})(%TAGS%)
"""

_ELEMENT_DETAIL_JS = """
(function(index) {
  const el = document.querySelectorAll('*')[index] || document.body;
  const headings = {};
  for (let level = 1; level <= 6; level++) {
    const parts = Array.from(el.querySelectorAll('h' + level)).map(h => h.innerText.trim());
    if (el.tagName.toLowerCase() === 'h' + level) parts.unshift(el.innerText.trim());
    headings[level] = parts.filter(Boolean).join(' ');
  }
  const body = Array.from(el.querySelectorAll('p')).map(p => p.innerText.trim()).filter(Boolean).join(' ');
  const bullets = Array.from(el.querySelectorAll('li')).map(li => li.innerText.trim());
  const links = Array.from(el.querySelectorAll('a[href]')).map(a => [a.innerText.trim(), a.getAttribute('href')]);
  const images = [];
  Array.from(el.querySelectorAll('img[src]')).forEach(img => images.push(img.getAttribute('src')));
  Array.from(el.querySelectorAll('[style]')).forEach(n => {
    const m = (n.getAttribute('style') || '').match(/url\\(\\s*['"]?([^'")]+)['"]?\\s*\\)/);
    if (m) images.push(m[1]);
  });
  return JSON.stringify({
    tag: el.tagName.toLowerCase(),
    headings: headings,
    body: body,
    bullets: bullets,
    links: links,
    images: Array.from(new Set(images)),
    html: el.outerHTML,
  });
})(%INDEX%)
"""

_COMMON_ANCESTOR_JS = """
(function(indexes) {
  const all = document.querySelectorAll('*');
  let nodes = indexes.map(i => all[i]).filter(Boolean);
  if (!nodes.length) return '-1';
  let candidate = nodes[0];
  while (candidate && !nodes.every(n => candidate.contains(n))) {
    candidate = candidate.parentElement;
  }
  if (!candidate) return '-1';
  return String(Array.from(all).indexOf(candidate));
})(%INDEXES%)
"""

_CONTAINS_JS = """
(function(a, b) {
  const all = document.querySelectorAll('*');
  const anc = all[a], desc = all[b];
  return String(Boolean(anc && desc && anc !== desc && anc.contains(desc)));
})(%A%, %B%)
"""

_COMPUTED_STYLE_JS = """
(function(index) {
  const el = document.querySelectorAll('*')[index] || document.body;
  const s = getComputedStyle(el);
  return JSON.stringify({
    background_color: s.backgroundColor,
    color: s.color,
    font_family: s.fontFamily,
    font_size: s.fontSize,
  });
})(%INDEX%)
"""


def _rgb_to_hex(value: str) -> str:
    m = re.match(r"rgba\((\d+),\s*(\d+),\s*(\d+),\s*0(?:\.0+)?\)", value)
    if m or value == "transparent":
        return "#FFFFFF"  # fully transparent paints as the canvas default
    m = re.match(r"rgba?\((\d+),\s*(\d+),\s*(\d+)", value)
    if m:
        r, g, b = (int(v) for v in m.groups())
        return f"#{r:02X}{g:02X}{b:02X}"
    if value.startswith("#") and len(value) == 7:
        return value.upper()
    return "#000000"


class CdpPage(RenderedPage):
    def __init__(self, transport, viewport: Viewport, settle_s: float = SCROLL_SETTLE_S, sleep=time.sleep):
        self.transport = transport
        self.viewport = viewport
        self._settle = settle_s
        self._sleep = sleep

    def _evaluate(self, expression: str) -> str:
        result = self.transport.call(
            "Runtime.evaluate",
            {"expression": expression, "returnByValue": True},
        )
        return result.get("result", {}).get("value", "")

    def source(self) -> str:
        return self._evaluate("document.documentElement.outerHTML")

    def document_size(self) -> tuple[float, float]:
        metrics = self.transport.call("Page.getLayoutMetrics", {})
        size = metrics.get("cssContentSize") or metrics.get("contentSize", {})
        return (float(size.get("width", 0)), float(size.get("height", 0)))

    def scroll_full(self, max_steps: int = 50, settle_delay: float | None = None) -> int:
        settle = self._settle if settle_delay is None else settle_delay
        vh = self.viewport.height
        steps = 0
        position = 0.0
        while steps < max_steps:
            _, doc_h = self.document_size()
            if position + vh >= doc_h:
                break
            position = min(position + vh, doc_h - vh)
            self._evaluate(f"window.scrollTo(0, {position})")
            steps += 1
            if settle:
                self._sleep(settle)
        if steps:
            self._evaluate("window.scrollTo(0, 0)")
            if settle:
                self._sleep(settle)
        return steps

    def screenshot(self, region: BoundingBox | None = None) -> Screenshot:
        doc_w, doc_h = self.document_size()
        if region is None:
            clip = {"x": 0, "y": 0, "width": max(doc_w, 1), "height": max(doc_h, 1), "scale": 1}
            # full capture via viewport expansion, not stitching
            self.transport.call(
                "Emulation.setDeviceMetricsOverride",
                {
                    "width": int(max(doc_w, 1)),
                    "height": int(max(doc_h, 1)),
                    "deviceScaleFactor": self.viewport.device_scale,
                    "mobile": False,
                },
            )
        else:
            x0 = max(0.0, region.x)
            y0 = max(0.0, region.y)
            x1 = min(doc_w, region.right)
            y1 = min(doc_h, region.bottom)
            if x1 <= x0 or y1 <= y0:
                raise EmptyRegion(f"region {region.as_tuple()} outside document")
            clip = {"x": x0, "y": y0, "width": x1 - x0, "height": y1 - y0, "scale": 1}
        result = self.transport.call(
            "Page.captureScreenshot",
            {"format": "png", "clip": clip, "captureBeyondViewport": True},
        )
        data = base64.b64decode(result.get("data", ""))
        scale = self.viewport.device_scale
        return Screenshot(
            data=data,
            width=int(clip["width"] * scale),
            height=int(clip["height"] * scale),
        )

    def query_boxes(self, tags: tuple[str, ...]) -> list[ElementBox]:
        raw = self._evaluate(_QUERY_BOXES_JS.replace("%TAGS%", json.dumps(list(tags))))
        out = []
        for entry in json.loads(raw or "[]"):
            out.append(
                ElementBox(
                    dom_index=entry["dom_index"],
                    tag=entry["tag"],
                    bbox=BoundingBox(
                        entry["x"], entry["y"], max(0.0, entry["width"]), max(0.0, entry["height"])
                    ),
                    visible=entry["visible"],
                )
            )
        out.sort(key=lambda e: e.dom_index)
        return out

    def computed_style(self, dom_index: int) -> dict[str, str]:
        raw = self._evaluate(_COMPUTED_STYLE_JS.replace("%INDEX%", str(dom_index)))
        obj = json.loads(raw or "{}")
        size = re.sub(r"px$", "", obj.get("font_size", "16"))
        return {
            "background_color": _rgb_to_hex(obj.get("background_color", "")),
            "color": _rgb_to_hex(obj.get("color", "")),
            "font_family": obj.get("font_family", "").split(",")[0].strip().strip("'\""),
            "font_size_px": size,
        }

    def element_detail(self, dom_index: int) -> ElementDetail:
        raw = self._evaluate(_ELEMENT_DETAIL_JS.replace("%INDEX%", str(dom_index)))
        obj = json.loads(raw or "{}")
        return ElementDetail(
            tag=obj.get("tag", ""),
            headings={int(k): v for k, v in obj.get("headings", {}).items()},
            body=obj.get("body", ""),
            bullets=list(obj.get("bullets", [])),
            links=[(label, href) for label, href in obj.get("links", [])],
            images=list(obj.get("images", [])),
            html=obj.get("html", ""),
        )

    def common_ancestor(self, dom_indexes: list[int]) -> int:
        raw = self._evaluate(
            _COMMON_ANCESTOR_JS.replace("%INDEXES%", json.dumps(dom_indexes))
        )
        return int(raw or "-1")

    def contains(self, ancestor_index: int, descendant_index: int) -> bool:
        raw = self._evaluate(
            _CONTAINS_JS.replace("%A%", str(ancestor_index)).replace("%B%", str(descendant_index))
        )
        return raw == "true"


class CdpRenderer(Renderer):
    def __init__(self, endpoint: str | None = None, transport_factory=None, sleep=time.sleep):
        self.endpoint = endpoint or os.environ.get("RENDERER_ENDPOINT", DEFAULT_ENDPOINT)
        self._transport_factory = transport_factory or WsTransport
        self._sleep = sleep

    def _new_target_ws_url(self) -> str:
        url = self.endpoint.rstrip("/") + "/json/new?about:blank"
        try:
            with urlopen(Request(url, method="PUT"), timeout=10) as resp:
                info = json.loads(resp.read().decode("utf-8"))
        except OSError as exc:
            raise BackendUnavailable(
                f"no devtools endpoint at {self.endpoint}: {exc}"
            ) from exc
        ws_url = info.get("webSocketDebuggerUrl")
        if not ws_url:
            raise BackendUnavailable("devtools endpoint returned no webSocketDebuggerUrl")
        return ws_url

    def load(self, source: str, viewport: Viewport = Viewport()) -> CdpPage:
        if not source.startswith(("http://", "https://", "file://")):
            source = Path(source).resolve().as_uri()
        transport = self._transport_factory(self._new_target_ws_url())
        transport.call("Page.enable", {})
        transport.call(
            "Emulation.setDeviceMetricsOverride",
            {
                "width": viewport.width,
                "height": viewport.height,
                "deviceScaleFactor": viewport.device_scale,
                "mobile": False,
            },
        )
        transport.call("Page.navigate", {"url": source})
        transport.wait_event("Page.loadEventFired")
        return CdpPage(transport, viewport, sleep=self._sleep)

import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class InstrumentedServer:
    """Local HTTP server serving a routes dict and recording every request
    with a monotonic timestamp, for politeness and determinism tests."""

    def __init__(self):
        self.routes: dict[str, tuple[int, str, bytes]] = {}
        self.requests: list[tuple[float, str]] = []
        self._lock = threading.Lock()

        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                with server._lock:
                    server.requests.append((time.monotonic(), self.path))
                entry = server.routes.get(self.path)
                if entry is None:
                    self.send_response(404)
                    self.end_headers()
                    return
                status, content_type, body = entry
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def add(self, path: str, body: str | bytes, content_type: str = "text/html", status: int = 200):
        data = body.encode("utf-8") if isinstance(body, str) else body
        self.routes[path] = (status, content_type, data)

    def timestamps_for(self, path_prefix: str = "") -> list[float]:
        with self._lock:
            return [t for t, p in self.requests if p.startswith(path_prefix)]

    def clear_log(self):
        with self._lock:
            self.requests.clear()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def web_server():
    server = InstrumentedServer()
    yield server
    server.close()


TINY_PNG = bytes.fromhex(
    "89504e470d0a1a0a0000000d4948445200000001000000010802000000907753de"
    "0000000c4944415408d763f8cfc00000030101a05a4d7a0000000049454e44ae426082"
)


@pytest.fixture
def tiny_png() -> bytes:
    return TINY_PNG

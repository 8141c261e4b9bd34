"""Single client abstraction for every model call in the pipeline.

A :class:`Gateway` wraps one backend (scripted mock or HTTP) and owns the
cross-cutting concerns: multimodal message assembly, image-cap preflight,
rate-limit retries with backoff, per-(model, stage) token accounting, and
JSONL transcripts for audit and replay.
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
from pathlib import Path

from ..model import TokenUsage

logger = logging.getLogger(__name__)

RETRY_BACKOFF_SECONDS = (1.0, 4.0, 16.0)
DEFAULT_MAX_ATTEMPTS = 3
GPT5_IMAGE_CAP = 50
DEFAULT_IMAGE_CAP = 30


class GatewayError(Exception):
    pass


class RateLimited(GatewayError):
    pass


class BackendError(GatewayError):
    pass


class ImageCapExceeded(GatewayError):
    pass


class NoJsonFound(GatewayError):
    pass


class ParseError(GatewayError):
    pass


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    mime: str = "image/png"

    def b64(self) -> str:
        return base64.b64encode(self.data).decode("ascii")


@dataclass(frozen=True)
class ChatRequest:
    system: str
    parts: tuple[TextPart | ImagePart, ...]
    model: str
    max_output_tokens: int = 4096
    temperature: float | None = 0.0
    stage: str = ""

    def image_count(self) -> int:
        return sum(1 for p in self.parts if isinstance(p, ImagePart))

    def text_content(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))

    def fingerprint(self) -> str:
        hasher = hashlib.sha256()
        hasher.update(self.system.encode("utf-8"))
        hasher.update(b"\x00" + self.model.encode("utf-8"))
        for part in self.parts:
            if isinstance(part, TextPart):
                hasher.update(b"\x01" + part.text.encode("utf-8"))
            else:
                hasher.update(b"\x02" + hashlib.sha256(part.data).digest())
        return hasher.hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage
    model: str


class Backend(abc.ABC):
    name: str = "backend"
    model: str = ""
    image_cap: int | None = None

    @abc.abstractmethod
    def complete(self, request: ChatRequest) -> ChatResponse:
        ...


def image_cap_for(model: str, configured: int | None = None) -> int:
    if configured is not None:
        return configured
    return GPT5_IMAGE_CAP if "gpt-5" in model.lower() else DEFAULT_IMAGE_CAP


@dataclass
class UsageLedger:
    """Token totals per (model, stage), guarded by a single writer lock."""

    entries: dict[tuple[str, str], TokenUsage] = field(default_factory=dict)
    calls: list[TokenUsage] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, model: str, stage: str, usage: TokenUsage) -> None:
        with self._lock:
            key = (model, stage)
            self.entries[key] = self.entries.get(key, TokenUsage()) + usage
            self.calls.append(usage)

    def total(self) -> TokenUsage:
        out = TokenUsage()
        for usage in self.entries.values():
            out = out + usage
        return out

    def per_call_total(self) -> TokenUsage:
        out = TokenUsage()
        for usage in self.calls:
            out = out + usage
        return out

    def to_dict(self) -> dict:
        return {
            f"{model}/{stage}": usage.to_dict()
            for (model, stage), usage in sorted(self.entries.items())
        }


class Gateway:
    def __init__(
        self,
        backend: Backend,
        *,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff: tuple[float, ...] = RETRY_BACKOFF_SECONDS,
        sleep=time.sleep,
        transcript_path: str | Path | None = None,
        max_concurrency: int = 4,
    ):
        self.backend = backend
        self.ledger = UsageLedger()
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        self._transcript_path = Path(transcript_path) if transcript_path else None
        self._transcript_lock = threading.Lock()
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self.retry_count = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        cap = image_cap_for(request.model, self.backend.image_cap)
        count = request.image_count()
        if count > cap:
            raise ImageCapExceeded(
                f"request carries {count} images, backend cap is {cap}"
            )
        attempt = 0
        while True:
            try:
                with self._semaphore:
                    response = self.backend.complete(request)
                break
            except RateLimited:
                attempt += 1
                if attempt >= self.max_attempts:
                    raise
                delay = self.backoff[min(attempt - 1, len(self.backoff) - 1)]
                self.retry_count += 1
                logger.warning(
                    "rate limited on %s/%s, retry %d in %.0fs",
                    request.model, request.stage, attempt, delay,
                )
                self._sleep(delay)
        self.ledger.record(request.model, request.stage, response.usage)
        self._write_transcript(request, response)
        return response

    def _write_transcript(self, request: ChatRequest, response: ChatResponse) -> None:
        if self._transcript_path is None:
            return
        entry = {
            "fingerprint": request.fingerprint(),
            "model": request.model,
            "stage": request.stage,
            "system": request.system,
            "parts": [
                {"text": p.text} if isinstance(p, TextPart) else {"image_sha256": hashlib.sha256(p.data).hexdigest()}
                for p in request.parts
            ],
            "response": response.text,
            "usage": response.usage.to_dict(),
        }
        with self._transcript_lock:
            self._transcript_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self._transcript_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


_FENCE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*\n?(.*?)```", re.DOTALL)


def extract_json(text: str, strict: bool = False):
    """Parse the first top-level JSON value in ``text``.

    Code fences are stripped first. Strict mode rejects trailing
    non-whitespace after the value.
    """
    candidates = [m.group(1) for m in _FENCE.finditer(text)]
    candidates.append(text)
    decoder = json.JSONDecoder()
    for candidate in candidates:
        starts = [i for i in (candidate.find("{"), candidate.find("[")) if i != -1]
        if not starts:
            continue
        start = min(starts)
        try:
            value, end = decoder.raw_decode(candidate, start)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc}") from exc
        if strict and candidate[end:].strip():
            raise ParseError("trailing content after JSON value")
        return value
    raise NoJsonFound("no JSON value found in text")

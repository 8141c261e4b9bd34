"""HTTP chat backends for the three common provider wire formats.

Payload assembly and response parsing are pure functions so they can be
tested without network access; the transport is a thin ``requests`` call.
API keys come from environment variables only.
"""

from __future__ import annotations

import os

import requests

from ..model import TokenUsage
from . import Backend, BackendError, ChatRequest, ChatResponse, ImagePart, RateLimited, TextPart

TIMEOUT_SECONDS = 120


def build_openai_payload(request: ChatRequest) -> dict:
    content = []
    for part in request.parts:
        if isinstance(part, TextPart):
            content.append({"type": "text", "text": part.text})
        else:
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:{part.mime};base64,{part.b64()}"},
                }
            )
    payload = {
        "model": request.model,
        "messages": [
            {"role": "system", "content": request.system},
            {"role": "user", "content": content},
        ],
        "max_tokens": request.max_output_tokens,
    }
    if request.temperature is not None:
        payload["temperature"] = request.temperature
    return payload


def parse_openai_response(obj: dict, model: str) -> ChatResponse:
    try:
        text = obj["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"unexpected completion shape: {exc}") from exc
    usage = obj.get("usage", {})
    return ChatResponse(
        text=text,
        usage=TokenUsage(
            int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))
        ),
        model=model,
    )


def build_anthropic_payload(request: ChatRequest) -> dict:
    content = []
    for part in request.parts:
        if isinstance(part, TextPart):
            content.append({"type": "text", "text": part.text})
        else:
            content.append(
                {
                    "type": "image",
                    "source": {
                        "type": "base64",
                        "media_type": part.mime,
                        "data": part.b64(),
                    },
                }
            )
    payload = {
        "model": request.model,
        "system": request.system,
        "messages": [{"role": "user", "content": content}],
        "max_tokens": request.max_output_tokens,
    }
    if request.temperature is not None:
        payload["temperature"] = request.temperature
    return payload


def parse_anthropic_response(obj: dict, model: str) -> ChatResponse:
    try:
        text = "".join(
            block.get("text", "") for block in obj["content"] if block.get("type") == "text"
        )
    except (KeyError, TypeError) as exc:
        raise BackendError(f"unexpected completion shape: {exc}") from exc
    usage = obj.get("usage", {})
    return ChatResponse(
        text=text,
        usage=TokenUsage(
            int(usage.get("input_tokens", 0)), int(usage.get("output_tokens", 0))
        ),
        model=model,
    )


def build_gemini_payload(request: ChatRequest) -> dict:
    parts = []
    for part in request.parts:
        if isinstance(part, TextPart):
            parts.append({"text": part.text})
        else:
            parts.append(
                {"inline_data": {"mime_type": part.mime, "data": part.b64()}}
            )
    payload: dict = {
        "system_instruction": {"parts": [{"text": request.system}]},
        "contents": [{"role": "user", "parts": parts}],
        "generationConfig": {"maxOutputTokens": request.max_output_tokens},
    }
    if request.temperature is not None:
        payload["generationConfig"]["temperature"] = request.temperature
    return payload


def parse_gemini_response(obj: dict, model: str) -> ChatResponse:
    try:
        parts = obj["candidates"][0]["content"]["parts"]
        text = "".join(p.get("text", "") for p in parts)
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"unexpected completion shape: {exc}") from exc
    usage = obj.get("usageMetadata", {})
    return ChatResponse(
        text=text,
        usage=TokenUsage(
            int(usage.get("promptTokenCount", 0)),
            int(usage.get("candidatesTokenCount", 0)),
        ),
        model=model,
    )


class _HttpBackend(Backend):
    env_key = ""

    def __init__(self, model: str, endpoint: str = "", image_cap: int | None = None):
        self.model = model
        self.endpoint = endpoint or self.default_endpoint()
        self.image_cap = image_cap

    def default_endpoint(self) -> str:
        raise NotImplementedError

    def _api_key(self) -> str:
        key = os.environ.get(self.env_key, "")
        if not key:
            raise BackendError(f"missing {self.env_key} in environment")
        return key

    def _post(self, url: str, payload: dict, headers: dict) -> dict:
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=TIMEOUT_SECONDS)
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimited(f"429 from {self.name}")
        if resp.status_code >= 400:
            raise BackendError(f"{self.name} returned {resp.status_code}: {resp.text[:400]}")
        return resp.json()


class OpenAICompatibleBackend(_HttpBackend):
    name = "openai-compatible"
    env_key = "OPENAI_API_KEY"

    def default_endpoint(self) -> str:
        return "https://api.openai.com/v1/chat/completions"

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        obj = self._post(self.endpoint, build_openai_payload(request), headers)
        return parse_openai_response(obj, request.model)


class AnthropicCompatibleBackend(_HttpBackend):
    name = "anthropic-compatible"
    env_key = "ANTHROPIC_API_KEY"

    def default_endpoint(self) -> str:
        return "https://api.anthropic.com/v1/messages"

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {
            "x-api-key": self._api_key(),
            "anthropic-version": "2023-06-01",
        }
        obj = self._post(self.endpoint, build_anthropic_payload(request), headers)
        return parse_anthropic_response(obj, request.model)


class GeminiCompatibleBackend(_HttpBackend):
    name = "gemini-compatible"
    env_key = "GEMINI_API_KEY"

    def default_endpoint(self) -> str:
        return "https://generativelanguage.googleapis.com/v1beta/models"

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.endpoint}/{request.model}:generateContent?key={self._api_key()}"
        obj = self._post(url, build_gemini_payload(request), {})
        return parse_gemini_response(obj, request.model)


def get_backend(spec: str, model: str = "", image_cap: int | None = None) -> Backend:
    """Backend from a selector string: ``mock:<script.jsonl>``,
    ``openai-compatible``, ``anthropic-compatible`` or ``gemini-compatible``."""
    if spec.startswith("mock:"):
        from .mock import ScriptedBackend

        return ScriptedBackend.from_jsonl(
            spec[len("mock:"):], model=model or "mock-model", image_cap=image_cap
        )
    table = {
        "openai-compatible": OpenAICompatibleBackend,
        "anthropic-compatible": AnthropicCompatibleBackend,
        "gemini-compatible": GeminiCompatibleBackend,
    }
    if spec not in table:
        raise ValueError(f"unknown backend {spec!r}")
    return table[spec](model=model, image_cap=image_cap)

"""Scripted backend for tests and deterministic pipeline runs.

Replies are a pure function of the request: rules match on an exact
fingerprint, a substring of the request text, or the pipeline stage, and
the first matching rule answers. A rule may additionally carry
``fail_times`` to inject rate-limit errors before its reply, which is the
only stateful behavior and exists for retry tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..model import TokenUsage
from . import Backend, BackendError, ChatRequest, ChatResponse, RateLimited


@dataclass
class ScriptRule:
    reply: str
    fingerprint: str = ""
    contains: str = ""
    stage: str = ""
    input_tokens: int = 100
    output_tokens: int = 50
    fail_times: int = 0
    _failures_left: int = field(init=False, default=0)
    hits: int = 0

    def __post_init__(self) -> None:
        self._failures_left = self.fail_times

    def matches(self, request: ChatRequest) -> bool:
        if self.fingerprint:
            return request.fingerprint() == self.fingerprint
        if self.contains:
            if self.contains not in request.text_content() and self.contains not in request.system:
                return False
        if self.stage and request.stage != self.stage:
            return False
        return bool(self.contains or self.stage)


class ScriptedBackend(Backend):
    name = "mock"

    def __init__(self, rules: list[ScriptRule], model: str = "mock-model",
                 image_cap: int | None = None, default_reply: str | None = None):
        self.rules = rules
        self.model = model
        self.image_cap = image_cap
        self.default_reply = default_reply
        self.call_count = 0
        self.stage_calls: dict[str, int] = {}

    @classmethod
    def from_jsonl(cls, path: str | Path, **kwargs) -> "ScriptedBackend":
        rules = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            obj = json.loads(line)
            rules.append(
                ScriptRule(
                    reply=obj["reply"],
                    fingerprint=obj.get("fingerprint", ""),
                    contains=obj.get("contains", ""),
                    stage=obj.get("stage", ""),
                    input_tokens=obj.get("input_tokens", 100),
                    output_tokens=obj.get("output_tokens", 50),
                    fail_times=obj.get("fail_times", 0),
                )
            )
        return cls(rules, **kwargs)

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.call_count += 1
        self.stage_calls[request.stage] = self.stage_calls.get(request.stage, 0) + 1
        for rule in self.rules:
            if rule.matches(request):
                if rule._failures_left > 0:
                    rule._failures_left -= 1
                    raise RateLimited("scripted 429")
                rule.hits += 1
                return ChatResponse(
                    text=rule.reply,
                    usage=TokenUsage(rule.input_tokens, rule.output_tokens),
                    model=self.model,
                )
        if self.default_reply is not None:
            return ChatResponse(
                text=self.default_reply, usage=TokenUsage(10, 10), model=self.model
            )
        raise BackendError(
            f"no scripted reply for stage={request.stage!r} "
            f"fingerprint={request.fingerprint()[:12]}"
        )

"""Run configuration: one human-editable YAML file with a section per
pipeline module. Environment variables override secrets only (API keys
and the renderer endpoint); everything else lives in the file so a run
manifest fully reproduces a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .crawler import DEFAULT_BLACKLIST, DEFAULT_SUFFIXES


class ConfigError(ValueError):
    """Invalid configuration; message carries the offending field path."""


@dataclass
class CrawlerConfig:
    keywords_file: str = ""
    urls: list[str] = field(default_factory=list)
    suffixes: list[str] = field(default_factory=lambda: list(DEFAULT_SUFFIXES))
    extra_blacklist: list[str] = field(default_factory=list)
    max_pages: int = 10
    min_delay_ms: int = 1000
    max_per_host: int = 1
    render: str = "auto"
    max_bytes: int = 10 * 1024 * 1024
    search_provider: str = "jsonl"  # jsonl | http
    search_script: str = ""
    search_endpoint: str = ""

    def blacklist(self) -> tuple[str, ...]:
        return tuple(DEFAULT_BLACKLIST) + tuple(self.extra_blacklist)


@dataclass
class RendererConfig:
    backend: str = "mock"  # mock | real
    viewport_width: int = 1280
    viewport_height: int = 800
    device_scale: float = 1.0
    max_scroll_steps: int = 50


@dataclass
class ProcessorConfig:
    theta_min: float = 50.0
    include_nav: bool = True
    adjacency_merge: bool = False


@dataclass
class LlmConfig:
    backend: str = "mock:"
    model: str = "mock-model"
    image_cap: int | None = None
    max_attempts: int = 3


@dataclass
class EvaluationConfig:
    tau_select: int = 4
    strict_trigger: bool = False
    mode: str = "structured"  # structured | non_structured
    one_turn: bool = True


@dataclass
class AnalyticsConfig:
    low_score_max: int = 3  # the "<4" reading; 4 restores "<=4"


@dataclass
class RunConfig:
    out_dir: str = "runs/out"
    jobs: int = 1
    seed: int = 0


@dataclass
class Config:
    crawler: CrawlerConfig = field(default_factory=CrawlerConfig)
    renderer: RendererConfig = field(default_factory=RendererConfig)
    processor: ProcessorConfig = field(default_factory=ProcessorConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


_SECTIONS = {
    "crawler": CrawlerConfig,
    "renderer": RendererConfig,
    "processor": ProcessorConfig,
    "llm": LlmConfig,
    "evaluation": EvaluationConfig,
    "analytics": AnalyticsConfig,
    "run": RunConfig,
}


def _build_section(name: str, cls, raw: dict):
    instance = cls()
    for key, value in raw.items():
        if not hasattr(instance, key):
            raise ConfigError(f"{name}.{key}: unknown field")
        setattr(instance, key, value)
    return instance


def _check(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def validate_config(path: str | Path | None) -> Config:
    """Load and normalize a config file; an empty or missing-path config
    yields all defaults. Raises ConfigError with the field path."""
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a mapping")
        raw = loaded

    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")

    config = Config()
    for name, cls in _SECTIONS.items():
        section_raw = raw.get(name, {})
        if section_raw is None:
            section_raw = {}
        if not isinstance(section_raw, dict):
            raise ConfigError(f"{name}: must be a mapping")
        setattr(config, name, _build_section(name, cls, section_raw))

    _check(config.processor.theta_min >= 0, "processor.theta_min", "must be >= 0")
    _check(config.evaluation.tau_select in (1, 2, 3, 4, 5), "evaluation.tau_select", "must be 1..5")
    _check(
        config.evaluation.mode in ("structured", "non_structured"),
        "evaluation.mode",
        "must be structured or non_structured",
    )
    _check(config.analytics.low_score_max in (1, 2, 3, 4), "analytics.low_score_max", "must be 1..4")
    _check(config.renderer.viewport_width > 0, "renderer.viewport_width", "must be > 0")
    _check(config.renderer.viewport_height > 0, "renderer.viewport_height", "must be > 0")
    _check(config.renderer.backend in ("mock", "real"), "renderer.backend", "must be mock or real")
    _check(config.crawler.min_delay_ms >= 0, "crawler.min_delay_ms", "must be >= 0")
    _check(config.crawler.max_per_host >= 1, "crawler.max_per_host", "must be >= 1")
    _check(
        config.crawler.render in ("auto", "always", "never"),
        "crawler.render",
        "must be auto, always or never",
    )
    _check(config.run.jobs >= 1, "run.jobs", "must be >= 1")
    return config


def load_keywords(path: str | Path | None = None) -> list[str]:
    """Keywords, one per line, '#' comments ignored. Without a path the
    bundled domain keyword list is used."""
    if path is None:
        text = resources.files("pagebench.data").joinpath("keywords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out

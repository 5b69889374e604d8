"""Global configuration: one JSON file, every field overridable by flag."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .analytics import TierFractions
from .provider import ProviderConfig
from .runner import RunnerConfig

CONFIG_ENV_VAR = "PAPERLENS_CONFIG"


class ConfigError(Exception):
    """Raised for unreadable or malformed config files."""


@dataclass(frozen=True)
class GlobalConfig:
    """Everything the CLI needs to wire the pipeline together."""

    provider: ProviderConfig = ProviderConfig()
    runner: RunnerConfig = RunnerConfig()
    prompts_dir: str | None = None
    threshold: float = 0.85
    tiers: TierFractions = TierFractions()


def _build(cls, raw: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown option(s) {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path | None = None) -> GlobalConfig:
    """Load configuration from a JSON file.

    Falls back to the PAPERLENS_CONFIG environment variable, then to
    defaults when no file is named. Missing sections take their defaults.
    """
    if path is None:
        env = os.environ.get(CONFIG_ENV_VAR)
        if not env:
            return GlobalConfig()
        path = env
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    known = {"provider", "runner", "prompts_dir", "threshold", "tiers"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")

    provider = _build(ProviderConfig, raw.get("provider", {}), f"{path}: provider")
    runner = _build(RunnerConfig, raw.get("runner", {}), f"{path}: runner")
    tiers = _build(TierFractions, raw.get("tiers", {}), f"{path}: tiers")
    return GlobalConfig(
        provider=provider,
        runner=runner,
        prompts_dir=raw.get("prompts_dir"),
        threshold=float(raw.get("threshold", 0.85)),
        tiers=tiers,
    )


def apply_overrides(config: GlobalConfig, **overrides) -> GlobalConfig:
    """Apply non-None flag overrides onto a loaded config.

    Provider and runner fields are addressed by their own names; unknown
    names raise to catch wiring mistakes early.
    """
    provider_fields = {f.name for f in fields(ProviderConfig)}
    runner_fields = {f.name for f in fields(RunnerConfig)}
    provider_kwargs = {}
    runner_kwargs = {}
    top_kwargs = {}
    for name, value in overrides.items():
        if value is None:
            continue
        if name in provider_fields:
            provider_kwargs[name] = value
        elif name in runner_fields:
            runner_kwargs[name] = value
        elif name in ("prompts_dir", "threshold", "tiers"):
            top_kwargs[name] = value
        else:
            raise ConfigError(f"unknown config override {name!r}")
    if provider_kwargs:
        config = replace(config, provider=replace(config.provider, **provider_kwargs))
    if runner_kwargs:
        config = replace(config, runner=replace(config.runner, **runner_kwargs))
    if top_kwargs:
        config = replace(config, **top_kwargs)
    return config

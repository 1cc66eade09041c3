"""Run configuration for ssflab commands.

A run is configured from an optional plain-text ``key=value`` file, with
command-line flags taking precedence.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

SUITES = ("identities", "symbols", "ssf")
PROBES = ("main", "indbase", "indstep", "kpss")


class ConfigurationError(Exception):
    """Raised when configuration is missing or invalid."""


@dataclass(frozen=True)
class RunConfig:
    dim: int = 8
    dims: tuple[int, ...] = (4, 8, 16)
    n: int = 2
    alpha: float = 5.0
    K: int = 16
    trials: int = 20
    seed: int = 0
    suite: str = "identities"
    input: str | None = None
    out: str | None = None
    tolerance: float | None = None
    check_degree: int | None = None
    samples: int = 20
    probe: str = "main"
    m: int = 1
    s: float = 1.0
    symbol: str = "divdiff"
    region: str = "full"
    workers: int = 1

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["dims"] = list(self.dims)
        return data

    def provenance(self) -> dict[str, Any]:
        """Settings that determine results; excludes worker count and output path."""
        data = self.as_dict()
        del data["workers"], data["out"]
        return data


_FIELDS = {f.name: f for f in fields(RunConfig)}
_INT_FIELDS = {"dim", "n", "K", "trials", "seed", "check_degree", "samples", "m", "workers"}
_FLOAT_FIELDS = {"alpha", "tolerance", "s"}


def _normalize_key(key: str) -> str:
    key = key.strip().replace("-", "_")
    return "K" if key.lower() == "k" else key


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key=value`` lines; ``#`` starts a comment.

    Raises:
        ConfigurationError: On unreadable files, malformed lines, unknown or
            duplicate keys.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e.strerror or e}") from e
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key = _normalize_key(key)
        if key not in _FIELDS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    try:
        if key == "dims":
            if isinstance(value, str):
                items = [v for v in value.replace(" ", "").split(",") if v]
            else:
                items = list(value)
            return tuple(int(v) for v in items)
        if key in _INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if key in _FLOAT_FIELDS:
            return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid value for {key}: {value!r}") from e
    return str(value)


def _validate(config: RunConfig) -> None:
    positive = {"dim": config.dim, "n": config.n, "K": config.K, "trials": config.trials, "workers": config.workers}
    for key, value in positive.items():
        if value < 1:
            raise ConfigurationError(f"{key} must be >= 1, got {value}")
    if not config.dims or any(d < 1 for d in config.dims):
        raise ConfigurationError(f"dims must be a non-empty list of positive integers, got {list(config.dims)}")
    if config.seed < 0:
        raise ConfigurationError(f"seed must be >= 0, got {config.seed}")
    if config.samples < 0:
        raise ConfigurationError(f"samples must be >= 0, got {config.samples}")
    if config.m < 1:
        raise ConfigurationError(f"m must be >= 1, got {config.m}")
    if config.suite not in SUITES:
        raise ConfigurationError(f"unknown suite {config.suite!r}; choose from {', '.join(SUITES)}")
    if config.probe not in PROBES:
        raise ConfigurationError(f"unknown probe {config.probe!r}; choose from {', '.join(PROBES)}")
    if config.tolerance is not None and not config.tolerance > 0:
        raise ConfigurationError(f"tolerance must be positive, got {config.tolerance}")
    if config.check_degree is not None and config.check_degree < 0:
        raise ConfigurationError(f"check_degree must be >= 0, got {config.check_degree}")
    if not config.alpha >= 1:
        raise ConfigurationError(f"alpha must be >= 1, got {config.alpha}")


def resolve_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge file values and command-line overrides into a validated ``RunConfig``.

    ``None`` overrides are ignored, so unset flags keep the file or default value.

    Raises:
        ConfigurationError: If any value is invalid.
    """
    merged: dict[str, Any] = {}
    if path is not None:
        merged.update(load_config_file(path))
        logger.debug("loaded %d keys from %s", len(merged), path)
    for key, value in (overrides or {}).items():
        key = _normalize_key(key)
        if key not in _FIELDS:
            raise ConfigurationError(f"unknown option {key!r}")
        if value is not None:
            merged[key] = value
    config = replace(RunConfig(), **{k: _coerce(k, v) for k, v in merged.items()})
    _validate(config)
    return config

"""Experiment configuration, canonical serialization and config hashing.

Config files are plain ``key = value`` lines; ``#`` starts a comment.  Keys are
the long CLI option names (dashes or underscores), so every file entry can
be overridden from the command line.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .reservoir import ConfigError, ReservoirConfig

__all__ = [
    "canonical_json",
    "config_hash",
    "ExperimentConfig",
    "parse_config_text",
    "read_config_file",
    "write_config_file",
]


def _canon(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return int(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite values cannot be serialized canonically")
        return float(obj)
    if hasattr(obj, "item"):  # numpy scalar
        return _canon(obj.item())
    if hasattr(obj, "to_dict"):
        return _canon(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    """Sorted keys, no whitespace, shortest round-trip float repr."""
    return json.dumps(_canon(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved parameters of one CLI run.

    ``outputs`` holds file destinations; it is serialized but left out of the
    hash because it does not change results.
    """

    command: str
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)
    seeds: tuple[int, ...] = (0,)
    protocol: dict = field(default_factory=dict)
    ridge_lambda: float | None = None
    options: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def semantic_dict(self) -> dict:
        return {
            "command": self.command,
            "reservoir": self.reservoir.to_dict(),
            "seeds": list(self.seeds),
            "protocol": dict(self.protocol),
            "ridge_lambda": self.ridge_lambda,
            "options": dict(self.options),
        }

    def to_dict(self) -> dict:
        d = self.semantic_dict()
        d["outputs"] = dict(self.outputs)
        return d

    @property
    def config_hash(self) -> str:
        return config_hash(self.semantic_dict())

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                command=d["command"],
                reservoir=ReservoirConfig.from_dict(d.get("reservoir", {})),
                seeds=tuple(int(s) for s in d.get("seeds", (0,))),
                protocol=dict(d.get("protocol", {})),
                ridge_lambda=d.get("ridge_lambda"),
                options=dict(d.get("options", {})),
                outputs=dict(d.get("outputs", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines to a dict with underscore keys; values stay strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def read_config_file(path) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    return parse_config_text(text, str(p))


def write_config_file(path, values: dict[str, Any]) -> None:
    lines = [f"{k} = {v}" for k, v in sorted(values.items()) if v is not None]
    Path(path).write_text("\n".join(lines) + "\n")

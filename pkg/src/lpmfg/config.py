"""Run configuration: an INI document with ``[run]``, ``[grid]``, ``[mfg]``
and ``[output]`` sections.  Every key is optional.

    [run]
    problem = congestion-mfg      ; registry name or path to a table file

    [grid]
    t_count = 30
    x_count = 30
    a_count = 3

    [mfg]
    damping = 0.5
    tol = 1e-6
    max_iter = 200
    n_starts = 3
    seed = 42

    [output]
    dir = out
    format = csv                  ; csv or json
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from typing import Any, Dict

from .domain import ConfigError

FORMATS = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "stop-now"
    t_count: int = 30
    x_count: int = 30
    a_count: int = 3
    damping: float = 0.5
    tol: float = 1e-6
    max_iter: int = 200
    n_starts: int = 3
    seed: int = 42
    out: str = "out"
    format: str = "csv"

    def __post_init__(self):
        validate(self)

    @property
    def grid(self):
        return (self.t_count, self.x_count, self.a_count)

    def updated(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


# section -> {file key: field name}
LAYOUT: Dict[str, Dict[str, str]] = {
    "run": {"problem": "problem"},
    "grid": {"t_count": "t_count", "x_count": "x_count", "a_count": "a_count"},
    "mfg": {"damping": "damping", "tol": "tol", "max_iter": "max_iter", "n_starts": "n_starts",
            "seed": "seed"},
    "output": {"dir": "out", "format": "format"},
}

_TYPES = {f.name: f.type for f in fields(RunConfig)}


def validate(cfg: RunConfig) -> None:
    def need(ok: bool, key: str, rule: str):
        if not ok:
            raise ConfigError(f"{key}: {rule} (got {getattr(cfg, key)!r})")

    need(cfg.t_count >= 2, "t_count", "must be >= 2")
    need(cfg.x_count >= 3, "x_count", "must be >= 3")
    need(cfg.a_count >= 1, "a_count", "must be >= 1")
    need(0.0 < cfg.damping <= 1.0, "damping", "must lie in (0, 1]")
    need(cfg.tol > 0.0, "tol", "must be > 0")
    need(cfg.max_iter >= 1, "max_iter", "must be >= 1")
    need(cfg.n_starts >= 1, "n_starts", "must be >= 1")
    need(cfg.seed >= 0, "seed", "must be >= 0")
    need(cfg.format in FORMATS, "format", f"must be one of {', '.join(FORMATS)}")
    need(bool(cfg.problem), "problem", "must be non-empty")


def _convert(key: str, raw: str) -> Any:
    kind = _TYPES[key]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None
    return raw.strip()


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in LAYOUT:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in LAYOUT[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            name = LAYOUT[section][key]
            values[name] = _convert(name, raw)
    return RunConfig(**values)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for section, keys in LAYOUT.items():
        lines.append(f"[{section}]")
        for key, name in keys.items():
            v = getattr(cfg, name)
            lines.append(f"{key} = {v!r}" if isinstance(v, float) else f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)

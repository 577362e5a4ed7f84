"""INI-style experiment configuration.

A run config has up to three sections, ``[evolution]``, ``[arena]`` and
``[body]``, whose keys are the fields of the matching dataclasses. A batch
manifest adds a ``[batch]`` section. Every problem is reported as a
``ConfigurationError`` whose message starts with ``section.key``.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .coevolution import EvolutionConfig
from .errors import ConfigurationError
from .novelty import parse_method
from .sim import AgentBodyConfig, ArenaConfig

SECTIONS = {"evolution": EvolutionConfig, "arena": ArenaConfig, "body": AgentBodyConfig}
_NESTED = ("arena", "body")


def _fields(cls) -> dict:
    return {f.name: f for f in dataclasses.fields(cls) if f.name not in _NESTED}


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"{section}.{key}: expected {type(default).__name__}, got {raw!r}") from None
    return raw.strip()


def _build(cls, section: str, values: dict):
    try:
        return cls(**values)
    except ConfigurationError as exc:
        msg = str(exc)
        name = next((k for k in _fields(cls) if msg.startswith(k)), None)
        raise ConfigurationError(f"{section}.{name}: {msg}" if name else f"{section}: {msg}") from None


def _section_values(parser: configparser.ConfigParser, section: str) -> dict:
    cls = SECTIONS[section]
    known = _fields(cls)
    defaults = cls()
    out = {}
    if not parser.has_section(section):
        return out
    for key, raw in parser.items(section):
        if key not in known:
            raise ConfigurationError(f"{section}.{key}: unknown key")
        out[key] = _coerce(section, key, raw, getattr(defaults, key))
    if section == "evolution" and "method" in out:
        try:
            out["method"] = parse_method(out["method"])
        except ConfigurationError as exc:
            raise ConfigurationError(f"evolution.method: {exc}") from None
    return out


def _parser_from(text: str, allowed: set[str]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config: {exc}") from None
    for s in parser.sections():
        if s not in allowed:
            raise ConfigurationError(f"{s}: unknown section")
    return parser


def config_from_parser(parser: configparser.ConfigParser, **overrides) -> EvolutionConfig:
    arena = _build(ArenaConfig, "arena", _section_values(parser, "arena"))
    body = _build(AgentBodyConfig, "body", _section_values(parser, "body"))
    evo = _section_values(parser, "evolution")
    for key, value in overrides.items():
        if value is not None:
            if key == "method":
                try:
                    value = parse_method(value)
                except ConfigurationError as exc:
                    raise ConfigurationError(f"evolution.method: {exc}") from None
            evo[key] = value
    return _build(EvolutionConfig, "evolution", {**evo, "arena": arena, "body": body})


def load_config(path=None, **overrides) -> EvolutionConfig:
    """Read a run config; ``None`` gives the defaults. Non-None keyword
    overrides replace ``[evolution]`` keys."""
    text = Path(path).read_text(encoding="utf-8") if path is not None else ""
    return config_from_parser(_parser_from(text, set(SECTIONS)), **overrides)


def dump_config(config: EvolutionConfig) -> str:
    """Every field with its resolved value, loadable by ``load_config``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["evolution"] = {k: str(v) for k, v in config.scalar_fields().items()}
    parser["arena"] = {f.name: str(getattr(config.arena, f.name)) for f in dataclasses.fields(ArenaConfig)}
    parser["body"] = {f.name: str(getattr(config.body, f.name)) for f in dataclasses.fields(AgentBodyConfig)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


@dataclass(frozen=True)
class ExperimentManifest:
    methods: tuple[str, ...] = ("Fit", "NSBoth")
    runs: int = 10
    base_seed: int = 0
    out: Path = Path("runs")
    base: EvolutionConfig = field(default_factory=EvolutionConfig)

    def run_config(self, method: str, index: int) -> EvolutionConfig:
        return dataclasses.replace(self.base, method=method, master_seed=self.base_seed + index)

    def run_dir(self, method: str, index: int) -> Path:
        return self.out / method / f"run_{index}"


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    parser = _parser_from(path.read_text(encoding="utf-8"), set(SECTIONS) | {"batch"})
    batch = dict(parser.items("batch")) if parser.has_section("batch") else {}
    unknown = set(batch) - {"methods", "runs", "base_seed", "out"}
    if unknown:
        raise ConfigurationError(f"batch.{sorted(unknown)[0]}: unknown key")
    methods = ExperimentManifest.methods
    if "methods" in batch:
        try:
            methods = tuple(parse_method(m) for m in batch["methods"].replace(",", " ").split())
        except ConfigurationError as exc:
            raise ConfigurationError(f"batch.methods: {exc}") from None
        if not methods:
            raise ConfigurationError("batch.methods: at least one method is required")
    runs = _coerce("batch", "runs", batch.get("runs", "10"), 0)
    base_seed = _coerce("batch", "base_seed", batch.get("base_seed", "0"), 0)
    if runs < 1:
        raise ConfigurationError("batch.runs: must be >= 1")
    if base_seed < 0:
        raise ConfigurationError("batch.base_seed: must be non-negative")
    out = Path(batch.get("out", "runs"))
    if not out.is_absolute():
        out = path.parent / out
    return ExperimentManifest(methods, runs, base_seed, out, config_from_parser(parser))

"""Run configuration: ``[section]`` headers, ``key = value`` lines, ``#`` comments.

Sections: ``run`` (seed), ``data`` (generation), ``pae`` / ``dae`` (training),
``eval`` and ``paths``. Unknown sections or keys are errors. The single
``[run] seed`` feeds every stage.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .datagen import GenerationConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class EvalConfig:
    seg_frame: int = 512
    figures: bool = True


PATH_KEYS = ("out", "manifest", "pae", "dae")


@dataclass
class RunConfig:
    seed: int = 1234
    data: GenerationConfig = field(default_factory=GenerationConfig)
    pae: TrainConfig = field(default_factory=TrainConfig)
    dae: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> RunConfig:
        return replace(self, seed=seed, data=replace(self.data, seed=seed),
                       pae=replace(self.pae, seed=seed), dae=replace(self.dae, seed=seed))

    def resolved(self) -> dict:
        return {"seed": self.seed, "data": asdict(self.data), "pae": asdict(self.pae),
                "dae": asdict(self.dae), "eval": asdict(self.eval), "paths": dict(self.paths)}

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def to_text(self) -> str:
        lines = [f"# resolved configuration, hash {self.digest()}", "[run]", f"seed = {self.seed}"]
        for section in ("data", "pae", "dae", "eval"):
            lines.append(f"[{section}]")
            for f in fields(getattr(self, section)):
                if f.name == "seed":
                    continue
                lines.append(f"{f.name} = {_format(getattr(getattr(self, section), f.name))}")
        if self.paths:
            lines.append("[paths]")
            lines += [f"{k} = {v}" for k, v in self.paths.items()]
        return "\n".join(lines) + "\n"


def _format(v):
    if isinstance(v, (tuple, list)):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _convert(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from exc


def _apply(obj, values: dict, section: str, source: str):
    known = {f.name: getattr(obj, f.name) for f in fields(obj)}
    updates = {}
    for key, raw in values.items():
        where = f"{source} [{section}] {key}"
        if key == "seed":
            raise ConfigError(f"{where}: set the seed once under [run]")
        if key not in known:
            raise ConfigError(f"{where}: unknown key (expected one of {sorted(k for k in known if k != 'seed')})")
        updates[key] = _convert(raw, known[key], where)
    try:
        return replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source} [{section}]: {exc}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#",), inline_comment_prefixes=None,
                                       strict=True, empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = RunConfig()
    allowed = {"run", "data", "pae", "dae", "eval", "paths"}
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"{source}: unknown section [{section}] (expected {sorted(allowed)})")
    seed = cfg.seed
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key != "seed":
                raise ConfigError(f"{source} [run] {key}: unknown key (expected seed)")
            seed = _convert(raw, 0, f"{source} [run] seed")
    for name in ("data", "pae", "dae", "eval"):
        if parser.has_section(name):
            setattr(cfg, name, _apply(getattr(cfg, name), dict(parser.items(name)), name, source))
    if parser.has_section("paths"):
        for key, raw in parser.items("paths"):
            if key not in PATH_KEYS:
                raise ConfigError(f"{source} [paths] {key}: unknown key (expected one of {list(PATH_KEYS)})")
            cfg.paths[key] = raw.strip()
    return cfg.with_seed(seed)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().with_seed(RunConfig.seed)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))

"""Run configuration from INI-style files.

Sections and keys (all optional)::

    [model]     K, targets (comma list), hidden (markov | semi-markov),
                m (two integers), fixed_n (two numbers)
    [em]        any EmSettings field
    [run]       seed, output
    [scenario]  scenario (1 | 2), map_extent, target_position,
                start_region, stop_radius, max_steps
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from typing import Optional

from .em import EmSettings
from .model import ModelSpec
from .simulate import ScenarioConfig, scenario_params


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


@dataclass
class RunConfig:
    K: int = 2
    targets: Optional[tuple] = None
    hidden: str = "markov"
    m: tuple = (30, 30)
    fixed_n: Optional[tuple] = None
    em: EmSettings = field(default_factory=EmSettings)
    seed: Optional[int] = None
    output: str = "."
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def spec(self, p: int) -> ModelSpec:
        return ModelSpec(K=self.K, p=p, hidden=self.hidden, m=tuple(self.m), fixed_n=self.fixed_n)

    def em_settings(self) -> EmSettings:
        if self.seed is None or self.em.seed is not None:
            return self.em
        return EmSettings(**{**self.em.__dict__, "seed": self.seed})


def load_config(path=None, text: Optional[str] = None) -> RunConfig:
    """Parse a config file (or ``text``); missing keys keep their defaults."""
    cp = configparser.ConfigParser()
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path) as fh:
                cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    known = {"model", "em", "run", "scenario"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = RunConfig()
    try:
        if cp.has_section("model"):
            s = cp["model"]
            _check_keys(s, {"k", "targets", "hidden", "m", "fixed_n"}, "model")
            cfg.K = s.getint("K", cfg.K)
            if "targets" in s:
                cfg.targets = tuple(t.strip() for t in s["targets"].split(",") if t.strip())
            cfg.hidden = s.get("hidden", cfg.hidden).strip()
            if "m" in s:
                cfg.m = tuple(int(v) for v in _floats(s["m"]))
            if "fixed_n" in s:
                cfg.fixed_n = _floats(s["fixed_n"])
        if cp.has_section("em"):
            s = cp["em"]
            types = {f.name: f.type for f in fields(EmSettings)}
            _check_keys(s, set(types), "em")
            values = {}
            for key in s:
                raw = s[key].strip()
                if key == "seed":
                    values[key] = None if raw.lower() in ("", "none") else int(raw)
                elif key in ("n_starts", "short_run_max_iters", "long_run_max_iters"):
                    values[key] = int(raw)
                else:
                    values[key] = float(raw)
            cfg.em = EmSettings(**values)
        if cp.has_section("run"):
            s = cp["run"]
            _check_keys(s, {"seed", "output"}, "run")
            if "seed" in s:
                cfg.seed = int(s["seed"])
            cfg.output = s.get("output", cfg.output)
        if cp.has_section("scenario"):
            s = cp["scenario"]
            _check_keys(s, {"scenario", "map_extent", "target_position", "start_region", "stop_radius", "max_steps"}, "scenario")
            kw = {"params": scenario_params(s.getint("scenario", 1))}
            for key in ("map_extent", "target_position", "start_region"):
                if key in s:
                    kw[key] = _floats(s[key])
            if "stop_radius" in s:
                kw["stop_radius"] = s.getfloat("stop_radius")
            if "max_steps" in s:
                kw["max_steps"] = s.getint("max_steps")
            cfg.scenario = ScenarioConfig(**kw)
        problems = ModelSpec(K=cfg.K, hidden=cfg.hidden, m=tuple(cfg.m), fixed_n=cfg.fixed_n).problems()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def _check_keys(section, allowed, name):
    extra = set(section.keys()) - {a.lower() for a in allowed}
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")

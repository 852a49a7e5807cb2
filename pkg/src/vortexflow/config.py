"""Flat ``key = value`` experiment configuration.

Keys are dotted (``solver.sigma``); lines starting with ``#`` or ``;`` are
comments. Unknown keys are rejected. :data:`SCHEMA` lists every key with its
type and default.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from importlib import resources


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


def _float(raw: str) -> float:
    s = raw.strip().lower().replace(" ", "")
    if s.endswith("pi"):
        head = s[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(s)


def _bool(raw: str) -> bool:
    s = raw.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(_float(v) for v in raw.split(",") if v.strip())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.split(",") if v.strip())


def _modes(raw: str) -> tuple[tuple[int, ...], ...]:
    """``"1,0; 1,2"`` -> ``((1, 0), (1, 2))``."""
    return tuple(_ints(part) for part in raw.split(";") if part.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        v = raw.strip()
        if v not in options:
            raise ValueError(f"{v!r} not in {options}")
        return v

    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    positive: bool = False
    help: str = ""


PROBLEMS = ("det2d", "det3d", "stokes", "snse", "fk-point", "mc-fourier")

SCHEMA: dict[str, Key] = {
    "problem": Key(_choice(*PROBLEMS), "det2d", help="experiment family"),
    "seed": Key(int, 0, help="master seed"),
    "grid.dim": Key(int, 2, help="2 or 3"),
    "grid.K": Key(int, 32, True, "modes per axis (even)"),
    "grid.L": Key(_float, 2 * math.pi, True, "period; accepts e.g. 2pi"),
    "solver.sigma": Key(_float, 0.5, True, "noise/viscosity parameter, nu = sigma^2/2"),
    "solver.T": Key(_float, 1.0, True, "horizon"),
    "solver.N": Key(int, 16, True, "outer steps"),
    "solver.M": Key(int, 0, help="inner substeps, 0 = automatic"),
    "solver.dealias": Key(_bool, True, help="2/3-rule truncation"),
    "initial.kind": Key(_choice("taylor-green", "perturbed-taylor-green", "random", "cosine"), "taylor-green"),
    "initial.amplitude": Key(_float, 1.0, help="overall scale of the initial vorticity"),
    "initial.epsilon": Key(_float, 0.2, help="relative size of the perturbation"),
    "initial.band": Key(int, 3, True, "max |n_j| of random parts"),
    "initial.seed": Key(int, 0, help="seed of random initial data"),
    "forcing.kind": Key(_choice("none", "constant", "oscillating"), "none"),
    "forcing.amplitude": Key(_float, 1.0),
    "forcing.frequency": Key(_float, 1.0, help="angular frequency of the oscillating source"),
    "forcing.band": Key(int, 2, True),
    "forcing.seed": Key(int, 1),
    "noise.modes": Key(_modes, (), help="semicolon-separated wavevectors"),
    "noise.amplitudes": Key(_floats, (), help="one per mode, or a single value"),
    "noise.q": Key(int, -1, help="optional consistency check on the mode count"),
    "study.step_counts": Key(_ints, (8, 16, 32, 64)),
    "study.h_list": Key(_floats, (0.1, 0.05, 0.025, 0.0125)),
    "study.ensemble": Key(int, 64, True),
    "study.oracle": Key(_choice("taylor-green", "reference"), "reference"),
    "study.reference_steps": Key(int, 256, True),
    "study.sub_increments": Key(int, 16, True),
    "study.window": Key(_floats, ()),
    "study.mean_window": Key(_floats, (1.7, 2.3)),
    "fk.point": Key(_floats, (1.0, 2.0)),
    "fk.t": Key(_float, 0.0),
    "fk.samples": Key(int, 100000, True),
    "fk.h_sde": Key(_float, 1.0 / 256, True),
    "fk.representation": Key(_choice("driftless", "plain"), "driftless"),
    "fk.compare": Key(_choice("driftless", "plain", "none"), "none", help="second representation for invariance"),
    "fk.increments": Key(_choice("gaussian", "two-point"), "gaussian"),
    "mc.outer_samples": Key(int, 20000, True),
    "mc.inner_samples": Key(int, 0, help="0 evaluates the field exactly"),
    "mc.modes": Key(_modes, ((1, 0), (-1, 0), (0, 1), (1, 1), (2, 0))),
    "monitor.p": Key(int, 1, True),
    "monitor.betas": Key(_floats, (0.001, 0.01, 0.1)),
    "monitor.step_counts": Key(_ints, (16, 32)),
    "output.format": Key(_choice("csv", "json"), "csv"),
    "output.dir": Key(str, "."),
}


class ExperimentConfig(dict):
    """Validated flat configuration; missing keys take schema defaults."""

    def __getattr__(self, name):  # convenience: cfg.problem
        try:
            return self[name]
        except KeyError as exc:
            raise AttributeError(name) from exc


def parse_text(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[root]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    raw = dict(cp["root"])
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    out = ExperimentConfig({k: v.default for k, v in SCHEMA.items()})
    for key, value in raw.items():
        spec = SCHEMA[key]
        try:
            parsed = spec.parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}: {key}: {exc}") from exc
        if spec.positive and not parsed > 0:
            raise ConfigError(f"{source}: {key} must be positive, got {parsed}")
        out[key] = parsed
    validate(out, source)
    return out


def validate(cfg: ExperimentConfig, source: str = "<config>") -> None:
    if cfg["grid.dim"] not in (2, 3):
        raise ConfigError(f"{source}: grid.dim must be 2 or 3")
    if cfg["grid.K"] < 4 or cfg["grid.K"] % 2:
        raise ConfigError(f"{source}: grid.K must be an even integer >= 4")
    if cfg["solver.M"] < 0:
        raise ConfigError(f"{source}: solver.M must be >= 0")
    if cfg["problem"] == "det3d" and cfg["grid.dim"] != 3:
        raise ConfigError(f"{source}: det3d needs grid.dim = 3")
    if cfg["problem"] in ("det2d", "snse") and cfg["grid.dim"] != 2:
        raise ConfigError(f"{source}: {cfg['problem']} needs grid.dim = 2")
    modes, amps = cfg["noise.modes"], cfg["noise.amplitudes"]
    if modes and len(amps) not in (1, len(modes)):
        raise ConfigError(f"{source}: noise.amplitudes must have 1 or {len(modes)} entries")
    if cfg["noise.q"] >= 0 and cfg["noise.q"] != len(modes):
        raise ConfigError(f"{source}: noise.q={cfg['noise.q']} but {len(modes)} modes given")
    for n in modes:
        if len(n) != cfg["grid.dim"] or not any(n):
            raise ConfigError(f"{source}: bad noise mode {n}")
    for key in ("study.window", "study.mean_window"):
        if cfg[key] and len(cfg[key]) != 2:
            raise ConfigError(f"{source}: {key} needs two numbers")


def packaged_configs() -> list[str]:
    return sorted(p.name for p in resources.files("vortexflow.configs").iterdir() if p.name.endswith(".cfg"))


def resolve(path: str) -> Path:
    """A filesystem path, or the name of a packaged config."""
    p = Path(path)
    if p.is_file():
        return p
    packaged = resources.files("vortexflow.configs") / p.name
    if packaged.is_file():
        return Path(str(packaged))
    raise ConfigError(f"config file not found: {path}")


def load(path: str) -> ExperimentConfig:
    p = resolve(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_text(text, str(p))

"""Scenario and parameter files.

Both are INI text read with :mod:`configparser`. Scenario files name a
system, a grid, observer gains, initial conditions, an optional event
schedule and optional ``[variants]``; parameter files hold named sets of
scalar constants. Command-line overrides use dotted keys such as
``observer.gamma=1e6`` or ``params.a1=0.3``.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

SYSTEMS = ("academic", "power", "reactor")

# section -> allowed keys (None: free-form keys)
_SCHEMA = {
    "scenario": {"name", "system", "parameters", "parameter_set"},
    "grid": {"t0", "t_final", "h"},
    "observer": {"mode", "lam", "gamma", "mu", "omega_regressor", "rearm"},
    "initial": {"x", "xi", "theta_hat", "delta", "omega", "E", "omega_hat", "y"},
    "power": {"k_omega"},
    "output": {"emit_every", "trace"},
    "events": None,
    "variants": None,
    "params": None,
}

_INITIAL_KEYS = {
    "academic": {"x": 2, "xi": 1, "theta_hat": 1},
    "power": {"delta": None, "omega": None, "E": None, "omega_hat": None, "xi": None, "theta_hat": None},
    "reactor": {"y": 2, "x": 2, "xi": 2, "theta_hat": 2},
}


class ConfigError(ValueError):
    """Invalid scenario or parameter file; the message names the file, line and field."""


@dataclass(frozen=True)
class ParameterFile:
    path: str
    meta: dict
    sets: dict  # set name -> {key: float}

    def get(self, name: str) -> dict:
        try:
            return dict(self.sets[name])
        except KeyError:
            raise ConfigError(f"{self.path}: no parameter set {name!r} (have {sorted(self.sets)})") from None


@dataclass(frozen=True)
class Event:
    name: str
    time: float
    parameter_set: str


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    system: str
    t0: float = 0.0
    t_final: float = 20.0
    h: float = 1e-3
    mode: str = "asymptotic"
    lam: float = 1.0
    gamma: float = 1.0
    mu: float = 0.1
    omega_regressor: str = "psi"
    rearm: bool = False
    initial: dict = field(default_factory=dict)
    parameters: Optional[ParameterFile] = None
    parameter_set: Optional[str] = None
    param_overrides: dict = field(default_factory=dict)
    k_omega: Optional[tuple] = None
    events: tuple = ()
    emit_every: int = 1
    trace: Optional[str] = None
    variant: Optional[str] = None

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; expected one of {SYSTEMS}")
        if not self.h > 0:
            raise ConfigError(f"grid.h must be positive, got {self.h}")
        if not self.t_final >= self.t0:
            raise ConfigError(f"grid.t_final ({self.t_final}) precedes grid.t0 ({self.t0})")
        if self.mode not in ("asymptotic", "fct", "olo"):
            raise ConfigError(f"observer.mode must be asymptotic, fct or olo, got {self.mode!r}")
        if self.mode == "olo":
            object.__setattr__(self, "gamma", 0.0)
        elif not self.gamma > 0:
            raise ConfigError(f"observer.gamma must be positive, got {self.gamma}")
        if not self.lam > 0:
            raise ConfigError(f"observer.lam must be positive, got {self.lam}")
        if not 0.0 < self.mu < 1.0:
            raise ConfigError(f"observer.mu must lie in (0, 1), got {self.mu}")
        if self.omega_regressor not in ("psi", "phi"):
            raise ConfigError(f"observer.omega_regressor must be psi or phi, got {self.omega_regressor!r}")
        if self.emit_every < 1:
            raise ConfigError(f"output.emit_every must be >= 1, got {self.emit_every}")
        for ev in self.events:
            if not self.t0 < ev.time < self.t_final:
                raise ConfigError(f"event {ev.name!r} at t={ev.time} is not strictly inside "
                                  f"({self.t0}, {self.t_final})")
            if self.parameters is None:
                raise ConfigError(f"event {ev.name!r} needs a parameter file to swap sets")
            self.parameters.get(ev.parameter_set)
        if self.system != "academic" and self.parameters is None:
            raise ConfigError(f"system {self.system!r} needs scenario.parameters")
        expected = _INITIAL_KEYS[self.system]
        missing = sorted(set(expected) - set(self.initial))
        extra = sorted(set(self.initial) - set(expected))
        if missing or extra:
            raise ConfigError(f"[initial] for {self.system}: missing {missing}, unexpected {extra}")
        for key, size in expected.items():
            if size is not None and len(self.initial[key]) != size:
                raise ConfigError(f"initial.{key} needs {size} component(s), got {len(self.initial[key])}")

    @property
    def label(self) -> str:
        return self.name if self.variant is None else f"{self.name}-{self.variant}"

    @property
    def n_steps(self) -> int:
        return int(round((self.t_final - self.t0) / self.h))

    @property
    def step(self) -> float:
        """Step that lands exactly on ``t_final``; equals ``h`` when ``h`` divides the span."""
        return (self.t_final - self.t0) / self.n_steps if self.n_steps else self.h

    def base_parameters(self) -> dict:
        table = self.parameters.get(self.parameter_set)
        table.update(self.param_overrides)
        return table


# -- parsing ------------------------------------------------------------------

def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    p.optionxform = str  # parameter keys are case sensitive (B11 vs b1)
    return p


def _read(path: Path) -> tuple[configparser.ConfigParser, str]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    p = _parser()
    try:
        p.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return p, text


def _locate(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return lineno
    return None


class _Reader:
    """Typed access to a parsed file that reports ``file:line section.key`` on failure."""

    def __init__(self, parser, text, path, overridden=()):
        self.p = parser
        self.text = text
        self.path = path
        self.overridden = set(overridden)

    def where(self, section, key) -> str:
        if (section, key) in self.overridden:
            return f"override {section}.{key}"
        line = _locate(self.text, section, key)
        return f"{self.path}:{line} {section}.{key}" if line else f"{self.path} {section}.{key}"

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}: {msg}")

    def has(self, section, key) -> bool:
        return self.p.has_option(section, key)

    def get_str(self, section, key, default=None):
        if not self.has(section, key):
            if default is None:
                raise ConfigError(f"{self.path}: missing required field {section}.{key}")
            return default
        return self.p.get(section, key).strip()

    def get_float(self, section, key, default=None):
        if not self.has(section, key):
            if default is None:
                raise ConfigError(f"{self.path}: missing required field {section}.{key}")
            return float(default)
        raw = self.p.get(section, key)
        try:
            v = float(raw)
        except ValueError:
            self.fail(section, key, f"expected a number, got {raw!r}")
        if not math.isfinite(v):
            self.fail(section, key, f"expected a finite number, got {raw!r}")
        return v

    def get_int(self, section, key, default):
        if not self.has(section, key):
            return default
        raw = self.p.get(section, key)
        try:
            return int(raw)
        except ValueError:
            self.fail(section, key, f"expected an integer, got {raw!r}")

    def get_bool(self, section, key, default):
        if not self.has(section, key):
            return default
        try:
            return self.p.getboolean(section, key)
        except ValueError:
            self.fail(section, key, f"expected yes/no, got {self.p.get(section, key)!r}")

    def get_vector(self, section, key):
        raw = self.p.get(section, key)
        try:
            v = tuple(float(s) for s in raw.split(","))
        except ValueError:
            self.fail(section, key, f"expected comma-separated numbers, got {raw!r}")
        if not all(math.isfinite(x) for x in v):
            self.fail(section, key, "non-finite component")
        return v


def _resolve(name, base: Optional[Path] = None, subdir: str = "") -> Path:
    """An existing path (absolute, or relative to cwd or ``base``), else packaged data by name."""
    cand = Path(name)
    for option in (cand, base / cand if base is not None else None):
        if option is not None and option.is_file():
            return option
    stem = cand.name[:-4] if cand.name.endswith(".ini") else cand.name
    packaged = resources.files("gpebo").joinpath("data", *filter(None, [subdir]), f"{stem}.ini")
    if packaged.is_file():
        return Path(str(packaged))
    raise ConfigError(f"cannot find {name!r} as a file or packaged {subdir or 'parameter'} data")


def load_parameter_file(name_or_path: str, base: Optional[Path] = None) -> ParameterFile:
    path = _resolve(name_or_path, base)
    p, text = _read(path)
    r = _Reader(p, text, path)
    sets = {}
    for section in p.sections():
        if section == "meta":
            continue
        sets[section] = {key: r.get_float(section, key) for key in p.options(section)}
    if not sets:
        raise ConfigError(f"{path}: no parameter sets")
    meta = dict(p["meta"]) if p.has_section("meta") else {}
    return ParameterFile(path=str(path), meta=meta, sets=sets)


def parse_override(text: str) -> tuple[str, str, str]:
    """``section.key=value`` -> ``(section, key, value)``."""
    lhs, sep, value = text.partition("=")
    section, dot, key = lhs.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    return section, key.strip(), value.strip()


def _apply_overrides(p: configparser.ConfigParser, overrides: Iterable[str]) -> set:
    done = set()
    for item in overrides:
        section, key, value = parse_override(item)
        if not p.has_section(section):
            p.add_section(section)
        p.set(section, key, value)
        done.add((section, key))
    return done


def _check_schema(r: _Reader) -> None:
    for section in r.p.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{r.path}: unknown section [{section}]")
        allowed = _SCHEMA[section]
        if allowed is None:
            continue
        for key in r.p.options(section):
            if key not in allowed:
                r.fail(section, key, "unknown field")


def _build(r: _Reader, path: Path, variant: Optional[str]) -> ScenarioConfig:
    _check_schema(r)
    system = r.get_str("scenario", "system")
    if system not in SYSTEMS:
        r.fail("scenario", "system", f"expected one of {SYSTEMS}, got {system!r}")
    params = None
    pset = None
    if r.has("scenario", "parameters"):
        params = load_parameter_file(r.get_str("scenario", "parameters"), base=path.parent)
        pset = r.get_str("scenario", "parameter_set", next(iter(params.sets)))
        params.get(pset)
    overrides = {}
    if r.p.has_section("params"):
        if params is None:
            raise ConfigError(f"{r.path}: [params] given but no scenario.parameters file")
        known = set(params.get(pset))
        for key in r.p.options("params"):
            if key not in known:
                r.fail("params", key, f"unknown parameter (have {sorted(known)})")
            overrides[key] = r.get_float("params", key)
    initial = {key: r.get_vector("initial", key) for key in r.p.options("initial")} if r.p.has_section("initial") else {}
    events = []
    if r.p.has_section("events"):
        for key in r.p.options("events"):
            raw = r.p.get("events", key)
            t_raw, _, set_name = raw.partition(",")
            try:
                t_ev = float(t_raw)
            except ValueError:
                r.fail("events", key, f"expected 'time, parameter_set', got {raw!r}")
            if not set_name.strip():
                r.fail("events", key, f"expected 'time, parameter_set', got {raw!r}")
            events.append(Event(name=key, time=t_ev, parameter_set=set_name.strip()))
    events.sort(key=lambda e: e.time)
    k_omega = r.get_vector("power", "k_omega") if r.has("power", "k_omega") else None
    fields = dict(
        name=r.get_str("scenario", "name", path.stem),
        system=system,
        t0=r.get_float("grid", "t0", 0.0),
        t_final=r.get_float("grid", "t_final"),
        h=r.get_float("grid", "h", 1e-3),
        mode=r.get_str("observer", "mode", "asymptotic"),
        lam=r.get_float("observer", "lam", 1.0),
        gamma=r.get_float("observer", "gamma", 1.0),
        mu=r.get_float("observer", "mu", 0.1),
        omega_regressor=r.get_str("observer", "omega_regressor", "psi"),
        rearm=r.get_bool("observer", "rearm", False),
        initial=initial,
        parameters=params,
        parameter_set=pset,
        param_overrides=overrides,
        k_omega=k_omega,
        events=tuple(events),
        emit_every=r.get_int("output", "emit_every", 1),
        trace=r.get_str("output", "trace", "") or None,
        variant=variant,
    )
    try:
        return ScenarioConfig(**fields)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def variant_names(path) -> list[str]:
    p, _ = _read(Path(path))
    return list(p.options("variants")) if p.has_section("variants") else []


def load_config(path, overrides: Iterable[str] = (), variant: Optional[str] = None) -> ScenarioConfig:
    """Parse a scenario file, apply a named variant and then ``overrides``."""
    path = _resolve(path, subdir="scenarios")
    p, text = _read(path)
    overridden = set()
    if variant is not None:
        if not p.has_option("variants", variant):
            raise ConfigError(f"{path}: no variant {variant!r} (have {variant_names(path)})")
        items = [s for s in p.get("variants", variant).split(";") if s.strip()]
        overridden |= _apply_overrides(p, items)
    overridden |= _apply_overrides(p, overrides)
    if p.has_section("variants"):
        p.remove_section("variants")
    return _build(_Reader(p, text, path, overridden), path, variant)


def load_configs(path, overrides: Iterable[str] = ()) -> list[ScenarioConfig]:
    """One config per variant, or the base scenario when there are none."""
    names = variant_names(_resolve(path, subdir="scenarios"))
    if not names:
        return [load_config(path, overrides)]
    return [load_config(path, overrides, v) for v in names]


def packaged_scenarios() -> list[str]:
    root = resources.files("gpebo") / "data" / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def vector(cfg: ScenarioConfig, key: str) -> np.ndarray:
    return np.array(cfg.initial[key], dtype=float)

"""Scenario configuration files and the builders that turn them into model objects.

Files are INI-style with sections ``[domain] [kernel] [time] [initial]
[output]``.  Keys are case-insensitive, unknown sections or keys are
errors, and numbers may be written as fractions (``h = 1/96``).  Vectors
are comma separated; lists of points use ``;`` between points.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import DomainSpec, Quadrature, build_quadrature
from .model import (
    KernelSpec,
    constant_competition,
    gaussian_mutation,
    preset_constant_growth,
    preset_four_point_growth,
    preset_linear_growth,
    preset_radial_growth,
)
from .operators import DEFAULT_NODE_CAP

GROWTH_PRESETS = ("radial", "four_point", "constant", "linear")
MUTATIONS = ("constant", "gaussian", "none")
INITIAL_KINDS = ("constant", "bump", "spikes", "stationary")
SCHEMES = ("semi_implicit", "rk4")


def _number(text: str, key: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _vector(text: str, key: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ConfigError(f"{key}: expected a comma-separated vector")
    return tuple(_number(p, key) for p in parts)


def _points(text: str, key: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_vector(p, key) for p in text.split(";") if p.strip())


def _integer(text: str, key: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _boolean(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _choice(text: str, key: str, options) -> str:
    t = text.strip().lower()
    if t not in options:
        raise ConfigError(f"{key}: {text!r} is not one of {', '.join(options)}")
    return t


# parser for every accepted key, by section
_PARSERS = {
    "domain": {
        "shape": lambda s, k: _choice(s, k, ("interval", "rectangle", "disk")),
        "lo": _vector,
        "hi": _vector,
        "center": _vector,
        "radius": _number,
        "h": _number,
    },
    "kernel": {
        "growth": lambda s, k: _choice(s, k, GROWTH_PRESETS),
        "a0": _number,
        "mutation": lambda s, k: _choice(s, k, MUTATIONS),
        "rho": _number,
        "width": _number,
        "competition": _number,
        "node_cap": _integer,
        "cluster_weights": _vector,
    },
    "time": {
        "dt": _number,
        "t": _number,
        "record_every": _integer,
        "dump_every": _integer,
        "scheme": lambda s, k: _choice(s, k, SCHEMES),
    },
    "initial": {
        "kind": lambda s, k: _choice(s, k, INITIAL_KINDS),
        "value": _number,
        "center": _vector,
        "radius": _number,
        "amplitude": _number,
        "background": _number,
        "spikes": lambda s, k: tuple(int(v) for v in _vector(s, k)),
        "centers": _points,
        "fraction": _number,
    },
    "output": {
        "dir": lambda s, k: s.strip(),
        "pgm": _boolean,
        "q": _vector,
        "epsilon": _number,
        "seed": _integer,
    },
}


@dataclass(frozen=True)
class DomainConfig:
    shape: str = "disk"
    lo: tuple = ()
    hi: tuple = ()
    center: tuple = (0.0, 0.0)
    radius: float = 0.25
    h: float = 1.0 / 64

    def spec(self) -> DomainSpec:
        try:
            if self.shape == "disk":
                return DomainSpec.disk(self.center, self.radius)
            if self.shape == "interval":
                return DomainSpec("interval", lo=tuple(self.lo), hi=tuple(self.hi))
            return DomainSpec.rectangle(self.lo, self.hi)
        except ValueError as exc:
            raise ConfigError(f"[domain]: {exc}") from None


@dataclass(frozen=True)
class KernelConfig:
    growth: str = "radial"
    a0: float = 0.7
    mutation: str = "constant"
    rho: float = 1.0
    width: float = 0.05
    competition: float = 1.0
    node_cap: int = DEFAULT_NODE_CAP
    cluster_weights: Optional[tuple] = None


@dataclass(frozen=True)
class TimeConfig:
    dt: float = 0.01
    T: Optional[float] = None
    record_every: int = 10
    dump_every: int = 0  # 0 keeps only the final dump
    scheme: str = "semi_implicit"


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "constant"
    value: float = 1.0
    center: tuple = (0.0, 0.0)
    radius: float = 0.05
    amplitude: float = 1.0
    background: float = 0.0
    spikes: tuple = (0,)
    centers: Optional[tuple] = None
    fraction: float = 0.5


@dataclass(frozen=True)
class OutputConfig:
    dir: Optional[str] = None
    pgm: bool = False
    q: tuple = (1.0, 2.0)
    epsilon: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        t = self.time
        if not t.dt > 0:
            raise ConfigError(f"[time] dt must be positive, got {t.dt}")
        if t.T is not None and not t.T > 0:
            raise ConfigError(f"[time] T must be positive, got {t.T}")
        if t.record_every < 1:
            raise ConfigError("[time] record_every must be at least 1")
        if t.dump_every < 0:
            raise ConfigError("[time] dump_every must be non-negative")
        if t.dump_every % t.record_every:
            raise ConfigError("[time] dump_every must be a multiple of record_every")
        kc = self.kernel
        if kc.mutation != "none" and not kc.rho > 0:
            raise ConfigError(f"[kernel] rho must be positive, got {kc.rho}")
        if kc.mutation == "gaussian" and not kc.width > 0:
            raise ConfigError(f"[kernel] width must be positive, got {kc.width}")
        if not kc.competition > 0:
            raise ConfigError(f"[kernel] competition must be positive, got {kc.competition}")
        if not self.domain.h > 0:
            raise ConfigError(f"[domain] h must be positive, got {self.domain.h}")
        if any(q < 1 for q in self.output.q):
            raise ConfigError("[output] q values must be >= 1")
        if self.output.seed < 0 or self.output.seed >= 2**64:
            raise ConfigError("[output] seed must fit in an unsigned 64-bit integer")

    @property
    def seed(self) -> int:
        return self.output.seed

    def with_overrides(self, *, seed: Optional[int] = None, out: Optional[str] = None, pgm: Optional[bool] = None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if out is not None:
            changes["dir"] = str(out)
        if pgm:
            changes["pgm"] = True
        if not changes:
            return self
        return dataclasses.replace(self, output=dataclasses.replace(self.output, **changes))

    def echo(self) -> dict:
        """Plain-data view for manifests."""
        return dataclasses.asdict(self)

    # --- builders -------------------------------------------------------------

    def domain_spec(self) -> DomainSpec:
        return self.domain.spec()

    def quadrature(self) -> Quadrature:
        try:
            return build_quadrature(self.domain_spec(), self.domain.h)
        except ValueError as exc:
            raise ConfigError(f"[domain]: {exc}") from None

    def kernel_spec(self) -> KernelSpec:
        kc = self.kernel
        rho = 0.0 if kc.mutation == "none" else kc.rho
        if kc.growth == "radial":
            kernel = preset_radial_growth(rho)
        elif kc.growth == "four_point":
            kernel = preset_four_point_growth(rho)
        elif kc.growth == "constant":
            kernel = preset_constant_growth(kc.a0, rho)
        else:
            kernel = preset_linear_growth(rho)
        if kc.mutation == "gaussian":
            kernel = kernel.replace(m=gaussian_mutation(rho, kc.width), m_const=None, name=kernel.name + "+gaussian")
        if kc.competition != 1.0:
            c = float(kc.competition)
            kernel = kernel.replace(k=constant_competition(c), c0=c, C0=c)
        return kernel

    def initial_datum(self, quad: Quadrature, kernel: KernelSpec, ubar=None) -> np.ndarray:
        """Nodal initial datum; ``kind = stationary`` needs the stationary density ``ubar``."""
        ic = self.initial
        x = quad.nodes
        if ic.kind == "constant":
            u = np.full(quad.n, ic.value)
        elif ic.kind == "stationary":
            if ubar is None:
                raise ConfigError("[initial] kind = stationary needs a regular bounded stationary density")
            u = ic.fraction * np.asarray(ubar, dtype=float)
        else:
            if ic.kind == "bump":
                centers = np.atleast_2d(ic.center)
            elif ic.centers is not None:
                centers = np.atleast_2d(ic.centers)
            else:
                if kernel.maximizers is None:
                    raise ConfigError("[initial] spikes: the growth preset declares no maximizers; give centers")
                sites = np.asarray(kernel.maximizers)
                bad = [i for i in ic.spikes if not 0 <= i < len(sites)]
                if bad:
                    raise ConfigError(f"[initial] spikes: index {bad[0]} out of range 0..{len(sites) - 1}")
                centers = sites[list(ic.spikes)]
            if centers.shape[1] != quad.dim:
                raise ConfigError(f"[initial] centre dimension {centers.shape[1]} does not match the domain")
            if not ic.radius > 0:
                raise ConfigError("[initial] radius must be positive")
            u = np.full(quad.n, ic.background)
            for c in centers:
                r = np.linalg.norm(x - c, axis=1) / ic.radius
                u = u + ic.amplitude * np.clip(1.0 - r**2, 0.0, None) ** 2
        if np.any(u < 0) or not np.all(np.isfinite(u)):
            raise ConfigError("[initial] datum must be finite and non-negative")
        return u


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values: dict[str, dict] = {}
    for section in parser.sections():
        name = section.strip().lower()
        if name not in _PARSERS:
            raise ConfigError(f"unknown section [{section}]")
        table = _PARSERS[name]
        parsed = {}
        for key, raw in parser.items(section):
            if key not in table:
                raise ConfigError(f"unknown key [{name}] {key}")
            parsed[key] = table[key](raw, f"[{name}] {key}")
        values[name] = parsed
    if "t" in values.get("time", {}):
        values["time"]["T"] = values["time"].pop("t")
    try:
        return ScenarioConfig(
            domain=DomainConfig(**values.get("domain", {})),
            kernel=KernelConfig(**values.get("kernel", {})),
            time=TimeConfig(**values.get("time", {})),
            initial=InitialConfig(**values.get("initial", {})),
            output=OutputConfig(**values.get("output", {})),
        )
    except TypeError as exc:  # pragma: no cover - guarded by the key tables
        raise ConfigError(str(exc)) from None

"""Run configuration as flat ``key = value`` text.

Blank lines and ``#`` comments are ignored.  Every key must be one of the
:class:`RunConfig` fields and may appear at most once; anything else is an
error.  Floats are written with ``repr`` so a round trip is lossless.

Schema (defaults in parentheses)::

    nx, ny, nt        grid counts (16, 16, 16); ny must divide nt
    target            flat | sphere | hyperbolic (flat)
    m                 target dimension (1)
    guard_radius      sphere chart guard (4.0)
    margin            hyperbolic guard margin, guard = 1 - margin (0.05)
    p, delta, epsilon exponent, regularization, e0 weight (2.0, 0.01, 1.0)
    dt0               initial step, or "auto" for the explicit bound (auto)
    t_max, dt_min     horizon and smallest step (1.0, 1e-12)
    stop_tol          threshold on the g-weighted L2 norm of the velocity (1e-6)
    max_rejects       consecutive rejections before giving up (60)
    record_every      trace cadence in accepted steps (1)
    snapshot_every    snapshot cadence in accepted steps, 0 = none (0)
    adaptive          halve/double the step (true)
    initial           constant | eigenmode | random (random)
    center            chart point the data is built around, comma separated (origin)
    amplitude         eigenmode amplitude (0.1)
    seed              random seed (0)
    target_energy     Ep of random data (0.01)
    mollify_steps     smoothing steps for random data (200)
    out               output directory (subflow-out)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .grid import GridSpec
from .target import make_chart

TARGETS = ("flat", "sphere", "hyperbolic")
INITIAL_KINDS = ("constant", "eigenmode", "random")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    nx: int = 16
    ny: int = 16
    nt: int = 16
    target: str = "flat"
    m: int = 1
    guard_radius: float = 4.0
    margin: float = 0.05
    p: float = 2.0
    delta: float = 0.01
    epsilon: float = 1.0
    dt0: float | None = None
    t_max: float = 1.0
    dt_min: float = 1e-12
    stop_tol: float = 1e-6
    max_rejects: int = 60
    record_every: int = 1
    snapshot_every: int = 0
    adaptive: bool = True
    initial: str = "random"
    center: tuple[float, ...] | None = None
    amplitude: float = 0.1
    seed: int = 0
    target_energy: float = 0.01
    mollify_steps: int = 200
    out: str = "subflow-out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            GridSpec(self.nx, self.ny, self.nt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.initial not in INITIAL_KINDS:
            raise ConfigError(f"initial must be one of {INITIAL_KINDS}, got {self.initial!r}")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.center is not None and len(self.center) != self.m:
            raise ConfigError(f"center needs {self.m} coordinates")
        if self.snapshot_every < 0 or self.mollify_steps < 0:
            raise ConfigError("cadences and step counts must be nonnegative")
        if self.dt0 is not None and not self.dt0 > 0:
            raise ConfigError("dt0 must be positive or auto")
        if not self.target_energy > 0:
            raise ConfigError("target_energy must be positive")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.nx, self.ny, self.nt)

    def chart(self):
        return make_chart(self.target, self.m, self.guard_radius, self.margin)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _format(name: str, value) -> str:
    if value is None:
        return "origin" if name == "center" else "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse_value(name: str, text: str):
    default = _FIELDS[name].default
    if name == "dt0":
        return None if text == "auto" else float(text)
    if name == "center":
        return None if text in ("", "origin") else tuple(float(v) for v in text.split(","))
    if isinstance(default, bool):
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def serialize(config: RunConfig) -> str:
    lines = [f"{name} = {_format(name, getattr(config, name))}" for name in _FIELDS]
    return "\n".join(lines) + "\n"


def parse(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return RunConfig(**values)


def load(path) -> RunConfig:
    return parse(Path(path).read_text())

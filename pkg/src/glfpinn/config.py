"""Strict JSON run configuration.

Unknown keys anywhere are errors.  ``RunConfig.resolved()`` fills the
per-problem defaults (network width, point counts, GLF ``alpha``) so that the
configuration echoed into ``record.json`` is complete and reproducible.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .pde import PROBLEM_NAMES
from .sampler import SAMPLER_NAMES

CONFIG_VERSION = 1

# depth, width, interior points, condition points per spec, alpha
PROBLEM_DEFAULTS = {
    "allen-cahn": (3, 64, 2000, 500, 1e-4),
    "burgers": (3, 64, 2000, 500, 1e-4),
    "laplace-polar": (3, 20, 2000, 500, 1e-4),
    "dispersive-10d": (3, 20, 10000, 100, 1e-3),
    "reaction-diffusion-20d": (3, 40, 10000, 100, 1e-3),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSettings:
    depth: int | None = None
    width: int | None = None


@dataclass(frozen=True)
class SamplerSettings:
    name: str = "glf"
    alpha: float | None = None
    epsilon: float = 1e-8
    m_per_anchor: int = 3
    k: float = 1.0
    c: float = 1.0
    replacement: bool = True
    dense_points: int = 100_000


@dataclass(frozen=True)
class OptimizerSettings:
    adam_steps: int = 1000
    lbfgs_steps: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lbfgs_history: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_evals: int = 25


@dataclass(frozen=True)
class RunConfig:
    problem: str
    version: int = CONFIG_VERSION
    network: NetworkSettings = field(default_factory=NetworkSettings)
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    n_interior: int | None = None
    n_condition: int | None = None
    boundary: str = "exact-dirichlet"
    lam: float = 1.0
    outer_rounds: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str | None = None
    save_points: bool = True

    def validate(self) -> "RunConfig":
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.sampler.name not in SAMPLER_NAMES:
            raise ConfigError(f"unknown sampler {self.sampler.name!r}")
        if self.boundary not in ("exact-dirichlet", "none"):
            raise ConfigError(f"unknown boundary mode {self.boundary!r}")
        if self.outer_rounds < 1:
            raise ConfigError("outer_rounds must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.n_interior is not None and self.n_interior < 1:
            raise ConfigError("n_interior must be positive")
        return self

    def resolved(self) -> "RunConfig":
        self.validate()
        depth, width, n_int, n_cond, alpha = PROBLEM_DEFAULTS[self.problem]
        net = NetworkSettings(self.network.depth or depth, self.network.width or width)
        n_interior = self.n_interior or n_int
        smp = self.sampler
        smp = dataclasses.replace(smp, alpha=smp.alpha if smp.alpha is not None else alpha)
        if smp.name == "glf-m":
            smp = dataclasses.replace(smp, m_per_anchor=math.ceil(smp.dense_points / n_interior))
        return dataclasses.replace(
            self,
            network=net,
            sampler=smp,
            n_interior=n_interior,
            n_condition=self.n_condition if self.n_condition is not None else n_cond,
            seeds=tuple(int(s) for s in self.seeds),
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data, "config").validate()


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    nested = {"network": NetworkSettings, "sampler": SamplerSettings, "optimizer": OptimizerSettings}
    for key, value in data.items():
        if key in nested and cls is RunConfig:
            kwargs[key] = _build(nested[key], value, f"{where}.{key}")
        elif key == "seeds":
            if not isinstance(value, list) or not all(isinstance(s, int) for s in value):
                raise ConfigError(f"{where}.seeds: expected a list of integers")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    if cls is RunConfig and "problem" not in kwargs:
        raise ConfigError(f"{where}: missing required key 'problem'")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_json(text: str, source: str = "<config>") -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return RunConfig.from_dict(parse_json(text, str(path)))

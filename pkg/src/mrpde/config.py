"""Run configuration: a strict TOML schema mapped onto one dataclass.

Every key is checked; unknown keys and out-of-range values raise
ConfigError naming the offending field, so a typo cannot silently fall
back to a default.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace  # noqa: F401 (replace is API)

import tomli

PROBLEMS = ("advection_diffusion", "sedov")
INTEGRATORS = ("rk23", "rkf45")


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


@dataclass
class RunConfig:
    # problem
    problem: str = "advection_diffusion"
    velocity: tuple = (0.0, 1.0)
    nu: float = 0.01
    # domain
    lo: tuple = (0.0, 0.0)
    hi: tuple = (1.0, 1.0)
    t_final: float = 0.5
    n0: int = 8
    # discretization
    p: int = 6
    eps: float = 1e-3
    j_max_cap: int = 6
    zone_width: int = 1
    cap_mode: str = "error"
    # time stepping
    integrator: str = "rk23"
    dt_init: float = 0.0          # 0 -> from the CFL ceiling
    dt_min: float = 1e-12
    dt_max: float = 0.0           # 0 -> t_final
    safety: float = 0.9
    eps_time: float = 0.0         # 0 -> eps
    retry_budget: int = 5
    # boundary
    bc_mode: str = "inject"
    bc_kind: str = "dirichlet"
    tau_scale: float = 1.0
    # output
    outdir: str = "out"
    output_every: int = 0         # steps between field dumps; 0 = final only
    figures: bool = True

    def __post_init__(self):
        try:
            self.velocity = tuple(float(v) for v in self.velocity)
            self.lo = tuple(float(v) for v in self.lo)
            self.hi = tuple(float(v) for v in self.hi)
        except (TypeError, ValueError):
            raise ConfigError("problem.velocity / domain.lo / domain.hi: "
                              "expected arrays of numbers")
        checks = [
            ("problem.id", self.problem in PROBLEMS,
             f"unknown problem {self.problem!r}, expected one of {PROBLEMS}"),
            ("problem.velocity", len(self.velocity) == 2,
             "needs two components"),
            ("problem.nu", self.nu >= 0.0, "diffusivity must be nonnegative"),
            ("domain.lo/hi", len(self.lo) == 2 and len(self.hi) == 2
             and all(a < b for a, b in zip(self.lo, self.hi)),
             "lower corner must lie strictly below the upper corner"),
            ("domain.t_final", self.t_final >= 0.0, "must be nonnegative"),
            ("domain.n0", isinstance(self.n0, int) and self.n0 >= 2,
             "base resolution must be an integer >= 2"),
            ("discretization.p", self.p in (2, 4, 6, 8),
             "order must be an even number in 2..8"),
            ("discretization.eps", self.eps > 0.0, "threshold must be positive"),
            ("discretization.j_max_cap",
             isinstance(self.j_max_cap, int) and self.j_max_cap >= 0,
             "level cap must be a nonnegative integer"),
            ("discretization.zone_width",
             isinstance(self.zone_width, int) and self.zone_width >= 1,
             "zone width must be a positive integer"),
            ("discretization.cap_mode", self.cap_mode in ("error", "saturate"),
             "expected 'error' or 'saturate'"),
            ("time.integrator", self.integrator in INTEGRATORS,
             f"unknown integrator, expected one of {INTEGRATORS}"),
            ("time.dt_init", self.dt_init >= 0.0, "must be nonnegative"),
            ("time.dt_min", self.dt_min > 0.0, "must be positive"),
            ("time.dt_max", self.dt_max >= 0.0, "must be nonnegative"),
            ("time.safety", 0.0 < self.safety <= 1.0, "must lie in (0, 1]"),
            ("time.eps_time", self.eps_time >= 0.0, "must be nonnegative"),
            ("time.retry_budget",
             isinstance(self.retry_budget, int) and self.retry_budget >= 0,
             "must be a nonnegative integer"),
            ("boundary.mode", self.bc_mode in ("inject", "penalty"),
             "expected 'inject' or 'penalty'"),
            ("boundary.kind", self.bc_kind in ("dirichlet", "neumann"),
             "expected 'dirichlet' or 'neumann'"),
            ("boundary.tau_scale", self.tau_scale > 0.0, "must be positive"),
            ("output.every",
             isinstance(self.output_every, int) and self.output_every >= 0,
             "cadence must be a nonnegative step count"),
        ]
        for name, ok, why in checks:
            if not ok:
                raise ConfigError(f"{name}: {why}")
        if self.bc_mode == "inject" and self.bc_kind != "dirichlet":
            raise ConfigError("boundary.kind: direct injection requires "
                              "Dirichlet data")
        if (self.n0 << self.j_max_cap) >= (1 << 17):
            raise ConfigError("discretization.j_max_cap: n0 * 2^cap "
                              "overflows the position encoding")

    @property
    def controller_target(self) -> float:
        return self.eps_time if self.eps_time > 0.0 else self.eps

    @property
    def dt_ceiling(self) -> float:
        # never below dt_min so a zero-duration run still builds a controller
        top = self.dt_max if self.dt_max > 0.0 else self.t_final
        return max(top, self.dt_min)


_SCHEMA = {
    "problem": {"id": "problem", "velocity": "velocity", "nu": "nu"},
    "domain": {"lo": "lo", "hi": "hi", "t_final": "t_final", "n0": "n0"},
    "discretization": {"p": "p", "eps": "eps", "j_max_cap": "j_max_cap",
                       "zone_width": "zone_width", "cap_mode": "cap_mode"},
    "time": {"integrator": "integrator", "dt_init": "dt_init",
             "dt_min": "dt_min", "dt_max": "dt_max", "safety": "safety",
             "eps_time": "eps_time", "retry_budget": "retry_budget"},
    "boundary": {"mode": "bc_mode", "kind": "bc_kind",
                 "tau_scale": "tau_scale"},
    "output": {"dir": "outdir", "every": "output_every",
               "figures": "figures"},
}

_FLOAT_FIELDS = {"nu", "t_final", "eps", "dt_init", "dt_min", "dt_max",
                 "safety", "eps_time", "tau_scale"}


def from_dict(data: dict) -> RunConfig:
    kwargs = {}
    for section, entries in data.items():
        known = _SCHEMA.get(section)
        if known is None:
            raise ConfigError(f"{section}: unknown section")
        if not isinstance(entries, dict):
            raise ConfigError(f"{section}: expected a table")
        for key, value in entries.items():
            attr = known.get(key)
            if attr is None:
                raise ConfigError(f"{section}.{key}: unknown key")
            if attr in _FLOAT_FIELDS:
                if isinstance(value, bool) or not isinstance(value,
                                                             (int, float)):
                    raise ConfigError(f"{section}.{key}: expected a number")
                value = float(value)
            kwargs[attr] = value
    return RunConfig(**kwargs)


def from_toml(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")
    return from_dict(data)

"""Shared domain types, configuration schema and validation.

Units: time in microseconds, rates in inverse microseconds, space in cell
lengths (z in [0, 1]).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

# Group velocity (cells per microsecond) at retrieve_coupling == 1.
REFERENCE_GROUP_VELOCITY = 1.0

RETRIEVAL_MODELS = ("finite_depth", "ideal")


class ConfigError(ValueError):
    """Raised when a configuration violates one or more bounds."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SolverError(RuntimeError):
    """Numerical solver or oracle failure."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Every physical and detection parameter of one protocol run."""

    optical_depth: float = 20.0
    single_atom_rate: float = 0.0075
    write_duration: float = 1.6
    mode_count: int = 4
    decoherence_rate: float = 1.0 / 3.0
    delay: float = 0.0
    retrieve_coupling: float = 0.15
    cell_length: float = 1.0
    stokes_efficiency: float = 0.72
    antistokes_efficiency: float = 0.35
    stokes_background: float = 0.28
    antistokes_background: float = 0.18
    dead_time: float = 0.0
    rng_seed: int = 0
    retrieval_model: str = "finite_depth"

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ValidatedConfig:
    """A checked config with derived quantities precomputed."""

    config: ExperimentConfig
    collective_rate: float
    group_velocity: float

    def __getattr__(self, name: str) -> Any:
        # Delegate field access so a ValidatedConfig reads like its config.
        if name == "config":
            raise AttributeError(name)
        return getattr(self.config, name)

    @property
    def write_gain(self) -> float:
        """Dimensionless write gain xi * t_W."""
        return self.collective_rate * self.write_duration


_NONNEGATIVE = (
    "single_atom_rate",
    "write_duration",
    "decoherence_rate",
    "delay",
    "retrieve_coupling",
    "stokes_background",
    "antistokes_background",
    "dead_time",
)
_UNIT_INTERVAL = ("stokes_efficiency", "antistokes_efficiency")


def validate(config: ExperimentConfig | ValidatedConfig) -> ValidatedConfig:
    """Check every bound on ``config`` and precompute derived quantities.

    All violations are collected and reported together, each naming its
    field. Idempotent: validating a ``ValidatedConfig`` returns an equal one.
    """
    if isinstance(config, ValidatedConfig):
        config = config.config
    problems: list[str] = []

    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(config, f.name)
        if f.name == "retrieval_model":
            if value not in RETRIEVAL_MODELS:
                problems.append(f"retrieval_model: must be one of {RETRIEVAL_MODELS}, got {value!r}")
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            problems.append(f"{f.name}: expected a number, got {type(value).__name__}")
            continue
        if not math.isfinite(value):
            problems.append(f"{f.name}: must be finite, got {value}")

    if problems:
        raise ConfigError(problems)

    if not config.optical_depth > 0:
        problems.append(f"optical_depth: must be > 0, got {config.optical_depth}")
    for name in _NONNEGATIVE:
        if getattr(config, name) < 0:
            problems.append(f"{name}: must be >= 0, got {getattr(config, name)}")
    for name in _UNIT_INTERVAL:
        v = getattr(config, name)
        if not 0.0 <= v <= 1.0:
            problems.append(f"{name}: must lie in [0, 1], got {v}")
    if int(config.mode_count) != config.mode_count or config.mode_count < 1:
        problems.append(f"mode_count: must be an integer >= 1, got {config.mode_count}")
    if config.cell_length != 1.0:
        problems.append(f"cell_length: space is normalized, must be 1, got {config.cell_length}")
    if int(config.rng_seed) != config.rng_seed or not 0 <= config.rng_seed < 2**64:
        problems.append(f"rng_seed: must be a 64-bit unsigned integer, got {config.rng_seed}")
    if problems:
        raise ConfigError(problems)

    config = dataclasses.replace(
        config, mode_count=int(config.mode_count), rng_seed=int(config.rng_seed)
    )
    return ValidatedConfig(
        config=config,
        collective_rate=config.optical_depth * config.single_atom_rate,
        group_velocity=config.retrieve_coupling * REFERENCE_GROUP_VELOCITY,
    )


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build a config from a flat mapping; unknown keys are an error."""
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError([f"{k}: unknown config key" for k in unknown])
    return ExperimentConfig(**dict(data))


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(["config file must hold a flat JSON object"])
    return config_from_dict(data)


def config_to_json(config: ExperimentConfig | ValidatedConfig) -> str:
    if isinstance(config, ValidatedConfig):
        config = config.config
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class PulseProfile:
    """Photon flux on a uniform time grid.

    ``flux[k]`` is the mean flux over the bin ``[t0 + k*dt, t0 + (k+1)*dt)``,
    so ``total`` (sum times dt) is the pulse's mean photon number.
    """

    t0: float
    dt: float
    flux: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        flux = np.asarray(self.flux, dtype=float)
        if np.any(flux < 0):
            raise ValueError("flux must be nonnegative")
        object.__setattr__(self, "flux", flux)

    @property
    def total(self) -> float:
        return float(self.flux.sum() * self.dt)

    @property
    def times(self) -> np.ndarray:
        """Bin centers."""
        return self.t0 + (np.arange(self.flux.size) + 0.5) * self.dt

    @property
    def duration(self) -> float:
        return self.flux.size * self.dt

    def fwhm(self) -> float:
        """Full width at half maximum, edges located by linear interpolation."""
        f = self.flux
        if f.size == 0 or f.max() <= 0:
            return 0.0
        half = 0.5 * f.max()
        above = np.flatnonzero(f >= half)
        t = self.times
        lo, hi = above[0], above[-1]
        if lo == 0:
            left = self.t0
        else:
            left = np.interp(half, [f[lo - 1], f[lo]], [t[lo - 1], t[lo]])
        if hi == f.size - 1:
            right = self.t0 + self.duration
        else:
            right = np.interp(half, [f[hi + 1], f[hi]], [t[hi + 1], t[hi]])
        return float(right - left)


@dataclass(frozen=True)
class SpinWaveProfile:
    """Flipped spins per unit length on a uniform grid of z in [0, 1]."""

    z: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        density = np.asarray(self.density, dtype=float)
        if z.ndim != 1 or z.shape != density.shape:
            raise ValueError("z and density must be 1-D arrays of equal length")
        if z.size < 64:
            raise ValueError(f"spin profile needs >= 64 grid points, got {z.size}")
        if not (np.isclose(z[0], 0.0) and np.isclose(z[-1], 1.0)):
            raise ValueError("z grid must span [0, 1]")
        if np.any(density < 0):
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "density", density)

    @property
    def total(self) -> float:
        return float(np.trapezoid(self.density, self.z))

    def scaled(self, factor: float) -> "SpinWaveProfile":
        return SpinWaveProfile(self.z, self.density * factor)

    @classmethod
    def uniform(cls, total: float, points: int = 256) -> "SpinWaveProfile":
        return cls(np.linspace(0.0, 1.0, points), np.full(points, float(total)))


@dataclass(frozen=True)
class CountRecord:
    true_stokes: int
    true_spin: int
    retrieved: int
    s1: int
    s2: int
    as1: int
    as2: int


@dataclass(frozen=True)
class Estimate:
    """A point estimate with a jackknife standard error."""

    value: float
    stderr: float
    trials: int = 0
    low_statistics: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": _json_float(self.value),
            "stderr": _json_float(self.stderr),
            "trials": self.trials,
            "low_statistics": self.low_statistics,
        }


@dataclass
class StatsSummary:
    mean_s: float
    mean_as: float
    psn_meas: float
    psn_th: float
    v_norm: float
    v_stderr: float
    g2_by_ns: dict[int, Estimate] = field(default_factory=dict)
    mean_as_by_ns: dict[int, Estimate] = field(default_factory=dict)
    q_by_ns: dict[int, Estimate] = field(default_factory=dict)
    zeta: float | None = None
    trials: int = 0
    psn_meas_stderr: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        def by_ns(d: dict[int, Estimate]) -> dict[str, Any]:
            return {str(k): v.to_dict() for k, v in sorted(d.items())}

        return {
            "mean_s": self.mean_s,
            "mean_as": self.mean_as,
            "psn_meas": self.psn_meas,
            "psn_meas_stderr": _json_float(self.psn_meas_stderr),
            "psn_th": self.psn_th,
            "v_norm": _json_float(self.v_norm),
            "v_stderr": _json_float(self.v_stderr),
            "g2_by_ns": by_ns(self.g2_by_ns),
            "mean_as_by_ns": by_ns(self.mean_as_by_ns),
            "q_by_ns": by_ns(self.q_by_ns),
            "zeta": _json_float(self.zeta) if self.zeta is not None else None,
            "trials": self.trials,
        }


def _json_float(x: float) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None

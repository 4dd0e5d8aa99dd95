"""Simulation settings and scenario files."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .rheology import MaterialParams

CFL = 0.25
#: default dt leaves room for particle speeds up to this fraction of c0
SPEED_MARGIN = 0.25


@dataclass(frozen=True)
class SphConfig:
    particle_spacing: float = 3e-3
    smoothing_ratio: float = 1.3
    sound_speed: float = 5.0
    dt: Optional[float] = None
    delta: float = 0.1
    visc_alpha: float = 1.0
    visc_beta: float = 2.0
    shepard_interval: int = 10
    gravity: tuple = (0.0, -9.81)
    p_min: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))
        if not (self.particle_spacing > 0 and self.smoothing_ratio > 0 and self.sound_speed > 0):
            raise ValueError("spacing, smoothing ratio and sound speed must be positive")
        if self.dt is None:
            object.__setattr__(self, "dt", self.max_dt(SPEED_MARGIN * self.sound_speed))
        if not 0 < self.dt <= CFL * self.h / self.sound_speed * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:g} violates the CFL limit {CFL * self.h / self.sound_speed:g}")
        if self.shepard_interval < 0:
            raise ValueError("shepard_interval must be >= 0 (0 disables the filter)")
        if self.delta < 0 or self.visc_alpha < 0 or self.visc_beta < 0 or self.p_min <= 0:
            raise ValueError("delta and viscosity coefficients must be >= 0, p_min > 0")

    @property
    def h(self) -> float:
        return self.smoothing_ratio * self.particle_spacing

    def max_dt(self, v_max: float) -> float:
        return CFL * self.h / (self.sound_speed + v_max)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gravity"] = list(self.gravity)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SphConfig":
        return cls(**d)


@dataclass(frozen=True)
class Domain:
    """Open-top rectangular container filled with grains up to ``fill_depth``."""

    width: float = 0.12
    fill_depth: float = 0.04
    wall_height: float = 0.10
    wall_layers: int = 3
    jitter: float = 0.05

    def __post_init__(self):
        if not (self.width > 0 and self.fill_depth > 0 and self.wall_height >= self.fill_depth):
            raise ValueError("need positive width/depth and walls at least as high as the fill")
        if self.wall_layers < 1:
            raise ValueError("need at least one wall layer")
        if not 0 <= self.jitter < 0.5:
            raise ValueError("jitter is a fraction of the spacing in [0, 0.5)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        return cls(**d)


@dataclass(frozen=True)
class KinematicSchedule:
    """Pause, then rotate the leg about the hip at constant speed.

    ``hip_height`` is measured from the settled free surface unless
    ``hip_reference`` is ``"floor"``.
    """

    pause_duration: float = 2.0
    hip_height: float = 0.02
    angular_speed: float = 0.2
    theta_start: float = -0.75 * math.pi
    theta_end: float = 0.75 * math.pi
    clockwise: bool = True
    hip_reference: str = "surface"

    def __post_init__(self):
        if self.pause_duration < 0 or self.angular_speed < 0:
            raise ValueError("pause duration and angular speed must be non-negative")
        if self.hip_reference not in ("surface", "floor"):
            raise ValueError("hip_reference must be 'surface' or 'floor'")
        step = self.theta_end - self.theta_start
        if step == 0 or (step > 0) != self.clockwise:
            raise ValueError("theta must run upward for clockwise and downward for counter-clockwise rotation")

    @property
    def rotation_duration(self) -> float:
        if self.angular_speed == 0:
            return math.inf
        return abs(self.theta_end - self.theta_start) / self.angular_speed

    def theta(self, t: float) -> float:
        """Leg angle at time ``t`` (pause first, then a monotone sweep)."""
        sign = 1.0 if self.clockwise else -1.0
        tr = min(max(t - self.pause_duration, 0.0), self.rotation_duration)
        return self.theta_start + sign * self.angular_speed * tr

    def theta_rate(self, t: float) -> float:
        if t < self.pause_duration or t > self.pause_duration + self.rotation_duration:
            return 0.0
        return (1.0 if self.clockwise else -1.0) * self.angular_speed

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicSchedule":
        return cls(**d)


@dataclass(frozen=True)
class LegSpec:
    morphology: str = "flat"
    length: float = 0.04
    foot_fraction: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LegSpec":
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    material: MaterialParams = field(default_factory=MaterialParams)
    sph: SphConfig = field(default_factory=SphConfig)
    domain: Domain = field(default_factory=Domain)
    leg: LegSpec = field(default_factory=LegSpec)
    schedule: KinematicSchedule = field(default_factory=KinematicSchedule)
    seed: int = 0
    n_theta: int = 128
    sample_stride: int = 10
    output: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "material": self.material.to_dict(),
            "sph": self.sph.to_dict(),
            "domain": self.domain.to_dict(),
            "leg": self.leg.to_dict(),
            "schedule": self.schedule.to_dict(),
            "seed": self.seed,
            "n_theta": self.n_theta,
            "sample_stride": self.sample_stride,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {"material", "sph", "domain", "leg", "schedule", "seed", "n_theta", "sample_stride", "output"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(
            material=MaterialParams.from_dict(d.get("material", {})),
            sph=SphConfig.from_dict(d.get("sph", {})),
            domain=Domain.from_dict(d.get("domain", {})),
            leg=LegSpec.from_dict(d.get("leg", {})),
            schedule=KinematicSchedule.from_dict(d.get("schedule", {})),
            seed=int(d.get("seed", 0)),
            n_theta=int(d.get("n_theta", 128)),
            sample_stride=int(d.get("sample_stride", 10)),
            output=d.get("output"),
        )

    def with_speed(self, omega: float) -> "Scenario":
        return replace(self, schedule=replace(self.schedule, angular_speed=omega))

    def digest(self) -> str:
        """sha256 of everything that affects the simulated trace."""
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def load_scenario(path) -> Scenario:
    with open(path) as f:
        return Scenario.from_dict(json.load(f))

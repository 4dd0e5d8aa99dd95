"""mu(I) frictional rheology for dense granular flow."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

#: below this invariant the deviatoric stress is switched off (static state)
EPS_RATE = 1e-10


@dataclass(frozen=True)
class MaterialParams:
    grain_density: float = 2600.0
    bulk_density: float = 1560.0
    grain_diameter: float = 3e-3
    mu1: float = math.tan(math.radians(23.0))
    mu2: float = math.tan(math.radians(33.0))
    i0: float = 0.279
    cohesion: float = 0.0
    inertial_switch: float = 1e-3

    def __post_init__(self):
        if not 0 < self.mu1 < self.mu2:
            raise ValueError(f"need 0 < mu1 < mu2, got mu1={self.mu1}, mu2={self.mu2}")
        if not self.i0 > 0:
            raise ValueError("I0 must be positive")
        if not self.grain_diameter > 0:
            raise ValueError("grain diameter must be positive")
        if not (self.grain_density > 0 and self.bulk_density > 0):
            raise ValueError("densities must be positive")
        if self.cohesion < 0:
            raise ValueError("cohesion must be non-negative")
        if not self.inertial_switch > 0:
            raise ValueError("inertial switch must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialParams":
        return cls(**d)


def mu_of_i(inertial, m: MaterialParams):
    """Friction coefficient mu1 + (mu2 - mu1) / (I0 / I + 1); equals mu1 at I = 0."""
    i = np.asarray(inertial, dtype=float)
    out = m.mu1 + (m.mu2 - m.mu1) * i / (m.i0 + i)
    return float(out) if out.ndim == 0 else out


def invariant(t) -> np.ndarray:
    """sqrt(T:T / 2) for symmetric tensors stored as (..., 3) = (xx, yy, xy)."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(0.5 * (t[..., 0] ** 2 + t[..., 1] ** 2 + 2.0 * t[..., 2] ** 2))


def deviatoric(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    half_tr = 0.5 * (t[..., 0] + t[..., 1])
    out = t.copy()
    out[..., 0] -= half_tr
    out[..., 1] -= half_tr
    return out


def strain_rate(grad_v) -> np.ndarray:
    """Symmetric part of a velocity gradient (..., 4) = (dvx/dx, dvx/dy, dvy/dx, dvy/dy)."""
    g = np.asarray(grad_v, dtype=float)
    return np.stack([g[..., 0], g[..., 3], 0.5 * (g[..., 1] + g[..., 2])], axis=-1)


def inertial_number(rate_norm, pressure, m: MaterialParams, p_min: float = 1.0):
    p = np.maximum(np.asarray(pressure, dtype=float), p_min)
    return np.asarray(rate_norm, dtype=float) * m.grain_diameter / np.sqrt(p / m.grain_density)


def constitutive_stress(pressure, rate, strain, m: MaterialParams, p_min: float = 1.0):
    """Stress tensors (n, 3) and inertial numbers (n,) for each particle.

    ``rate`` and ``strain`` are (n, 3) symmetric tensors. The frictional term
    acts along the deviatoric strain rate when I exceeds the switch, else
    along the deviatoric accumulated strain; it vanishes when that
    direction's invariant is below ``EPS_RATE``.
    """
    p = np.atleast_1d(np.asarray(pressure, dtype=float))
    d = deviatoric(np.atleast_2d(rate))
    e = deviatoric(np.atleast_2d(strain))
    d_norm = invariant(d)
    inertial = inertial_number(d_norm, p, m, p_min)
    dynamic = inertial > m.inertial_switch
    direction = np.where(dynamic[:, None], d, e)
    norm = np.where(dynamic, d_norm, invariant(e))
    live = norm >= EPS_RATE
    scale = np.where(live, (mu_of_i(inertial, m) * p + m.cohesion) / np.where(live, norm, 1.0), 0.0)
    sigma = direction * scale[:, None]
    sigma[:, 0] -= p
    sigma[:, 1] -= p
    return sigma, inertial

"""Leg profiles, boundary-particle layouts and the initial granular bed.

Leg shapes live in a body frame (s, n): ``s`` runs along the reference line
from the hip to the far end of the leg, ``n`` along the leading normal (the
side that faces the direction of clockwise rotation). A body point maps to
world (x, z) as ``hip + s * a(theta) + n * b(theta)`` with
``a = (-sin theta, -cos theta)`` and ``b = da/dtheta = (-cos theta, sin theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import Domain, LegSpec

MORPHOLOGIES = ("flat", "c_leg", "reversed_c", "l_leg", "reversed_l")
FOOT_FRACTIONS = (1 / 12, 1 / 3, 1 / 2, 1.0)
_DENSE = 2000


def leg_axes(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit reference-line direction and leading normal at angle ``theta``."""
    s, c = math.sin(theta), math.cos(theta)
    return np.array([-s, -c]), np.array([-c, s])


def body_to_world(body: np.ndarray, hip, theta: float) -> np.ndarray:
    a, b = leg_axes(theta)
    return np.asarray(hip, dtype=float) + body[:, :1] * a + body[:, 1:2] * b


def body_velocity(body: np.ndarray, theta: float, theta_rate: float) -> np.ndarray:
    """Rigid-rotation velocity d/dt of :func:`body_to_world`."""
    a, b = leg_axes(theta)
    return theta_rate * (body[:, :1] * b - body[:, 1:2] * a)


def _resample(poly: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(math.ceil(arc[-1] / spacing - 1e-9)), 1)
    s = np.linspace(0.0, arc[-1], n + 1)
    return np.column_stack([np.interp(s, arc, poly[:, 0]), np.interp(s, arc, poly[:, 1])])


@dataclass(frozen=True)
class LegGeometry:
    morphology: str = "flat"
    length: float = 0.04
    foot_fraction: Optional[float] = None

    def __post_init__(self):
        if self.morphology not in MORPHOLOGIES:
            raise ValueError(f"unknown morphology {self.morphology!r}; expected one of {MORPHOLOGIES}")
        if not self.length > 0:
            raise ValueError("leg length must be positive")
        if self.morphology in ("l_leg", "reversed_l"):
            fl = 1 / 3 if self.foot_fraction is None else float(self.foot_fraction)
            if not fl > 0:
                raise ValueError("foot fraction must be positive")
            object.__setattr__(self, "foot_fraction", fl)
        elif self.foot_fraction is not None:
            raise ValueError(f"foot_fraction only applies to L-family legs, not {self.morphology}")

    @classmethod
    def from_spec(cls, spec: LegSpec) -> "LegGeometry":
        return cls(spec.morphology, spec.length, spec.foot_fraction)

    @property
    def design_id(self) -> str:
        if self.foot_fraction is None:
            return self.morphology
        return f"{self.morphology}:fl={self.foot_fraction:.3f}"

    def centerline(self) -> np.ndarray:
        """Dense body-frame polyline from the hip to the far end of the leg."""
        ell = self.length
        if self.morphology == "flat":
            return np.column_stack([np.linspace(0.0, ell, _DENSE), np.zeros(_DENSE)])
        if self.morphology in ("c_leg", "reversed_c"):
            # semicircle on the reference line; C leads with its convex side
            phi = np.linspace(math.pi, 0.0, _DENSE)
            side = 1.0 if self.morphology == "c_leg" else -1.0
            return np.column_stack([0.5 * ell * (1.0 + np.cos(phi)), side * 0.5 * ell * np.sin(phi)])
        fl = self.foot_fraction
        # L leads with its corner, so the foot points to the trailing side
        side = -1.0 if self.morphology == "l_leg" else 1.0
        shank = np.column_stack([np.linspace(0.0, ell, _DENSE // 2), np.zeros(_DENSE // 2)])
        foot = np.column_stack([np.full(_DENSE // 2, ell), side * np.linspace(0.0, fl * ell, _DENSE // 2)])
        pts = np.vstack([shank, foot[1:]])
        # rotate so the hip-to-toe line is the reference line
        phi = math.atan2(side * fl, 1.0)
        c, s = math.cos(phi), math.sin(phi)
        return np.column_stack([c * pts[:, 0] + s * pts[:, 1], -s * pts[:, 0] + c * pts[:, 1]])

    def profile(self, spacing: Optional[float] = None) -> np.ndarray:
        """Centerline resampled at uniform arc-length spacing <= ``spacing``."""
        return _resample(self.centerline(), spacing if spacing is not None else self.length / 200)

    def boundary_particles(self, particle_spacing: float, layers: int = 3) -> np.ndarray:
        """Body-frame particle positions: ``layers`` offset copies of the profile,
        each sampled at <= half the fluid spacing, layers ``spacing / 2`` apart."""
        line = self.centerline()
        tangent = np.gradient(line, axis=0)
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
        half = 0.5 * particle_spacing
        offsets = (np.arange(layers) - 0.5 * (layers - 1)) * half
        return np.vstack([_resample(line + o * normal, half) for o in offsets])

    def posed(self, theta: float, spacing: Optional[float] = None) -> np.ndarray:
        return body_to_world(self.profile(spacing), (0.0, 0.0), theta)


def lift_area(leg: LegGeometry, spacing: Optional[float] = None, theta: float = -math.pi / 4) -> float:
    """Area of the grain column between the leg profile posed at ``theta`` and
    the horizontal through the hip, by trapezoidal quadrature of the depth
    below the hip along the profile (signed with dx, so overhangs cancel).

    The default pose is the downstroke at 45 degrees, where lift peaks; the
    force there is buoyancy-like, set by the weight of this column.
    """
    pts = leg.posed(theta, spacing)
    if pts.shape[0] < 2 or not np.all(np.isfinite(pts)):
        raise ValueError("degenerate leg profile")
    depth = np.maximum(-pts[:, 1], 0.0)
    area = abs(float(np.sum(0.5 * (depth[1:] + depth[:-1]) * np.diff(pts[:, 0]))))
    if not area > 0:
        raise ValueError("leg profile encloses no area at the reference pose")
    return area


@dataclass
class Bed:
    """Particle layout of a filled container before any dynamics."""

    x: np.ndarray
    kind: np.ndarray
    mass: np.ndarray
    surface: float


def make_bed(domain: Domain, spacing: float, bulk_density: float, seed: int = 0) -> Bed:
    """Jittered square lattice of grains plus ``wall_layers`` of container particles."""
    dx = spacing
    nx = int(round(domain.width / dx))
    nz = int(round(domain.fill_depth / dx))
    gx, gz = np.meshgrid((np.arange(nx) + 0.5) * dx, (np.arange(nz) + 0.5) * dx)
    bulk = np.column_stack([gx.ravel(), gz.ravel()])
    rng = np.random.default_rng(seed)
    bulk += rng.uniform(-domain.jitter, domain.jitter, bulk.shape) * dx

    layers = domain.wall_layers
    walls = []
    for ell in range(layers):
        xs = (np.arange(-layers, nx + layers) + 0.5) * dx
        walls.append(np.column_stack([xs, np.full(xs.size, -(ell + 0.5) * dx)]))
        zs = (np.arange(int(round(domain.wall_height / dx))) + 0.5) * dx
        walls.append(np.column_stack([np.full(zs.size, -(ell + 0.5) * dx), zs]))
        walls.append(np.column_stack([np.full(zs.size, nx * dx + (ell + 0.5) * dx), zs]))
    wall = np.vstack(walls)
    x = np.vstack([bulk, wall])
    kind = np.concatenate([np.zeros(len(bulk), np.int8), np.ones(len(wall), np.int8)])
    mass = np.full(len(x), bulk_density * dx * dx)
    return Bed(np.ascontiguousarray(x), kind, mass, nz * dx)

"""Cross-morphology scaling of peak drag and lift."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..sph.geometry import LegGeometry, lift_area
from .data import SCHEMA_VERSION, DatasetManifest, parse_design

#: legs that lead with a concave face trap grains, so their peak drag is set by shear
SHEAR_DOMINATED = ("reversed_c", "reversed_l")
DYNAMIC_FRICTION = math.tan(math.radians(33.0))


def friction_factor(morphology: str, dynamic_friction: float = DYNAMIC_FRICTION) -> float:
    return dynamic_friction if morphology in SHEAR_DOMINATED else 1.0


def compute_lift_area(leg: LegGeometry, spacing: Optional[float] = None) -> float:
    return lift_area(leg, spacing)


def area_factor(leg: LegGeometry) -> float:
    """Lifted-area ratio against a flat leg of the same length."""
    return compute_lift_area(leg) / compute_lift_area(LegGeometry("flat", leg.length))


def coefficient_of_variation(values) -> float:
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    return float(np.std(v) / abs(mean)) if mean != 0 else math.inf


@dataclass
class ScalingReport:
    entries: list
    dispersion: list
    flagged: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "scaling_report", "entries": self.entries,
                "dispersion": self.dispersion, "flagged": self.flagged}


def scaling_analysis(manifest: DatasetManifest, dynamic_friction: float = DYNAMIC_FRICTION) -> ScalingReport:
    """Peak |fx| / mu^i and peak |fz| / alpha^i per (design, omega), with the
    cross-design coefficient of variation before and after scaling."""
    sims = [r for r in manifest.records if r.source == "simulation"]
    designs = sorted({r.design for r in sims})
    if len(designs) < 2:
        raise ValidationError(f"scaling needs at least two designs, got {designs}")
    entries, flagged = [], []
    by_omega: dict = {}
    for r in sorted(sims, key=lambda r: (r.omega, r.design)):
        morph, fl = parse_design(r.design)
        leg = LegGeometry(morph, r.leg_length, fl)
        mu, alpha = friction_factor(morph, dynamic_friction), area_factor(leg)
        drag, lift = float(np.max(np.abs(r.trace.fx))), float(np.max(np.abs(r.trace.fz)))
        if drag == 0.0 or lift == 0.0:
            flagged.append({"design": r.design, "omega": r.omega, "reason": "trace has no non-zero peak"})
            continue
        e = {"design": r.design, "omega": r.omega, "max_drag": drag, "max_lift": lift, "mu": mu, "alpha": alpha,
             "scaled_max_drag": drag / mu, "scaled_max_lift": lift / alpha,
             "scaled_fx": (r.trace.fx / mu).tolist(), "scaled_fz": (r.trace.fz / alpha).tolist()}
        entries.append(e)
        by_omega.setdefault(r.omega, []).append(e)
    for d in designs:
        if sum(1 for r in sims if r.design == d) < 3:
            flagged.append({"design": d, "reason": "fewer than three speeds"})
    dispersion = []
    for omega, es in sorted(by_omega.items()):
        if len(es) < 2:
            continue
        dispersion.append({
            "omega": omega,
            "designs": [e["design"] for e in es],
            "cv_drag_raw": coefficient_of_variation([e["max_drag"] for e in es]),
            "cv_drag_scaled": coefficient_of_variation([e["scaled_max_drag"] for e in es]),
            "cv_lift_raw": coefficient_of_variation([e["max_lift"] for e in es]),
            "cv_lift_scaled": coefficient_of_variation([e["scaled_max_lift"] for e in es]),
        })
    return ScalingReport(entries, dispersion, flagged)

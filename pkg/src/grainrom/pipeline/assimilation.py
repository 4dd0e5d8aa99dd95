"""Update a surrogate prediction with sparse measurements of one scenario."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import ropf
from ..errors import ValidationError
from ..trace import ForceTrace
from .model import TrainedModel, predict

PROCESS_NOISE_FRACTION = 0.05
DEFAULT_NOISE_FRACTION = 0.05


@dataclass
class ScenarioAssimilation:
    prior: ForceTrace
    updated: ForceTrace
    result: ropf.AssimilationResult
    measurement_noise_std: dict


def measurement_model(model: TrainedModel, measurement_noise_std, process_noise_std) -> ropf.MeasurementModel:
    return ropf.MeasurementModel(model.measurement_row, model.n_coefficients, measurement_noise_std,
                                 process_noise_std, model.reconstruct)


def default_noise_std(prior: ForceTrace, observations: Sequence) -> dict:
    out = {}
    for b in ("fx", "fz"):
        vals = [float(v) for _, v in sorted((float(t), v) for t, bb, v in observations if bb == b)]
        est = ropf.estimate_noise_std(vals) if len(vals) >= 3 else 0.0
        if not est > 0:
            est = DEFAULT_NOISE_FRACTION * float(np.max(np.abs(prior.behavior(b))))
        out[b] = max(est, 1e-12)
    return out


def assimilate_scenario(model: TrainedModel, omega: float, observations: Sequence, n_particles: int = 1000,
                        seed: int = 0, measurement_noise_std=None,
                        process_noise_fraction: float = PROCESS_NOISE_FRACTION) -> ScenarioAssimilation:
    """Filter the GP prior at ``omega`` through ``(theta, behavior, value)`` observations.

    ``measurement_noise_std`` is a float or a per-behavior dict. When omitted
    it is estimated per behavior from the high-frequency part of the
    observations themselves; behaviors with fewer than three observations fall
    back to 5% of the prior trace's peak magnitude.
    """
    prior = predict(model, omega).trace
    mean, var = model.coefficient_prior(omega)
    std = np.sqrt(var)
    if measurement_noise_std is None:
        measurement_noise_std = default_noise_std(prior, observations)
    obs = sorted((float(t), str(b), float(v)) for t, b, v in observations)
    for t, b, _ in obs:
        if b not in model.behaviors:
            raise ValidationError(f"unknown behavior {b!r} in observations")
        if not model.theta[0] <= t <= model.theta[-1]:
            raise ValidationError(f"observation angle {t:g} is outside the model grid")
    m = measurement_model(model, measurement_noise_std, process_noise_fraction * std)
    result = ropf.assimilate(mean, std, obs, m, n_particles=n_particles, seed=seed)
    vals = result.updated_trace
    meta = {"design": model.design, "omega": float(omega), "source": "assimilation", "observations": len(obs)}
    updated = ForceTrace(model.theta, vals[model.behaviors.index("fx")], vals[model.behaviors.index("fz")], meta)
    noise = m.measurement_noise_std if None not in m.measurement_noise_std else {"all": m.measurement_noise_std[None]}
    return ScenarioAssimilation(prior, updated, result, noise)


OBS_HEADER = ("theta_rad", "behavior", "value")


def read_observations(path) -> list:
    path = os.fspath(path)
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != OBS_HEADER:
            raise ValidationError(f"{path}:1: expected header {','.join(OBS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns")
            try:
                t, v = float(row[0]), float(row[2])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric value") from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ValidationError(f"{path}:{lineno}: non-finite value")
            out.append((t, row[1].strip(), v))
    return out


def write_observations(path, observations) -> None:
    from ..trace import atomic_write

    lines = [",".join(OBS_HEADER)] + [f"{float(t)!r},{b},{float(v)!r}" for t, b, v in observations]
    atomic_write(path, "\n".join(lines) + "\n")

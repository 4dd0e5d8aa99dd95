"""Run simulation scenarios and write their traces."""

from __future__ import annotations

import logging
import os
from dataclasses import replace
from typing import Iterable, Optional

from ..sph.config import Domain, KinematicSchedule, LegSpec, Scenario, SphConfig
from ..sph.geometry import LegGeometry
from ..sph.solver import run_leg_rotation, settle_bed
from ..trace import ForceTrace
from .data import DatasetManifest, record_from_trace

log = logging.getLogger(__name__)

#: desk speeds map the nondimensional speed 1..10 onto omega = 1..10 rad/s
DESK_OMEGA_REF = 1.0
#: reporting convention: nondimensional speed relative to the experimental 0.2 rad/s
EXPERIMENT_OMEGA_REF = 0.2
DESK_PAUSE = 0.05


def desk_scenario(morphology: str = "flat", foot_fraction: Optional[float] = None, omega: float = 1.0,
                  seed: int = 0, **overrides) -> Scenario:
    """Coarse 2-D setup (about 800 particles) that sweeps in seconds to minutes."""
    s = Scenario(
        sph=SphConfig(),
        domain=Domain(),
        leg=LegSpec(morphology, 0.04, foot_fraction),
        schedule=KinematicSchedule(pause_duration=DESK_PAUSE, angular_speed=omega),
        seed=seed,
    )
    return replace(s, **overrides)


def simulate_scenario(s: Scenario, backend: Optional[str] = None) -> ForceTrace:
    bed = settle_bed(s.material, s.sph, s.domain, s.seed, backend=backend)
    leg = LegGeometry(s.leg.morphology, s.leg.length, s.leg.foot_fraction)
    trace = run_leg_rotation(s.material, s.sph, leg, s.schedule, s.sample_stride, bed=bed, seed=s.seed,
                             n_theta=s.n_theta, backend=backend,
                             metadata={"config_digest": s.digest(), "leg_length": s.leg.length})
    log.info("simulated %s at omega=%g (seed %d)", leg.design_id, s.schedule.angular_speed, s.seed)
    return trace


def scenario_filename(s: Scenario) -> str:
    leg = LegGeometry(s.leg.morphology, s.leg.length, s.leg.foot_fraction)
    design = leg.design_id.replace(":", "_").replace("=", "")
    return f"{design}_w{s.schedule.angular_speed:g}_s{s.seed}.csv"


def simulate_to_directory(scenarios: Iterable[Scenario], directory, backend: Optional[str] = None) -> list:
    """Simulate each scenario into ``directory`` unless an up-to-date trace is already there."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for s in scenarios:
        path = os.path.join(directory, scenario_filename(s))
        if os.path.exists(path):
            try:
                if ForceTrace.read_csv(path).metadata.get("config_digest") == s.digest():
                    paths.append(path)
                    continue
            except (ValueError, OSError):
                pass
        simulate_scenario(s, backend).write_csv(path)
        paths.append(path)
    return paths


def manifest_from_traces(traces: Iterable[ForceTrace], n_theta: int = 128) -> DatasetManifest:
    from ..trace import theta_grid

    grid = theta_grid(n_theta)
    m = DatasetManifest(grid)
    for t in traces:
        m.add(record_from_trace(t, grid))
    return m

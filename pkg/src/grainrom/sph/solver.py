"""Weakly-compressible SPH for a granular bed with a rigid rotating leg."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from ..errors import SimulationError
from . import backend as _backend
from .config import Domain, KinematicSchedule, SphConfig
from .geometry import Bed, LegGeometry, body_to_world, body_velocity, make_bed
from .rheology import MaterialParams, constitutive_stress, strain_rate

log = logging.getLogger(__name__)

BULK, CONTAINER, LEG = 0, 1, 2
BLOWUP_FACTOR = 5.0


@dataclass
class ParticleState:
    x: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    mass: np.ndarray
    kind: np.ndarray
    strain: np.ndarray
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        n = len(self.mass)
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        self.rho = np.ascontiguousarray(self.rho, dtype=float)
        self.mass = np.ascontiguousarray(self.mass, dtype=float)
        self.kind = np.ascontiguousarray(self.kind, dtype=np.int8)
        self.strain = np.ascontiguousarray(self.strain, dtype=float)
        if self.x.shape != (n, 2) or self.v.shape != (n, 2) or self.rho.shape != (n,) or self.strain.shape != (n, 3):
            raise ValueError("inconsistent particle array shapes")
        if np.any(self.rho <= 0):
            raise ValueError("densities must be positive")
        self.mass.flags.writeable = False

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def bulk(self) -> np.ndarray:
        return self.kind == BULK

    def subset(self, index) -> "ParticleState":
        return ParticleState(self.x[index], self.v[index], self.rho[index], self.mass[index], self.kind[index],
                             self.strain[index], self.time, self.step)

    def copy(self) -> "ParticleState":
        return ParticleState(self.x.copy(), self.v.copy(), self.rho.copy(), self.mass, self.kind.copy(),
                             self.strain.copy(), self.time, self.step)

    def kinetic_energy(self) -> float:
        b = self.bulk
        return float(0.5 * np.sum(self.mass[b] * np.sum(self.v[b] ** 2, axis=1)))

    def bulk_momentum(self) -> np.ndarray:
        b = self.bulk
        return self.mass[b] @ self.v[b]


def equation_of_state(rho, rho0: float, c0: float):
    return c0 * c0 * (np.asarray(rho, dtype=float) - rho0)


def pressure(state: ParticleState, material: MaterialParams, config: SphConfig) -> tuple[np.ndarray, int]:
    """EOS pressure clamped below at ``p_min``, and how many particles were clamped."""
    p = equation_of_state(state.rho, material.bulk_density, config.sound_speed)
    low = p < config.p_min
    return np.where(low, config.p_min, p), int(np.count_nonzero(low))


def neighbor_pairs(state: ParticleState, config: SphConfig, backend=None):
    be = _backend.get(backend)
    return be.find_pairs(state.x, state.kind, 2.0 * config.h)


def summation_density(state: ParticleState, config: SphConfig, pairs=None, backend=None) -> np.ndarray:
    """rho_i = sum_j m_j W_ij including the self term."""
    be = _backend.get(backend)
    pi, pj = pairs if pairs is not None else neighbor_pairs(state, config, backend)
    num, _ = be.kernel_sums(state.x, state.rho, state.mass, pi, pj, config.h)
    lonely = np.setdiff1d(np.arange(state.n), np.concatenate([pi, pj]))
    if lonely.size:
        log.info("%d particles have no neighbours besides themselves (first: %d)", lonely.size, lonely[0])
    return num


def shepard_filter(state: ParticleState, config: SphConfig, pairs=None, backend=None) -> np.ndarray:
    """Zeroth-order corrected densities for bulk particles; boundary densities unchanged."""
    be = _backend.get(backend)
    pi, pj = pairs if pairs is not None else neighbor_pairs(state, config, backend)
    num, den = be.kernel_sums(state.x, state.rho, state.mass, pi, pj, config.h)
    return np.where(state.bulk, num / den, state.rho)


def continuity_rate(state: ParticleState, config: SphConfig, pairs=None, backend=None):
    """Density rate per particle and the SPH velocity gradient (n, 4)."""
    be = _backend.get(backend)
    pi, pj = pairs if pairs is not None else neighbor_pairs(state, config, backend)
    dhc = config.delta * config.h * config.sound_speed
    return be.continuity_pass(state.x, state.v, state.rho, state.mass, state.kind, pi, pj, config.h, dhc)


@dataclass
class Rates:
    acc: np.ndarray  # total acceleration, gravity included for bulk
    pair_acc: np.ndarray  # particle-interaction part only
    drho: np.ndarray
    rate: np.ndarray  # strain-rate tensor (n, 3)
    stress: np.ndarray
    inertial: np.ndarray
    n_clamped: int
    n_pairs: int


def particle_stress(state: ParticleState, grad_v, material: MaterialParams, config: SphConfig):
    p, n_clamped = pressure(state, material, config)
    d = strain_rate(grad_v)
    stress = np.empty((state.n, 3))
    stress[:, 0] = -p
    stress[:, 1] = -p
    stress[:, 2] = 0.0
    inertial = np.zeros(state.n)
    b = state.bulk
    stress[b], inertial[b] = constitutive_stress(p[b], d[b], state.strain[b], material, config.p_min)
    return stress, inertial, d, n_clamped


def momentum_rate(state: ParticleState, stress, config: SphConfig, pairs=None, backend=None) -> np.ndarray:
    """Interaction accelerations from the stress divergence and artificial viscosity (no gravity)."""
    be = _backend.get(backend)
    pi, pj = pairs if pairs is not None else neighbor_pairs(state, config, backend)
    return be.momentum_pass(state.x, state.v, state.rho, state.mass, np.ascontiguousarray(stress), pi, pj,
                            config.h, config.sound_speed, config.visc_alpha, config.visc_beta)


def evaluate_rates(state: ParticleState, material: MaterialParams, config: SphConfig, pairs=None, backend=None) -> Rates:
    pairs = pairs if pairs is not None else neighbor_pairs(state, config, backend)
    drho, grad = continuity_rate(state, config, pairs, backend)
    stress, inertial, d, n_clamped = particle_stress(state, grad, material, config)
    pair_acc = momentum_rate(state, stress, config, pairs, backend)
    acc = pair_acc.copy()
    acc[state.bulk] += np.asarray(config.gravity)
    return Rates(acc, pair_acc, drho, d, stress, inertial, n_clamped, len(pairs[0]))


@dataclass
class LegDriver:
    """Kinematic leg: body-frame particle coordinates and a pose schedule."""

    index: np.ndarray
    body: np.ndarray
    hip: np.ndarray
    schedule: KinematicSchedule

    def place(self, state: ParticleState, t: float) -> None:
        theta = self.schedule.theta(t)
        state.x[self.index] = body_to_world(self.body, self.hip, theta)
        state.v[self.index] = body_velocity(self.body, theta, self.schedule.theta_rate(t))


@dataclass
class StepDiagnostics:
    step: int
    time: float
    kinetic_energy: float
    max_speed: float
    rho_min: float
    rho_max: float
    momentum_residual: float
    n_clamped: int


class Simulation:
    """Owns a particle state and advances it with kick-drift-kick leapfrog."""

    def __init__(self, state: ParticleState, material: MaterialParams, config: SphConfig,
                 leg: Optional[LegDriver] = None, backend: Optional[str] = None):
        self.state = state
        self.material = material
        self.config = config
        self.leg = leg
        self.backend = backend
        self._rates: Optional[Rates] = None
        self.last = None
        self.cfl_warned = False

    @property
    def rates(self) -> Rates:
        if self._rates is None:
            self._rates = evaluate_rates(self.state, self.material, self.config, backend=self.backend)
        return self._rates

    def leg_force(self, rates: Optional[Rates] = None) -> np.ndarray:
        """Force of the bed on the leg per unit width, (fx, fz)."""
        r = rates or self.rates
        k = self.state.kind == LEG
        return self.state.mass[k] @ r.pair_acc[k]

    def boundary_force(self, rates: Optional[Rates] = None) -> np.ndarray:
        """Net interaction force that all boundary particles exert on the bulk."""
        r = rates or self.rates
        k = ~self.state.bulk
        return -(self.state.mass[k] @ r.pair_acc[k])

    def step(self, dt: Optional[float] = None) -> StepDiagnostics:
        s, cfg = self.state, self.config
        dt = cfg.dt if dt is None else dt
        b = s.bulk
        r0 = self.rates
        p_before = s.bulk_momentum()
        f0 = self.boundary_force(r0)

        s.v[b] += 0.5 * dt * r0.acc[b]
        s.rho += 0.5 * dt * r0.drho
        s.x[b] += dt * s.v[b]
        s.time += dt
        s.step += 1
        if self.leg is not None:
            self.leg.place(s, s.time)

        self._check_finite()
        r1 = evaluate_rates(s, self.material, cfg, backend=self.backend)
        s.v[b] += 0.5 * dt * r1.acc[b]
        s.rho += 0.5 * dt * r1.drho
        s.strain[b] += dt * r1.rate[b]
        self._rates = r1

        if cfg.shepard_interval and s.step % cfg.shepard_interval == 0:
            s.rho = shepard_filter(s, cfg, backend=self.backend)

        mass_b = float(np.sum(s.mass[b]))
        gravity_impulse = dt * mass_b * np.asarray(cfg.gravity)
        expected = 0.5 * dt * (f0 + self.boundary_force(r1)) + gravity_impulse
        scale = np.linalg.norm(gravity_impulse) or 1.0
        residual = float(np.linalg.norm(s.bulk_momentum() - p_before - expected) / scale)
        diag = self._check(residual, r1.n_clamped)
        self.last = diag
        return diag

    def _check_finite(self) -> None:
        s = self.state
        for name, arr in (("position", s.x), ("velocity", s.v), ("density", s.rho)):
            bad = ~np.isfinite(arr.reshape(s.n, -1)).all(axis=1)
            if bad.any():
                pid = int(np.argmax(bad))
                raise SimulationError(f"non-finite {name} at step {s.step} for particle {pid} (kind {s.kind[pid]})")

    def _check(self, residual: float, n_clamped: int) -> StepDiagnostics:
        s, cfg = self.state, self.config
        self._check_finite()
        speed = np.sqrt(np.sum(s.v[s.bulk] ** 2, axis=1))
        vmax = float(speed.max()) if speed.size else 0.0
        diag = StepDiagnostics(s.step, s.time, s.kinetic_energy(), vmax, float(s.rho.min()), float(s.rho.max()),
                               residual, n_clamped)
        if vmax > BLOWUP_FACTOR * cfg.sound_speed:
            pid = int(np.flatnonzero(s.bulk)[np.argmax(speed)])
            raise SimulationError(
                f"terrain blow-up at step {s.step} (t={s.time:.4f} s): |v|={vmax:.3g} m/s at particle {pid} "
                f"exceeds {BLOWUP_FACTOR:g}*c0; kinetic energy {diag.kinetic_energy:.3g} J/m, "
                f"rho in [{diag.rho_min:.1f}, {diag.rho_max:.1f}]"
            )
        if not self.cfl_warned and cfg.dt > cfg.max_dt(vmax) * (1 + 1e-12):
            log.warning("step %d: dt=%.3g exceeds CFL limit %.3g at |v|max=%.3g", s.step, cfg.dt, cfg.max_dt(vmax), vmax)
            self.cfl_warned = True
        return diag

    def run(self, n_steps: int, callback: Optional[Callable[["Simulation", StepDiagnostics], None]] = None,
            log_every: int = 1000) -> StepDiagnostics:
        diag = None
        for _ in range(n_steps):
            diag = self.step()
            if callback is not None:
                callback(self, diag)
            if log_every and diag.step % log_every == 0:
                log.debug("step %d t=%.4f ke=%.3e vmax=%.3e rho=[%.1f, %.1f]", diag.step, diag.time,
                          diag.kinetic_energy, diag.max_speed, diag.rho_min, diag.rho_max)
        return diag


def hydrostatic_state(bed: Bed, material: MaterialParams, config: SphConfig) -> ParticleState:
    """At-rest state whose EOS pressure is rho0 * g * depth below the fill surface."""
    g = abs(config.gravity[1])
    depth = np.maximum(bed.surface - bed.x[:, 1], 0.0)
    rho = material.bulk_density * (1.0 + g * depth / config.sound_speed**2)
    n = len(bed.mass)
    return ParticleState(bed.x.copy(), np.zeros((n, 2)), rho, bed.mass, bed.kind.copy(), np.zeros((n, 3)))


@dataclass
class SettledBed:
    state: ParticleState
    surface: float
    domain: Domain
    seed: int
    settle_steps: int
    kinetic_energy: float

    @property
    def width(self) -> float:
        return self.domain.width


_BED_CACHE: dict = {}


def settle_bed(material: MaterialParams, config: SphConfig, domain: Domain, seed: int = 0,
               duration: float = 0.2, ke_tol: float = 1e-6, backend: Optional[str] = None,
               use_cache: bool = True) -> SettledBed:
    """Fill the container and let it relax under gravity.

    Runs until the bulk kinetic energy per unit mass falls below ``ke_tol``
    (J/kg) after at least half of ``duration``, or until ``duration``
    elapses. Results are cached per (material, config, domain, seed).
    """
    key = (material, config, domain, seed, duration, ke_tol)
    if use_cache and key in _BED_CACHE:
        cached = _BED_CACHE[key]
        return replace(cached, state=cached.state.copy())
    bed = make_bed(domain, config.particle_spacing, material.bulk_density, seed)
    sim = Simulation(hydrostatic_state(bed, material, config), material, config, backend=backend)
    total_mass = float(np.sum(sim.state.mass[sim.state.bulk]))
    n_max = int(math.ceil(duration / config.dt))
    n_min = n_max // 2
    ke = 0.0
    for i in range(n_max):
        ke = sim.step().kinetic_energy
        if i >= n_min and ke / total_mass < ke_tol:
            break
    state = sim.state
    state.v[state.bulk] = 0.0
    state.time, state.step = 0.0, 0
    out = SettledBed(state, bed.surface, domain, seed, i + 1, ke)
    if use_cache:
        _BED_CACHE[key] = replace(out, state=state.copy())
    return out


def attach_leg(bed: SettledBed, leg: LegGeometry, schedule: KinematicSchedule, config: SphConfig,
               material: MaterialParams, layers: int = 3) -> tuple[ParticleState, LegDriver]:
    """Append leg particles to a copy of the settled bed, posed at the schedule start.

    Grains closer than one spacing to a leg particle in the start pose are
    removed, so a leg may start buried without overlapping the bed.
    """
    base = bed.state.copy()
    body = leg.boundary_particles(config.particle_spacing, layers)
    ref = bed.surface if schedule.hip_reference == "surface" else 0.0
    hip = np.array([0.5 * bed.width, ref + schedule.hip_height])
    m = len(body)
    posed = body_to_world(body, hip, schedule.theta(0.0))
    grains = np.flatnonzero(base.kind == BULK)
    dist, _ = cKDTree(posed).query(base.x[grains])
    drop = grains[dist < config.particle_spacing]
    if len(drop):
        log.info("removing %d grains overlapping the leg start pose", len(drop))
        base = base.subset(np.setdiff1d(np.arange(base.n), drop))
    leg_mass = material.bulk_density * (0.5 * config.particle_spacing) ** 2
    state = ParticleState(
        np.vstack([base.x, np.zeros((m, 2))]),
        np.vstack([base.v, np.zeros((m, 2))]),
        np.concatenate([base.rho, np.full(m, material.bulk_density)]),
        np.concatenate([base.mass, np.full(m, leg_mass)]),
        np.concatenate([base.kind, np.full(m, LEG, np.int8)]),
        np.vstack([base.strain, np.zeros((m, 3))]),
    )
    driver = LegDriver(np.arange(base.n, base.n + m), body, hip, schedule)
    driver.place(state, 0.0)
    return state, driver


@dataclass
class LegRun:
    """Time history of a leg run; forces are window means over ``sample_stride`` steps."""

    time: np.ndarray
    theta: np.ndarray
    fx: np.ndarray
    fz: np.ndarray
    rotating: np.ndarray
    diagnostics: list = field(default_factory=list)
    max_momentum_residual: float = 0.0
    steps: int = 0


def simulate_leg(bed: SettledBed, leg: LegGeometry, material: MaterialParams, config: SphConfig,
                 schedule: KinematicSchedule, sample_stride: int = 10, hold_duration: float = 0.0,
                 backend: Optional[str] = None, log_every: int = 0) -> LegRun:
    """Pause, sweep, then hold the leg for ``hold_duration``; record window-mean forces."""
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    state, driver = attach_leg(bed, leg, schedule, config, material)
    sim = Simulation(state, material, config, driver, backend)
    total = schedule.pause_duration + hold_duration
    if schedule.angular_speed > 0:
        total += schedule.rotation_duration
    elif hold_duration == 0:
        raise ValueError("a non-rotating schedule needs a hold duration")
    n_steps = int(math.ceil(total / config.dt - 1e-9))
    times, thetas, fxs, fzs, rot = [], [], [], [], []
    acc_f = np.zeros(2)
    acc_t = acc_th = 0.0
    count = 0
    worst = 0.0
    diags = []
    for _ in range(n_steps):
        d = sim.step()
        worst = max(worst, d.momentum_residual)
        acc_f += sim.leg_force()
        acc_t += sim.state.time
        acc_th += schedule.theta(sim.state.time)
        count += 1
        if count == sample_stride:
            t_mid = acc_t / count
            times.append(t_mid)
            thetas.append(acc_th / count)
            fxs.append(acc_f[0] / count)
            fzs.append(acc_f[1] / count)
            rot.append(schedule.theta_rate(t_mid) != 0.0)
            acc_f[:] = 0.0
            acc_t = acc_th = 0.0
            count = 0
        if log_every and d.step % log_every == 0:
            diags.append(d)
            log.debug("step %d t=%.4f theta=%.4f ke=%.3e vmax=%.3e", d.step, d.time,
                      schedule.theta(d.time), d.kinetic_energy, d.max_speed)
    return LegRun(np.array(times), np.array(thetas), np.array(fxs), np.array(fzs), np.array(rot, dtype=bool),
                  diags, worst, n_steps)


def run_leg_rotation(material: MaterialParams, config: SphConfig, leg: LegGeometry, schedule: KinematicSchedule,
                     sample_stride: int = 10, *, bed: Optional[SettledBed] = None, domain: Optional[Domain] = None,
                     seed: int = 0, n_theta: int = 128, metadata: Optional[dict] = None,
                     backend: Optional[str] = None):
    """Simulate one sweep and return the force trace resampled on a uniform angle grid."""
    from ..trace import ForceTrace, theta_grid

    if schedule.angular_speed <= 0:
        raise ValueError("run_leg_rotation needs a positive angular speed")
    if bed is None:
        bed = settle_bed(material, config, domain or Domain(), seed, backend=backend)
    run = simulate_leg(bed, leg, material, config, schedule, sample_stride, backend=backend)
    keep = run.rotating
    th, fx, fz = run.theta[keep], run.fx[keep], run.fz[keep]
    if not schedule.clockwise:
        th, fx, fz = th[::-1], fx[::-1], fz[::-1]
    lo, hi = sorted((schedule.theta_start, schedule.theta_end))
    # window means sit half a window inside the sweep; extend to the ends by holding the edge value
    grid = theta_grid(n_theta, lo, hi)
    meta = {
        "design": leg.design_id,
        "morphology": leg.morphology,
        "foot_fraction": leg.foot_fraction,
        "omega": schedule.angular_speed,
        "clockwise": schedule.clockwise,
        "seed": bed.seed,
        "source": "simulation",
        "steps": run.steps,
        "max_momentum_residual": run.max_momentum_residual,
    }
    meta.update(metadata or {})
    return ForceTrace(grid, np.interp(grid, th, fx), np.interp(grid, th, fz), meta)

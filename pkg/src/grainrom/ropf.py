"""Bootstrap particle filter over reduced (Tucker) coefficients.

The filter state is the flattened coefficient matrix alpha (r2 x r3) of a
single scenario. A measurement of behavior ``b`` at angle ``theta`` is the
linear functional ``sum_jk alpha_jk V[b, j] W~(theta)[k]``, so each update
costs O(N * p) no matter how long the full force trace is.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import FilterDegeneracyError

log = logging.getLogger(__name__)

LOG_TINY = math.log(np.finfo(float).tiny)


class Observation(NamedTuple):
    theta: float
    behavior: str
    value: float


@dataclass(frozen=True)
class ParticleEnsemble:
    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.array(self.particles, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        w = np.array(self.weights, dtype=float)
        if p.shape[0] < 1 or w.shape != (p.shape[0],):
            raise ValueError(f"need N >= 1 particles with one weight each, got {p.shape} / {w.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to one")
        p.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def var(self) -> np.ndarray:
        d = self.particles - self.mean()
        return self.weights @ (d * d)


class MeasurementModel:
    """Maps a coefficient vector to predicted measurements.

    ``row_fn(theta, behavior)`` returns the length-``p`` row ``h`` with
    ``prediction = h @ alpha``. ``reconstruct_fn(alpha)``, when given, returns
    the full ``(J, T)`` trace for a coefficient vector.
    """

    def __init__(
        self,
        row_fn: Callable[[float, str], np.ndarray],
        n_params: int,
        measurement_noise_std,
        process_noise_std,
        reconstruct_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.row_fn = row_fn
        self.n_params = int(n_params)
        if isinstance(measurement_noise_std, dict):
            self.measurement_noise_std = {k: float(v) for k, v in measurement_noise_std.items()}
        else:
            self.measurement_noise_std = {None: float(measurement_noise_std)}
        if any(not s > 0 for s in self.measurement_noise_std.values()):
            raise ValueError("measurement noise std must be positive")
        q = np.broadcast_to(np.asarray(process_noise_std, dtype=float), (self.n_params,)).copy()
        if np.any(q < 0):
            raise ValueError("process noise std must be non-negative")
        self.process_noise_std = q
        self.reconstruct_fn = reconstruct_fn

    @classmethod
    def from_basis(
        cls,
        theta_grid,
        behavior_basis,
        temporal_basis,
        measurement_noise_std,
        process_noise_std,
        behaviors: Sequence[str] = ("fx", "fz"),
    ) -> "MeasurementModel":
        """Measurement model for traces ``V @ alpha @ W~.T`` on ``theta_grid``.

        Off-grid angles use linear interpolation of the rows of ``W~``.
        """
        grid = np.asarray(theta_grid, dtype=float)
        v = np.asarray(behavior_basis, dtype=float)
        w = np.asarray(temporal_basis, dtype=float)
        index = {b: i for i, b in enumerate(behaviors)}
        r2, r3 = v.shape[1], w.shape[1]

        def row(theta, behavior):
            wt = np.array([np.interp(theta, grid, w[:, k]) for k in range(r3)])
            return np.kron(v[index[behavior]], wt)

        def reconstruct(alpha):
            return v @ np.asarray(alpha, dtype=float).reshape(r2, r3) @ w.T

        return cls(row, r2 * r3, measurement_noise_std, process_noise_std, reconstruct)

    def noise_std(self, behavior) -> float:
        if behavior in self.measurement_noise_std:
            return self.measurement_noise_std[behavior]
        return self.measurement_noise_std[None]

    def row(self, theta: float, behavior) -> np.ndarray:
        return np.asarray(self.row_fn(theta, behavior), dtype=float)


@dataclass
class AssimilationResult:
    posterior_mean: np.ndarray
    posterior_cov_diag: np.ndarray
    updated_trace: Optional[np.ndarray]
    ess_history: list = field(default_factory=list)
    resample_steps: list = field(default_factory=list)
    step_means: list = field(default_factory=list)


def initialize(prior_mean, prior_std, n_particles: int, seed: int) -> ParticleEnsemble:
    mean = np.asarray(prior_mean, dtype=float).ravel()
    std = np.broadcast_to(np.asarray(prior_std, dtype=float), mean.shape)
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if np.any(std < 0):
        raise ValueError("prior std must be non-negative")
    rng = np.random.default_rng(seed)
    particles = mean + std * rng.standard_normal((n_particles, mean.size))
    return ParticleEnsemble(particles, np.full(n_particles, 1.0 / n_particles))


def update_weights(e: ParticleEnsemble, observation, m: MeasurementModel) -> ParticleEnsemble:
    """Reweight by the Gaussian likelihood of one scalar observation."""
    theta, behavior, value = observation
    sigma = m.noise_std(behavior)
    pred = e.particles @ m.row(theta, behavior)
    loglik = -0.5 * ((value - pred) / sigma) ** 2
    if not np.max(loglik) > LOG_TINY:
        raise FilterDegeneracyError(
            f"every particle likelihood underflows for observation {behavior}={value:g} at "
            f"theta={theta:g}: nearest prediction is {np.min(np.abs(value - pred)) / sigma:.1f} "
            "noise std away"
        )
    with np.errstate(divide="ignore"):
        logw = np.log(e.weights) + loglik
    logw -= np.max(logw)
    w = np.exp(logw)
    return ParticleEnsemble(e.particles, w / w.sum())


def effective_sample_size(e: ParticleEnsemble) -> float:
    return float(1.0 / np.sum(e.weights * e.weights))


def systematic_indices(weights: np.ndarray, u0: float) -> np.ndarray:
    n = weights.shape[0]
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    positions = (u0 + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, positions, side="right"), n - 1)


def resample_systematic(e: ParticleEnsemble, seed: int) -> ParticleEnsemble:
    """Systematic resampling with one seeded uniform offset; weights reset to 1/N."""
    u0 = np.random.default_rng(seed).uniform()
    idx = systematic_indices(e.weights, u0)
    return ParticleEnsemble(e.particles[idx], np.full(e.n, 1.0 / e.n))


def propagate(e: ParticleEnsemble, process_noise_std: np.ndarray, rng: np.random.Generator) -> ParticleEnsemble:
    """Random-walk step: add independent Gaussian noise to every coordinate."""
    noise = rng.standard_normal(e.particles.shape) * process_noise_std
    return ParticleEnsemble(e.particles + noise, e.weights)


def assimilate(
    prior_mean,
    prior_std,
    observations: Sequence,
    m: MeasurementModel,
    n_particles: int = 1000,
    ess_threshold_fraction: float = 0.5,
    seed: int = 0,
) -> AssimilationResult:
    """Run the filter over observations sorted by angle.

    Observations sharing an angle form one assimilation step: one
    propagation, then one weight update per observation. Resampling happens
    when ESS drops below ``ess_threshold_fraction * N``.
    """
    prior_mean = np.asarray(prior_mean, dtype=float).ravel()
    prior_std = np.broadcast_to(np.asarray(prior_std, dtype=float), prior_mean.shape)
    obs = [Observation(float(o[0]), o[1], float(o[2])) for o in observations]
    if any(b.theta < a.theta for a, b in zip(obs, obs[1:])):
        raise ValueError("observations must be sorted by angle")
    if n_particles < 2:
        raise ValueError("assimilation needs at least two particles")

    def trace_of(alpha):
        return None if m.reconstruct_fn is None else m.reconstruct_fn(alpha)

    if not obs:
        return AssimilationResult(prior_mean.copy(), prior_std**2, trace_of(prior_mean))

    rng = np.random.default_rng(seed)
    ens = initialize(prior_mean, prior_std, n_particles, int(rng.integers(2**63)))
    result = AssimilationResult(prior_mean, prior_std**2, None)
    step = 0
    i = 0
    while i < len(obs):
        j = i
        while j < len(obs) and obs[j].theta == obs[i].theta:
            j += 1
        ens = propagate(ens, m.process_noise_std, rng)
        for o in obs[i:j]:
            ens = update_weights(ens, o, m)
        ess = effective_sample_size(ens)
        result.ess_history.append(ess)
        result.step_means.append(ens.mean())
        resample_seed = int(rng.integers(2**63))
        if ess < ess_threshold_fraction * ens.n:
            ens = resample_systematic(ens, resample_seed)
            result.resample_steps.append(step)
        log.debug("step %d theta=%.4f ess=%.1f", step, obs[i].theta, ess)
        step += 1
        i = j

    result.posterior_mean = ens.mean()
    result.posterior_cov_diag = ens.var()
    result.updated_trace = trace_of(result.posterior_mean)
    return result


def estimate_noise_std(values) -> float:
    """High-frequency noise level from second differences, which cancel any
    locally linear signal; white noise of std s gives differences of std s*sqrt(6)."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("need at least three samples to estimate measurement noise")
    return float(np.std(np.diff(v, 2)) / math.sqrt(6.0))

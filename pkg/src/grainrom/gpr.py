"""Scalar Gaussian process regression with a squared-exponential kernel.

Inputs are standardized per dimension and targets centered before fitting;
hyperparameters (signal variance, per-dimension length scales, optionally the
noise variance) are chosen by multi-start Nelder-Mead on the log marginal
likelihood.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import GPFitError

Z95 = 1.959964
JITTER_LEVELS = (0.0, 1e-8, 1e-7, 1e-6)
#: an unjittered factor is rejected when a squared pivot falls below this * trace/n
PIVOT_FLOOR = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    length_scales: tuple
    noise_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(x) for x in self.length_scales))
        if not self.signal_variance > 0:
            raise ValueError(f"signal variance must be positive, got {self.signal_variance}")
        if not all(ell > 0 for ell in self.length_scales):
            raise ValueError(f"length scales must be positive, got {self.length_scales}")
        if not self.noise_variance >= 0:
            raise ValueError(f"noise variance must be non-negative, got {self.noise_variance}")


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def ci95(self) -> tuple[float, float]:
        half = Z95 * self.std
        return self.mean - half, self.mean + half


def se_kernel(a: np.ndarray, b: np.ndarray, signal_variance: float, length_scales) -> np.ndarray:
    """k(a, b) = s2 * exp(-0.5 * sum_i (a_i - b_i)^2 / l_i^2) for row sets a, b."""
    ell = np.asarray(length_scales, dtype=float)
    diff = (a[:, None, :] - b[None, :, :]) / ell
    return signal_variance * np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def _cholesky_with_jitter(k: np.ndarray, noise: float):
    n = k.shape[0]
    scale = float(np.trace(k)) / n
    last = None
    for level in JITTER_LEVELS:
        jitter = level * scale
        try:
            factor = np.linalg.cholesky(k + (noise + jitter) * np.eye(n))
        except np.linalg.LinAlgError as exc:
            last = exc
            continue
        if level == 0.0 and np.min(np.diag(factor)) ** 2 < PIVOT_FLOOR * scale:
            last = "numerically singular without jitter"
            continue
        return factor, jitter
    raise GPFitError(
        f"kernel matrix not positive definite after jitter {JITTER_LEVELS[-1]:g}*trace/n "
        f"(n={n}, noise={noise:g}): {last}"
    )


class GPModel:
    """A conditioned GP: standardized training data plus a cached Cholesky factor.

    Build one with :func:`fit`, or with :meth:`condition` when the
    hyperparameters are already known.
    """

    def __init__(self, inputs, targets, params: KernelParams, x_mean, x_std, target_offset):
        self.inputs = np.array(inputs, dtype=float)
        self.targets = np.array(targets, dtype=float)
        self.params = params
        self.x_mean = np.array(x_mean, dtype=float)
        self.x_std = np.array(x_std, dtype=float)
        self.target_offset = float(target_offset)
        k = se_kernel(self.inputs, self.inputs, params.signal_variance, params.length_scales)
        self.factor, self.jitter = _cholesky_with_jitter(k, params.noise_variance)
        self._alpha = cho_solve((self.factor, True), self.targets)
        self._factor_inv = solve_triangular(self.factor, np.eye(len(self.targets)), lower=True)
        for a in (self.inputs, self.targets, self.x_mean, self.x_std, self.factor):
            a.flags.writeable = False

    @classmethod
    def condition(cls, inputs, targets, params: KernelParams, standardize: bool = True) -> "GPModel":
        x, y = _validate(inputs, targets)
        if standardize:
            mean, std = _standardizer(x)
            offset = float(np.mean(y))
        else:
            mean, std, offset = np.zeros(x.shape[1]), np.ones(x.shape[1]), 0.0
        return cls((x - mean) / std, y - offset, params, mean, std, offset)

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def raw_length_scales(self) -> np.ndarray:
        """Length scales in the units of the original inputs."""
        return np.asarray(self.params.length_scales) * self.x_std

    @property
    def raw_inputs(self) -> np.ndarray:
        return self.inputs * self.x_std + self.x_mean

    def predict_many(self, x_star, include_noise: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances at each row of ``x_star``."""
        xs = np.atleast_2d(np.asarray(x_star, dtype=float))
        if xs.shape[1] != self.dim:
            raise ValueError(f"expected inputs of dimension {self.dim}, got {xs.shape[1]}")
        if not np.all(np.isfinite(xs)):
            raise ValueError("prediction inputs must be finite")
        z = (xs - self.x_mean) / self.x_std
        ks = se_kernel(z, self.inputs, self.params.signal_variance, self.params.length_scales)
        # elementwise products + last-axis sums keep batch and single results bit-identical
        mean = self.target_offset + np.sum(ks * self._alpha, axis=-1)
        v = np.sum(ks[:, None, :] * self._factor_inv[None, :, :], axis=-1)
        var = np.maximum(self.params.signal_variance - np.sum(v * v, axis=-1), 0.0)
        if include_noise:
            var = var + self.params.noise_variance
        return mean, var

    def predict(self, x_star, include_noise: bool = False) -> PredictiveDistribution:
        xs = np.asarray(x_star, dtype=float).reshape(1, -1)
        mean, var = self.predict_many(xs, include_noise)
        return PredictiveDistribution(float(mean[0]), float(var[0]))

    def log_marginal_likelihood(self) -> float:
        return _lml_from_factor(self.factor, self.targets, self._alpha)

    def factor_digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.factor).tobytes()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "target_offset": self.target_offset,
            "inputs": self.inputs.tolist(),
            "targets": self.targets.tolist(),
            "signal_variance": self.params.signal_variance,
            "length_scales": list(self.params.length_scales),
            "noise_variance": self.params.noise_variance,
            "factor_sha256": self.factor_digest(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GPModel":
        params = KernelParams(d["signal_variance"], tuple(d["length_scales"]), d["noise_variance"])
        model = cls(d["inputs"], d["targets"], params, d["x_mean"], d["x_std"], d["target_offset"])
        expected = d.get("factor_sha256")
        if expected is not None and model.factor_digest() != expected:
            raise GPFitError("reloaded GP factor differs from the saved one")
        return model


def _lml_from_factor(factor: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    n = y.shape[0]
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(factor))) - 0.5 * n * LOG_2PI)


def _validate(inputs, targets) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] == 0:
        raise ValueError("cannot fit a GP to zero samples")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("GP inputs and targets must be finite")
    return x, y


def _standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.mean(x, axis=0)
    std = np.std(x, axis=0)
    std[std == 0] = 1.0
    return mean, std


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [y] + [x[:, i] for i in range(x.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _negative_lml(logp: np.ndarray, x: np.ndarray, y: np.ndarray, pinned_noise) -> float:
    d = x.shape[1]
    sf2 = math.exp(logp[0])
    ell = np.exp(logp[1 : 1 + d])
    noise = pinned_noise if pinned_noise is not None else math.exp(logp[1 + d])
    k = se_kernel(x, x, sf2, ell)
    try:
        factor, _ = _cholesky_with_jitter(k, noise)
    except GPFitError:
        return np.inf
    alpha = cho_solve((factor, True), y)
    return -_lml_from_factor(factor, y, alpha)


def fit(
    inputs,
    targets,
    restarts: int = 8,
    seed: int = 0,
    noise_variance: Optional[float] = None,
    max_iter: int = 500,
    tol: float = 1e-9,
) -> GPModel:
    """Fit a GP by maximizing the log marginal likelihood.

    ``noise_variance=None`` fits the noise level; a number pins it. Restarts
    are drawn from a generator seeded with ``seed``, so refits with the same
    data and seed are bit-identical. Training rows are put in a canonical
    order first, which makes the result independent of row order.
    """
    x, y = _validate(inputs, targets)
    order = _canonical_order(x, y)
    x, y = x[order], y[order]
    if noise_variance is not None and noise_variance == 0:
        _check_consistent_duplicates(x, y)
    mean, std = _standardizer(x)
    z = (x - mean) / std
    offset = float(np.mean(y))
    yc = y - offset
    n, d = z.shape

    var_y = float(np.var(yc))
    log_v = math.log(var_y) if var_y > 0 else 0.0
    lo = [log_v - 15.0] + [math.log(1e-3)] * d
    hi = [log_v + 15.0] + [math.log(1e3)] * d
    start0 = [log_v] + [0.0] * d
    if noise_variance is None:
        lo.append(log_v - 25.0)
        hi.append(log_v + 5.0)
        start0.append(log_v + math.log(1e-2))
    lo, hi = np.array(lo), np.array(hi)

    rng = np.random.default_rng(seed)
    starts = [np.array(start0)]
    for _ in range(max(restarts, 1) - 1):
        s = [log_v + rng.uniform(-2.0, 2.0)] + list(rng.uniform(math.log(0.1), math.log(10.0), d))
        if noise_variance is None:
            s.append(log_v + rng.uniform(-12.0, -2.0))
        starts.append(np.clip(np.array(s), lo, hi))

    best_x, best_f = None, np.inf
    for s in starts:
        res = minimize(
            _negative_lml,
            s,
            args=(z, yc, noise_variance),
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={"maxiter": max_iter, "fatol": tol, "xatol": 1e-6},
        )
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
    if best_x is None:
        raise GPFitError(f"no hyperparameter start produced a positive-definite kernel (n={n})")

    noise = noise_variance if noise_variance is not None else math.exp(best_x[1 + d])
    params = KernelParams(math.exp(best_x[0]), tuple(np.exp(best_x[1 : 1 + d])), noise)
    return GPModel(z, yc, params, mean, std, offset)


def _check_consistent_duplicates(x: np.ndarray, y: np.ndarray) -> None:
    _, first, inverse = np.unique(x, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    if np.any(y != y[first][inverse]):
        raise ValueError("duplicate inputs with conflicting targets need a non-zero noise variance")

"""Per-design surrogate: Tucker basis over (condition, behavior, angle) plus one GP
per reduced coefficient, with speed as the GP input."""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import gpr
from ..errors import ValidationError
from ..tensor import DEFAULT_THRESHOLDS, TuckerDecomp, st_hosvd
from ..trace import ForceTrace, atomic_write
from .data import BEHAVIORS, SCHEMA_VERSION, DatasetManifest

log = logging.getLogger(__name__)

MIN_TRAIN_CONDITIONS = 3
MIN_CV_CONDITIONS = 4


@dataclass
class Block:
    """One decomposition: all behaviors jointly, or a single behavior."""

    behaviors: tuple
    decomp: TuckerDecomp
    gps: list  # row-major over (operation mode j, temporal mode k)

    @property
    def behavior_basis(self) -> np.ndarray:
        return self.decomp.factors[1]

    @property
    def temporal_basis(self) -> np.ndarray:
        return self.decomp.factors[2]

    @property
    def n_coefficients(self) -> int:
        return self.decomp.ranks[1] * self.decomp.ranks[2]

    def coefficients(self) -> np.ndarray:
        """Training coefficients alpha, shape (I, r2, r3)."""
        core = self.decomp.core
        u = self.decomp.factors[0]
        return np.einsum("ia,ajk->ijk", u, core)


@dataclass
class TrainedModel:
    design: str
    conditions: np.ndarray
    theta: np.ndarray
    blocks: list
    thresholds: tuple = DEFAULT_THRESHOLDS
    behaviors: tuple = BEHAVIORS
    meta: dict = field(default_factory=dict)

    @property
    def n_coefficients(self) -> int:
        return sum(b.n_coefficients for b in self.blocks)

    def _block_of(self, behavior: str):
        for b in self.blocks:
            if behavior in b.behaviors:
                return b
        raise KeyError(f"unknown behavior {behavior!r}")

    def coefficient_gps(self) -> list:
        return [gp for b in self.blocks for gp in b.gps]

    def measurement_row(self, theta: float, behavior: str) -> np.ndarray:
        """Linear map from the flat coefficient vector to one force value."""
        row = np.zeros(self.n_coefficients)
        start = 0
        for b in self.blocks:
            if behavior in b.behaviors:
                w = b.temporal_basis
                wt = np.array([np.interp(theta, self.theta, w[:, k]) for k in range(w.shape[1])])
                v = b.behavior_basis[b.behaviors.index(behavior)]
                row[start:start + b.n_coefficients] = np.kron(v, wt)
            start += b.n_coefficients
        return row

    def reconstruct(self, coef) -> np.ndarray:
        """(J, T) trace values for a flat coefficient vector."""
        coef = np.asarray(coef, dtype=float)
        out = np.zeros((len(self.behaviors), self.theta.size))
        start = 0
        for b in self.blocks:
            r2, r3 = b.decomp.ranks[1], b.decomp.ranks[2]
            alpha = coef[start:start + r2 * r3].reshape(r2, r3)
            vals = b.behavior_basis @ alpha @ b.temporal_basis.T
            for i, name in enumerate(b.behaviors):
                out[self.behaviors.index(name)] = vals[i]
            start += r2 * r3
        return out

    def reconstruct_variance(self, coef_var) -> np.ndarray:
        """Pointwise variance of the trace for independent coefficient variances."""
        coef_var = np.asarray(coef_var, dtype=float)
        out = np.zeros((len(self.behaviors), self.theta.size))
        start = 0
        for b in self.blocks:
            r2, r3 = b.decomp.ranks[1], b.decomp.ranks[2]
            var = coef_var[start:start + r2 * r3].reshape(r2, r3)
            vals = (b.behavior_basis**2) @ var @ (b.temporal_basis**2).T
            for i, name in enumerate(b.behaviors):
                out[self.behaviors.index(name)] = vals[i]
            start += r2 * r3
        return out

    def coefficient_prior(self, omega: float) -> tuple[np.ndarray, np.ndarray]:
        """GP predictive means and variances of all coefficients at ``omega``."""
        gps = self.coefficient_gps()
        if not gps:
            return np.zeros(0), np.zeros(0)
        x = np.array([[float(omega)]])
        mv = [gp.predict_many(x) for gp in gps]
        return np.array([m[0] for m, _ in mv]), np.array([v[0] for _, v in mv])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "trained_model",
            "design": self.design,
            "conditions": self.conditions.tolist(),
            "theta_grid": self.theta.tolist(),
            "thresholds": list(self.thresholds),
            "behaviors": list(self.behaviors),
            "meta": self.meta,
            "blocks": [
                {"behaviors": list(b.behaviors), "decomp": b.decomp.to_dict(), "gps": [g.to_dict() for g in b.gps]}
                for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") != "trained_model":
            raise ValidationError("not a trained model file of a supported schema_version")
        blocks = [
            Block(tuple(b["behaviors"]), TuckerDecomp.from_dict(b["decomp"]), [gpr.GPModel.from_dict(g) for g in b["gps"]])
            for b in d["blocks"]
        ]
        return cls(d["design"], np.asarray(d["conditions"], dtype=float), np.asarray(d["theta_grid"], dtype=float),
                   blocks, tuple(d["thresholds"]), tuple(d["behaviors"]), d.get("meta", {}))

    def save(self, path) -> None:
        atomic_write(path, json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class Prediction:
    trace: ForceTrace
    std: np.ndarray  # (J, T)

    @property
    def lower(self) -> np.ndarray:
        return self.trace.values() - gpr.Z95 * self.std

    @property
    def upper(self) -> np.ndarray:
        return self.trace.values() + gpr.Z95 * self.std


def assemble_tensor(manifest: DatasetManifest, design: str) -> tuple[np.ndarray, np.ndarray]:
    """Conditions (sorted) and the (I, J, T) tensor of one design's simulation records."""
    records = manifest.for_design(design)
    omegas = np.array([r.omega for r in records])
    if len(np.unique(omegas)) != len(omegas):
        raise ValidationError(f"design {design!r} has repeated conditions")
    if not records:
        return omegas, np.zeros((0, len(manifest.behaviors), manifest.theta.size))
    t = np.stack([np.vstack([r.trace.behavior(b) for b in manifest.behaviors]) for r in records])
    return omegas, t


def _fit_one(args):
    omegas, targets, noise, seed, restarts = args
    return gpr.fit(omegas[:, None], targets, restarts=restarts, seed=seed, noise_variance=noise)


def fit_tensor(omegas, tensor, theta, design: str, thresholds=DEFAULT_THRESHOLDS, behaviors=BEHAVIORS,
               per_behavior: bool = False, noise_variance: Optional[float] = None, seed: int = 0,
               restarts: int = 8, threads: int = 1) -> TrainedModel:
    omegas = np.asarray(omegas, dtype=float)
    tensor = np.asarray(tensor, dtype=float)
    if omegas.size < MIN_TRAIN_CONDITIONS:
        raise ValidationError(
            f"design {design!r} has {omegas.size} conditions; training needs at least {MIN_TRAIN_CONDITIONS}")
    groups = [(i,) for i in range(len(behaviors))] if per_behavior else [tuple(range(len(behaviors)))]
    decomps, jobs = [], []
    for g in groups:
        d = st_hosvd(tensor[:, list(g), :], thresholds)
        alpha = np.einsum("ia,ajk->ijk", d.factors[0], d.core)
        decomps.append(d)
        for j in range(alpha.shape[1]):
            for k in range(alpha.shape[2]):
                jobs.append((omegas, alpha[:, j, k], noise_variance, seed, restarts))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            gps = list(pool.map(_fit_one, jobs))
    else:
        gps = [_fit_one(j) for j in jobs]
    blocks, start = [], 0
    for g, d in zip(groups, decomps):
        n = d.ranks[1] * d.ranks[2]
        blocks.append(Block(tuple(behaviors[i] for i in g), d, gps[start:start + n]))
        start += n
    log.info("trained %s on %d conditions: ranks %s, %d GPs", design, omegas.size,
             [b.decomp.ranks for b in blocks], len(gps))
    return TrainedModel(design, omegas, np.asarray(theta, dtype=float), blocks, tuple(thresholds), tuple(behaviors),
                        {"per_behavior": per_behavior, "noise_variance": noise_variance, "seed": seed})


def train(manifest: DatasetManifest, design: str, thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
          per_behavior: bool = False, noise_variance: Optional[float] = None, seed: int = 0,
          restarts: int = 8, threads: int = 1, exclude: Sequence[float] = ()) -> TrainedModel:
    """Decompose one design's condition ensemble and fit the coefficient GPs.

    ``noise_variance=None`` lets each GP learn its noise level; ``0.0`` makes
    them interpolate the training coefficients.
    """
    omegas, tensor = assemble_tensor(manifest, design)
    keep = ~np.isin(omegas, np.asarray(exclude, dtype=float))
    return fit_tensor(omegas[keep], tensor[keep], manifest.theta, design, thresholds, manifest.behaviors,
                      per_behavior, noise_variance, seed, restarts, threads)


def predict(model: TrainedModel, omega: float) -> Prediction:
    """Predicted trace at speed ``omega`` with pointwise GP standard deviations."""
    lo, hi = float(model.conditions.min()), float(model.conditions.max())
    half = hi - lo
    if not (lo - 0.5 * half <= omega <= hi + 0.5 * half):
        warnings.warn(f"omega={omega:g} is outside twice the training range [{lo:g}, {hi:g}]; extrapolating",
                      stacklevel=2)
    mean, var = model.coefficient_prior(omega)
    vals = model.reconstruct(mean)
    std = np.sqrt(model.reconstruct_variance(var))
    meta = {"design": model.design, "omega": float(omega), "source": "prediction"}
    trace = ForceTrace(model.theta, vals[model.behaviors.index("fx")], vals[model.behaviors.index("fz")], meta)
    return Prediction(trace, std)


def relative_absolute_error(pred: ForceTrace, ref: ForceTrace) -> dict:
    """Mean |pred - ref| over angle divided by max |ref|, per behavior."""
    if not np.array_equal(pred.theta, ref.theta):
        raise ValidationError("traces must share the same angle grid")
    out = {}
    for b in ("fx", "fz"):
        r = ref.behavior(b)
        peak = float(np.max(np.abs(r)))
        if peak == 0.0:
            raise ValidationError(f"reference {b} is identically zero; relative error undefined")
        out[b] = float(np.mean(np.abs(pred.behavior(b) - r)) / peak)
    return out


@dataclass
class Fold:
    omega: float
    errors: dict
    edge: bool

    @property
    def mean_error(self) -> float:
        return float(np.mean(list(self.errors.values())))


@dataclass
class CrossValReport:
    design: str
    folds: list

    @property
    def mean_error(self) -> float:
        return float(np.mean([f.mean_error for f in self.folds]))

    @property
    def edge_mean(self) -> float:
        return float(np.mean([f.mean_error for f in self.folds if f.edge]))

    @property
    def interior_mean(self) -> float:
        return float(np.mean([f.mean_error for f in self.folds if not f.edge]))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "crossval_report",
            "design": self.design,
            "error_metric": "mean |pred - ref| / max |ref| per behavior",
            "folds": [{"omega": f.omega, "errors": f.errors, "mean_error": f.mean_error, "edge": f.edge}
                      for f in self.folds],
            "mean_error": self.mean_error,
            "edge_mean_error": self.edge_mean,
            "interior_mean_error": self.interior_mean,
        }


def crossval_loo(manifest: DatasetManifest, design: str, thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                 threads: int = 1, **train_kwargs) -> CrossValReport:
    """Leave-one-condition-out: train on the rest, score the held-out trace."""
    omegas, tensor = assemble_tensor(manifest, design)
    if omegas.size < MIN_CV_CONDITIONS:
        raise ValidationError(f"cross-validation needs at least {MIN_CV_CONDITIONS} conditions, got {omegas.size}")
    theta = manifest.theta
    fx_i, fz_i = manifest.behaviors.index("fx"), manifest.behaviors.index("fz")

    def fold(i):
        keep = np.arange(omegas.size) != i
        model = fit_tensor(omegas[keep], tensor[keep], theta, design, thresholds, manifest.behaviors, **train_kwargs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pred = predict(model, omegas[i]).trace
        ref = ForceTrace(theta, tensor[i, fx_i], tensor[i, fz_i])
        edge = bool(omegas[i] == omegas.min() or omegas[i] == omegas.max())
        return Fold(float(omegas[i]), relative_absolute_error(pred, ref), edge)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            folds = list(pool.map(fold, range(omegas.size)))
    else:
        folds = [fold(i) for i in range(omegas.size)]
    return CrossValReport(design, folds)

"""Trace datasets: records indexed by (design, condition) on a shared angle grid."""

from __future__ import annotations

import glob
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..trace import DEFAULT_T, ForceTrace, atomic_write, sidecar_path, theta_grid

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BEHAVIORS = ("fx", "fz")
SOURCES = ("simulation", "experiment")


def design_id(morphology: str, foot_fraction: Optional[float] = None) -> str:
    if foot_fraction is None:
        return morphology
    return f"{morphology}:fl={float(foot_fraction):.3f}"


def parse_design(design: str) -> tuple[str, Optional[float]]:
    if ":fl=" in design:
        morph, fl = design.split(":fl=", 1)
        return morph, float(fl)
    return design, None


@dataclass
class ScenarioRecord:
    design: str
    omega: float
    trace: ForceTrace
    source: str = "simulation"
    leg_length: float = 0.04

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValidationError(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if not math.isfinite(self.omega) or self.omega < 0:
            raise ValidationError(f"condition omega must be finite and non-negative, got {self.omega}")

    @property
    def morphology(self) -> str:
        return parse_design(self.design)[0]

    @property
    def foot_fraction(self) -> Optional[float]:
        return parse_design(self.design)[1]

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "omega": self.omega,
            "source": self.source,
            "leg_length": self.leg_length,
            "theta": self.trace.theta.tolist(),
            "fx": self.trace.fx.tolist(),
            "fz": self.trace.fz.tolist(),
            "metadata": self.trace.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioRecord":
        trace = ForceTrace(d["theta"], d["fx"], d["fz"], d.get("metadata", {}))
        return cls(d["design"], float(d["omega"]), trace, d.get("source", "simulation"), float(d.get("leg_length", 0.04)))


@dataclass
class DatasetManifest:
    theta: np.ndarray = field(default_factory=theta_grid)
    records: list = field(default_factory=list)
    behaviors: tuple = BEHAVIORS

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        seen = set()
        for r in self.records:
            self._check(r, seen)

    def _check(self, r: ScenarioRecord, seen: set) -> None:
        key = (r.design, r.omega, r.source)
        if key in seen:
            raise ValidationError(f"duplicate record for design {r.design!r} at omega={r.omega:g} ({r.source})")
        seen.add(key)
        if r.source == "simulation" and not np.array_equal(r.trace.theta, self.theta):
            raise ValidationError(f"simulation record {r.design!r} at omega={r.omega:g} is not on the manifest grid")

    def add(self, r: ScenarioRecord) -> None:
        self._check(r, {(q.design, q.omega, q.source) for q in self.records})
        self.records.append(r)

    def designs(self) -> list:
        return sorted({r.design for r in self.records})

    def for_design(self, design: str, source: str = "simulation") -> list:
        """Records of one design sorted by condition."""
        return sorted((r for r in self.records if r.design == design and r.source == source), key=lambda r: r.omega)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "theta_grid": self.theta.tolist(),
            "behaviors": list(self.behaviors),
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported manifest schema_version {version!r}")
        return cls(np.asarray(d["theta_grid"], dtype=float), [ScenarioRecord.from_dict(r) for r in d["records"]],
                   tuple(d.get("behaviors", BEHAVIORS)))

    def save(self, path) -> None:
        atomic_write(path, json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def record_from_trace(trace: ForceTrace, grid, source: Optional[str] = None) -> ScenarioRecord:
    meta = trace.metadata
    src = source or meta.get("source", "simulation")
    design = meta.get("design") or design_id(meta["morphology"], meta.get("foot_fraction"))
    if src == "simulation":
        trace = trace.resample(grid)
    return ScenarioRecord(design, float(meta["omega"]), trace, src, float(meta.get("leg_length", 0.04)))


def ingest(directory, n_theta: int = DEFAULT_T) -> DatasetManifest:
    """Read every ``*.csv`` trace (plus its JSON sidecar) under ``directory``.

    Simulation traces are linearly resampled onto a uniform grid of
    ``n_theta`` angles; experiment traces keep their own sparse samples.
    """
    if not os.path.isdir(directory):
        raise ValidationError(f"{directory}: not a directory")
    grid = theta_grid(n_theta)
    manifest = DatasetManifest(grid)
    paths = sorted(glob.glob(os.path.join(os.fspath(directory), "*.csv")))
    if not paths:
        log.warning("no trace files found in %s; manifest is empty", directory)
    for path in paths:
        side = sidecar_path(path)
        if not os.path.exists(side):
            raise ValidationError(f"{path}: missing metadata sidecar {os.path.basename(side)}")
        try:
            with open(side) as f:
                meta = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{side}:{exc.lineno}: malformed JSON ({exc.msg})") from None
        missing = [k for k in ("omega",) if k not in meta] + ([] if "design" in meta or "morphology" in meta else ["design"])
        if missing:
            raise ValidationError(f"{side}: metadata lacks {missing}")
        try:
            trace = ForceTrace.read_csv(path, meta)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        try:
            manifest.add(record_from_trace(trace, grid))
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    return manifest

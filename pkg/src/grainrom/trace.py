"""Force traces: angle samples of horizontal (fx) and vertical (fz) force per unit width."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

HEADER = ("theta_rad", "fx_N_per_m", "fz_N_per_m")
THETA_MIN, THETA_MAX = -0.75 * math.pi, 0.75 * math.pi
DEFAULT_T = 128


def theta_grid(n: int = DEFAULT_T, lo: float = THETA_MIN, hi: float = THETA_MAX) -> np.ndarray:
    return np.linspace(lo, hi, n)


@dataclass
class ForceTrace:
    theta: np.ndarray
    fx: np.ndarray
    fz: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        self.fx = np.asarray(self.fx, dtype=float).ravel()
        self.fz = np.asarray(self.fz, dtype=float).ravel()
        if not (self.theta.shape == self.fx.shape == self.fz.shape):
            raise ValueError("theta, fx and fz must have equal length")
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.fx)) and np.all(np.isfinite(self.fz))):
            raise ValueError("force trace values must be finite")
        if np.any(np.diff(self.theta) <= 0):
            bad = int(np.argmax(np.diff(self.theta) <= 0))
            raise ValueError(f"theta must be strictly increasing (sample {bad + 1})")

    def __len__(self):
        return self.theta.size

    def values(self) -> np.ndarray:
        """(2, T) array with rows fx, fz."""
        return np.vstack([self.fx, self.fz])

    def behavior(self, name: str) -> np.ndarray:
        if name not in ("fx", "fz"):
            raise KeyError(name)
        return self.fx if name == "fx" else self.fz

    def resample(self, grid) -> "ForceTrace":
        """Linear interpolation onto ``grid`` (held constant beyond the ends)."""
        g = np.asarray(grid, dtype=float)
        return ForceTrace(g, np.interp(g, self.theta, self.fx), np.interp(g, self.theta, self.fz), dict(self.metadata))

    def write_csv(self, path, write_metadata: bool = True) -> None:
        rows = [HEADER] + [(repr(float(t)), repr(float(x)), repr(float(z))) for t, x, z in zip(self.theta, self.fx, self.fz)]
        text = "\n".join(",".join(r) for r in rows) + "\n"
        atomic_write(path, text)
        if write_metadata:
            atomic_write(sidecar_path(path), json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path, metadata: dict | None = None) -> "ForceTrace":
        path = os.fspath(path)
        theta, fx, fz = [], [], []
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != HEADER:
                raise ValueError(f"{path}:1: expected header {','.join(HEADER)}, got {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
                try:
                    t, x, z = (float(c) for c in row)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric value in {row}") from None
                if not all(math.isfinite(v) for v in (t, x, z)):
                    raise ValueError(f"{path}:{lineno}: non-finite value")
                if theta and t <= theta[-1]:
                    raise ValueError(f"{path}:{lineno}: theta not strictly increasing ({t} after {theta[-1]})")
                theta.append(t)
                fx.append(x)
                fz.append(z)
        if metadata is None:
            side = sidecar_path(path)
            metadata = {}
            if os.path.exists(side):
                with open(side) as f:
                    metadata = json.load(f)
        return cls(np.array(theta), np.array(fx), np.array(fz), metadata)


def sidecar_path(csv_path) -> str:
    root, _ = os.path.splitext(os.fspath(csv_path))
    return root + ".json"


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

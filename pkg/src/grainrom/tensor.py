"""Dense rank-3 tensor algebra and sequentially truncated HOSVD.

Tensors are plain ``float64`` numpy arrays of shape ``(I, J, T)``: operating
conditions x behaviors x angle samples. Modes are numbered 1, 2, 3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .svd import truncated_svd

DEFAULT_THRESHOLDS = (0.95, 1.0, 0.95)
DEFAULT_MODE_ORDER = (1, 2, 3)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def as_tensor3(data) -> np.ndarray:
    """Validate and copy ``data`` into a finite float64 rank-3 array."""
    t = np.array(data, dtype=float, copy=True)
    if t.ndim != 3:
        raise ValueError(f"expected a rank-3 tensor, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains non-finite entries")
    return t


def _axis(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization.

    Rows follow the chosen mode; columns run over the remaining modes in
    ascending order with the last one varying fastest.
    """
    ax = _axis(mode)
    t = np.asarray(t, dtype=float)
    if t.ndim != 3:
        raise ValueError(f"expected a rank-3 tensor, got shape {t.shape}")
    cols = int(np.prod([s for i, s in enumerate(t.shape) if i != ax]))
    return np.moveaxis(t, ax, 0).reshape(t.shape[ax], cols)


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    ax = _axis(mode)
    shape = tuple(int(s) for s in shape)
    rest = [s for i, s in enumerate(shape) if i != ax]
    m = np.asarray(m, dtype=float)
    if m.shape != (shape[ax], int(np.prod(rest))):
        raise ValueError(f"matrix of shape {m.shape} cannot fold into {shape} along mode {mode}")
    return np.moveaxis(m.reshape([shape[ax]] + rest), 0, ax)


def mode_product(t: np.ndarray, m, mode: int) -> np.ndarray:
    """n-mode product ``t x_mode m``: contracts ``m``'s columns with ``mode``."""
    ax = _axis(mode)
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != t.shape[ax]:
        raise ValueError(
            f"matrix of shape {m.shape} incompatible with mode {mode} of tensor {t.shape}"
        )
    shape = list(t.shape)
    shape[ax] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, shape)


@dataclass(frozen=True)
class TuckerDecomp:
    """Core tensor, per-mode factor matrices and per-mode spectra."""

    core: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]
    spectra: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        core = _frozen(self.core)
        factors = tuple(_frozen(f) for f in self.factors)
        spectra = tuple(_frozen(s) for s in self.spectra)
        if core.ndim != 3 or len(factors) != 3 or len(spectra) != 3:
            raise ValueError("decomposition needs a rank-3 core and three factors/spectra")
        for n, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != core.shape[n]:
                raise ValueError(f"factor {n + 1} shape {f.shape} does not match core {core.shape}")
        for s in spectra:
            if np.any(s < 0) or np.any(np.diff(s) > 0):
                raise ValueError("spectra must be non-negative and descending")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "spectra", spectra)

    @property
    def ranks(self) -> tuple[int, int, int]:
        return tuple(int(r) for r in self.core.shape)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(int(f.shape[0]) for f in self.factors)

    def to_dict(self) -> dict:
        return {
            "core": tensor_to_dict(self.core),
            "factors": [
                {"rows": int(f.shape[0]), "cols": int(f.shape[1]), "data": f.ravel().tolist()}
                for f in self.factors
            ],
            "spectra": [s.tolist() for s in self.spectra],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TuckerDecomp":
        factors = tuple(
            np.asarray(f["data"], dtype=float).reshape(f["rows"], f["cols"]) for f in d["factors"]
        )
        return cls(
            core=tensor_from_dict(d["core"], allow_empty=True),
            factors=factors,
            spectra=tuple(np.asarray(s, dtype=float) for s in d["spectra"]),
        )


def st_hosvd(
    t,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    mode_order: Sequence[int] = DEFAULT_MODE_ORDER,
) -> TuckerDecomp:
    """Sequentially truncated higher-order SVD.

    Each mode (in ``mode_order``) is truncated to the smallest rank that keeps
    the requested fraction of the current working tensor's energy, and the
    working tensor is contracted with that factor before the next mode.
    """
    work = as_tensor3(t)
    thresholds = tuple(float(x) for x in thresholds)
    if len(thresholds) != 3:
        raise ValueError("need one threshold per mode")
    if sorted(mode_order) != [1, 2, 3]:
        raise ValueError(f"mode_order must be a permutation of (1, 2, 3), got {mode_order!r}")
    factors: list = [None, None, None]
    spectra: list = [None, None, None]
    for mode in mode_order:
        u, s, _ = truncated_svd(unfold(work, mode), thresholds[mode - 1])
        factors[mode - 1] = u
        spectra[mode - 1] = s
        work = mode_product(work, u.T, mode)
    return TuckerDecomp(core=work, factors=tuple(factors), spectra=tuple(spectra))


def reconstruct(d: TuckerDecomp) -> np.ndarray:
    """Expand a decomposition back to the full ``(I, J, T)`` tensor."""
    out = d.core
    for mode, f in enumerate(d.factors, start=1):
        out = mode_product(out, f, mode)
    return out


def project_reduced(d: TuckerDecomp) -> np.ndarray:
    """Reduced parameters: one length-``r3`` coefficient row per (condition, behavior).

    Returns an ``(I, J, r3)`` array ``A`` with ``A x_3 W~ == reconstruct(d)``;
    when modes 1 and 2 are untruncated this is the direct projection of the
    data onto the truncated angle basis.
    """
    u, v, _ = d.factors
    return mode_product(mode_product(d.core, u, 1), v, 2)


def discarded_energy(d: TuckerDecomp) -> float:
    """Squared reconstruction error implied by the discarded spectra."""
    return float(sum(np.sum(s[r:] ** 2) for s, r in zip(d.spectra, d.ranks)))


# ---- file formats --------------------------------------------------------


def tensor_to_dict(t: np.ndarray) -> dict:
    t = np.asarray(t, dtype=float)
    return {"dims": [int(s) for s in t.shape], "order": "row-major", "data": t.ravel().tolist()}


def tensor_from_dict(d: dict, allow_empty: bool = False) -> np.ndarray:
    if d.get("order", "row-major") != "row-major":
        raise ValueError(f"unsupported tensor order {d.get('order')!r}")
    dims = [int(x) for x in d["dims"]]
    if len(dims) != 3:
        raise ValueError(f"tensor dims must have three entries, got {dims}")
    data = np.asarray(d["data"], dtype=float)
    if data.size != int(np.prod(dims)):
        raise ValueError(f"tensor data length {data.size} does not match dims {dims}")
    t = data.reshape(dims)
    if t.size == 0 and allow_empty:
        return t
    return as_tensor3(t)


def save_tensor(path, t: np.ndarray) -> None:
    with open(path, "w") as fh:
        json.dump(tensor_to_dict(as_tensor3(t)), fh)


def load_tensor(path) -> np.ndarray:
    with open(path) as fh:
        return tensor_from_dict(json.load(fh))


def save_decomp(path, d: TuckerDecomp) -> None:
    with open(path, "w") as fh:
        json.dump(d.to_dict(), fh)


def load_decomp(path) -> TuckerDecomp:
    with open(path) as fh:
        return TuckerDecomp.from_dict(json.load(fh))

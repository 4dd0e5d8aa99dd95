"""Truncated SVD built on cyclic Jacobi rotations.

The rotations diagonalize the Gram matrix of the narrower side of the input,
but are applied one-sided (Hestenes form) so the Gram matrix is never formed
explicitly and small singular values keep their relative accuracy.
"""

from __future__ import annotations

import math

import numpy as np

#: singular values below this fraction of the largest count as zero
RANK_FLOOR = 1e-12
#: relative off-diagonal tolerance |g_pq| <= tol * sqrt(g_pp * g_qq)
JACOBI_TOL = 1e-14
MAX_SWEEPS = 60


def _hestenes(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonalize the columns of a tall matrix ``a`` in place.

    Returns the rotated matrix (columns mutually orthogonal) and the
    accumulated orthogonal rotation ``v`` with ``a_in @ v == a_out``.
    """
    n = a.shape[1]
    v = np.eye(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            ap = a[:, p]
            for q in range(p + 1, n):
                aq = a[:, q]
                alpha = float(ap @ ap)
                beta = float(aq @ aq)
                gamma = float(ap @ aq)
                if gamma == 0.0 or abs(gamma) <= JACOBI_TOL * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                a[:, p] = new_p
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
                ap = a[:, p]
        if not rotated:
            break
    return a, v


def canonical_signs(u: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive.

    Ties go to the lowest row index (``argmax`` returns the first maximum).
    """
    u = np.array(u, dtype=float, copy=True)
    if u.size == 0:
        return u
    rows = np.argmax(np.abs(u), axis=0)
    flip = u[rows, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    return u


def left_singular(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All left singular vectors with nonzero weight and the full spectrum.

    Returns ``(u, s)`` where ``s`` has ``min(rows, cols)`` entries sorted
    descending and ``u`` has one sign-canonical column per entry of ``s``
    (columns for exactly-zero singular values are zero-filled).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {m.shape}")
    rows, cols = m.shape
    k = min(rows, cols)
    if k == 0:
        return np.zeros((rows, 0)), np.zeros(0)
    # power-of-two rescale: exact, and keeps squared norms clear of under/overflow
    peak = float(np.max(np.abs(m)))
    scale = math.ldexp(1.0, math.frexp(peak)[1]) if peak > 0 else 1.0
    m = m / scale
    if rows >= cols:
        a, _ = _hestenes(m.copy())
        s = np.linalg.norm(a, axis=0)
        order = np.argsort(-s, kind="stable")
        s = s[order]
        a = a[:, order]
        u = np.zeros_like(a)
        nz = s > 0
        u[:, nz] = a[:, nz] / s[nz]
    else:
        a, v = _hestenes(m.T.copy())
        s = np.linalg.norm(a, axis=0)
        order = np.argsort(-s, kind="stable")
        s = s[order]
        u = v[:, order]
    return canonical_signs(u), s * scale


def energy_rank(s: np.ndarray, threshold: float) -> int:
    """Smallest rank whose cumulative squared spectrum reaches ``threshold``."""
    s = np.asarray(s, dtype=float)
    if s.size == 0 or s[0] <= 0:
        return 0
    live = s[s > RANK_FLOOR * s[0]]
    if threshold >= 1.0:
        # squared tails under eps would otherwise vanish from the cumsum
        return live.size
    energy = np.cumsum(live * live)
    r = int(np.searchsorted(energy, threshold * energy[-1], side="left")) + 1
    return min(r, live.size)


def truncated_svd(m, energy_threshold: float = 1.0) -> tuple[np.ndarray, np.ndarray, int]:
    """Leading left singular vectors retaining ``energy_threshold`` of the energy.

    Returns ``(U, singular_values, rank)``. ``U`` has ``rank`` orthonormal,
    sign-canonical columns; ``singular_values`` is the full descending
    spectrum. An all-zero matrix yields rank 0 and an empty ``U``.
    """
    if not 0.0 < energy_threshold <= 1.0:
        raise ValueError(f"energy threshold must lie in (0, 1], got {energy_threshold}")
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    u, s = left_singular(m)
    r = energy_rank(s, energy_threshold)
    return u[:, :r].copy(), s, r

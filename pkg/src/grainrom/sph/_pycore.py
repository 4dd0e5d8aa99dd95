"""Vectorized numpy versions of the pair loops in ``_core.pyx``.

Scatter-adds interleave the i and j contributions of each pair so that
``np.bincount`` accumulates in the same order as the compiled loops.
"""

import numpy as np

from .kernels import kernel, kernel_derivative


def find_pairs(x, kind, radius):
    x = np.ascontiguousarray(x, dtype=float)
    kind = np.asarray(kind)
    n = x.shape[0]
    if n == 0:
        return np.zeros(0, np.intp), np.zeros(0, np.intp)
    if not np.isfinite(x).all():
        raise ValueError("non-finite particle position in neighbour search")
    cells = np.floor((x - x.min(axis=0)) / radius).astype(np.int64)
    width = int(cells[:, 0].max()) + 3
    key = (cells[:, 1] + 1) * width + (cells[:, 0] + 1)
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    pi_parts, pj_parts = [], []
    for oy in (-1, 0, 1):
        for ox in (-1, 0, 1):
            target = key + oy * width + ox
            lo = np.searchsorted(sorted_key, target, side="left")
            hi = np.searchsorted(sorted_key, target, side="right")
            counts = hi - lo
            total = int(counts.sum())
            if total == 0:
                continue
            ii = np.repeat(np.arange(n), counts)
            offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            jj = order[np.repeat(lo, counts) + offsets]
            pi_parts.append(ii)
            pj_parts.append(jj)
    ii = np.concatenate(pi_parts)
    jj = np.concatenate(pj_parts)
    d = x[ii] - x[jj]
    keep = (jj > ii) & ((kind[ii] == 0) | (kind[jj] == 0)) & (np.einsum("ij,ij->i", d, d) < radius * radius)
    ii, jj = ii[keep], jj[keep]
    o = np.lexsort((jj, ii))
    return ii[o].astype(np.intp), jj[o].astype(np.intp)


def _scatter(pi, pj, wi, wj, n, init=None):
    """Sum ``wi`` into slots ``pi`` and ``wj`` into ``pj``, pair by pair."""
    idx = np.empty(2 * pi.size, np.intp)
    idx[0::2], idx[1::2] = pi, pj
    w = np.empty(2 * pi.size)
    w[0::2], w[1::2] = wi, wj
    if init is not None:
        idx = np.concatenate([np.arange(n), idx])
        w = np.concatenate([init, w])
    return np.bincount(idx, w, minlength=n)


def _geometry(x, pi, pj, h):
    dx = x[pi, 0] - x[pj, 0]
    dy = x[pi, 1] - x[pj, 1]
    r2 = dx * dx + dy * dy
    r = np.sqrt(r2)
    live = r > 0
    safe = np.where(live, r, 1.0)
    dwdr = np.where(live, kernel_derivative(r, h), 0.0)
    return dx, dy, r2, safe, dwdr, dwdr * (dx / safe), dwdr * (dy / safe)


def kernel_sums(x, rho, mass, pi, pj, h):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    w0 = float(kernel(0.0, h))
    dx = x[pi, 0] - x[pj, 0]
    dy = x[pi, 1] - x[pj, 1]
    w = kernel(np.sqrt(dx * dx + dy * dy), h)
    num = _scatter(pi, pj, mass[pj] * w, mass[pi] * w, n, mass * w0)
    den = _scatter(pi, pj, mass[pj] / rho[pj] * w, mass[pi] / rho[pi] * w, n, mass / rho * w0)
    return num, den


def continuity_pass(x, v, rho, mass, kind, pi, pj, h, delta_hc0):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    _, _, _, r, dwdr, gx, gy = _geometry(x, pi, pj, h)
    vx = v[pi, 0] - v[pj, 0]
    vy = v[pi, 1] - v[pj, 1]
    vdotg = vx * gx + vy * gy
    drho = _scatter(pi, pj, mass[pj] * vdotg, mass[pi] * vdotg, n)
    if delta_hc0 != 0.0:
        both = (kind[pi] == 0) & (kind[pj] == 0)
        f = np.where(both, 2.0 * delta_hc0 * (-dwdr / r), 0.0)
        ri, rj = rho[pi], rho[pj]
        drho = drho + _scatter(pi, pj, f * (rj - ri) * (mass[pj] / rj), f * (ri - rj) * (mass[pi] / ri), n)
    vi = mass[pi] / rho[pi]
    vj = mass[pj] / rho[pj]
    grad = np.empty((n, 4))
    for col, (a, b) in enumerate(((vx, gx), (vx, gy), (vy, gx), (vy, gy))):
        grad[:, col] = _scatter(pi, pj, vj * (-a) * b, vi * (-a) * b, n)
    return drho, grad


def momentum_pass(x, v, rho, mass, stress, pi, pj, h, c0, alpha, beta):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    dx, dy, r2, _, _, gx, gy = _geometry(x, pi, pj, h)
    ri2 = 1.0 / (rho[pi] * rho[pi])
    rj2 = 1.0 / (rho[pj] * rho[pj])
    axx = stress[pi, 0] * ri2 + stress[pj, 0] * rj2
    ayy = stress[pi, 1] * ri2 + stress[pj, 1] * rj2
    axy = stress[pi, 2] * ri2 + stress[pj, 2] * rj2
    vx = v[pi, 0] - v[pj, 0]
    vy = v[pi, 1] - v[pj, 1]
    vdotr = vx * dx + vy * dy
    mu = h * vdotr / (r2 + 0.01 * h * h)
    visc = np.where(vdotr < 0.0, (-alpha * c0 * mu + beta * mu * mu) / (0.5 * (rho[pi] + rho[pj])), 0.0)
    tx = (axx - visc) * gx + axy * gy
    ty = axy * gx + (ayy - visc) * gy
    acc = np.empty((n, 2))
    acc[:, 0] = _scatter(pi, pj, mass[pj] * tx, -(mass[pi] * tx), n)
    acc[:, 1] = _scatter(pi, pj, mass[pj] * ty, -(mass[pi] * ty), n)
    return acc

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled SPH pair loops. Signatures mirror ``grainrom.sph._pycore``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, M_PI
from libcpp.vector cimport vector

cnp.import_array()


cdef inline double _w(double q, double sigma) noexcept nogil:
    if q < 1.0:
        return sigma * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
    elif q < 2.0:
        return sigma * 0.25 * (2.0 - q) * (2.0 - q) * (2.0 - q)
    return 0.0


cdef inline double _dw(double q, double sigma_h) noexcept nogil:
    if q < 1.0:
        return sigma_h * (-3.0 * q + 2.25 * q * q)
    elif q < 2.0:
        return sigma_h * (-0.75 * (2.0 - q) * (2.0 - q))
    return 0.0


cdef void _insertion_sort(Py_ssize_t* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


MAX_CELLS = 50_000_000


def find_pairs(const double[:, ::1] x, const signed char[::1] kind, double radius):
    """All pairs i < j closer than ``radius`` with at least one bulk particle.

    Returned in lexicographic (i, j) order.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j, k, c, a, b
    cdef double xmin = 0.0, ymin = 0.0, dx, dy, r2max = radius * radius
    cdef int cx, cy, ncx = 1, ncy = 1, ox, oy, nx, ny
    if n == 0:
        return np.zeros(0, np.intp), np.zeros(0, np.intp)
    if not np.isfinite(np.asarray(x)).all():
        raise ValueError("non-finite particle position in neighbour search")
    xmin = x[0, 0]
    ymin = x[0, 1]
    for i in range(n):
        if x[i, 0] < xmin:
            xmin = x[i, 0]
        if x[i, 1] < ymin:
            ymin = x[i, 1]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cxs = np.empty(n, np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cys = np.empty(n, np.int32)
    for i in range(n):
        cxs[i] = <int>floor((x[i, 0] - xmin) / radius)
        cys[i] = <int>floor((x[i, 1] - ymin) / radius)
        if cxs[i] + 1 > ncx:
            ncx = cxs[i] + 1
        if cys[i] + 1 > ncy:
            ncy = cys[i] + 1
    cdef Py_ssize_t ncell = <Py_ssize_t>ncx * ncy
    if ncell > MAX_CELLS:
        raise ValueError(f"particle cloud spans {ncell} cells; a particle has probably escaped")
    cdef cnp.ndarray[cnp.intp_t, ndim=1] start = np.zeros(ncell + 1, np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] members = np.empty(n, np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] fill
    for i in range(n):
        start[<Py_ssize_t>cys[i] * ncx + cxs[i] + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    fill = start.copy()
    for i in range(n):
        c = <Py_ssize_t>cys[i] * ncx + cxs[i]
        members[fill[c]] = i
        fill[c] += 1

    cdef vector[Py_ssize_t] out_i, out_j, buf
    out_i.reserve(n * 16)
    out_j.reserve(n * 16)
    with nogil:
        for i in range(n):
            buf.clear()
            for oy in range(-1, 2):
                ny = cys[i] + oy
                if ny < 0 or ny >= ncy:
                    continue
                for ox in range(-1, 2):
                    nx = cxs[i] + ox
                    if nx < 0 or nx >= ncx:
                        continue
                    c = <Py_ssize_t>ny * ncx + nx
                    for k in range(start[c], start[c + 1]):
                        j = members[k]
                        if j <= i:
                            continue
                        if kind[i] != 0 and kind[j] != 0:
                            continue
                        dx = x[i, 0] - x[j, 0]
                        dy = x[i, 1] - x[j, 1]
                        if dx * dx + dy * dy < r2max:
                            buf.push_back(j)
            if buf.size() > 1:
                _insertion_sort(&buf[0], buf.size())
            for k in range(<Py_ssize_t>buf.size()):
                out_i.push_back(i)
                out_j.push_back(buf[k])

    cdef Py_ssize_t m = out_i.size()
    pi = np.empty(m, np.intp)
    pj = np.empty(m, np.intp)
    cdef Py_ssize_t[::1] pi_v = pi
    cdef Py_ssize_t[::1] pj_v = pj
    for k in range(m):
        pi_v[k] = out_i[k]
        pj_v[k] = out_j[k]
    return pi, pj


def kernel_sums(const double[:, ::1] x, const double[::1] rho, const double[::1] mass,
                const Py_ssize_t[::1] pi, const Py_ssize_t[::1] pj, double h):
    """Per-particle sums of m_j W_ij and (m_j / rho_j) W_ij, self term included."""
    cdef Py_ssize_t n = x.shape[0], npair = pi.shape[0], k, i, j
    cdef double sigma = 10.0 / (7.0 * M_PI * h * h)
    cdef double w0 = _w(0.0, sigma), dx, dy, w
    num = np.empty(n)
    den = np.empty(n)
    cdef double[::1] nv = num
    cdef double[::1] dv = den
    with nogil:
        for i in range(n):
            nv[i] = mass[i] * w0
            dv[i] = mass[i] / rho[i] * w0
        for k in range(npair):
            i = pi[k]
            j = pj[k]
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            w = _w(sqrt(dx * dx + dy * dy) / h, sigma)
            nv[i] += mass[j] * w
            nv[j] += mass[i] * w
            dv[i] += mass[j] / rho[j] * w
            dv[j] += mass[i] / rho[i] * w
    return num, den


def continuity_pass(const double[:, ::1] x, const double[:, ::1] v, const double[::1] rho, const double[::1] mass,
                    const signed char[::1] kind, const Py_ssize_t[::1] pi, const Py_ssize_t[::1] pj,
                    double h, double delta_hc0):
    """Density rate (continuity + bulk-bulk density diffusion) and velocity gradient.

    The gradient columns are dvx/dx, dvx/dy, dvy/dx, dvy/dy.
    """
    cdef Py_ssize_t n = x.shape[0], npair = pi.shape[0], k, i, j
    cdef double sigma_h = 10.0 / (7.0 * M_PI * h * h) / h
    cdef double dx, dy, r, dwdr, gx, gy, vx, vy, vdotg, vi, vj, f
    drho = np.zeros(n)
    grad = np.zeros((n, 4))
    cdef double[::1] dr = drho
    cdef double[:, ::1] gv = grad
    with nogil:
        for k in range(npair):
            i = pi[k]
            j = pj[k]
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r = sqrt(dx * dx + dy * dy)
            if r == 0.0:
                continue
            dwdr = _dw(r / h, sigma_h)
            gx = dwdr * (dx / r)
            gy = dwdr * (dy / r)
            vx = v[i, 0] - v[j, 0]
            vy = v[i, 1] - v[j, 1]
            vdotg = vx * gx + vy * gy
            dr[i] += mass[j] * vdotg
            dr[j] += mass[i] * vdotg
            if delta_hc0 != 0.0 and kind[i] == 0 and kind[j] == 0:
                f = 2.0 * delta_hc0 * (-dwdr / r)
                dr[i] += f * (rho[j] - rho[i]) * (mass[j] / rho[j])
                dr[j] += f * (rho[i] - rho[j]) * (mass[i] / rho[i])
            vi = mass[i] / rho[i]
            vj = mass[j] / rho[j]
            gv[i, 0] += vj * (-vx) * gx
            gv[i, 1] += vj * (-vx) * gy
            gv[i, 2] += vj * (-vy) * gx
            gv[i, 3] += vj * (-vy) * gy
            gv[j, 0] += vi * (-vx) * gx
            gv[j, 1] += vi * (-vx) * gy
            gv[j, 2] += vi * (-vy) * gx
            gv[j, 3] += vi * (-vy) * gy
    return drho, grad


def momentum_pass(const double[:, ::1] x, const double[:, ::1] v, const double[::1] rho, const double[::1] mass,
                  const double[:, ::1] stress, const Py_ssize_t[::1] pi, const Py_ssize_t[::1] pj,
                  double h, double c0, double alpha, double beta):
    """Pairwise accelerations from the stress divergence and Monaghan viscosity.

    ``stress`` columns are sxx, syy, sxy. Gravity is not included.
    """
    cdef Py_ssize_t n = x.shape[0], npair = pi.shape[0], k, i, j
    cdef double sigma_h = 10.0 / (7.0 * M_PI * h * h) / h
    cdef double eta2 = 0.01 * h * h
    cdef double dx, dy, r2, r, dwdr, gx, gy, vx, vy, vdotr, mu, visc
    cdef double ri2, rj2, axx, ayy, axy, tx, ty
    acc = np.zeros((n, 2))
    cdef double[:, ::1] a = acc
    with nogil:
        for k in range(npair):
            i = pi[k]
            j = pj[k]
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r2 = dx * dx + dy * dy
            r = sqrt(r2)
            if r == 0.0:
                continue
            dwdr = _dw(r / h, sigma_h)
            gx = dwdr * (dx / r)
            gy = dwdr * (dy / r)
            ri2 = 1.0 / (rho[i] * rho[i])
            rj2 = 1.0 / (rho[j] * rho[j])
            axx = stress[i, 0] * ri2 + stress[j, 0] * rj2
            ayy = stress[i, 1] * ri2 + stress[j, 1] * rj2
            axy = stress[i, 2] * ri2 + stress[j, 2] * rj2
            vx = v[i, 0] - v[j, 0]
            vy = v[i, 1] - v[j, 1]
            vdotr = vx * dx + vy * dy
            visc = 0.0
            if vdotr < 0.0:
                mu = h * vdotr / (r2 + eta2)
                visc = (-alpha * c0 * mu + beta * mu * mu) / (0.5 * (rho[i] + rho[j]))
            tx = (axx - visc) * gx + axy * gy
            ty = axy * gx + (ayy - visc) * gy
            a[i, 0] += mass[j] * tx
            a[i, 1] += mass[j] * ty
            a[j, 0] -= mass[i] * tx
            a[j, 1] -= mass[i] * ty
    return acc

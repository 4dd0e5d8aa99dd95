"""2-D cubic-spline kernel with support radius 2h."""

import math

import numpy as np

SUPPORT = 2.0


def norm_2d(h: float) -> float:
    return 10.0 / (7.0 * math.pi * h * h)


def kernel(r, h: float):
    """W(r, h); vectorized over ``r``."""
    if h <= 0:
        raise ValueError("smoothing length must be positive")
    q = np.asarray(r, dtype=float) / h
    w = np.where(q < 1.0, 1.0 - 1.5 * q * q + 0.75 * q**3, np.where(q < 2.0, 0.25 * (2.0 - q) ** 3, 0.0))
    return norm_2d(h) * w


def kernel_derivative(r, h: float):
    """dW/dr; non-positive everywhere."""
    if h <= 0:
        raise ValueError("smoothing length must be positive")
    q = np.asarray(r, dtype=float) / h
    dw = np.where(q < 1.0, -3.0 * q + 2.25 * q * q, np.where(q < 2.0, -0.75 * (2.0 - q) ** 2, 0.0))
    return norm_2d(h) / h * dw


def kernel_grad(r_vec, h: float) -> np.ndarray:
    """Gradient of W with respect to the first particle, for ``r_vec = x_a - x_b``.

    Accepts a single 2-vector or an ``(n, 2)`` array.
    """
    rv = np.asarray(r_vec, dtype=float)
    r = np.linalg.norm(rv, axis=-1)
    dwdr = kernel_derivative(r, h)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0, dwdr / np.where(r > 0, r, 1.0), 0.0)
    return rv * np.asarray(scale)[..., None]

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from grainrom.sph import _pycore, backend, kernels
from grainrom.sph.config import SphConfig
from grainrom.sph.solver import (BULK, CONTAINER, LEG, ParticleState, continuity_rate, evaluate_rates,
                                 momentum_rate, neighbor_pairs, shepard_filter, summation_density)
from grainrom.sph.rheology import MaterialParams

RHO0 = 1560.0
CFG = SphConfig(particle_spacing=1e-3, sound_speed=5.0)
H = CFG.h


def spline_dwdr(r, h):
    """Closed-form derivative of the 2-D cubic spline, written out independently."""
    q = r / h
    sigma = 10.0 / (7.0 * math.pi * h * h)
    if q < 1:
        return sigma / h * (-3 * q + 2.25 * q * q)
    if q < 2:
        return sigma / h * (-0.75 * (2 - q) ** 2)
    return 0.0


def lattice(n, dx=CFG.particle_spacing, rho=RHO0):
    g = np.arange(n) * dx
    x = np.array([(a, b) for b in g for a in g], dtype=float)
    m = len(x)
    return ParticleState(x, np.zeros((m, 2)), np.full(m, rho), np.full(m, rho * dx * dx), np.zeros(m, np.int8),
                         np.zeros((m, 3)))


def interior(state, margin):
    lo, hi = state.x.min(0) + margin, state.x.max(0) - margin
    return np.all((state.x >= lo) & (state.x <= hi), axis=1)


def random_cloud(n, seed, kinds=True):
    rng = np.random.default_rng(seed)
    dx = CFG.particle_spacing
    side = int(math.ceil(math.sqrt(n)))
    g = np.arange(side) * dx
    x = np.array([(a, b) for b in g for a in g])[:n] + rng.uniform(-0.2, 0.2, (n, 2)) * dx
    kind = np.zeros(n, np.int8)
    if kinds:
        kind[x[:, 1] < 1.5 * dx] = CONTAINER
        kind[rng.random(n) < 0.05] = LEG
    rho = RHO0 * (1 + 0.01 * rng.standard_normal(n))
    v = 0.1 * rng.standard_normal((n, 2))
    strain = 1e-3 * rng.standard_normal((n, 3))
    return ParticleState(x, v, rho, np.full(n, RHO0 * dx * dx), kind, strain)


# kernel

def test_kernel_normalized_by_quadrature():
    val, err = integrate.quad(lambda r: 2 * math.pi * r * float(kernels.kernel(r, H)), 0, 2 * H, points=[H])
    assert val == pytest.approx(1.0, abs=1e-10)


def test_kernel_peak_value():
    assert float(kernels.kernel(0.0, H)) == pytest.approx(10 / (7 * math.pi * H * H), rel=1e-15)


def test_compact_support():
    r = np.array([2 * H, 2.5 * H, 10 * H])
    assert np.all(kernels.kernel(r, H) == 0)
    assert np.all(kernels.kernel_grad(np.column_stack([r, 0 * r]), H) == 0)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_gradient_antisymmetric(a, b):
    rv = np.array([a, b]) * H
    assert np.array_equal(kernels.kernel_grad(rv, H), -kernels.kernel_grad(-rv, H))


@pytest.mark.parametrize("q", [0.1, 0.7, 1.0, 1.3, 1.99])
def test_derivative_matches_closed_form_and_finite_difference(q):
    r = q * H
    assert float(kernels.kernel_derivative(r, H)) == pytest.approx(spline_dwdr(r, H), rel=1e-13)
    eps = 1e-7 * H
    fd = (float(kernels.kernel(r + eps, H)) - float(kernels.kernel(r - eps, H))) / (2 * eps)
    assert float(kernels.kernel_derivative(r, H)) == pytest.approx(fd, rel=1e-5)


def test_nonpositive_h_rejected():
    with pytest.raises(ValueError):
        kernels.kernel(0.1, 0.0)


def test_partition_of_unity_on_lattice():
    s = lattice(16)
    pi, pj = neighbor_pairs(s, CFG)
    _, den = backend.get().kernel_sums(s.x, s.rho, s.mass, pi, pj, H)
    inside = interior(s, 2 * H)
    assert np.all(np.abs(den[inside] - 1) < 0.01)


# summation density and Shepard

def test_summation_density_lattice():
    s = lattice(16)
    rho = summation_density(s, CFG)
    assert np.all(np.abs(rho[interior(s, 2 * H)] / RHO0 - 1) < 0.01)


def test_single_particle_self_term(caplog):
    s = ParticleState([[0.0, 0.0]], [[0.0, 0.0]], [RHO0], [2.0], [BULK], [[0, 0, 0]])
    with caplog.at_level("INFO"):
        rho = summation_density(s, CFG)
    assert rho[0] == pytest.approx(2.0 * float(kernels.kernel(0.0, H)), rel=1e-15)
    assert "no neighbours" in caplog.text


def test_summation_density_linear_in_mass():
    s = random_cloud(100, 0, kinds=False)
    d = ParticleState(s.x, s.v, s.rho, 2 * s.mass, s.kind, s.strain)
    assert np.allclose(summation_density(d, CFG), 2 * summation_density(s, CFG), rtol=1e-14, atol=0)


def test_shepard_fixed_point_for_uniform_density():
    # any configuration, any masses: sum m W / sum (m / rho) W = rho
    s = random_cloud(150, 8, kinds=False)
    s.rho[:] = RHO0
    once = shepard_filter(s, CFG)
    assert np.max(np.abs(once / RHO0 - 1)) < 1e-12
    s.rho[:] = once
    assert np.max(np.abs(shepard_filter(s, CFG) / once - 1)) < 1e-10


def test_shepard_beats_raw_summation_near_free_surface():
    s = lattice(16)
    raw = summation_density(s, CFG)
    filt = shepard_filter(s, CFG)
    top = s.x[:, 1] > s.x[:, 1].max() - 0.5 * CFG.particle_spacing
    assert np.all(np.abs(filt[top] - RHO0) < np.abs(raw[top] - RHO0))
    assert np.all(np.abs(filt[interior(s, 2 * H)] / RHO0 - 1) < 1e-3)


def test_shepard_repeated_passes_contract():
    s = random_cloud(150, 1, kinds=False)
    steps = []
    for _ in range(4):
        new = shepard_filter(s, CFG)
        steps.append(np.max(np.abs(new - s.rho)))
        s.rho[:] = new
    assert all(b < a for a, b in zip(steps, steps[1:]))


def test_shepard_leaves_boundary_density():
    s = random_cloud(150, 2)
    out = shepard_filter(s, CFG)
    nb = s.kind != BULK
    assert np.array_equal(out[nb], s.rho[nb])


# continuity

def test_rigid_translation_has_no_density_rate():
    s = lattice(10)
    s.v[:] = [0.3, -0.7]
    drho, grad = continuity_rate(s, CFG)
    assert np.max(np.abs(drho)) < 1e-12 * RHO0
    assert np.max(np.abs(grad)) < 1e-12


def test_uniform_density_has_no_diffusion():
    s = random_cloud(120, 3, kinds=False)
    s.rho[:] = RHO0
    with_delta = continuity_rate(s, CFG)[0]
    without = continuity_rate(s, SphConfig(particle_spacing=1e-3, sound_speed=5.0, delta=0.0))[0]
    assert np.array_equal(with_delta, without)


def test_two_particle_compression_by_hand():
    d, u, m = 0.8 * H, 0.05, 0.002
    s = ParticleState([[0.0, 0.0], [d, 0.0]], [[u, 0.0], [-u, 0.0]], [RHO0, RHO0], [m, m], [BULK, BULK],
                      np.zeros((2, 3)))
    drho, _ = continuity_rate(s, CFG)
    # m_j (v_i - v_j) . grad_i W = m * 2u * dW/dr * (x_i - x_j)/r
    expected = m * 2 * u * spline_dwdr(d, H) * (-1.0)
    assert expected > 0
    assert drho[0] == pytest.approx(expected, rel=1e-13)
    assert drho[1] == pytest.approx(expected, rel=1e-13)


def test_diffusion_term_by_hand():
    d, m = 0.9 * H, 0.002
    r0, r1 = RHO0, 1.01 * RHO0
    s = ParticleState([[0.0, 0.0], [d, 0.0]], np.zeros((2, 2)), [r0, r1], [m, m], [BULK, BULK], np.zeros((2, 3)))
    drho, _ = continuity_rate(s, CFG)
    dhc = CFG.delta * H * CFG.sound_speed
    f = 2 * dhc * (-spline_dwdr(d, H) / d)
    assert drho[0] == pytest.approx(f * (r1 - r0) * m / r1, rel=1e-12)
    assert drho[1] == pytest.approx(f * (r0 - r1) * m / r0, rel=1e-12)


# momentum

def test_pairwise_antisymmetry():
    rng = np.random.default_rng(4)
    s = ParticleState([[0.0, 0.0], [0.7 * H, 0.4 * H]], rng.normal(0, 0.1, (2, 2)), [RHO0, 1.02 * RHO0],
                      [0.002, 0.0021], [BULK, BULK], np.zeros((2, 3)))
    stress = rng.normal(0, 100.0, (2, 3))
    acc = momentum_rate(s, stress, CFG)
    f = s.mass[:, None] * acc
    assert np.all(np.abs(f[0] + f[1]) <= 1e-14 * np.abs(f).max())


def test_viscosity_off_for_separating_pair():
    x = [[0.0, 0.0], [0.9 * H, 0.0]]
    sep = ParticleState(x, [[-0.1, 0.0], [0.1, 0.0]], [RHO0, RHO0], [0.002, 0.002], [BULK, BULK], np.zeros((2, 3)))
    stress = np.array([[-50.0, -50.0, 0.0], [-60.0, -60.0, 0.0]])
    no_visc = SphConfig(particle_spacing=1e-3, sound_speed=5.0, visc_alpha=0.0, visc_beta=0.0)
    assert np.array_equal(momentum_rate(sep, stress, CFG), momentum_rate(sep, stress, no_visc))
    app = ParticleState(x, [[0.1, 0.0], [-0.1, 0.0]], [RHO0, RHO0], [0.002, 0.002], [BULK, BULK], np.zeros((2, 3)))
    # approaching pair: viscosity pushes them apart
    extra = momentum_rate(app, stress, CFG) - momentum_rate(app, stress, no_visc)
    assert extra[0, 0] < 0 < extra[1, 0]


def test_galilean_invariance_of_rates():
    s = random_cloud(200, 5, kinds=False)
    mat = MaterialParams()
    r0 = evaluate_rates(s, mat, CFG)
    moved = s.copy()
    moved.v += [1.3, -0.4]
    r1 = evaluate_rates(moved, mat, CFG)
    assert np.allclose(r1.drho, r0.drho, rtol=0, atol=1e-10 * np.abs(r0.drho).max())
    assert np.allclose(r1.pair_acc, r0.pair_acc, rtol=0, atol=1e-10 * np.abs(r0.pair_acc).max())


# neighbour search and backends

def brute_pairs(x, kind, radius):
    out = []
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            if (kind[i] == 0 or kind[j] == 0) and np.sum((x[i] - x[j]) ** 2) < radius * radius:
                out.append((i, j))
    return out


@pytest.mark.parametrize("name", sorted(backend.BACKENDS))
def test_find_pairs_matches_brute_force(name):
    s = random_cloud(180, 6)
    pi, pj = backend.get(name).find_pairs(s.x, s.kind, 2 * H)
    assert list(zip(pi.tolist(), pj.tolist())) == brute_pairs(s.x, s.kind, 2 * H)


def test_no_boundary_boundary_pairs():
    s = random_cloud(180, 7)
    pi, pj = neighbor_pairs(s, CFG)
    assert np.all((s.kind[pi] == BULK) | (s.kind[pj] == BULK))


@pytest.mark.skipif("cython" not in backend.BACKENDS, reason="compiled core not built")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backends_agree(seed):
    s = random_cloud(300, seed)
    cy, py = backend.get("cython"), backend.get("python")
    pc = cy.find_pairs(s.x, s.kind, 2 * H)
    pp = py.find_pairs(s.x, s.kind, 2 * H)
    assert np.array_equal(pc[0], pp[0]) and np.array_equal(pc[1], pp[1])
    pi, pj = pc

    def close(a, b):
        a, b = np.asarray(a), np.asarray(b)
        assert np.max(np.abs(a - b)) <= 1e-12 * max(np.max(np.abs(b)), 1e-300)

    for a, b in zip(cy.kernel_sums(s.x, s.rho, s.mass, pi, pj, H), py.kernel_sums(s.x, s.rho, s.mass, pi, pj, H)):
        close(a, b)
    args = (s.x, s.v, s.rho, s.mass, s.kind, pi, pj, H, 0.1 * H * 5.0)
    for a, b in zip(cy.continuity_pass(*args), py.continuity_pass(*args)):
        close(a, b)
    stress = np.random.default_rng(seed).normal(-100, 20, (s.n, 3))
    margs = (s.x, s.v, s.rho, s.mass, stress, pi, pj, H, 5.0, 1.0, 2.0)
    close(cy.momentum_pass(*margs), py.momentum_pass(*margs))


def test_backend_selection():
    assert backend.get("python") is _pycore
    assert backend.get() is backend.impl
    with pytest.raises(ValueError, match="not available"):
        backend.get("fortran")


@pytest.mark.parametrize("name", sorted(backend.BACKENDS))
def test_find_pairs_rejects_non_finite(name):
    x = np.array([[0.0, 0.0], [np.nan, 1e-3], [1e-3, 0.0]])
    with pytest.raises(ValueError, match="non-finite"):
        backend.get(name).find_pairs(x, np.zeros(3, np.int8), 2 * H)

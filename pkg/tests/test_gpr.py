import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grainrom import gpr
from grainrom.errors import GPFitError


def dense_oracle(x, y, x_star, s2, ell, noise, offset=0.0):
    """Textbook GP posterior via a dense linear solve."""
    def k(a, b):
        d = (a[:, None, :] - b[None, :, :]) / ell
        return s2 * np.exp(-0.5 * np.sum(d * d, axis=-1))

    kxx = k(x, x) + noise * np.eye(len(x))
    ks = k(x_star, x)
    mean = offset + ks @ np.linalg.solve(kxx, y)
    var = s2 - np.einsum("ij,ji->i", ks, np.linalg.solve(kxx, ks.T))
    sign, logdet = np.linalg.slogdet(kxx)
    lml = -0.5 * y @ np.linalg.solve(kxx, y) - 0.5 * logdet - 0.5 * len(x) * math.log(2 * math.pi)
    return mean, np.maximum(var, 0), lml


def oracle_for(model, x_star):
    """Oracle in raw units with the model's own hyperparameters and jitter."""
    x = model.raw_inputs
    y = model.targets
    mean, var, lml = dense_oracle((x - model.x_mean) / model.x_std, y, (x_star - model.x_mean) / model.x_std,
                                  model.params.signal_variance, np.asarray(model.params.length_scales),
                                  model.params.noise_variance + model.jitter, model.target_offset)
    return mean, var, lml


def test_kernel_params_validation():
    with pytest.raises(ValueError):
        gpr.KernelParams(0.0, (1.0,))
    with pytest.raises(ValueError):
        gpr.KernelParams(1.0, (0.0,))
    with pytest.raises(ValueError):
        gpr.KernelParams(1.0, (1.0,), -1e-3)


def test_predictive_distribution_interval():
    p = gpr.PredictiveDistribution(1.0, 4.0)
    lo, hi = p.ci95
    assert p.std == 2.0 and lo <= p.mean <= hi
    assert hi - p.mean == pytest.approx(gpr.Z95 * 2.0)


def test_toy_set_matches_dense_oracle():
    x = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 1.0, 0.0])
    model = gpr.fit(x, y, noise_variance=0.0)
    xs = np.array([[0.5]])
    mean, var = model.predict_many(xs)
    m_ref, v_ref, lml_ref = oracle_for(model, xs)
    assert abs(mean[0] - m_ref[0]) <= 1e-10
    assert abs(var[0] - v_ref[0]) <= 1e-10
    assert model.log_marginal_likelihood() == pytest.approx(lml_ref, abs=1e-9)


def test_noiseless_sine_interpolates():
    x = np.linspace(0, 2 * np.pi, 8)
    y = np.sin(x)
    model = gpr.fit(x, y, noise_variance=0.0)
    mean, var = model.predict_many(x[:, None])
    assert np.max(np.abs(mean - y)) <= 1e-8
    assert np.all(var <= 1e-8 * model.params.signal_variance)


def test_constant_targets():
    model = gpr.fit(np.linspace(0, 1, 6), np.full(6, 3.25))
    mean, _ = model.predict_many(np.linspace(-1, 2, 7)[:, None])
    assert np.allclose(mean, 3.25, atol=1e-12)
    assert model.params.noise_variance < 1e-6


def test_far_field_reverts_to_prior():
    model = gpr.GPModel.condition([[0.0], [1.0]], [1.0, 2.0], gpr.KernelParams(2.0, (0.5,)), standardize=False)
    far = model.predict([20 * 0.5 + 1.0 + 100.0])
    assert far.mean == pytest.approx(model.target_offset, rel=1e-6, abs=1e-12)
    assert far.variance == pytest.approx(2.0, rel=1e-6)


def test_batch_equals_pointwise(rng):
    model = gpr.fit(rng.uniform(0, 5, 9), rng.normal(size=9))
    grid = np.linspace(-1, 6, 41)
    mean, var = model.predict_many(grid[:, None])
    for i, g in enumerate(grid):
        p = model.predict([g])
        assert p.mean == mean[i] and p.variance == var[i]


def test_dimension_mismatch_rejected(rng):
    model = gpr.fit(rng.normal(size=(5, 2)), rng.normal(size=5))
    with pytest.raises(ValueError, match="dimension"):
        model.predict_many(np.zeros((1, 3)))


@pytest.mark.parametrize("x,y", [(np.zeros((0, 1)), np.zeros(0)), ([[np.nan]], [1.0]), ([[0.0]], [np.inf])])
def test_fit_rejects_bad_data(x, y):
    with pytest.raises(ValueError):
        gpr.fit(x, y)


def test_conflicting_duplicates_need_noise():
    with pytest.raises(ValueError, match="noise"):
        gpr.fit([[0.0], [0.0], [1.0]], [0.0, 1.0, 2.0], noise_variance=0.0)


def test_lml_scalar_formula():
    model = gpr.GPModel.condition([[0.0]], [0.0], gpr.KernelParams(1.0, (1.0,)), standardize=False)
    assert model.log_marginal_likelihood() == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)


def test_lml_drops_when_point_duplicated():
    # with observation noise a duplicated observation is strictly less probable than a single one
    p = gpr.KernelParams(1.0, (1.0,), 0.1)
    one = gpr.GPModel.condition([[0.0]], [0.0], p, standardize=False)
    two = gpr.GPModel.condition([[0.0], [1e-9]], [0.0, 0.0], p, standardize=False)
    assert two.log_marginal_likelihood() < one.log_marginal_likelihood()


def test_lml_matches_dense_oracle_on_random_sets(rng):
    for _ in range(10):
        x = rng.uniform(0, 4, (10, 1))
        y = np.sin(2 * x[:, 0]) + 0.1 * rng.normal(size=10)
        p = gpr.KernelParams(rng.uniform(0.5, 2), (rng.uniform(0.3, 1.5),), rng.uniform(1e-3, 1e-1))
        model = gpr.GPModel.condition(x, y, p)
        _, _, lml = oracle_for(model, x[:1])
        assert model.log_marginal_likelihood() == pytest.approx(lml, abs=1e-9)


def test_factor_reproduces_kernel(rng):
    x = rng.uniform(0, 3, (7, 1))
    model = gpr.fit(x, np.cos(x[:, 0]))
    k = gpr.se_kernel(model.inputs, model.inputs, model.params.signal_variance, model.params.length_scales)
    k += (model.params.noise_variance + model.jitter) * np.eye(7)
    assert np.max(np.abs(model.factor @ model.factor.T - k)) <= 1e-8 * np.max(np.abs(k))


def test_refit_bit_identical_and_permutation_invariant(rng):
    x = rng.uniform(0, 5, 10)
    y = np.sin(x) + 0.05 * rng.normal(size=10)
    a = gpr.fit(x, y, seed=3)
    b = gpr.fit(x, y, seed=3)
    perm = rng.permutation(10)
    c = gpr.fit(x[perm], y[perm], seed=3)
    grid = np.linspace(0, 5, 11)[:, None]
    for other in (b, c):
        assert other.factor_digest() == a.factor_digest()
        assert np.array_equal(other.predict_many(grid)[0], a.predict_many(grid)[0])


def test_serialization_roundtrip(rng):
    model = gpr.fit(rng.uniform(0, 5, 6), rng.normal(size=6))
    again = gpr.GPModel.from_dict(model.to_dict())
    grid = np.linspace(0, 5, 9)[:, None]
    assert np.array_equal(again.predict_many(grid)[1], model.predict_many(grid)[1])
    bad = model.to_dict()
    bad["factor_sha256"] = "0" * 64
    with pytest.raises(GPFitError):
        gpr.GPModel.from_dict(bad)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8, unique=True), st.floats(-6, 6))
def test_variance_bounded_and_shrinks_with_data(xs, x_star):
    xs = np.array(xs)
    if np.min(np.diff(np.sort(xs))) < 1e-2:
        return
    p = gpr.KernelParams(1.3, (0.8,), 0.0)
    y = np.sin(xs)
    full = gpr.GPModel.condition(xs[:, None], y, p, standardize=False)
    fewer = gpr.GPModel.condition(xs[:-1, None], y[:-1], p, standardize=False)
    v_full = full.predict([x_star]).variance
    v_fewer = fewer.predict([x_star]).variance
    assert 0.0 <= v_full <= p.signal_variance + p.noise_variance + 1e-12
    assert v_full <= v_fewer + 1e-10

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ru_regression.experiments import oracle_on_grid
from ru_regression.losses import DomainError, GammaBand
from ru_regression.sieve import (
    SieveBasis,
    SieveFitOptions,
    SieveModel,
    default_bounds,
    feature_labels,
    features,
    fit,
    jn_schedule,
    predict,
    ru_objective,
)
from ru_regression.synthetic import RegressionDataset, SyntheticModel, generate


def test_polynomial_features_example():
    np.testing.assert_allclose(features(SieveBasis("polynomial", 2), 0.5), [1, 0.5, 0.25])


def test_spline_features_example():
    b = SieveBasis("spline", 1, order=2, knots=(0.5,))
    np.testing.assert_allclose(features(b, 0.75), [1, 0.75, 0.25])
    assert features(b, 0.25)[-1] == 0.0


def test_tensor_product_features():
    b = SieveBasis("polynomial", 1, dim=2, x_lower=(0, 0), x_upper=(1, 1))
    np.testing.assert_allclose(features(b, [0.5, 0.25]), [1, 0.25, 0.5, 0.125])
    assert feature_labels(b) == ["x1^0*x2^0", "x1^0*x2^1", "x1^1*x2^0", "x1^1*x2^1"]
    assert features(b, np.ones((3, 2))).shape == (3, 4)


def test_rescaling_and_support():
    b = SieveBasis("polynomial", 1, x_lower=(0.0,), x_upper=(10.0,))
    np.testing.assert_allclose(features(b, 5.0), [1, 0.5])
    with pytest.raises(DomainError):
        features(b, 10.5)
    with pytest.raises(DomainError):
        features(b, -0.01)


@pytest.mark.parametrize("kwargs", [
    {"kind": "fourier"}, {"degree": -1}, {"dim": 4},
    {"kind": "spline", "knots": (0.6, 0.4)}, {"kind": "spline", "knots": (0.0, 0.5)},
    {"kind": "spline", "knots": (0.01, 0.5)}, {"h_bound": -1.0},
    {"x_lower": (1.0,), "x_upper": (1.0,)},
])
def test_basis_validation(kwargs):
    with pytest.raises(ValueError):
        SieveBasis(**kwargs)


def test_default_spline_knots_are_uniform():
    b = SieveBasis("spline", 3)
    assert b.knots == (0.25, 0.5, 0.75)
    assert b.n_features == 4 + 3


def test_predict_zero_coefficients():
    b = SieveBasis("polynomial", 3, h_bound=5.0, alpha_upper=10.0)
    m = SieveModel(b, np.zeros(4), np.zeros(4))
    h, a = predict(m, np.linspace(0, 1, 5))
    assert np.all(h == 0) and np.all(a == 0)


def test_predict_clamps():
    b = SieveBasis("polynomial", 1, h_bound=2.0, alpha_upper=3.0)
    m = SieveModel(b, [0.0, 10.0], [-1.0, 10.0])
    h, a = predict(m, np.array([0.0, 0.1, 0.5, 1.0]))
    np.testing.assert_array_equal(h, [0.0, 1.0, 2.0, 2.0])
    np.testing.assert_array_equal(a, [0.0, 0.0, 3.0, 3.0])


def test_predict_interior_equals_inner_product():
    b = SieveBasis("polynomial", 2, h_bound=100.0, alpha_upper=100.0)
    coef = np.array([1.0, -2.0, 3.0])
    m = SieveModel(b, coef, coef + 5)
    x = 0.3
    h, a = predict(m, x)
    assert h == pytest.approx(features(b, x) @ coef, abs=1e-15)
    assert a == pytest.approx(features(b, x) @ (coef + 5), abs=1e-15)


def test_coefficient_length_check():
    with pytest.raises(ValueError):
        SieveModel(SieveBasis("polynomial", 2), np.zeros(2), np.zeros(3))


@settings(max_examples=200)
@given(raw=st.floats(-100, 100), target=st.floats(-5, 5), bound=st.floats(5, 50))
def test_truncation_is_a_contraction(raw, target, bound):
    b = SieveBasis("polynomial", 0, h_bound=bound, alpha_upper=bound)
    h, _ = predict(SieveModel(b, [raw], [0.0]), 0.5)
    assert abs(h - target) <= abs(raw - target) + 1e-12


def test_near_erm_limit_recovers_linear_slope():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, size=(400, 1))
    ds = RegressionDataset(x, 2 * x[:, 0], np.array(["train"] * 400, dtype=object))
    b = SieveBasis("polynomial", 1, h_bound=10.0, alpha_upper=100.0)
    m = fit(ds, b, GammaBand(1 + 1e-9))
    assert m.h_coef[1] == pytest.approx(2.0, abs=1e-3)
    assert m.h_coef[0] == pytest.approx(0.0, abs=1e-3)


def _oracle_case(n=8000, seed=0, grid=41):
    model = SyntheticModel.one_dim(0.2)
    band = GammaBand(4.0)
    ds = generate(model, n, np.random.SeedSequence([seed, n]))
    hb, mu = default_bounds(ds.outcomes)
    basis = SieveBasis("polynomial", 6, x_lower=(0.0,), x_upper=(10.0,), h_bound=hb, alpha_upper=mu)
    fitted = fit(ds, basis, band)
    xs = np.linspace(0, 10, grid)
    h, a = predict(fitted, xs)
    target = oracle_on_grid(model, band, xs)
    return h, a, target


@pytest.fixture(scope="module")
def oracle_case():
    return _oracle_case()


@pytest.mark.xfail(strict=True, reason="h* has a sqrt kink at x=0 that a degree-6 polynomial misses by ~0.45, "
                   "and alpha* is a quantile of size 2-33 whose sampling error at n=8000 is ~1")
def test_sieve_within_absolute_tolerance_on_full_grid(oracle_case):
    h, a, target = oracle_case
    assert np.max(np.abs(h - target[:, 0])) <= 0.3
    assert np.max(np.abs(a - target[:, 1])) <= 0.3


def test_sieve_h_tracks_oracle_in_interior(oracle_case):
    h, _, target = oracle_case
    inner = slice(2, -2)  # x in [0.5, 9.5]
    assert np.max(np.abs(h[inner] - target[inner, 0])) <= 0.3


def test_sieve_alpha_tracks_oracle_relatively(oracle_case):
    _, a, target = oracle_case
    inner = slice(2, -2)
    rel = np.abs(a[inner] - target[inner, 1]) / target[inner, 1]
    assert rel.mean() <= 0.05
    assert rel.max() <= 0.1


def test_unclamped_objective_midpoint_convex():
    rng = np.random.default_rng(0)
    ds = generate(SyntheticModel.one_dim(0.2), 300, seed=1)
    x, y = ds.subset("train")
    basis = SieveBasis("spline", 3, x_lower=(0.0,), x_upper=(10.0,))
    band = GammaBand(4.0)
    k = basis.n_features
    worst = math.inf
    for _ in range(100):
        h1, h2, a1, a2 = (rng.normal(0, 5, size=k) for _ in range(4))
        mid = ru_objective(basis, (h1 + h2) / 2, (a1 + a2) / 2, x, y, band)
        avg = 0.5 * (ru_objective(basis, h1, a1, x, y, band) + ru_objective(basis, h2, a2, x, y, band))
        worst = min(worst, avg - mid)
    assert worst >= -1e-10 * max(1.0, abs(avg))


def test_fit_decreases_objective():
    ds = generate(SyntheticModel.one_dim(0.2), 1000, seed=2)
    hb, mu = default_bounds(ds.outcomes)
    basis = SieveBasis("spline", 2, x_lower=(0.0,), x_upper=(10.0,), h_bound=hb, alpha_upper=mu)
    m = fit(ds, basis, GammaBand(4.0), SieveFitOptions(max_iter=2000))
    assert m.info["objective"] <= m.info["initial_objective"]
    x, y = ds.subset("train")
    assert ru_objective(basis, m.h_coef, m.alpha_coef, x, y, GammaBand(4.0)) == pytest.approx(m.info["objective"])


def test_strict_fit_reports_gradient_norm():
    from ru_regression.oracle import ConvergenceError

    ds = generate(SyntheticModel.one_dim(0.2), 500, seed=3)
    basis = SieveBasis("polynomial", 3, x_lower=(0.0,), x_upper=(10.0,))
    with pytest.raises(ConvergenceError, match="subgradient norm"):
        fit(ds, basis, GammaBand(4.0), SieveFitOptions(max_iter=5, strict=True))


def test_fit_rejects_empty_train():
    ds = RegressionDataset(np.zeros((2, 1)), np.zeros(2), np.array(["test", "test"], dtype=object))
    with pytest.raises(ValueError):
        fit(ds, SieveBasis(), GammaBand(2.0))


def test_default_bounds():
    hb, mu = default_bounds(np.array([-3.0, 1.0, 2.0]))
    assert hb == 6.0 and mu == 144.0


def test_jn_schedule():
    assert jn_schedule(8000, 2, 1) == 4
    assert jn_schedule(3) >= 1
    with pytest.raises(ValueError):
        jn_schedule(2)
    with pytest.raises(ValueError):
        jn_schedule(100, 0)


@given(n1=st.integers(3, 10**7), n2=st.integers(3, 10**7))
def test_jn_schedule_monotone(n1, n2):
    lo, hi = sorted((n1, n2))
    assert jn_schedule(lo) <= jn_schedule(hi)


def test_json_round_trip(tmp_path):
    b = SieveBasis("spline", 2, x_lower=(0.0,), x_upper=(10.0,), h_bound=7.5)
    m = SieveModel(b, np.arange(6) / 7, -np.arange(6) / 3)
    m.save(tmp_path / "s.json")
    back = SieveModel.load(tmp_path / "s.json")
    assert back.basis == b
    assert back.h_coef.tobytes() == m.h_coef.tobytes()
    assert back.alpha_coef.tobytes() == m.alpha_coef.tobytes()
    assert math.isinf(back.basis.alpha_upper)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog
from scipy.stats import norm

from ru_regression.experiments import min_ru_over_levels, random_loss_distribution
from ru_regression.losses import DomainError, GammaBand
from ru_regression.oracle import (
    DiscreteLossDistribution,
    GaussianMixture1D,
    InvariantError,
    conditional_ru_minimizer,
    conditional_ru_risk,
    cvar_discrete,
    mixture_loss_quantile,
    squared_loss_cdf,
    worstcase_risk_discrete,
    worstcase_risk_np,
)
from ru_regression.synthetic import SyntheticModel, conditional_mixture


@st.composite
def loss_dists(draw, max_size=50):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_loss_distribution(np.random.default_rng(seed), 2, max_size)


bands = st.floats(1.0 + 1e-6, 20.0).map(GammaBand)


def lp_worst_case(dist, band):
    """Direct LP solve, independent of both closed-form routes."""
    k = dist.losses.size
    res = linprog(
        -dist.losses,
        A_eq=np.ones((1, k)),
        b_eq=[1.0],
        bounds=list(zip(band.inv_gamma * dist.probs, band.gamma * dist.probs)),
        method="highs",
    )
    assert res.status == 0
    return -res.fun


def test_distribution_invariants():
    with pytest.raises(InvariantError):
        DiscreteLossDistribution([1, 2], [0.5, 0.4])
    with pytest.raises(InvariantError):
        DiscreteLossDistribution([1, 2], [1.0, 0.0])
    with pytest.raises(InvariantError):
        DiscreteLossDistribution([1, 2, 3], [0.5, 0.5])


def test_greedy_hand_example():
    dist = DiscreteLossDistribution.uniform([0, 1, 2, 3])
    assert worstcase_risk_discrete(dist, GammaBand(3.0)) == pytest.approx(2.5, abs=1e-15)


def test_np_hand_example():
    dist = DiscreteLossDistribution.uniform([0, 1, 2, 3])
    assert worstcase_risk_np(dist, GammaBand(3.0)) == pytest.approx(2.5, abs=1e-15)


def test_worst_case_collapses_to_mean_as_gamma_to_one():
    dist = DiscreteLossDistribution.uniform([0, 1, 2, 3])
    b = GammaBand(1 + 1e-9)
    assert worstcase_risk_discrete(dist, b) == pytest.approx(1.5, abs=1e-6)
    assert worstcase_risk_np(dist, b) == pytest.approx(1.5, abs=1e-6)


@pytest.mark.parametrize("g", [1.5, 3.0, 20.0])
def test_constant_losses_are_unchanged(g):
    dist = DiscreteLossDistribution([2.5, 2.5, 2.5], [0.2, 0.3, 0.5])
    assert worstcase_risk_discrete(dist, GammaBand(g)) == pytest.approx(2.5, abs=1e-12)
    assert worstcase_risk_np(dist, GammaBand(g)) == pytest.approx(2.5, abs=1e-12)


def test_single_atom():
    dist = DiscreteLossDistribution([4.0], [1.0])
    assert worstcase_risk_np(dist, GammaBand(5)) == 4.0
    assert cvar_discrete(dist, 0.3) == 4.0


@settings(max_examples=300)
@given(dist=loss_dists(), band=bands)
def test_np_matches_greedy(dist, band):
    a = worstcase_risk_discrete(dist, band)
    b = worstcase_risk_np(dist, band)
    assert abs(a - b) <= 1e-10 * max(1.0, a)


@settings(max_examples=60, deadline=None)
@given(dist=loss_dists(max_size=20), band=bands)
def test_greedy_matches_linear_program(dist, band):
    assert worstcase_risk_discrete(dist, band) == pytest.approx(lp_worst_case(dist, band), rel=1e-7, abs=1e-9)


@given(dist=loss_dists(), band=bands)
def test_worst_case_dominates_mean(dist, band):
    assert worstcase_risk_discrete(dist, band) >= dist.mean() - 1e-12


@given(dist=loss_dists(), g1=st.floats(1.01, 20), g2=st.floats(1.01, 20))
def test_worst_case_monotone_in_gamma(dist, g1, g2):
    lo, hi = sorted((g1, g2))
    assert worstcase_risk_discrete(dist, GammaBand(lo)) <= worstcase_risk_discrete(dist, GammaBand(hi)) + 1e-12


@given(dist=loss_dists(), band=bands)
def test_worst_case_equals_mean_plus_cvar(dist, band):
    closed = band.inv_gamma * dist.mean() + band.c_lin * cvar_discrete(dist, band.eta)
    assert worstcase_risk_discrete(dist, band) == pytest.approx(closed, rel=1e-10, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(dist=loss_dists(), band=bands)
def test_ru_scalar_identity(dist, band):
    closed = band.inv_gamma * dist.mean() + band.c_lin * cvar_discrete(dist, band.eta)
    assert abs(min_ru_over_levels(dist, band, 1e-6) - closed) <= band.gamma * 1e-6


def test_cvar_example_and_grid_check():
    dist = DiscreteLossDistribution.uniform([1, 2, 3, 4])
    assert cvar_discrete(dist, 0.75) == pytest.approx(4.0)
    grid = np.linspace(0, 5, 50001)
    ru = grid + (1 / 0.25) * (dist.probs @ np.maximum(dist.losses[:, None] - grid, 0))
    assert ru.min() == pytest.approx(4.0, abs=1e-9)


def test_cvar_small_eta_is_mean():
    dist = DiscreteLossDistribution([1.0, 5.0, 2.0], [0.2, 0.3, 0.5])
    assert cvar_discrete(dist, 1e-12) == pytest.approx(dist.mean(), rel=1e-9)


@pytest.mark.parametrize("eta", [0.0, 1.0, -0.1, 1.5])
def test_cvar_rejects_bad_eta(eta):
    with pytest.raises(DomainError):
        cvar_discrete(DiscreteLossDistribution.uniform([1, 2]), eta)


def test_quantile_convention_right_continuous():
    dist = DiscreteLossDistribution.uniform([1, 2, 3, 4])
    assert dist.quantile(0.5) == 2.0
    assert dist.quantile(0.51) == 3.0


# --- Gaussian mixtures ---------------------------------------------------------

def test_mixture_invariants():
    with pytest.raises(InvariantError):
        GaussianMixture1D([0.5, 0.4], [0, 1], [1, 1])
    with pytest.raises(InvariantError):
        GaussianMixture1D([0.5, 0.5], [0, 1], [1, 0])


def test_one_sigma_interval():
    mix = GaussianMixture1D([1.0], [0.0], [1.0])
    assert mixture_loss_quantile(0.0, 0.6827, mix) == pytest.approx(1.0, abs=1e-3)
    exact = norm.cdf(1) - norm.cdf(-1)
    assert mixture_loss_quantile(0.0, exact, mix) == pytest.approx(1.0, abs=1e-8)


def test_small_eta_quantile_vanishes_at_the_mode():
    mix = GaussianMixture1D([1.0], [3.0], [2.0])
    assert mixture_loss_quantile(3.0, 1e-9, mix) < 1e-15


@st.composite
def mixtures(draw):
    k = draw(st.integers(1, 3))
    w = np.array(draw(st.lists(st.floats(0.05, 1), min_size=k, max_size=k)))
    w = w / w.sum()
    w[-1] = 1 - w[:-1].sum()
    means = draw(st.lists(st.floats(-10, 10), min_size=k, max_size=k))
    sds = draw(st.lists(st.floats(0.1, 3), min_size=k, max_size=k))
    return GaussianMixture1D(w, means, sds)


@settings(max_examples=100, deadline=None)
@given(mix=mixtures(), h=st.floats(-12, 12), eta=st.floats(0.01, 0.99))
def test_quantile_self_consistent(mix, h, eta):
    t = mixture_loss_quantile(h, eta, mix)
    assert abs(squared_loss_cdf(t, h, mix) - eta) <= 1e-10


def test_quantile_bracket_expansion_and_failure():
    mix = GaussianMixture1D([1.0], [0.0], [1.0])
    assert mixture_loss_quantile(0.0, 0.9, mix, t_max=1e-3) == pytest.approx(norm.ppf(0.95) ** 2, rel=1e-8)
    from ru_regression.oracle import ConvergenceError

    with pytest.raises(ConvergenceError):
        mixture_loss_quantile(0.0, 0.9, mix, t_max=1e-6, max_expansions=3)


def test_conditional_risk_matches_quadrature():
    mix = GaussianMixture1D([0.8, 0.2], [2.0, 9.0], [1.0, 1.0])
    band = GammaBand(3.0)
    # trapezoid with 4001 nodes per component over +-8 sd
    for h, a in [(3.0, 2.0), (5.0, 10.0), (0.0, 0.5), (4.0, 0.0)]:
        q = 0.0
        for w, m, s in zip(mix.weights, mix.means, mix.sds):
            y = np.linspace(m - 8 * s, m + 8 * s, 4001)
            L = (y - h) ** 2
            f = band.inv_gamma * L + band.c_lin * a + band.c_relu * np.maximum(L - a, 0)
            q += w * np.trapezoid(f * norm.pdf(y, m, s), y)
        assert conditional_ru_risk(h, a, mix, band) == pytest.approx(q, rel=1e-6)


def test_conditional_minimizer_erm_limit():
    mix = GaussianMixture1D([0.8, 0.2], [2.0, 9.0], [1.0, 1.0])
    h, a = conditional_ru_minimizer(mix, GammaBand(1 + 1e-9))
    assert h == pytest.approx(mix.mean(), abs=1e-4)


@pytest.mark.parametrize("g", [1.5, 2.0, 4.0, 8.0])
def test_conditional_minimizer_alpha_is_loss_quantile(g):
    mix = GaussianMixture1D([0.8, 0.2], [2.0, 9.0], [1.0, 1.0])
    band = GammaBand(g)
    h, a = conditional_ru_minimizer(mix, band)
    assert a == pytest.approx(mixture_loss_quantile(h, band.eta, mix), abs=1e-4)


@pytest.mark.parametrize("g", [2.0, 8.0])
def test_conditional_minimizer_symmetric_mixture(g):
    mix = GaussianMixture1D([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])
    h, _ = conditional_ru_minimizer(mix, GammaBand(g))
    assert h == pytest.approx(0.0, abs=1e-5)


def test_conditional_minimizer_beats_neighbours():
    mix = GaussianMixture1D([0.8, 0.2], [2.0, 9.0], [1.0, 1.0])
    band = GammaBand(4.0)
    h, a = conditional_ru_minimizer(mix, band)
    best = conditional_ru_risk(h, a, mix, band)
    for dh in (-0.05, 0.05):
        for da in (-0.1, 0.0, 0.1):
            assert conditional_ru_risk(h + dh, a + da, mix, band) >= best


@given(x=st.floats(0, 10), h_shift=st.floats(-3, 3), g=st.sampled_from([2.0, 4.0, 8.0]),
       p=st.floats(0.05, 0.95))
@settings(deadline=None)
def test_quantile_bounded_away_from_zero(x, h_shift, g, p):
    mix = conditional_mixture(SyntheticModel.one_dim(p), [x])
    h = mix.mean() + h_shift
    assert mixture_loss_quantile(h, GammaBand(g).eta, mix) > 0

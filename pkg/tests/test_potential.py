import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gammainc
from scipy.stats import poisson

from gpcde.density_evolution import ErasureProfile, h_eval
from gpcde.potential import (
    H_closed, PotentialThresholdError, convexity_identity_check, loss_mixture, loss_single, min_Vs, potential_threshold,
    potential_threshold_stationary, potential_Us, potential_Vs, potential_Vs_loss_form,
    random_profile, semi_regular,
)


def loss_bruteforce(t, x):
    k = np.arange(0, t)
    return float(np.sum(poisson.pmf(k, x) * (t - k)))


def H_quad(x, c, tau):
    f = lambda s: sum(p * gammainc(t, c * s) for t, p in tau.items())  # noqa: E731
    return quad(f, 0.0, x, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


@pytest.mark.parametrize("t,x", [(1, 0.0), (1, 2.0), (3, 0.5), (4, 4.0), (10, 30.0)])
def test_loss_integer(t, x):
    assert loss_single(t, x) == pytest.approx(loss_bruteforce(t, x), abs=1e-14)


def test_loss_affine_extension():
    x = np.linspace(0, 10, 21)
    mid = loss_single(3.25, x)
    assert np.allclose(mid, 0.75 * loss_single(3, x) + 0.25 * loss_single(4, x), atol=1e-15)
    assert loss_single(2, 0.0) == 2.0
    with pytest.raises(ValueError):
        loss_single(0.5, 1.0)


def test_loss_mixture_linear_in_profile():
    p = ErasureProfile({2: 0.3, 6: 0.7})
    assert loss_mixture(p, 3.0) == pytest.approx(0.3 * loss_bruteforce(2, 3.0) + 0.7 * loss_bruteforce(6, 3.0))


@pytest.mark.parametrize("c,tau", [(3.0, {2: 1.0}), (6.0, {4: 1.0}), (10.0, {6: 1.0}),
                                   (7.0, {3: 0.25, 5: 0.5, 8: 0.25})])
def test_potential_closed_form_vs_quadrature(c, tau):
    prof = ErasureProfile(tau)
    for x in np.linspace(0.0, 1.0, 25):
        ref = 0.5 * x * x - H_quad(x, c, tau)
        assert abs(potential_Vs(x, c, prof) - ref) < 1e-10


def test_two_closed_forms_agree():
    x = np.linspace(0, 1, 201)
    for prof in (ErasureProfile({4: 1.0}), semi_regular(3.5)):
        assert np.allclose(potential_Vs(x, 7.5, prof), potential_Vs_loss_form(x, 7.5, prof), atol=1e-13)


def test_H_derivative_is_h():
    x = np.linspace(0.05, 0.95, 19)
    eps = 1e-6
    d = (H_closed(x + eps, 6.0, 3) - H_closed(x - eps, 6.0, 3)) / (2 * eps)
    assert np.allclose(d, h_eval(3, 6.0, x), atol=1e-8)
    with pytest.raises(ValueError):
        H_closed(0.5, 0.0, 3)


def test_Us_stationary_at_fixed_points_of_hh():
    # dU/dx = h'(x) (x - h(h(x))), so U is stationary at fixed points of h o h
    c, t = 9.0, 4
    xs = np.linspace(0.05, 1.0, 4000)
    g = h_eval(t, c, h_eval(t, c, xs)) - xs
    k = np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0][0]
    x0 = brentq(lambda v: h_eval(t, c, h_eval(t, c, v)) - v, xs[k], xs[k + 1], xtol=1e-15)
    eps = 1e-6
    dU = (potential_Us(x0 + eps, c, t) - potential_Us(x0 - eps, c, t)) / (2 * eps)
    assert abs(dU) < 1e-7
    away = (potential_Us(0.5 + eps, c, t) - potential_Us(0.5 - eps, c, t)) / (2 * eps)
    assert abs(away) > 1e-3


def test_min_Vs():
    low = min_Vs(5.0, 4)
    assert low.x_star == 0 and low.v_min == 0
    high = min_Vs(12.0, 4)
    assert high.v_min < 0 and 0 < high.x_star <= 1
    # the minimiser is a fixed point of the scalar recursion
    assert h_eval(4, 12.0, high.x_star) == pytest.approx(high.x_star, abs=1e-6)


@pytest.mark.parametrize("t", [2, 3, 4, 8])
def test_potential_threshold_dual_route(t):
    bis = potential_threshold(t, bisect_tol=1e-7).c
    sta = potential_threshold_stationary(t)
    assert bis == pytest.approx(sta, abs=2e-6)


def test_potential_threshold_t1_is_one():
    # the nonzero minimiser bifurcates from x = 0, so only the bisection route applies
    assert potential_threshold(1, bisect_tol=1e-7).c == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(PotentialThresholdError):
        potential_threshold_stationary(1)


def test_semi_regular():
    assert semi_regular(4).tau == {4: 1.0}
    p = semi_regular(3.25)
    assert p.tau == {3: 0.75, 4: 0.25} and p.t_bar == pytest.approx(3.25)
    with pytest.raises(ValueError):
        semi_regular(0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 7.0), st.integers(0, 2**32 - 1))
def test_random_profile_hits_mean(t_bar, seed):
    t_max = 8
    p = random_profile(t_bar, t_max, np.random.default_rng(seed))
    assert p.t_bar == pytest.approx(t_bar, abs=1e-12)
    assert min(p.tau) >= 1 and max(p.tau) <= t_max


@settings(max_examples=60, deadline=None)
@given(st.floats(2.0, 6.0), st.integers(0, 2**32 - 1), st.floats(0, 40))
def test_loss_jensen(t_bar, seed, x):
    # the loss is convex in t, so any profile with the same mean loses at least as much
    p = random_profile(t_bar, 9, np.random.default_rng(seed))
    assert loss_mixture(p, x) >= loss_single(t_bar, x) - 1e-12


@pytest.mark.parametrize("t", [2, 5, 13, 20])
def test_convexity_identity(t):
    x = np.round(np.arange(0, 501) * 0.1, 10)
    r = convexity_identity_check(t, x)
    assert r.ok and r.strict_positive, r


def test_convexity_identity_rejects_t1():
    with pytest.raises(ValueError):
        convexity_identity_check(1, [1.0])

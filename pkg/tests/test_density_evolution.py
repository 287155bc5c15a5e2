import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar
from scipy.special import gammainc
from scipy.stats import poisson

from gpcde.construction import (
    EnsembleParams, ensemble_A, ensemble_B, make_braided, make_ensemble_emulating,
    make_extended_braided, make_pc, make_staircase,
)
from gpcde.density_evolution import (
    DeConfig, ErasureProfile, ThresholdError, Verdict, check_domination, de_run, de_step,
    de_threshold, ensemble_de_run, ensemble_xtilde_run, h_eval, modified_ensemble_run,
    poisson_pmf, poisson_tail, reduce_symmetric, trace_to_csv_rows,
)


def scalar_threshold(t):
    # x = Psi(u), c = u / x; the threshold is the smallest such c
    r = minimize_scalar(lambda u: u / gammainc(t, u), bounds=(1e-3, 10 * t + 10), method="bounded",
                        options={"xatol": 1e-12})
    return r.fun


@pytest.mark.parametrize("i,x", [(0, 0.0), (0, 1.0), (3, 2.5), (20, 7.0), (50, 40.0)])
def test_poisson_pmf(i, x):
    assert poisson_pmf(i, x) == pytest.approx(poisson.pmf(i, x), rel=1e-12, abs=1e-300)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 40), st.floats(0, 120, allow_nan=False))
def test_poisson_tail_matches_gammainc(t, x):
    ref = 1.0 if t == 0 else float(gammainc(t, x))
    got = poisson_tail(t, x)
    assert 0.0 <= got <= 1.0
    assert abs(got - ref) <= 1e-13 + 1e-11 * ref


def test_poisson_tail_small_values_keep_relative_accuracy():
    x = np.array([1e-3, 0.1, 1.0])
    got = poisson_tail(10, x)
    ref = gammainc(10, x)
    assert np.allclose(got, ref, rtol=1e-12, atol=0)


def test_poisson_tail_array_and_errors():
    assert poisson_tail(2, np.zeros(3)).tolist() == [0, 0, 0]
    with pytest.raises(ValueError):
        poisson_tail(-1, 1.0)
    with pytest.raises(ValueError):
        poisson_pmf(1, -1.0)


def test_profile_validation():
    p = ErasureProfile({3: 0.5, 4: 0.5})
    assert p.t_bar == 3.5 and p.t_max == 4 and not p.is_regular
    assert ErasureProfile.regular(4).is_regular
    with pytest.raises(ValueError):
        ErasureProfile({3: 0.5, 4: 0.4})
    with pytest.raises(ValueError):
        ErasureProfile({0: 1.0})


def test_h_mixture_is_weighted_sum():
    x = np.linspace(0, 20, 11)
    p = ErasureProfile({2: 0.25, 5: 0.75})
    ref = 0.25 * gammainc(2, 3 * x) + 0.75 * gammainc(5, 3 * x)
    assert np.allclose(h_eval(p, 3.0, x), ref, atol=1e-14)
    assert np.allclose(h_eval(p, 3.0, x, shift=1),
                       0.25 * gammainc(3, 3 * x) + 0.75 * gammainc(6, 3 * x), atol=1e-14)


def test_de_step_by_hand():
    B = make_staircase(3)
    x, z = de_step(B, 2, 4.0, np.ones(3))
    # ends see half an erased neighbour, the middle a full one
    assert x == pytest.approx(gammainc(2, np.array([2.0, 4.0, 2.0])), abs=1e-15)
    assert z == pytest.approx(gammainc(3, np.array([2.0, 4.0, 2.0])), abs=1e-15)
    with pytest.raises(ValueError):
        de_step(B, 2, 4.0, np.ones(4))


def test_zero_channel_converges_immediately():
    tr = de_run(make_staircase(6), 4, DeConfig(0.0))
    assert tr.verdict is Verdict.CONVERGED and tr.n_iter == 1
    assert tr.failure_fraction[0] == 0


def test_high_c_stalls():
    tr = de_run(make_staircase(20), 4, DeConfig(16.0))
    assert tr.verdict is Verdict.STALLED
    assert tr.failure_fraction[-1] > 0.5


def test_budget_exhausted():
    tr = de_run(make_staircase(20), 4, DeConfig(7.0, max_iters=3))
    assert tr.verdict is Verdict.EXHAUSTED and tr.n_iter == 3


def test_trace_recording_and_csv_rows():
    tr = de_run(make_staircase(8), 3, DeConfig(5.0, max_iters=7, stop_early=False, record_every=2))
    assert tr.iters.tolist() == [2, 4, 6, 7]
    assert np.array_equal(tr.x_at(7), tr.x_final)
    rows = list(trace_to_csv_rows(tr))
    assert [r[0] for r in rows] == [2, 4, 6, 7]
    assert rows[-1][1] == pytest.approx(tr.z_final.mean())


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 30), st.integers(1, 6), st.floats(0.5, 20))
def test_monotone_from_all_ones(L, t, c):
    tr = de_run(make_staircase(L), t, DeConfig(c, max_iters=60, stop_early=False))
    assert tr.monotone
    assert (np.diff(tr.failure_fraction) <= 1e-15).all()
    assert (tr.z <= tr.x + 1e-15).all()


@pytest.mark.parametrize("t", [2, 3, 4])
def test_pc_threshold_matches_scalar_oracle(t):
    res = de_threshold(make_pc(), t, bisect_tol=1e-8, config=DeConfig(0.0, max_iters=200000))
    assert res.c == pytest.approx(scalar_threshold(t), abs=1e-5)
    assert all(s["consistent"] for s in res.spot_checks)


def test_t1_threshold_is_one():
    res = de_threshold(make_pc(), 1, bisect_tol=1e-6, config=DeConfig(0.0, max_iters=2_000_000, zero_tol=1e-6),
                       spot_check=False)
    assert res.c == pytest.approx(1.0, abs=2e-3)


def test_threshold_rejects_unbounded():
    with pytest.raises(ThresholdError):
        de_threshold(np.zeros((2, 2)), 2, c_cap=100)


def test_coupling_raises_threshold():
    unc = de_threshold(make_pc(), 3, bisect_tol=1e-4).c
    sc = de_threshold(make_staircase(30), 3, bisect_tol=1e-4).c
    assert sc > unc + 0.3


@pytest.mark.parametrize("L,w", [(6, 2), (9, 3), (12, 5)])
def test_xtilde_relation(L, w):
    params = EnsembleParams(L, w)
    c, iters = 6.0, 25
    xt = ensemble_xtilde_run(params, 3, c, iters)
    tr = ensemble_de_run(params, 3, DeConfig(c, max_iters=iters, stop_early=False))
    A = ensemble_A(params).to_float()
    assert np.allclose(xt[0], c * A @ np.ones(L), atol=1e-14)
    for ell in range(1, iters + 1):
        assert np.allclose(xt[ell], c * A @ tr.x_at(ell), atol=1e-12)


@pytest.mark.parametrize("L,w", [(6, 2), (10, 4)])
def test_modified_ensemble_feeds_de(L, w):
    params = EnsembleParams(L, w)
    c, iters = 7.0, 30
    y = modified_ensemble_run(params, 4, c, iters)
    tr = ensemble_de_run(params, 4, DeConfig(c, max_iters=iters, stop_early=False))
    for ell in range(1, iters + 1):
        assert np.allclose(h_eval(4, 1.0, y[ell - 1]), tr.x_at(ell), atol=1e-12)


@pytest.mark.parametrize("L,w", [(6, 2), (6, 3), (10, 4)])
def test_reduced_ensemble_emulating_is_ensemble_B(L, w):
    red = reduce_symmetric(make_ensemble_emulating(EnsembleParams(L, w)))
    assert red.matrix == ensemble_B(EnsembleParams(L, w))


@pytest.mark.parametrize("spec", [make_braided(12), make_extended_braided(8, 3),
                                  make_ensemble_emulating(EnsembleParams(6, 3), "hankel")],
                         ids=lambda s: s.family)
def test_reduction_preserves_de(spec):
    cfg = DeConfig(6.5, max_iters=60, stop_early=False)
    full = de_run(spec.eta * float(spec.gamma), 4, cfg)
    red = reduce_symmetric(spec)
    small = de_run(red.matrix, 4, cfg)
    assert np.allclose(full.x[:, red.representatives], small.x, atol=1e-13)
    # partner positions share the state
    assert np.allclose(full.x[:, 0::2], full.x[:, 1::2], atol=1e-13)


def test_reduce_requires_interleaving():
    with pytest.raises(ValueError):
        reduce_symmetric(make_staircase(6))


@pytest.mark.parametrize("L,w,c", [(20, 3, 5.0), (12, 2, 9.0)])
def test_domination_holds(L, w, c):
    r = check_domination(L, w, 4, c, 100)
    assert r.ok, r.first_violation
    assert r.min_margin >= -1e-12


@pytest.mark.parametrize("L,w", [(6, 2), (11, 3)])
def test_modified_ensemble_matches_xtilde(L, w):
    params = EnsembleParams(L, w)
    c, iters = 6.5, 30
    y = modified_ensemble_run(params, 4, c, iters)
    xt = ensemble_xtilde_run(params, 4, c, iters)
    A = ensemble_A(params).to_float()
    for ell in range(1, iters + 1):
        assert np.allclose(xt[ell], c * A @ h_eval(4, 1.0, y[ell - 1]), atol=1e-12)

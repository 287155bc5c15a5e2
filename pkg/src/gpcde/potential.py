"""Single-system potential, potential thresholds and capability-profile checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from . import kernels
from .density_evolution import ErasureProfile, _profile, h_eval

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _pmf(k: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(k * np.log(x[pos]) - x[pos] - gammaln(k + 1.0))
    if k == 0:
        out[~pos] = 1.0
    return out


def _loss_int(t: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return sum(_pmf(k, x) * (t - k) for k in range(t))


def loss_single(t: float, x):
    """Expected shortfall ``E[(t - K)^+]`` for ``K ~ Poisson(x)``, affinely extended in ``t``."""
    if t < 1:
        raise ValueError("loss needs t >= 1")
    lo = math.floor(t)
    frac = t - lo
    val = _loss_int(lo, x)
    if frac:
        val = val + (_loss_int(lo + 1, x) - val) * frac
    return float(val) if np.ndim(x) == 0 else val


def loss_mixture(profile, x):
    prof = _profile(profile)
    val = sum(p * _loss_int(t, x) for t, p in prof.tau.items())
    return float(val) if np.ndim(x) == 0 else val


def H_closed(x, c: float, profile):
    """``int_0^x h`` evaluated as ``E[(K - t)^+] / c`` with ``K ~ Poisson(c x)``.

    Algebraically equal to ``x - (t_bar - L_tau(c x)) / c``, but computed from
    Poisson tails so that it keeps relative accuracy near ``x = 0``.
    """
    if c <= 0:
        raise ValueError("the potential is defined here for c > 0 only")
    prof = _profile(profile)
    ts, ps = prof.arrays()
    u = c * np.asarray(x, dtype=float)
    val = np.zeros_like(u)
    for t, p in zip(ts, ps):
        val += p * (u * kernels.mixture_tail(u, [t], [1.0]) - t * kernels.mixture_tail(u, [t + 1], [1.0]))
    val = val / c
    return float(val) if val.ndim == 0 else val


def potential_Vs(x, c: float, profile):
    x = np.asarray(x, dtype=float)
    val = 0.5 * x * x - H_closed(x, c, profile)
    return float(val) if np.ndim(val) == 0 else val


def potential_Vs_loss_form(x, c: float, profile):
    """The same potential written as ``x^2/2 - x + (t_bar - L_tau(c x)) / c``."""
    if c <= 0:
        raise ValueError("the potential is defined here for c > 0 only")
    prof = _profile(profile)
    x = np.asarray(x, dtype=float)
    val = 0.5 * x * x - x + (prof.t_bar - loss_mixture(prof, c * x)) / c
    return float(val) if np.ndim(val) == 0 else val


def potential_Us(x, c: float, profile):
    """Potential of the doubled scalar recursion ``x -> h(h(x))``."""
    x = np.asarray(x, dtype=float)
    hx = h_eval(profile, c, x)
    val = hx * x - H_closed(x, c, profile) - H_closed(hx, c, profile)
    return float(val) if np.ndim(val) == 0 else val


@dataclass
class PotentialEval:
    x_star: float
    v_min: float
    samples: tuple | None = None


def _golden(f, a, b, tol=1e-12, max_iter=200):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _min_on_grid(c, prof, n):
    xs = np.linspace(0.0, 1.0, n + 1)
    vs = potential_Vs(xs, c, prof)
    k = int(np.argmin(vs))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, n)]
    f = lambda x: potential_Vs(x, c, prof)  # noqa: E731
    xr, vr = _golden(f, a, b)
    if vs[k] <= vr:
        xr, vr = xs[k], vs[k]
    return xr, vr, xs, vs


def min_Vs(c: float, profile, grid: int = 10_000, keep_samples: bool = False) -> PotentialEval:
    """Global minimum of the potential over ``[0, 1]``: dense grid then golden-section."""
    prof = _profile(profile)
    x1, v1, xs, vs = _min_on_grid(c, prof, grid)
    x2, v2, xs2, vs2 = _min_on_grid(c, prof, 2 * grid)
    # a disagreement means the grid was too coarse to isolate the basin
    if (v1 < 0) != (v2 < 0) or abs(v1 - v2) > 1e-10:
        x1, v1, xs, vs = x2, v2, xs2, vs2
    samples = (xs, vs) if keep_samples else None
    return PotentialEval(float(x1), float(v1), samples)


class PotentialThresholdError(RuntimeError):
    pass


@dataclass
class PotentialThreshold:
    c: float
    lo: float
    hi: float
    log: list = field(default_factory=list)


def potential_threshold(profile, bisect_tol: float = 1e-6, bracket=None,
                        grid: int = 10_000, c_cap: float = 1e4) -> PotentialThreshold:
    """``sup{c : min_x V_s(x; c) >= 0}`` by bisection on the sign of the minimum."""
    prof = _profile(profile)
    if prof.t_bar < 1:
        raise ValueError("profile mean must be >= 1")
    lo, hi = bracket if bracket is not None else (0.5, 2.0 * prof.t_max + 10.0)
    log = []
    neg = lambda c: min_Vs(c, prof, grid).v_min < 0  # noqa: E731
    while neg(lo):
        log.append({"c": lo, "v_min_negative": True})
        lo /= 2
        if lo < 1e-9:
            raise PotentialThresholdError("potential is negative for every tested c > 0")
    while not neg(hi):
        log.append({"c": hi, "v_min_negative": False})
        lo, hi = hi, 2 * hi
        if hi > c_cap:
            raise PotentialThresholdError(f"potential stays nonnegative up to c = {c_cap}")
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        n = neg(mid)
        log.append({"c": mid, "v_min_negative": n})
        if n:
            hi = mid
        else:
            lo = mid
    return PotentialThreshold(0.5 * (lo + hi), lo, hi, log)


def potential_threshold_stationary(profile, u_max: float | None = None, n_grid: int = 20_000) -> float:
    """Potential threshold from the stationary-point conditions.

    At the threshold the potential has a nonzero minimiser ``x*`` with
    ``h(x*) = x*`` and ``V_s(x*) = 0``.  Writing ``u = c x*`` gives
    ``x* = h_1(u)`` and ``c = u / x*`` (``h_1`` being ``h`` at ``c = 1``), so
    the threshold is the smallest root in ``u`` of ``V_s(x*(u); c(u))``.  No
    minimisation over ``x`` and no bisection on ``c`` is involved.

    When the minimiser bifurcates from ``x = 0`` (profiles dominated by
    ``t = 1``) there is no interior root and this raises.
    """

    prof = _profile(profile)
    u_max = u_max or 4.0 * prof.t_max + 20.0

    def F(u):
        x = h_eval(prof, 1.0, u)
        return potential_Vs(x, u / x, prof)

    us = np.linspace(1e-3, u_max, n_grid)
    fs = np.array([F(u) for u in us])
    roots = []
    for k in np.nonzero(np.sign(fs[:-1]) != np.sign(fs[1:]))[0]:
        u = brentq(F, us[k], us[k + 1], xtol=1e-14)
        roots.append(u / h_eval(prof, 1.0, u))
    if not roots:
        raise PotentialThresholdError("no stationary point with zero potential found")
    return min(roots)


def semi_regular(t_bar: float) -> ErasureProfile:
    if t_bar < 1:
        raise ValueError("t_bar must be >= 1")
    lo = math.floor(t_bar)
    frac = t_bar - lo
    if frac == 0:
        return ErasureProfile({lo: 1.0})
    return ErasureProfile({lo: 1.0 + lo - t_bar, lo + 1: frac})


def random_profile(t_bar: float, t_max: int, rng: np.random.Generator) -> ErasureProfile:
    """Uniform point on the simplex over ``{1..t_max}``, then pairwise mass shifts to hit ``t_bar``."""
    if not 1 <= t_bar <= t_max:
        raise ValueError("need 1 <= t_bar <= t_max")
    tau = rng.dirichlet(np.ones(t_max))
    ts = np.arange(1, t_max + 1)
    for _ in range(4 * t_max):
        m = float(ts @ tau)
        gap = m - t_bar
        if abs(gap) < 1e-15:
            break
        if gap > 0:
            # move mass from the largest supported t down to t = 1
            a = int(np.nonzero(tau > 0)[0].max())
            delta = min(tau[a], gap / (ts[a] - 1))
            tau[a] -= delta
            tau[0] += delta
        else:
            a = int(np.nonzero(tau > 0)[0].min())
            delta = min(tau[a], -gap / (t_max - ts[a]))
            tau[a] -= delta
            tau[-1] += delta
    tau = np.clip(tau, 0.0, None)
    tau /= tau.sum()
    return ErasureProfile({int(t): float(p) for t, p in zip(ts, tau) if p > 0})


@dataclass
class OptimalityReport:
    t_bar: float
    c_regular: float
    samples: list
    violations: list
    loss_violations: list
    potential_violations: list

    @property
    def ok(self) -> bool:
        return not (self.violations or self.loss_violations or self.potential_violations)


def verify_regular_optimal(t_bar: float, sample_count: int = 50, seed: int = 7, *,
                           t_max: int | None = None, tol: float = 1e-4,
                           bisect_tol: float = 1e-6, x_grid=None) -> OptimalityReport:
    if t_bar < 2:
        raise ValueError("the optimality statement assumes t_bar >= 2")
    t_max = t_max or math.ceil(t_bar) + 3
    x_grid = np.linspace(0.0, 50.0, 501) if x_grid is None else np.asarray(x_grid)
    reg = semi_regular(t_bar)
    c_reg = potential_threshold(reg, bisect_tol).c
    rng = np.random.default_rng(seed)
    loss_reg = loss_single(t_bar, x_grid)
    xs = np.linspace(0.0, 1.0, 201)
    v_reg = potential_Vs(xs, c_reg, reg)
    samples, viol, lviol, pviol = [], [], [], []
    for k in range(sample_count):
        prof = random_profile(t_bar, t_max, rng)
        c_p = potential_threshold(prof, bisect_tol).c
        samples.append({"index": k, "tau": prof.to_dict(), "c_p": c_p})
        if c_p > c_reg + tol:
            viol.append({"index": k, "c_p": c_p, "c_regular": c_reg})
        gap = loss_mixture(prof, x_grid) - loss_reg
        if gap.min() < -1e-12:
            lviol.append({"index": k, "min_gap": float(gap.min())})
        vgap = v_reg - potential_Vs(xs, c_reg, prof)
        if vgap.min() < -1e-12:
            pviol.append({"index": k, "min_gap": float(vgap.min())})
    return OptimalityReport(t_bar, c_reg, samples, viol, lviol, pviol)


@dataclass
class IdentityReport:
    t: int
    max_error: float
    ok: bool
    strict_positive: bool


def convexity_identity_check(t: int, x_grid, tol: float = 1e-12) -> IdentityReport:
    """``L(t-1,x) + L(t+1,x) - 2 L(t,x)`` against ``P[Poisson(x) = t]``."""
    if t < 2:
        raise ValueError("identity needs t >= 2")
    x = np.asarray(x_grid, dtype=float)
    lhs = _loss_int(t - 1, x) + _loss_int(t + 1, x) - 2 * _loss_int(t, x)
    pmf = _pmf(t, x)
    err = float(np.max(np.abs(lhs - pmf)))
    # positivity is only resolvable where the pmf is well above rounding level
    visible = pmf > 1e-10
    strict = bool(np.all(lhs[visible] > 0))
    return IdentityReport(t, err, err < tol, strict)

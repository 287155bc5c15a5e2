"""Density evolution for generalized product codes over the erasure channel.

The state ``x[i]`` is the probability that a check node at position ``i``
cannot resolve a given erased bit; one iteration maps
``x -> h(B x)`` with ``h(y) = sum_t tau_t * P[Poisson(c y) >= t]``.  The
failure probability ``z`` uses the tail at ``t + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .construction import (
    INTERLEAVED_FAMILIES,
    AveragingMatrix,
    ConstructionError,
    EnsembleParams,
    EtaSpec,
    RationalMatrix,
    averaging_matrix,
    deinterleave,
    ensemble_A,
    ensemble_B,
    make_extended_braided,
)


class ThresholdError(RuntimeError):
    pass


def poisson_pmf(i: int, x: float) -> float:
    if i < 0 or x < 0:
        raise ValueError("poisson_pmf needs i >= 0 and x >= 0")
    if x == 0:
        return 1.0 if i == 0 else 0.0
    return math.exp(i * math.log(x) - x - math.lgamma(i + 1))


def poisson_tail(t: int, x):
    """P[Poisson(x) >= t]; accepts scalar or array ``x``."""
    if t < 0 or np.any(np.asarray(x) < 0):
        raise ValueError("poisson_tail needs t >= 0 and x >= 0")
    out = kernels.mixture_tail(np.asarray(x, dtype=float), [t], [1.0])
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class ErasureProfile:
    """Distribution of erasure-correcting capabilities over check nodes."""

    tau: dict

    def __post_init__(self):
        tau = {int(t): float(p) for t, p in self.tau.items() if p != 0}
        if not tau:
            raise ValueError("profile has no mass")
        if min(tau) < 1:
            raise ValueError("capabilities must be >= 1")
        if min(tau.values()) < 0:
            raise ValueError("masses must be nonnegative")
        if abs(sum(tau.values()) - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {sum(tau.values())!r}, not 1")
        object.__setattr__(self, "tau", dict(sorted(tau.items())))

    @classmethod
    def regular(cls, t: int) -> "ErasureProfile":
        return cls({t: 1.0})

    @property
    def t_max(self) -> int:
        return max(self.tau)

    @property
    def t_bar(self) -> float:
        return sum(t * p for t, p in self.tau.items())

    @property
    def is_regular(self) -> bool:
        return len(self.tau) == 1

    def arrays(self):
        ts = np.fromiter(self.tau.keys(), dtype=np.int64)
        ps = np.fromiter(self.tau.values(), dtype=np.float64)
        return ts, ps

    def to_dict(self) -> dict:
        return {str(t): p for t, p in self.tau.items()}


def _profile(p) -> ErasureProfile:
    if isinstance(p, ErasureProfile):
        return p
    if isinstance(p, dict):
        return ErasureProfile(p)
    return ErasureProfile.regular(int(p))


def h_eval(profile, c: float, x, shift: int = 0):
    """``sum_t tau_t P[Poisson(c x) >= t + shift]``."""
    ts, ps = _profile(profile).arrays()
    x = np.asarray(x, dtype=float)
    out = kernels.mixture_tail(c * x, ts, ps, shift)
    return float(out) if out.ndim == 0 else out


class Verdict(str, Enum):
    CONVERGED = "converged_to_zero"
    STALLED = "stalled_nonzero"
    EXHAUSTED = "iteration_budget_exhausted"


_VERDICTS = {0: Verdict.CONVERGED, 1: Verdict.STALLED, 2: Verdict.EXHAUSTED}


@dataclass
class DeConfig:
    c: float
    max_iters: int = 100_000
    zero_tol: float = 1e-9
    stall_tol: float = 1e-13
    stop_early: bool = True
    record_every: int = 1

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if self.max_iters < 1 or self.zero_tol <= 0 or self.stall_tol <= 0:
            raise ValueError("need max_iters >= 1, zero_tol > 0, stall_tol > 0")


@dataclass
class DeTrace:
    iters: np.ndarray
    x: np.ndarray
    z: np.ndarray
    failure_fraction: np.ndarray
    verdict: Verdict
    n_iter: int
    x_final: np.ndarray
    z_final: np.ndarray
    monotone: bool
    config: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.verdict is Verdict.CONVERGED

    def x_at(self, ell: int) -> np.ndarray:
        if ell == 0:
            return np.ones_like(self.x_final)
        k = np.searchsorted(self.iters, ell)
        if k >= len(self.iters) or self.iters[k] != ell:
            raise KeyError(f"iteration {ell} was not recorded")
        return self.x[k]


def _as_float_matrix(B) -> np.ndarray:
    if isinstance(B, EtaSpec):
        B = averaging_matrix(B)
    if isinstance(B, RationalMatrix):
        return B.to_float()
    return np.asarray(B, dtype=float)


def de_step(B, profile, c: float, x):
    Bf = _as_float_matrix(B)
    x = np.asarray(x, dtype=float)
    if Bf.shape != (x.size, x.size):
        raise ValueError(f"B has shape {Bf.shape} but x has length {x.size}")
    y = c * (Bf @ x)
    return h_eval(profile, 1.0, y), h_eval(profile, 1.0, y, shift=1)


def de_run(B, profile, config: DeConfig, x0=None) -> DeTrace:
    Bf = _as_float_matrix(B)
    prof = _profile(profile)
    ts, ps = prof.arrays()
    x0 = np.ones(Bf.shape[0]) if x0 is None else np.asarray(x0, dtype=float)
    r = kernels.de_loop(Bf, x0, ts, ps, float(config.c), int(config.max_iters),
                        float(config.zero_tol), float(config.stall_tol),
                        bool(config.stop_early), int(config.record_every))
    n = Bf.shape[0]
    return DeTrace(
        iters=np.asarray(r["iters"], dtype=np.int64),
        x=np.asarray(r["x"]).reshape(-1, n),
        z=np.asarray(r["z"]).reshape(-1, n),
        failure_fraction=r["failure_fraction"],
        verdict=_VERDICTS[r["verdict"]],
        n_iter=int(r["n_iter"]),
        x_final=r["x_final"],
        z_final=r["z_final"],
        monotone=bool(r["monotone"]),
        config={**config.__dict__, "profile": prof.to_dict()},
    )


def ensemble_de_run(params: EnsembleParams, profile, config: DeConfig) -> DeTrace:
    return de_run(ensemble_B(params), profile, config)


def ensemble_xtilde_run(params: EnsembleParams, profile, c: float, iters: int) -> np.ndarray:
    """Original ensemble form ``xt <- c A Psi(A^T xt)`` from ``xt = c 1``; rows are ``l = 0..iters``."""
    A = ensemble_A(params).to_float()
    xt = c * np.ones(A.shape[0])
    out = [xt]
    for _ in range(iters):
        xt = c * (A @ h_eval(profile, 1.0, A.T @ xt))
        out.append(xt)
    return np.array(out)


def modified_ensemble_run(params: EnsembleParams, profile, c: float, iters: int) -> np.ndarray:
    """``y <- c A^T A Psi(y)``, started so that ``Psi(y^(0)) = 1``; rows are ``l = 1..iters``."""
    Bt = ensemble_B(params).to_float()
    y = c * (Bt @ np.ones(Bt.shape[0]))
    out = [y]
    for _ in range(iters - 1):
        y = c * (Bt @ h_eval(profile, 1.0, y))
        out.append(y)
    return np.array(out)


@dataclass
class Reduction:
    matrix: AveragingMatrix
    representatives: np.ndarray  # full-matrix positions whose DE state equals the reduced state


def reduce_symmetric(spec: EtaSpec) -> Reduction:
    """Collapse the interleaved symmetry of braided-type codes.

    Positions ``2i`` and ``2i + 1`` of an interleaved ``eta`` always carry the
    same DE state, so the recursion can run on ``gamma * eta'``.  For the
    ensemble-emulating family each ``w x w`` block of ``eta'`` also has
    constant row sums, and the blocks collapse once more to an ``L x L``
    matrix.
    """
    if spec.family not in INTERLEAVED_FAMILIES:
        raise ConstructionError(f"family {spec.family!r} has no interleaved symmetry")
    ep = deinterleave(spec.eta)
    g = spec.gamma
    if spec.family != "ensemble_emulating":
        reps = 2 * np.arange(ep.shape[0])
        return Reduction(AveragingMatrix(ep * g.numerator, g.denominator), reps)
    w = int(spec.meta["w"])
    m = ep.shape[0]
    if m % w:
        raise ConstructionError("eta' side is not a multiple of w")
    L = m // w
    blk = ep.reshape(L, w, L, w).sum(axis=3)  # (I, row-in-block, J)
    if not (blk == blk[:, :1, :]).all():
        raise ConstructionError("blocks of eta' do not have constant row sums")
    reps = 2 * w * np.arange(L)
    return Reduction(AveragingMatrix(blk[:, 0, :] * g.numerator, g.denominator), reps)


@dataclass
class ThresholdResult:
    c: float
    lo: float
    hi: float
    log: list
    spot_checks: list

    def as_dict(self) -> dict:
        return {"c_bar": self.c, "lo": self.lo, "hi": self.hi,
                "bracket_log": self.log, "spot_checks": self.spot_checks}


def _succeeds(B, profile, c, base: DeConfig) -> bool:
    cfg = DeConfig(c, base.max_iters, base.zero_tol, base.stall_tol, True, 0)
    return de_run(B, profile, cfg).converged


def de_threshold(B, profile, bracket=None, bisect_tol: float = 1e-7, *,
                 config: DeConfig | None = None, max_steps: int = 60,
                 c_cap: float = 1e4, spot_check: bool = True) -> ThresholdResult:
    """Largest ``c`` for which DE from the all-ones state reaches zero (bisection)."""
    prof = _profile(profile)
    base = config or DeConfig(0.0)
    lo, hi = bracket if bracket is not None else (0.0, 2.0 * prof.t_max + 10.0)
    log = []
    while not _succeeds(B, prof, lo, base):
        log.append({"c": lo, "converged": False})
        if lo == 0.0:
            raise ThresholdError("DE does not converge even at c = 0")
        lo = lo / 2 if lo > 1e-6 else 0.0
    log.append({"c": lo, "converged": True})
    while _succeeds(B, prof, hi, base):
        log.append({"c": hi, "converged": True})
        lo = hi
        hi *= 2
        if hi > c_cap:
            raise ThresholdError(f"DE converges for every tested c up to {c_cap}")
    log.append({"c": hi, "converged": False})
    steps = 0
    while hi - lo > bisect_tol and steps < max_steps:
        mid = 0.5 * (lo + hi)
        ok = _succeeds(B, prof, mid, base)
        log.append({"c": mid, "converged": ok})
        if ok:
            lo = mid
        else:
            hi = mid
        steps += 1
    c_bar = 0.5 * (lo + hi)
    checks = []
    if spot_check:
        for delta in (1e-3, 1e-2, 1e-1):
            for c in (c_bar - delta * max(c_bar, 1.0), c_bar + delta * max(c_bar, 1.0)):
                if c >= 0:
                    ok = _succeeds(B, prof, c, base)
                    checks.append({"c": c, "converged": ok, "consistent": ok == (c < c_bar)})
    return ThresholdResult(c_bar, lo, hi, log, checks)


@dataclass
class DominationReport:
    ok: bool
    iterations: int
    min_margin: float
    first_violation: dict | None


def domination_matrices(L: int, w: int):
    """Band matrix ``A`` of shape ``(L, L + 2w - 2)`` and the reduced extended-braided ``B'``."""
    wt = 2 * w - 1
    A = np.zeros((L, L + wt - 1))
    for i in range(L):
        A[i, i:i + wt] = 1.0 / wt
    Bp = reduce_symmetric(make_extended_braided(L, w)).matrix.to_float()
    return A, Bp


def check_domination(L: int, w: int, profile, c: float, iters: int,
                     tol: float = 1e-12) -> DominationReport:
    """Iterate ``y <- A^T h(A h(y))`` and ``z <- B' h(B' h(z))`` and check ``y_center >= z``."""
    A, Bp = domination_matrices(L, w)
    h = lambda v: h_eval(profile, c, v)  # noqa: E731
    y = np.ones(A.shape[1])
    z = np.ones(L)
    centre = slice(w - 1, w - 1 + L)
    min_margin = float(np.min(y[centre] - z))
    for ell in range(1, iters + 1):
        y = A.T @ h(A @ h(y))
        z = Bp @ h(Bp @ h(z))
        diff = y[centre] - z
        min_margin = min(min_margin, float(diff.min()))
        if (diff < -tol).any():
            k = int(np.argmin(diff))
            return DominationReport(False, ell, min_margin,
                                    {"iteration": ell, "index": k, "margin": float(diff[k])})
    return DominationReport(True, iters, min_margin, None)


def trace_to_csv_rows(trace: DeTrace):
    """Rows ``iter, failure_fraction, x_min, x_max, x_mean`` for the recorded iterations."""
    for ell, x in zip(trace.iters, trace.x):
        yield int(ell), float(trace.failure_fraction[ell - 1]), float(x.min()), float(x.max()), float(x.mean())

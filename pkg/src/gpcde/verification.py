"""Named verification suites run by ``gpcde verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .construction import EnsembleParams, make_ensemble_emulating, make_staircase
from .density_evolution import DeConfig, check_domination, de_run, ensemble_de_run, reduce_symmetric
from .graph_sim import monte_carlo
from .potential import convexity_identity_check, verify_regular_optimal


@dataclass
class Check:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}: {self.detail}"


def suite_equivalence(iters: int = 200, tol: float = 1e-10):
    out = []
    for L, w in [(6, 2), (6, 3), (10, 4)]:
        params = EnsembleParams(L, w)
        red = reduce_symmetric(make_ensemble_emulating(params)).matrix
        for t in (2, 4):
            for c in (t, 2 * t):
                cfg = DeConfig(c, max_iters=iters, stop_early=False)
                diff = float(np.max(np.abs(de_run(red, t, cfg).x - ensemble_de_run(params, t, cfg).x)))
                out.append(Check(f"equivalence L={L} w={w} t={t} c={c}", diff < tol, f"sup diff {diff:.3e}"))
    return out


def suite_domination(iters: int = 200):
    out = []
    for L, w in [(20, 3), (40, 5)]:
        for c in (5.0, 7.0):
            r = check_domination(L, w, 4, c, iters)
            out.append(Check(f"domination L={L} w={w} t=4 c={c}", r.ok,
                             f"min margin {r.min_margin:.3e}" if r.ok else str(r.first_violation)))
    return out


def suite_convexity(tol: float = 1e-12):
    x = np.round(np.arange(0, 501) * 0.1, 10)
    out = []
    for t in range(2, 21):
        r = convexity_identity_check(t, x, tol)
        out.append(Check(f"convexity t={t}", r.ok and r.strict_positive, f"max err {r.max_error:.3e}"))
    return out


def suite_regular_optimal(samples: int = 50, seed: int = 7):
    out = []
    for t_bar in (2.0, 3.5, 5.0):
        r = verify_regular_optimal(t_bar, samples, seed)
        best = max(s["c_p"] for s in r.samples)
        out.append(Check(f"regular-optimal t_bar={t_bar}", r.ok,
                         f"c_p(reg)={r.c_regular:.6f}, best sampled={best:.6f}, "
                         f"violations={len(r.violations)}/{len(r.loss_violations)}/{len(r.potential_violations)}"))
    return out


def suite_monte_carlo(trials: int = 100, seed: int = 1):
    rep = monte_carlo(make_staircase(8), 2000, 4, 5.0, trials, base_seed=seed, max_iters=10)
    ok = rep.within(3.0).all()
    z = np.abs(rep.W_mean - rep.de_pred) / rep.effective_stderr()
    return [Check("monte-carlo staircase L=8 n=2000 t=4 c=5", bool(ok),
                  "gap/stderr per iteration: " + " ".join(f"{v:.2f}" for v in z))]


SUITES = {
    "equivalence": suite_equivalence,
    "domination": suite_domination,
    "convexity": suite_convexity,
    "regular-optimal": suite_regular_optimal,
    "monte-carlo": suite_monte_carlo,
}

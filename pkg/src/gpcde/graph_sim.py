"""Finite-length Tanner graphs, erasure sampling and flooding peeling.

A graph is never materialised edge by edge unless asked: each pair of
connected positions ``(i, j)`` forms a block of ``d * d`` variable nodes (or
``d * (d - 1) / 2`` for ``i == j``), and variable node ids are block offsets
plus a local index.  Sampling only draws the erased variable nodes, which is
all that peeling needs.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .construction import EtaSpec, averaging_matrix
from .density_evolution import DeConfig, _profile, de_run


class GraphError(ValueError):
    pass


@dataclass
class TannerGraph:
    positions: int
    d: int
    blocks: np.ndarray  # (n_blocks, 2) position pairs i <= j, canonical order
    block_sizes: np.ndarray
    block_offsets: np.ndarray
    cn_capability: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_cn(self) -> int:
        return self.positions * self.d

    @property
    def n_vn(self) -> int:
        return int(self.block_sizes.sum())

    def cn_degrees(self) -> np.ndarray:
        deg = np.zeros(self.positions, dtype=np.int64)
        for (i, j), size in zip(self.blocks, self.block_sizes):
            if i == j:
                deg[i] += self.d - 1
            else:
                deg[i] += self.d
                deg[j] += self.d
        return np.repeat(deg, self.d)

    def endpoints(self, vn_ids) -> tuple[np.ndarray, np.ndarray]:
        """Check-node endpoints ``(a, b)``, ``a < b``, of the given variable nodes."""
        vn_ids = np.asarray(vn_ids, dtype=np.int64)
        blk = np.searchsorted(self.block_offsets, vn_ids, side="right") - 1
        local = vn_ids - self.block_offsets[blk]
        pi = self.blocks[blk, 0]
        pj = self.blocks[blk, 1]
        d = self.d
        ra, rb = np.empty_like(local), np.empty_like(local)
        cross = pi != pj
        ra[cross] = local[cross] // d
        rb[cross] = local[cross] % d
        if (~cross).any():
            ra[~cross], rb[~cross] = _triu_decode(local[~cross], d)
        return pi * d + ra, pj * d + rb

    def edges(self) -> np.ndarray:
        if self.n_vn > 50_000_000:
            raise GraphError("graph too large to materialise")
        a, b = self.endpoints(np.arange(self.n_vn))
        return np.stack([a, b], axis=1)

    def export_text(self) -> str:
        lines = [f"gpc-graph v1 {self.positions} {self.d}"]
        for v, (a, b) in enumerate(self.edges()):
            lines.append(f"{v} {a} {b}")
        return "\n".join(lines) + "\n"


def _triu_decode(k: np.ndarray, d: int):
    """Map index ``k`` of the strict upper triangle (row-major) to ``(r, s)``, ``r < s``."""
    # rows before r hold r*d - r*(r+1)/2 entries
    r = np.floor(((2 * d - 1) - np.sqrt((2 * d - 1) ** 2 - 8.0 * k)) / 2).astype(np.int64)
    r = np.clip(r, 0, d - 2)
    start = r * d - r * (r + 1) // 2
    over = k < start
    while over.any():
        r[over] -= 1
        start = r * d - r * (r + 1) // 2
        over = k < start
    nxt = (r + 1) * d - (r + 1) * (r + 2) // 2
    under = k >= nxt
    while under.any():
        r[under] += 1
        start = r * d - r * (r + 1) // 2
        nxt = (r + 1) * d - (r + 1) * (r + 2) // 2
        under = k >= nxt
    s = r + 1 + (k - start)
    return r, s


def admissible_n(gamma, near: int, count: int = 3) -> list[int]:
    step = gamma.denominator // math.gcd(gamma.numerator, gamma.denominator)
    base = (near // step) * step
    return [base + k * step for k in range(-count + 1, count + 1) if base + k * step > 0]


def build_graph(spec: EtaSpec, n: int) -> TannerGraph:
    dq = spec.gamma * n
    if dq.denominator != 1:
        raise GraphError(
            f"gamma * n = {dq} is not an integer; admissible n nearby: {admissible_n(spec.gamma, n)}")
    d = int(dq)
    if d < 1:
        raise GraphError("need at least one check node per position")
    eta = spec.eta
    iu, ju = np.nonzero(np.triu(eta))
    blocks = np.stack([iu, ju], axis=1).astype(np.int64)
    sizes = np.where(iu == ju, d * (d - 1) // 2, d * d).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    return TannerGraph(spec.size, d, blocks, sizes, offsets,
                       meta={"family": spec.family, "gamma": str(spec.gamma), "n": n})


def assign_capabilities(graph: TannerGraph, profile, mode: str = "deterministic",
                        rng_seed: int | None = None) -> TannerGraph:
    prof = _profile(profile)
    d = graph.d
    if mode == "deterministic":
        counts = {t: p * d for t, p in prof.tau.items()}
        if any(abs(v - round(v)) > 1e-9 for v in counts.values()):
            raise GraphError(f"tau_t * d is not integral for d = {d}: {counts}")
        per_pos = np.concatenate([np.full(int(round(v)), t) for t, v in counts.items()])
        cap = np.tile(per_pos, graph.positions)
    elif mode == "random":
        ts, ps = prof.arrays()
        cap = np.random.default_rng(rng_seed).choice(ts, size=graph.n_cn, p=ps)
    else:
        raise GraphError(f"unknown assignment mode {mode!r}")
    graph.cn_capability = cap.astype(np.int64)
    return graph


@dataclass
class ErasureState:
    erased: np.ndarray  # sorted variable node ids
    ea: np.ndarray
    eb: np.ndarray
    counters: np.ndarray  # residual erased degree per check node
    iteration: int = 0

    def is_consistent(self) -> bool:
        n = self.counters.size
        expect = np.bincount(self.ea, minlength=n) + np.bincount(self.eb, minlength=n)
        return bool(np.array_equal(expect, self.counters))

    def flags(self, n_vn: int) -> np.ndarray:
        f = np.zeros(n_vn, dtype=bool)
        f[self.erased] = True
        return f


def state_from_erased(graph: TannerGraph, erased) -> ErasureState:
    erased = np.unique(np.asarray(erased, dtype=np.int64))
    ea, eb = graph.endpoints(erased)
    n = graph.n_cn
    cnt = np.bincount(ea, minlength=n) + np.bincount(eb, minlength=n)
    return ErasureState(erased, ea, eb, cnt)


def sample_erasures(graph: TannerGraph, c: float, rng: np.random.Generator, n: int | None = None) -> ErasureState:
    """Erase every variable node independently with probability ``c / n``."""
    n = n if n is not None else graph.meta["n"]
    if c < 0 or c > n:
        raise GraphError(f"need 0 <= c <= n, got c={c}, n={n}")
    p = c / n
    picked = []
    for off, size in zip(graph.block_offsets, graph.block_sizes):
        if p >= 1.0:
            k_ids = np.arange(size)
        else:
            k = rng.binomial(size, p)
            k_ids = rng.choice(size, size=k, replace=False) if k else np.empty(0, np.int64)
        picked.append(off + np.sort(k_ids))
    erased = np.concatenate(picked) if picked else np.empty(0, np.int64)
    return state_from_erased(graph, erased)


@dataclass
class PeelResult:
    W: np.ndarray  # W[l - 1] = failing check-node fraction seen in iteration l
    remaining: np.ndarray  # still-erased variable node ids
    rounds: int


def peel(graph: TannerGraph, state: ErasureState, max_iters: int, mode: str = "flooding") -> PeelResult:
    """Iterative bounded-distance decoding on the residual graph.

    ``flooding`` decodes every check node with at most ``t`` erasures in
    parallel each iteration, which is what the DE recursion describes.
    ``sequential`` visits check nodes one at a time; it reaches the same
    fixpoint but its per-iteration statistics differ (diagnostic only).
    """
    if graph.cn_capability is None:
        raise GraphError("assign capabilities first")
    cap = graph.cn_capability
    if mode == "flooding":
        W, rem, rounds = kernels.peel_flood(cap, state.ea, state.eb, graph.n_cn, max_iters)
        return PeelResult(np.asarray(W), state.erased[np.asarray(rem, dtype=bool)], int(rounds))
    if mode == "sequential":
        return _peel_sequential(graph, state, max_iters)
    raise GraphError(f"unknown peeling mode {mode!r}")


def _peel_sequential(graph, state, max_iters):
    cap = graph.cn_capability
    cnt = state.counters.copy()
    inc = [[] for _ in range(graph.n_cn)]
    for k, (a, b) in enumerate(zip(state.ea, state.eb)):
        inc[a].append(k)
        inc[b].append(k)
    alive = np.ones(state.erased.size, dtype=bool)
    W = np.zeros(max_iters)
    rounds = 0
    for it in range(max_iters):
        W[it] = np.mean(cnt > cap)
        progress = False
        for cn in range(graph.n_cn):
            if 0 < cnt[cn] <= cap[cn]:
                for k in inc[cn]:
                    if alive[k]:
                        alive[k] = False
                        cnt[state.ea[k]] -= 1
                        cnt[state.eb[k]] -= 1
                progress = True
        if not progress:
            W[it + 1:] = W[it]
            break
        rounds += 1
    return PeelResult(W, state.erased[alive], rounds)


@dataclass
class SimReport:
    W_mean: np.ndarray
    W_stderr: np.ndarray
    de_pred: np.ndarray
    trials: int
    seed: int
    config: dict
    wall_time: float = 0.0

    @property
    def resolution(self) -> float:
        """Smallest nonzero change of the trial-averaged estimate (one failing check node)."""
        return 1.0 / (self.config["n_cn"] * self.trials)

    def effective_stderr(self) -> np.ndarray:
        # all trials identical (typically all zero) gives a zero sample stderr;
        # the estimate cannot resolve anything finer than one check node
        return np.maximum(self.W_stderr, self.resolution)

    def within(self, k: float = 3.0, iters=None) -> np.ndarray:
        sl = slice(None) if iters is None else np.asarray(iters) - 1
        gap = np.abs(self.W_mean - self.de_pred)[sl]
        return gap <= k * self.effective_stderr()[sl]


def _one_trial(args):
    graph, c, seed, max_iters, cap_mode, profile = args
    rng = np.random.default_rng(seed)
    if cap_mode == "random":
        assign_capabilities(graph, profile, "random", rng_seed=seed)
    state = sample_erasures(graph, c, rng)
    return peel(graph, state, max_iters).W


def monte_carlo(spec: EtaSpec, n: int, profile, c: float, trials: int, base_seed: int = 0,
                max_iters: int = 10, cap_mode: str = "auto", jobs: int = 1) -> SimReport:
    """Estimate the failing check-node fraction per iteration and pair it with DE."""
    t0 = time.time()
    prof = _profile(profile)
    graph = build_graph(spec, n)
    if cap_mode == "auto":
        try:
            assign_capabilities(graph, prof, "deterministic")
            cap_mode = "deterministic"
        except GraphError:
            cap_mode = "random"
    elif cap_mode == "deterministic":
        assign_capabilities(graph, prof, "deterministic")
    tasks = [(graph, c, base_seed + k, max_iters, cap_mode, prof) for k in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            Ws = list(ex.map(_one_trial, tasks))
    else:
        Ws = [_one_trial(tk) for tk in tasks]
    Ws = np.array(Ws)
    mean = Ws.mean(axis=0)
    se = Ws.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros_like(mean)
    de = de_run(averaging_matrix(spec), prof, DeConfig(c, max_iters=max_iters, stop_early=False, record_every=0))
    config = {"family": spec.family, "gamma": str(spec.gamma), "positions": spec.size, "n": n,
              "d": graph.d, "n_cn": graph.n_cn,
              "profile": prof.to_dict(), "c": c, "trials": trials, "base_seed": base_seed,
              "max_iters": max_iters, "cap_mode": cap_mode}
    return SimReport(mean, se, de.failure_fraction, trials, base_seed, config, time.time() - t0)

"""Numpy versions of the compiled kernels.

Same algorithms and return values as ``_kernels.pyx``; used when the extension
is not built, and as the reference side of the backend benchmark.
"""

import numpy as np
from scipy.special import gammaln

SWITCH = 0.01
REL_EPS = 1e-17


def _tail(x, t):
    x = np.asarray(x, dtype=np.float64)
    if t <= 0:
        return np.ones_like(x)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    term = np.exp(-xp)
    s = term.copy()
    for i in range(1, t):
        term = term * (xp / i)
        s += term
    upper = 1.0 - s
    small = upper <= SWITCH
    if small.any():
        xs = xp[small]
        term = np.exp(t * np.log(xs) - xs - gammaln(t + 1.0))
        acc = np.zeros_like(xs)
        k = t
        active = np.ones(xs.shape, dtype=bool)
        while active.any() and k <= t + 100000:
            acc[active] += term[active]
            k += 1
            term = term * (xs / k)
            active &= term > REL_EPS * acc
        upper[small] = np.minimum(acc, 1.0)
    out[pos] = upper
    return out


def mixture_tail(x, ts, taus, shift=0):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for t, p in zip(ts, taus):
        if p != 0.0:
            out += p * _tail(x, int(t) + shift)
    return out


def de_loop(B, x0, ts, taus, c, max_iters, zero_tol, stall_tol, stop_early, record_every):
    B = np.asarray(B, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    z = np.zeros_like(x)
    ff = np.empty(max_iters)
    xs, zs, rec = [], [], []
    verdict = 2
    monotone = True
    it = 0
    while it < max_iters:
        it += 1
        y = c * (B @ x)
        xn = mixture_tail(y, ts, taus, 0)
        z = mixture_tail(y, ts, taus, 1)
        ff[it - 1] = z.mean()
        if (xn > x + 1e-15).any():
            monotone = False
        step = np.max(np.abs(xn - x)) if x.size else 0.0
        x = xn
        if record_every > 0 and it % record_every == 0:
            xs.append(x.copy())
            zs.append(z.copy())
            rec.append(it)
        if stop_early:
            if x.max(initial=0.0) < zero_tol:
                verdict = 0
                break
            if step < stall_tol:
                verdict = 1
                break
    if record_every > 0 and (not rec or rec[-1] != it):
        xs.append(x.copy())
        zs.append(z.copy())
        rec.append(it)
    return {
        "failure_fraction": ff[:it].copy(),
        "x": xs,
        "z": zs,
        "iters": rec,
        "x_final": x,
        "z_final": z,
        "verdict": verdict,
        "n_iter": it,
        "monotone": monotone,
    }


def peel_flood(cap, ea, eb, n_cn, max_iters):
    cap = np.asarray(cap, dtype=np.int64)
    ea = np.asarray(ea, dtype=np.int64)
    eb = np.asarray(eb, dtype=np.int64)
    cnt = np.bincount(ea, minlength=n_cn) + np.bincount(eb, minlength=n_cn)
    alive = np.arange(ea.size)
    W = np.zeros(max_iters)
    rounds = 0
    for it in range(max_iters):
        fail = cnt > cap
        W[it] = fail.sum() / n_cn
        if alive.size == 0:
            W[it + 1:] = W[it]
            break
        keep = fail[ea[alive]] & fail[eb[alive]]
        if keep.all():
            W[it + 1:] = W[it]
            break
        done = alive[~keep]
        cnt -= np.bincount(ea[done], minlength=n_cn) + np.bincount(eb[done], minlength=n_cn)
        alive = alive[keep]
        rounds += 1
    remaining = np.zeros(ea.size, dtype=bool)
    remaining[alive] = True
    return W, remaining, rounds

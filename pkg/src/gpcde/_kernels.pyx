# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: Poisson tails, the DE iteration and flooding peeling."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, lgamma, fabs

cnp.import_array()

cdef double SWITCH = 0.01
cdef double REL_EPS = 1e-17


cdef double _tail(double x, long t) noexcept nogil:
    cdef double term, s
    cdef long i, k
    if t <= 0:
        return 1.0
    if x <= 0.0:
        return 0.0
    term = exp(-x)
    s = term
    for i in range(1, t):
        term *= x / i
        s += term
    if 1.0 - s > SWITCH:
        return 1.0 - s
    # small tail: sum it directly to keep relative accuracy
    term = exp(t * log(x) - x - lgamma(t + 1.0))
    s = 0.0
    k = t
    while True:
        s += term
        k += 1
        term *= x / k
        if term <= REL_EPS * s or k > t + 100000:
            break
    if s > 1.0:
        return 1.0
    return s


cdef double _mix(double x, const long[:] ts, const double[:] taus, long shift) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(ts.shape[0]):
        if taus[k] != 0.0:
            s += taus[k] * _tail(x, ts[k] + shift)
    return s


def mixture_tail(x, ts, taus, long shift=0):
    cdef double[:] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef const long[:] tv = np.ascontiguousarray(ts, dtype=np.int64)
    cdef const double[:] pv = np.ascontiguousarray(taus, dtype=np.float64)
    out = np.empty(xv.shape[0], dtype=np.float64)
    cdef double[:] ov = out
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        ov[i] = _mix(xv[i], tv, pv, shift)
    return out.reshape(np.shape(x))


def de_loop(B, x0, ts, taus, double c, long max_iters, double zero_tol,
            double stall_tol, bint stop_early, long record_every):
    cdef const double[:, :] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef const long[:] tv = np.ascontiguousarray(ts, dtype=np.int64)
    cdef const double[:] pv = np.ascontiguousarray(taus, dtype=np.float64)
    cdef Py_ssize_t n = Bv.shape[0]
    x_arr = np.array(x0, dtype=np.float64)
    xn_arr = np.empty(n, dtype=np.float64)
    z_arr = np.zeros(n, dtype=np.float64)
    cdef double[:] x = x_arr
    cdef double[:] xn = xn_arr
    cdef double[:] z = z_arr
    ff_arr = np.empty(max_iters, dtype=np.float64)
    cdef double[:] ff = ff_arr
    cdef Py_ssize_t i, j
    cdef long it = 0
    cdef double acc, step, xmax, zsum
    cdef int verdict = 2
    cdef bint monotone = True
    xs = []
    zs = []
    rec = []
    while it < max_iters:
        it += 1
        step = 0.0
        xmax = 0.0
        zsum = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += Bv[i, j] * x[j]
            acc *= c
            xn[i] = _mix(acc, tv, pv, 0)
            z[i] = _mix(acc, tv, pv, 1)
            zsum += z[i]
            if xn[i] > x[i] + 1e-15:
                monotone = False
            if fabs(xn[i] - x[i]) > step:
                step = fabs(xn[i] - x[i])
            if xn[i] > xmax:
                xmax = xn[i]
        ff[it - 1] = zsum / n
        for i in range(n):
            x[i] = xn[i]
        if record_every > 0 and it % record_every == 0:
            xs.append(x_arr.copy())
            zs.append(z_arr.copy())
            rec.append(it)
        if stop_early:
            if xmax < zero_tol:
                verdict = 0
                break
            if step < stall_tol:
                verdict = 1
                break
    if record_every > 0 and (not rec or rec[len(rec) - 1] != it):
        xs.append(x_arr.copy())
        zs.append(z_arr.copy())
        rec.append(it)
    return {
        "failure_fraction": ff_arr[:it].copy(),
        "x": xs,
        "z": zs,
        "iters": rec,
        "x_final": x_arr,
        "z_final": z_arr,
        "verdict": verdict,
        "n_iter": it,
        "monotone": monotone,
    }


def peel_flood(cap, ea, eb, long n_cn, long max_iters):
    cdef const long[:] capv = np.ascontiguousarray(cap, dtype=np.int64)
    cdef const long[:] a = np.ascontiguousarray(ea, dtype=np.int64)
    cdef const long[:] b = np.ascontiguousarray(eb, dtype=np.int64)
    cdef Py_ssize_t m = a.shape[0]
    cnt_arr = np.zeros(n_cn, dtype=np.int64)
    fail_arr = np.zeros(n_cn, dtype=np.uint8)
    alive_arr = np.arange(m, dtype=np.int64)
    remaining = np.ones(m, dtype=np.uint8)
    W_arr = np.zeros(max_iters, dtype=np.float64)
    cdef long[:] cnt = cnt_arr
    cdef unsigned char[:] fail = fail_arr
    cdef long[:] alive = alive_arr
    cdef unsigned char[:] rem = remaining
    cdef double[:] W = W_arr
    cdef Py_ssize_t e, k, n_alive = m, keep, c
    cdef long it, nfail, rounds = 0
    cdef long ae, be
    for e in range(m):
        cnt[a[e]] += 1
        cnt[b[e]] += 1
    for it in range(max_iters):
        nfail = 0
        for c in range(n_cn):
            if cnt[c] > capv[c]:
                fail[c] = 1
                nfail += 1
            else:
                fail[c] = 0
        W[it] = nfail / <double>n_cn
        if n_alive == 0:
            for k in range(it + 1, max_iters):
                W[k] = W[it]
            break
        keep = 0
        for k in range(n_alive):
            e = alive[k]
            ae = a[e]
            be = b[e]
            if fail[ae] and fail[be]:
                alive[keep] = e
                keep += 1
            else:
                cnt[ae] -= 1
                cnt[be] -= 1
                rem[e] = 0
        if keep == n_alive:
            for k in range(it + 1, max_iters):
                W[k] = W[it]
            break
        n_alive = keep
        rounds += 1
    return W_arr, remaining.astype(bool), rounds

"""Forward pass over alive ``(n, s)`` states for the Robbins-Lai rule."""

from __future__ import annotations

import math

import numba
import numpy as np

from ..confseq_rl import advance_stop_ranges


@numba.njit(cache=True)
def _grow_i(a, cap):
    b = np.empty(cap, a.dtype)
    b[: a.shape[0]] = a
    return b


@numba.njit(cache=True)
def rl_sweep_kernel(lo, hi, lo_closed, hi_closed, order, n_buckets, eps, N, p, urn, structural, trim, record):
    """Forward pass for the Robbins-Lai stopping rule up to ``N``.

    The rule is Markov in ``(n, s)``: the walk stops at the first ``n``
    where ``I_n`` fits a bucket. Alive states are kept as a list of
    disjoint runs of ``s`` over a dense buffer. Weights follow
    :func:`mcbuckets.confseq_simctest.sweep_kernel`; the return tuple has
    the same layout with every final alive state in mode 0.
    """
    log_eps = math.log(eps)
    nb = lo.shape[0]
    s1 = np.zeros(nb, np.int64)
    s2 = -np.ones(nb, np.int64)
    size = 1024
    cur = np.zeros(size)
    nxt = np.zeros(size)
    seg_cap = 64
    seg_lo = np.empty(seg_cap, np.int64)
    seg_hi = np.empty(seg_cap, np.int64)
    new_lo = np.empty(seg_cap, np.int64)
    new_hi = np.empty(seg_cap, np.int64)
    cur[0] = 1.0
    seg_lo[0] = 0
    seg_hi[0] = 0
    nseg = 1
    cap = 1024
    rn = np.empty(cap, np.int64)
    rs = np.empty(cap, np.int64)
    rk = np.empty(cap, np.int64)
    ru = np.empty(cap)
    nr = 0
    probs = np.zeros(n_buckets)
    effort = 0.0
    dropped = 0.0
    closed_at = -1
    for n in range(1, N + 1):
        advance_stop_ranges(n, log_eps, lo, hi, lo_closed, hi_closed, s1, s2)
        if seg_hi[nseg - 1] + 3 >= size:
            while seg_hi[nseg - 1] + 3 >= size:
                size *= 2
            c2 = np.zeros(size)
            c2[: cur.shape[0]] = cur
            cur = c2
            nxt = np.zeros(size)
        nnew = 0
        i = 0
        while i < nseg:
            x = seg_lo[i]
            y = seg_hi[i] + 1
            while i + 1 < nseg and seg_lo[i + 1] <= y:
                i += 1
                y = seg_hi[i] + 1
            i += 1
            run = -1
            for sp in range(x, y + 1):
                c0 = cur[sp]
                c1 = cur[sp - 1] if sp > 0 else 0.0
                if structural:
                    v = 1.0 if (c0 != 0.0 or c1 != 0.0) else 0.0
                elif urn:
                    v = c0 * ((n - sp) / n) + c1 * (sp / n)
                else:
                    v = c0 * (1.0 - p) + c1 * p
                if v != 0.0 and v < trim:
                    dropped += v
                    v = 0.0
                k = -1
                if v != 0.0:
                    for kk in range(nb):
                        if s1[kk] <= sp and sp <= s2[kk]:
                            k = order[kk]
                            break
                if v == 0.0 or k >= 0:
                    if run >= 0:
                        if nnew == new_lo.shape[0]:
                            new_lo = _grow_i(new_lo, 2 * nnew)
                            new_hi = _grow_i(new_hi, 2 * nnew)
                        new_lo[nnew] = run
                        new_hi[nnew] = sp - 1
                        nnew += 1
                        run = -1
                    if k >= 0:
                        probs[k] += v
                        effort += n * v
                        if record:
                            if nr == cap:
                                cap *= 2
                                rn = _grow_i(rn, cap)
                                rs = _grow_i(rs, cap)
                                rk = _grow_i(rk, cap)
                                ru = _grow_i(ru, cap)
                            rn[nr] = n
                            rs[nr] = sp
                            rk[nr] = k
                            ru[nr] = v
                            nr += 1
                else:
                    nxt[sp] = v
                    if run < 0:
                        run = sp
            if run >= 0:
                if nnew == new_lo.shape[0]:
                    new_lo = _grow_i(new_lo, 2 * nnew)
                    new_hi = _grow_i(new_hi, 2 * nnew)
                new_lo[nnew] = run
                new_hi[nnew] = y
                nnew += 1
        for i in range(nseg):
            for s in range(seg_lo[i], seg_hi[i] + 1):
                cur[s] = 0.0
        tmp = cur
        cur = nxt
        nxt = tmp
        if nnew > seg_lo.shape[0]:
            seg_lo = np.empty(new_lo.shape[0], np.int64)
            seg_hi = np.empty(new_lo.shape[0], np.int64)
        for i in range(nnew):
            seg_lo[i] = new_lo[i]
            seg_hi[i] = new_hi[i]
        nseg = nnew
        if nseg == 0:
            closed_at = n
            break
    tot = 0
    for i in range(nseg):
        tot += seg_hi[i] - seg_lo[i] + 1
    fs = np.empty(tot, np.int64)
    fm = np.zeros(tot, np.int64)
    fu = np.empty(tot)
    t = 0
    remain = 0.0
    for i in range(nseg):
        for s in range(seg_lo[i], seg_hi[i] + 1):
            fs[t] = s
            fu[t] = cur[s]
            remain += cur[s]
            t += 1
    return rn[:nr], rs[:nr], rk[:nr], ru[:nr], effort, probs, remain, closed_at, fs, fm, fu, dropped

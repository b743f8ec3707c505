"""Compiled inner loops for fixed-step RK4.

A polynomial vector field is passed as three flat arrays: ``comp[i]`` is the
output component of term ``i``, ``coef[i]`` its coefficient and ``exps[i]``
its exponents over ``(t, y_0, ..., y_5)``.

Two precisions are provided.  The float path keeps a compensation term per
state component (Kahan style) so that rounding of the running sum does not
accumulate over 10^5 steps.  The double-double path carries every quantity as
an unevaluated sum ``hi + lo`` and is meant for convergence studies where the
float noise floor would hide the truncation error.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
NON_FINITE = 1


@njit(cache=True)
def eval_poly_field(t, y, comp, coef, exps, out):
    out[:] = 0.0
    for i in range(coef.shape[0]):
        v = coef[i]
        e = exps[i]
        if e[0]:
            v *= t ** e[0]
        for j in range(y.shape[0]):
            if e[j + 1]:
                v *= y[j] ** e[j + 1]
        out[comp[i]] += v


@njit(cache=True)
def _rk4_step(t, y, c, h, comp, coef, exps, k1, k2, k3, k4, tmp):
    n = y.shape[0]
    eval_poly_field(t, y, comp, coef, exps, k1)
    for j in range(n):
        tmp[j] = y[j] + (0.5 * h * k1[j] + c[j])
    eval_poly_field(t + 0.5 * h, tmp, comp, coef, exps, k2)
    for j in range(n):
        tmp[j] = y[j] + (0.5 * h * k2[j] + c[j])
    eval_poly_field(t + 0.5 * h, tmp, comp, coef, exps, k3)
    for j in range(n):
        tmp[j] = y[j] + (h * k3[j] + c[j])
    eval_poly_field(t + h, tmp, comp, coef, exps, k4)
    for j in range(n):
        inc = h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) + c[j]
        s = y[j] + inc
        bb = s - y[j]
        c[j] = (y[j] - (s - bb)) + (inc - bb)
        y[j] = s


@njit(cache=True)
def rk4_fixed(y0, t0, h, n_full, h_last, record_every, comp, coef, exps):
    """Integrate ``n_full`` steps of size ``h`` plus an optional final step ``h_last``.

    Returns ``(times, states, lows, status, bad_step)``.  ``lows`` holds the
    compensation terms, so ``states + lows`` is the better estimate.
    """
    n = y0.shape[0]
    n_rec = n_full // record_every + 1
    if n_full % record_every != 0:
        n_rec += 1
    if h_last != 0.0:
        n_rec += 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, n))
    lows = np.zeros((n_rec, n))
    y = y0.copy()
    c = np.zeros(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    times[0] = t0
    states[0] = y
    r = 1
    for i in range(n_full):
        t = t0 + i * h
        _rk4_step(t, y, c, h, comp, coef, exps, k1, k2, k3, k4, tmp)
        for j in range(n):
            if not np.isfinite(y[j]):
                return times[:r], states[:r], lows[:r], NON_FINITE, i
        if (i + 1) % record_every == 0 or i + 1 == n_full:
            times[r] = t0 + (i + 1) * h
            states[r] = y
            lows[r] = c
            r += 1
    if h_last != 0.0:
        t = t0 + n_full * h
        _rk4_step(t, y, c, h_last, comp, coef, exps, k1, k2, k3, k4, tmp)
        for j in range(n):
            if not np.isfinite(y[j]):
                return times[:r], states[:r], lows[:r], NON_FINITE, n_full
        times[r] = t + h_last
        states[r] = y
        lows[r] = c
        r += 1
    return times[:r], states[:r], lows[:r], OK, -1


# ---------------------------------------------------------------------------
# double-double arithmetic
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True, inline="always")
def quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


@njit(cache=True, inline="always")
def _split(a):
    t = 134217729.0 * a
    hi = t - (t - a)
    return hi, a - hi


@njit(cache=True, inline="always")
def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True, inline="always")
def dd_add(ah, al, bh, bl):
    s, e = two_sum(ah, bh)
    t, f = two_sum(al, bl)
    e += t
    s, e = quick_two_sum(s, e)
    e += f
    return quick_two_sum(s, e)


@njit(cache=True, inline="always")
def dd_mul(ah, al, bh, bl):
    p, e = two_prod(ah, bh)
    e += ah * bl + al * bh
    return quick_two_sum(p, e)


@njit(cache=True)
def dd_eval_poly_field(th, tl, yh, yl, comp, ch, cl, exps, oh, ol):
    oh[:] = 0.0
    ol[:] = 0.0
    for i in range(ch.shape[0]):
        vh, vl = ch[i], cl[i]
        e = exps[i]
        for _ in range(e[0]):
            vh, vl = dd_mul(vh, vl, th, tl)
        for j in range(yh.shape[0]):
            for _ in range(e[j + 1]):
                vh, vl = dd_mul(vh, vl, yh[j], yl[j])
        k = comp[i]
        oh[k], ol[k] = dd_add(oh[k], ol[k], vh, vl)


@njit(cache=True)
def rk4_fixed_dd(y0h, y0l, t0h, t0l, hh, hl, n_steps, record_every, comp, ch, cl, exps):
    """Double-double RK4 with uniform step ``hh + hl``.

    Times are formed as ``t0 + i * h`` in double-double, never accumulated.
    Returns ``(times_hi, times_lo, states_hi, states_lo, status, bad_step)``.
    """
    n = y0h.shape[0]
    n_rec = n_steps // record_every + 1
    if n_steps % record_every != 0:
        n_rec += 1
    th_out = np.empty(n_rec)
    tl_out = np.empty(n_rec)
    sh = np.empty((n_rec, n))
    sl = np.empty((n_rec, n))
    yh = y0h.copy()
    yl = y0l.copy()
    k = np.empty((4, n))
    kl = np.empty((4, n))
    tmph = np.empty(n)
    tmpl = np.empty(n)
    half_h, half_l = 0.5 * hh, 0.5 * hl
    # h / 6 in double-double
    q = hh / 6.0
    ph, pl = two_prod(q, 6.0)
    qh, ql = quick_two_sum(q, ((hh - ph) - pl + hl) / 6.0)
    th_out[0], tl_out[0] = t0h, t0l
    sh[0] = yh
    sl[0] = yl
    r = 1
    for i in range(n_steps):
        ih, il = dd_mul(hh, hl, float(i), 0.0)
        th, tl = dd_add(t0h, t0l, ih, il)
        tmh, tml = dd_add(th, tl, half_h, half_l)
        t1h, t1l = dd_add(th, tl, hh, hl)
        dd_eval_poly_field(th, tl, yh, yl, comp, ch, cl, exps, k[0], kl[0])
        for j in range(n):
            a, b = dd_mul(half_h, half_l, k[0, j], kl[0, j])
            tmph[j], tmpl[j] = dd_add(yh[j], yl[j], a, b)
        dd_eval_poly_field(tmh, tml, tmph, tmpl, comp, ch, cl, exps, k[1], kl[1])
        for j in range(n):
            a, b = dd_mul(half_h, half_l, k[1, j], kl[1, j])
            tmph[j], tmpl[j] = dd_add(yh[j], yl[j], a, b)
        dd_eval_poly_field(tmh, tml, tmph, tmpl, comp, ch, cl, exps, k[2], kl[2])
        for j in range(n):
            a, b = dd_mul(hh, hl, k[2, j], kl[2, j])
            tmph[j], tmpl[j] = dd_add(yh[j], yl[j], a, b)
        dd_eval_poly_field(t1h, t1l, tmph, tmpl, comp, ch, cl, exps, k[3], kl[3])
        for j in range(n):
            sh_, sl_ = dd_add(k[1, j], kl[1, j], k[2, j], kl[2, j])
            sh_, sl_ = dd_mul(sh_, sl_, 2.0, 0.0)
            sh_, sl_ = dd_add(sh_, sl_, k[0, j], kl[0, j])
            sh_, sl_ = dd_add(sh_, sl_, k[3, j], kl[3, j])
            sh_, sl_ = dd_mul(sh_, sl_, qh, ql)
            yh[j], yl[j] = dd_add(yh[j], yl[j], sh_, sl_)
            if not np.isfinite(yh[j]):
                return th_out[:r], tl_out[:r], sh[:r], sl[:r], NON_FINITE, i
        if (i + 1) % record_every == 0 or i + 1 == n_steps:
            th_out[r], tl_out[r] = t1h, t1l
            sh[r] = yh
            sl[r] = yl
            r += 1
    return th_out[:r], tl_out[:r], sh[:r], sl[:r], OK, -1


@njit(cache=True)
def dd_eval_scalar_poly(th, tl, yh, yl, ch, cl, exps):
    """Evaluate a scalar polynomial at many samples; returns hi/lo arrays."""
    m = yh.shape[0]
    out_h = np.zeros(m)
    out_l = np.zeros(m)
    for s in range(m):
        acc_h, acc_l = 0.0, 0.0
        for i in range(ch.shape[0]):
            vh, vl = ch[i], cl[i]
            e = exps[i]
            for _ in range(e[0]):
                vh, vl = dd_mul(vh, vl, th[s], tl[s])
            for j in range(yh.shape[1]):
                for _ in range(e[j + 1]):
                    vh, vl = dd_mul(vh, vl, yh[s, j], yl[s, j])
            acc_h, acc_l = dd_add(acc_h, acc_l, vh, vl)
        out_h[s] = acc_h
        out_l[s] = acc_l
    return out_h, out_l


@njit(cache=True)
def dd_minus_first(vh, vl):
    """``v[i] - v[0]`` in double-double."""
    n = vh.shape[0]
    dh = np.empty(n)
    dl = np.empty(n)
    for i in range(n):
        dh[i], dl[i] = dd_add(vh[i], vl[i], -vh[0], -vl[0])
    return dh, dl

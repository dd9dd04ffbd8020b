"""Compiled density kernels for the thresholds-mode PC-MCL posterior."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_LOG_LO = math.log(1e-9)
_LOG_HI = math.log1p(-1e-9)
_LOG_2PI = math.log(2 * math.pi)


@njit(cache=True)
def window_obs(i, x, y, tau1, tau2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w):
    a = 0
    if y >= tau1:
        a = 1
        if y > tau2:
            a = 2
    acc = const_w[i]
    for k in range(bx.size):
        s = stack_tab[a, k]
        dx = x - bx[k]
        dy = y - by[k]
        d2 = dx * dx + dy * dy
        lp = ta[s] + tb[s] * math.sqrt(d2) + tc[s] * d2
        if lp < _LOG_LO:
            lp = _LOG_LO
        elif lp > _LOG_HI:
            lp = _LOG_HI
        acc += C[i, k] * lp + NC[i, k] * math.log1p(-math.exp(lp))
    return acc


@njit(cache=True)
def increment(x0, y0, x1, y1, s, delta, floor):
    sig = s * delta
    if sig < floor:
        sig = floor
    dx = x1 - x0
    dy = y1 - y0
    return -2.0 * math.log(sig) - _LOG_2PI - (dx * dx + dy * dy) / (2.0 * sig * sig)


@njit(cache=True)
def pos_local(v, rows, n, tau1, tau2, W, L, s_max, delta, floor,
              bx, by, ta, tb, tc, stack_tab, C, NC, const_w):
    out = np.empty(rows.size)
    for j in range(rows.size):
        i = rows[j]
        x = v[i]
        y = v[n + i]
        if not (0.0 <= x <= W and 0.0 <= y <= L):
            out[j] = -np.inf
            continue
        acc = window_obs(i, x, y, tau1, tau2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
        if i >= 1:
            acc += increment(v[i - 1], v[n + i - 1], x, y, v[2 * n + i - 1], delta, floor)
        if i <= n - 2:
            acc += increment(x, y, v[i + 1], v[n + i + 1], v[2 * n + i], delta, floor)
        out[j] = acc
    return out


@njit(cache=True)
def speed_local(v, n, s_max, delta, floor):
    out = np.empty(n - 1)
    for i in range(n - 1):
        s = v[2 * n + i]
        if not (0.0 <= s <= s_max):
            out[i] = -np.inf
        else:
            out[i] = increment(v[i], v[n + i], v[i + 1], v[n + i + 1], s, delta, floor)
    return out


@njit(cache=True)
def total_obs(v, n, tau1, tau2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w):
    acc = 0.0
    for i in range(n):
        acc += window_obs(i, v[i], v[n + i], tau1, tau2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
    return acc


@njit(cache=True)
def _aisle(y, t1, t2):
    if y < t1:
        return 0
    if y <= t2:
        return 1
    return 2


@njit(cache=True)
def tau_local(v, n, tau1, tau2, ref1, ref2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w):
    """Observation log-likelihood relative to the assignment under fixed reference thresholds.

    Only windows whose aisle differs from the reference contribute, and the
    reference term does not depend on the thresholds, so differences between
    two threshold settings are exact.
    """
    acc = 0.0
    for i in range(n):
        y = v[n + i]
        if _aisle(y, tau1, tau2) != _aisle(y, ref1, ref2):
            x = v[i]
            acc += window_obs(i, x, y, tau1, tau2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w) - \
                window_obs(i, x, y, ref1, ref2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
    return acc


@njit(cache=True)
def init_obs_cache(v, n, bx, by, ta, tb, tc, stack_tab, C, NC, const_w):
    cache = np.empty(n)
    t1 = v[3 * n - 1]
    t2 = t1 + v[3 * n]
    for i in range(n):
        cache[i] = window_obs(i, v[i], v[n + i], t1, t2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
    return cache


@njit(cache=True)
def sweep(v, steps, z, log_u, accepted, cache, n, W, L, s_max, delta, floor, ref1, ref2,
          bx, by, ta, tb, tc, stack_tab, C, NC, const_w):
    """One Metropolis-within-Gibbs sweep, in place.

    Block order and random-number use match the generic blocked sampler:
    even windows, odd windows, speeds, thresholds. ``cache`` holds the current
    per-window observation terms.
    """
    it1 = 3 * n - 1
    it2 = 3 * n
    t1 = v[it1]
    t2 = t1 + v[it2]
    b = 0
    for parity in range(2):
        for i in range(parity, n, 2):
            xn = v[i] + steps[i] * z[i]
            yn = v[n + i] + steps[n + i] * z[n + i]
            ok = False
            if 0.0 <= xn <= W and 0.0 <= yn <= L:
                cur = cache[i]
                obs = window_obs(i, xn, yn, t1, t2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
                new = obs
                if i >= 1:
                    base = 2 * n + i - 1
                    cur += increment(v[i - 1], v[n + i - 1], v[i], v[n + i], v[base], delta, floor)
                    new += increment(v[i - 1], v[n + i - 1], xn, yn, v[base], delta, floor)
                if i <= n - 2:
                    base = 2 * n + i
                    cur += increment(v[i], v[n + i], v[i + 1], v[n + i + 1], v[base], delta, floor)
                    new += increment(xn, yn, v[i + 1], v[n + i + 1], v[base], delta, floor)
                ok = new - cur > log_u[b]
                if ok:
                    v[i] = xn
                    v[n + i] = yn
                    cache[i] = obs
            accepted[b] = ok
            b += 1
    for i in range(n - 1):
        j = 2 * n + i
        sn = v[j] + steps[j] * z[j]
        ok = False
        if 0.0 <= sn <= s_max:
            cur = increment(v[i], v[n + i], v[i + 1], v[n + i + 1], v[j], delta, floor)
            new = increment(v[i], v[n + i], v[i + 1], v[n + i + 1], sn, delta, floor)
            ok = new - cur > log_u[b]
            if ok:
                v[j] = sn
        accepted[b] = ok
        b += 1
    n1 = v[it1] + steps[it1] * z[it1]
    gap = v[it2] + steps[it2] * z[it2]
    ok = False
    if n1 >= 0.0 and gap >= 0.0 and n1 + gap <= L:
        n2 = n1 + gap
        cur = tau_local(v, n, t1, t2, ref1, ref2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
        new = tau_local(v, n, n1, n2, ref1, ref2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
        ok = new - cur > log_u[b]
        if ok:
            v[it1] = n1
            v[it2] = gap
            for i in range(n):
                y = v[n + i]
                if _aisle(y, t1, t2) != _aisle(y, n1, n2):
                    cache[i] = window_obs(i, v[i], y, n1, n2, bx, by, ta, tb, tc, stack_tab, C, NC, const_w)
    accepted[b] = ok

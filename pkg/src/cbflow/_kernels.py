"""Compiled inner loops for event-flow trajectories."""

import numpy as np
from numba import njit

_COLLIDE_TOL = 1e-9


@njit(cache=True)
def eval_pl(x, xs, ym, yp, period, right):
    """Evaluate a padded periodic breakpoint table (see MonotoneMap._extended)."""
    k = np.floor(x / period)
    u = x - k * period
    if u >= period:
        u -= period
        k += 1.0
    lo = 0
    hi = xs.shape[0] - 1
    # last index with xs[i] <= u
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xs[mid] <= u:
            lo = mid
        else:
            hi = mid
    i = lo
    if u == xs[i]:
        v = yp[i] if right else ym[i]
    else:
        v = yp[i] + (u - xs[i]) * (ym[i + 1] - yp[i]) / (xs[i + 1] - xs[i])
    return v + k * period


@njit(cache=True)
def _is_collided(d, period):
    q = d / period
    return abs(q - np.round(q)) * period <= _COLLIDE_TOL


@njit(cache=True)
def rotation_paths(times, angles, xs, ym, yp, period, s0, x0, rec, right):
    """Advance K starting points through events f_theta(x) = f(x - theta) + theta.

    Returns the values at the record times (NaN before a start) and the
    first time each pair's lifted difference becomes a multiple of the period.
    """
    K = s0.shape[0]
    R = rec.shape[0]
    out = np.full((R, K), np.nan)
    coll = np.full((K, K), np.inf)
    z = x0.copy()
    active = np.zeros(K, dtype=np.bool_)
    r = 0
    ne = times.shape[0]
    e = 0
    # activation and recording are interleaved with event application
    while True:
        t_next = times[e] if e < ne else np.inf
        # record every time < t_next (state is constant until then)
        while r < R and rec[r] < t_next:
            for j in range(K):
                if s0[j] <= rec[r]:
                    out[r, j] = z[j]
            r += 1
        if e >= ne:
            break
        # activate starts with s < t_next
        for j in range(K):
            if not active[j] and s0[j] < t_next:
                active[j] = True
                for k in range(K):
                    if k != j and active[k] and coll[j, k] == np.inf:
                        if _is_collided(z[j] - z[k], period):
                            coll[j, k] = max(s0[j], s0[k])
                            coll[k, j] = coll[j, k]
        th = angles[e]
        for j in range(K):
            if active[j]:
                z[j] = eval_pl(z[j] - th, xs, ym, yp, period, right) + th
        for j in range(K):
            if not active[j]:
                continue
            for k in range(j + 1, K):
                if active[k] and coll[j, k] == np.inf:
                    if _is_collided(z[j] - z[k], period):
                        coll[j, k] = t_next
                        coll[k, j] = t_next
        # an event exactly at a record time belongs to (s, t]
        while r < R and rec[r] == t_next:
            for j in range(K):
                if s0[j] <= rec[r]:
                    out[r, j] = z[j]
            r += 1
        e += 1
    # starts after the last event still collide if they begin together
    for j in range(K):
        if not active[j]:
            active[j] = True
            for k in range(K):
                if k != j and active[k] and coll[j, k] == np.inf:
                    if _is_collided(z[j] - z[k], period):
                        coll[j, k] = max(s0[j], s0[k])
                        coll[k, j] = coll[j, k]
    return out, coll


@njit(cache=True)
def pair_compensator(times, angles, xs, ym, yp, period, x1, x2, t0, rec,
                     bgrid, bvals):
    """Integral of b(X1 - X2) over [t0, t ^ T] for two points started at t0.

    ``bgrid``/``bvals`` tabulate b on one period of the lag.  Returns the
    compensator at the record times, the final products X1 X2 at the record
    times and the collision time T.
    """
    R = rec.shape[0]
    comp = np.zeros(R)
    prod = np.zeros(R)
    a = x1
    b = x2
    T = np.inf
    if _is_collided(a - b, period):
        T = t0
    acc = 0.0
    last = t0
    r = 0
    ne = times.shape[0]
    for e in range(ne + 1):
        t_next = times[e] if e < ne else np.inf
        if t_next <= t0:
            continue
        while r < R and rec[r] < t_next:
            if T == np.inf:
                lag = (a - b) - np.floor((a - b) / period) * period
                comp[r] = acc + np.interp(lag, bgrid, bvals) * (rec[r] - last)
            else:
                comp[r] = acc
            prod[r] = a * b
            r += 1
        if e == ne:
            break
        if T == np.inf:
            lag = (a - b) - np.floor((a - b) / period) * period
            acc += np.interp(lag, bgrid, bvals) * (t_next - last)
            last = t_next
            th = angles[e]
            a = eval_pl(a - th, xs, ym, yp, period, True) + th
            b = eval_pl(b - th, xs, ym, yp, period, True) + th
            if _is_collided(a - b, period):
                T = t_next
        else:
            th = angles[e]
            a = eval_pl(a - th, xs, ym, yp, period, True) + th
            b = eval_pl(b - th, xs, ym, yp, period, True) + th
        while r < R and rec[r] == t_next:
            comp[r] = acc
            prod[r] = a * b
            r += 1
    return comp, prod, T

"""Distances between event flows.

``dist_C_n`` is the uniform distance of interval maps over ``(-n, n)``.
``dist_D_n_upper`` is a Skorokhod-type distance in which time may be
reparametrised by an increasing warp.  The infimum over all warps is not
computed; the minimum over an explicit candidate family is returned, so
the value is an upper bound on the true distance.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import maps as M
from .flows import EventFlow, Interval, with_maps


# ----------------------------------------------------------------------
# time warps
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeWarp:
    """Increasing piecewise-linear homeomorphism, identity outside its anchors."""

    ts: np.ndarray
    ls: np.ndarray

    def __post_init__(self):
        ts = np.atleast_1d(np.asarray(self.ts, float))
        ls = np.atleast_1d(np.asarray(self.ls, float))
        if ts.shape != ls.shape:
            raise ValueError("anchor arrays differ in length")
        if len(ts):
            if np.any(np.diff(ts) <= 0) or np.any(np.diff(ls) <= 0):
                raise ValueError("warp anchors must be strictly increasing")
            if abs(ts[0] - ls[0]) > 1e-12 or abs(ts[-1] - ls[-1]) > 1e-12:
                raise ValueError("first and last anchors must be fixed points")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "ls", ls)

    @classmethod
    def identity(cls):
        return cls(np.zeros(0), np.zeros(0))

    def __call__(self, t):
        if len(self.ts) == 0:
            return np.asarray(t, float) * 1.0
        t = np.asarray(t, float)
        inside = (t >= self.ts[0]) & (t <= self.ts[-1])
        return np.where(inside, np.interp(t, self.ts, self.ls), t)

    def inverse(self):
        return TimeWarp(self.ls, self.ts)

    @property
    def anchors(self):
        return np.column_stack([self.ts, self.ls])

    def to_list(self):
        return self.anchors.tolist()


def compose_warps(w2: TimeWarp, w1: TimeWarp) -> TimeWarp:
    """w2 o w1."""
    if len(w1.ts) == 0:
        return w2
    if len(w2.ts) == 0:
        return w1
    pts = np.unique(np.concatenate([w1.ts, w1.inverse()(w2.ts)]))
    return TimeWarp(pts, w2(w1(pts)))


def gamma(w: TimeWarp) -> float:
    """max(sup |w(t) - t|, sup |log slope|), exact for piecewise-linear warps."""
    if len(w.ts) < 2:
        return 0.0
    disp = float(np.abs(w.ls - w.ts).max())
    slope = np.diff(w.ls) / np.diff(w.ts)
    return max(disp, float(np.abs(np.log(slope)).max()))


def chi_n(I: Interval, n) -> float:
    """0 v (n + 1 - R) ^ 1 with R = sup I v (-inf I)."""
    if I.is_empty:
        return 1.0
    return _chi(I.lo, I.hi, n)


def _chi(lo, hi, n):
    R = max(hi, -lo)
    return min(max(n + 1 - R, 0.0), 1.0)


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _check_cover(flow, lo, hi, name):
    h = flow.horizon
    if h.lo > lo + 1e-12 or h.hi < hi - 1e-12:
        raise ValueError(f"horizon of {name} {h} does not cover [{lo}, {hi}]")


def _cross_cache():
    cache = {}

    def get(m):
        key = id(m)
        c = cache.get(key)
        if c is None:
            c = (M.cross(m), m)
            cache[key] = c
        return c[0]
    return get


# ----------------------------------------------------------------------
# uniform distance
# ----------------------------------------------------------------------

def dist_C_n(phi: EventFlow, psi: EventFlow, n) -> float:
    """sup over -n < s < t < n of d_D(phi_(s,t], psi_(s,t])."""
    if phi.period != psi.period:
        raise ValueError("period mismatch")
    _check_cover(phi, -n, n, "phi")
    _check_cover(psi, -n, n, "psi")
    tp = phi.times[(phi.times > -n) & (phi.times < n)]
    tq = psi.times[(psi.times > -n) & (psi.times < n)]
    mp = dict(zip(phi.times.tolist(), phi.maps)) if len(tp) else {}
    mq = dict(zip(psi.times.tolist(), psi.maps)) if len(tq) else {}
    tau = np.unique(np.concatenate([tp, tq]))
    ident = M.identity(phi.period)
    best = 0.0
    for a in range(len(tau)):
        cp, cq = ident, ident
        for b in range(a, len(tau)):
            t = float(tau[b])
            if t in mp:
                cp = M.compose(mp[t], cp)
            if t in mq:
                cq = M.compose(mq[t], cq)
            best = max(best, M.dist_D(cp, cq))
    return best


# ----------------------------------------------------------------------
# Skorokhod-type upper bound
# ----------------------------------------------------------------------

def _inner_sup(phi, psi, n, w: TimeWarp):
    """sup_I || chi_n(I) phi_I^x - chi_n(w I) psi_{w I}^x || over the critical set."""
    winv = w.inverse()
    L = min(-(n + 1), float(winv(-(n + 1))))
    U = max(n + 1, float(winv(n + 1)))
    _check_cover(phi, L, U, "phi")
    _check_cover(psi, float(w(L)), float(w(U)), "psi")
    tp = phi.times[(phi.times >= L) & (phi.times <= U)]
    mp_list = [m for t, m in zip(phi.times, phi.maps) if L <= t <= U] if len(tp) else []
    sel = (psi.times >= float(w(L))) & (psi.times <= float(w(U)))
    uq = winv(psi.times[sel])
    mq_list = [m for m, s in zip(psi.maps, sel) if s] if sel.any() else []
    kinks = np.array([n, n + 1.0])
    crit = np.concatenate([tp, uq, kinks, -kinks, winv(kinks), winv(-kinks), w.ts, [L, U]])
    crit = crit[(crit >= L) & (crit <= U)]
    crit = np.unique(np.concatenate([crit, -crit]))
    crit = crit[(crit >= L) & (crit <= U)]
    # events attached to each critical point
    ev_p = [[] for _ in crit]
    ev_q = [[] for _ in crit]
    for t, m in zip(tp, mp_list):
        ev_p[int(np.argmin(np.abs(crit - t)))].append(m)
    for u, m in zip(uq, mq_list):
        ev_q[int(np.argmin(np.abs(crit - u)))].append(m)
    wc = w(crit)
    ident = M.identity(phi.period)
    cx = _cross_cache()
    zero = cx(ident)
    best = 0.0
    C = len(crit)
    for i in range(C):
        for lo_closed in (True, False):
            cp, cq = ident, ident
            if lo_closed:
                for m in ev_p[i]:
                    cp = M.compose(m, cp)
                for m in ev_q[i]:
                    cq = M.compose(m, cq)
            # [c_i, c_i] or (c_i, c_i]: degenerate; only the closed point counts
            if lo_closed and (ev_p[i] or ev_q[i]):
                c1 = _chi(crit[i], crit[i], n)
                c2 = _chi(wc[i], wc[i], n)
                best = max(best, M._sup_diff(cx(cp) if cp is not ident else zero,
                                             cx(cq) if cq is not ident else zero, c1, c2))
            for j in range(i + 1, C):
                c1 = _chi(crit[i], crit[j], n)
                c2 = _chi(wc[i], wc[j], n)
                xp = cx(cp) if cp is not ident else zero
                xq = cx(cq) if cq is not ident else zero
                if c1 > 0 or c2 > 0:
                    # hi open at c_j
                    best = max(best, M._sup_diff(xp, xq, c1, c2))
                for m in ev_p[j]:
                    cp = M.compose(m, cp)
                for m in ev_q[j]:
                    cq = M.compose(m, cq)
                if (ev_p[j] or ev_q[j]) and (c1 > 0 or c2 > 0):
                    xp = cx(cp) if cp is not ident else zero
                    xq = cx(cq) if cq is not ident else zero
                    best = max(best, M._sup_diff(xp, xq, c1, c2))
    return best


def warp_value(phi, psi, n, w: TimeWarp) -> float:
    """gamma(w) v inner sup for one warp."""
    return max(gamma(w), _inner_sup(phi, psi, n, w))


def default_warp_family(phi: EventFlow, psi: EventFlow, n, window=None, cap=10_000):
    """Identity plus warps matching the k-th event of phi to the (k+o)-th of psi."""
    A, B = -(n + 1.0), n + 1.0
    tp = phi.times[(phi.times > A) & (phi.times < B)]
    tq = psi.times[(psi.times > A) & (psi.times < B)]
    fam = [TimeWarp.identity()]
    if len(tp) == 0 or len(tq) == 0:
        return fam
    if window is None:
        window = max(len(tp), len(tq))
    offsets = sorted(range(-window, window + 1), key=abs)
    for o in offsets:
        i = np.arange(len(tp))
        j = i + o
        ok = (j >= 0) & (j < len(tq))
        if not ok.any():
            continue
        ts = np.concatenate([[A], tp[i[ok]], [B]])
        ls = np.concatenate([[A], tq[j[ok]], [B]])
        if np.all(np.diff(ts) > 0) and np.all(np.diff(ls) > 0):
            fam.append(TimeWarp(ts, ls))
        if len(fam) >= cap:
            break
    return fam


def dist_D_n_upper(phi: EventFlow, psi: EventFlow, n, warps=None, return_warp=False):
    """Minimum over a warp family of gamma(w) v sup_I ||chi phi_I^x - chi psi_{wI}^x||.

    The result is an upper bound on the Skorokhod-type distance.  The
    identity warp is always included.
    """
    if phi.period != psi.period:
        raise ValueError("period mismatch")
    if warps is None:
        warps = default_warp_family(phi, psi, n)
    warps = list(warps)
    if not any(len(w.ts) == 0 or np.allclose(w.ts, w.ls) for w in warps):
        warps.insert(0, TimeWarp.identity())
    best, arg = math.inf, None
    for w in sorted(warps, key=gamma):
        g = gamma(w)
        if g >= best:
            break
        v = max(g, _inner_sup(phi, psi, n, w))
        if v < best:
            best, arg = v, w
    return (best, arg) if return_warp else best


def dist_D_upper(phi: EventFlow, psi: EventFlow, n_max=3, warps=None):
    """sum_{n <= n_max} 2^-n (d_n ^ 1); the omitted tail is at most 2^-n_max."""
    tot = 0.0
    for n in range(1, n_max + 1):
        tot += 2.0 ** -n * min(dist_D_n_upper(phi, psi, n, warps), 1.0)
    return tot


# ----------------------------------------------------------------------
# dyadic discretisation
# ----------------------------------------------------------------------

def dyadic_rounding(N, period=1.0) -> M.MonotoneMap:
    """delta-(x) = h ceil(x / h), delta+(x) = h (floor(x / h) + 1), h = 2^-N."""
    h = 2.0 ** -N
    k = int(round(period / h))
    if abs(k * h - period) > 1e-12:
        raise ValueError("period must be a multiple of 2^-N")
    j = np.arange(k)
    return M.MonotoneMap(j * h, j * h, (j + 1) * h, period)


def _shift_map(eps, period):
    return M.MonotoneMap([0.0], [eps], [eps], period)


def _off_grid(v, h, tol=1e-9):
    q = v / h
    return np.abs(q - np.round(q)) * h > tol


def _input_ok(f, eps, h):
    jumps = f.xs[f.y_plus - f.y_minus > 1e-12]
    return bool(np.all(_off_grid(jumps - eps, h)))


def _output_ok(f, eps_in, eps_out, h):
    g = np.arange(int(round(f.period / h))) * h + eps_in
    v = M.evaluate(f, g, "right")
    return bool(np.all(_off_grid(v - eps_out, h)))


def _candidates(h):
    return [-h * j / 64.0 for j in range(1, 64)]


def snap_to_grid(phi: EventFlow, N: int) -> EventFlow:
    """Move a flow into the countable class of dyadic staircase flows.

    Event times are rounded to 2^-2N Z (later events are pushed forward on
    ties) and each event map f becomes delta^-1 o tau_out^-1 o f o tau_in o delta,
    with the small shifts tau chosen so that no flat meets a jump.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if not math.isfinite(phi.period):
        raise ValueError("snap needs a finite period")
    h = 2.0 ** -N
    h2 = 2.0 ** (-2 * N)
    t = np.round(phi.times / h2) * h2
    for k in range(1, len(t)):
        if t[k] <= t[k - 1]:
            t[k] = t[k - 1] + h2
    if len(t) and not np.all(phi.horizon.contains(t)):
        raise ValueError("rounded event times leave the horizon")
    p = phi.period
    delta = dyadic_rounding(N, p)
    delta_inv = M.invert(delta)
    maps_ = phi.maps
    cands = _candidates(h)
    eps_in = next((e for e in cands if not maps_ or _input_ok(maps_[0], e, h)), cands[0])
    out = []
    for k, f in enumerate(maps_):
        nxt = maps_[k + 1] if k + 1 < len(maps_) else None
        eps_out = None
        for e in cands:
            if _output_ok(f, eps_in, e, h) and (nxt is None or _input_ok(nxt, e, h)):
                eps_out = e
                break
        if eps_out is None:
            raise RuntimeError("no admissible grid shift found")
        g = M.compose(_shift_map(eps_in, p), delta)
        g = M.compose(f, g)
        g = M.compose(_shift_map(-eps_out, p), g)
        g = M.compose(delta_inv, g)
        out.append(g)
        eps_in = eps_out
    return with_maps(phi, t, out, snapped=N)

"""Reference sampler for coalescing Brownian motions on the circle and line.

Live classes are driven by independent Euler increments.  When the lifted
difference of two classes crosses an integer (circle) or zero (line)
during a step, the higher-index class is absorbed into the lower one and
every label of both classes keeps emitting the shared value (shifted by
the crossed integer on the circle).  With ``bridge_correction`` a crossing
inside a step is also declared with the Brownian-bridge probability
``exp(-a b / dt)`` for end gaps ``a, b`` (the difference has diffusivity 2).
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from numba import njit

from .flows import make_rng, SpaceTimePoint

_BRIDGE_CUT = 30.0      # exp(-30) ~ 1e-13: skip the uniform draw below this


# ----------------------------------------------------------------------
# general sampler
# ----------------------------------------------------------------------

@njit(cache=True)
def _crossed(d0, d1, circle):
    """Integer level crossed between lifted differences d0 and d1, or NaN."""
    if circle:
        f0 = math.floor(d0)
        f1 = math.floor(d1)
        if f0 != f1:
            return float(f0) if d1 < d0 else float(f1)
        if d1 == f1:
            return float(f1)
        return np.nan
    if d0 == 0.0 or d1 == 0.0 or (d0 < 0.0) != (d1 < 0.0):
        return 0.0
    return np.nan


@njit(cache=True)
def _general_kernel(rng, s0, x0, dt, n_steps, circle, bridge, rec_steps):
    K = s0.shape[0]
    z = np.zeros(K)           # position of each class leader (indexed by label)
    leader = np.arange(K)
    off = np.zeros(K)
    live = np.zeros(K, dtype=np.bool_)
    started = np.zeros(K, dtype=np.bool_)
    coll = np.full((K, K), np.inf)
    R = rec_steps.shape[0]
    out = np.full((K, R), np.nan)
    sq = math.sqrt(dt)
    prev = np.zeros(K)
    r = 0
    for n in range(n_steps + 1):
        t = n * dt
        # activation of starts whose time has been reached
        for j in range(K):
            if not started[j] and s0[j] <= t + 1e-12:
                started[j] = True
                live[j] = True
                z[j] = x0[j]
                for u in range(K):
                    if u == j or not live[u] or leader[u] != u:
                        continue
                    d = z[j] - z[u]
                    k = np.round(d) if circle else 0.0
                    if abs(d - k) <= 1e-12:
                        _merge(u, j, k, leader, off, live, z, coll, t)
                        break
        while r < R and rec_steps[r] == n:
            for j in range(K):
                if started[j]:
                    out[j, r] = z[leader[j]] + off[j]
            r += 1
        if n == n_steps:
            break
        for u in range(K):
            prev[u] = z[u]
        for u in range(K):
            if live[u] and leader[u] == u:
                z[u] += sq * rng.standard_normal()
        t1 = t + dt
        merged = True
        while merged:
            merged = False
            for u in range(K):
                if not (live[u] and leader[u] == u):
                    continue
                for v in range(u + 1, K):
                    if not (live[v] and leader[v] == v):
                        continue
                    d0 = prev[v] - prev[u]
                    d1 = z[v] - z[u]
                    k = _crossed(d0, d1, circle)
                    if np.isnan(k) and bridge:
                        lvl = np.round(d0) if circle else 0.0
                        a = abs(d0 - lvl)
                        b = abs(d1 - lvl)
                        e = a * b / dt
                        if e < _BRIDGE_CUT and rng.random() < math.exp(-e):
                            k = lvl
                    if not np.isnan(k):
                        z[v] = z[u] + k
                        prev[v] = prev[u] + k
                        _merge(u, v, k, leader, off, live, z, coll, t1)
                        merged = True
                        break
                if merged:
                    break
    return out, coll


@njit(cache=True)
def _merge(u, v, k, leader, off, live, z, coll, t):
    """Absorb class v into class u; labels of v get offset shifted by k."""
    K = leader.shape[0]
    for a in range(K):
        if not live[a]:
            continue
        if leader[a] == u:
            for b in range(K):
                if live[b] and leader[b] == v and coll[a, b] == np.inf:
                    coll[a, b] = t
                    coll[b, a] = t
    for b in range(K):
        if live[b] and leader[b] == v:
            leader[b] = u
            off[b] += k


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Sampled coalescing paths.

    ``paths[j, i]`` is the lifted value of start ``j`` at ``grid[i]`` (NaN
    before the start).  ``collisions[j, k]`` is the first grid time at which
    the two labels share a class, ``inf`` if never within the horizon.
    """

    starts: tuple
    grid: np.ndarray
    paths: np.ndarray
    collisions: np.ndarray
    geometry: str
    dt: float


def sample_coalescing(starts, geometry="circle", dt=1e-4, horizon=1.0, seed=0,
                      bridge_correction=False, stream=0, record_times=None) -> TrajectorySet:
    """Coalescing Brownian motions from finitely many space-time starts.

    The time grid is ``t0 + k dt`` with ``t0`` the earliest start time, up
    to ``t0 + horizon``.  Start times are rounded up to the grid.
    ``record_times`` restricts the stored path samples (nearest grid step).
    """
    if geometry not in ("circle", "line"):
        raise ValueError("geometry must be 'circle' or 'line'")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt >= horizon:
        raise ValueError("dt must be smaller than the horizon length")
    pts = [e if isinstance(e, SpaceTimePoint) else SpaceTimePoint(*e) for e in starts]
    s = np.array([p.s for p in pts], float)
    x = np.array([p.x for p in pts], float)
    t0 = float(s.min())
    n_steps = int(round(horizon / dt))
    if record_times is None:
        rec = np.arange(n_steps + 1)
    else:
        rec = np.clip(np.round((np.asarray(record_times, float) - t0) / dt).astype(np.int64),
                      0, n_steps)
    rng = make_rng(seed, stream)
    out, coll = _general_kernel(rng, s - t0, x, dt, n_steps, geometry == "circle",
                                bool(bridge_correction), rec.astype(np.int64))
    coll = np.where(np.isfinite(coll), coll + t0, coll)
    return TrajectorySet(tuple(pts), t0 + rec * dt, out, coll, geometry, dt)


# ----------------------------------------------------------------------
# ring of N equally spaced starts
# ----------------------------------------------------------------------

@njit(cache=True)
def _ring_kernel(rng, N, dt, max_steps, bridge, lam, rec_steps, stop_at_coalescence):
    """Coalescing BMs from x_k = k / N at time 0 on the circle.

    Returns (T, M at rec_steps stopped at T, final lifted label positions).
    T is inf if more than one class survives ``max_steps`` steps.
    """
    ids = np.arange(N)              # live class ids in cyclic order
    pos = np.arange(N) / N          # leader positions indexed by class id
    cls = np.arange(N)
    off = np.zeros(N)
    L = N
    sq = math.sqrt(dt)
    slam = math.sqrt(lam) if lam > 0 else 0.0
    R = rec_steps.shape[0]
    M = np.full(R, np.nan)
    r = 0
    T = np.inf if N > 1 else 0.0
    prevp = np.empty(N)
    n = 0
    while True:
        t = n * dt
        while r < R and rec_steps[r] == n:
            if L == 1:
                M[r] = math.exp(lam * T) * math.sin(slam) if T < np.inf else np.nan
            else:
                acc = 0.0
                for i in range(L):
                    g = (pos[ids[i + 1]] if i + 1 < L else pos[ids[0]] + 1.0) - pos[ids[i]]
                    acc += math.sin(slam * g)
                M[r] = math.exp(lam * t) * acc
            r += 1
        if L == 1 and stop_at_coalescence:
            while r < R:
                M[r] = math.exp(lam * T) * math.sin(slam)
                r += 1
            break
        if n == max_steps:
            break
        for i in range(L):
            c = ids[i]
            prevp[c] = pos[c]
            pos[c] += sq * rng.standard_normal()
        n += 1
        i = 0
        while L > 1 and i < L:
            u = ids[i]
            last = i + 1 == L
            v = ids[0] if last else ids[i + 1]
            shift = 1.0 if last else 0.0
            g0 = prevp[v] + shift - prevp[u]
            g1 = pos[v] + shift - pos[u]
            hit = g1 <= 0.0
            if not hit and bridge:
                e = g0 * g1 / dt
                if e < _BRIDGE_CUT and rng.random() < math.exp(-e):
                    hit = True
            if hit:
                # the class later in cyclic order is absorbed, except across
                # the wrap where class ids[0] (lowest label) survives
                if last:
                    # labels of u sit one period above the lift of v
                    keep, drop, k, di = v, u, 1.0, i
                else:
                    keep, drop, k, di = u, v, 0.0, i + 1
                for a in range(N):
                    if cls[a] == drop:
                        cls[a] = keep
                        off[a] += k
                pos[drop] = pos[keep] + k
                prevp[drop] = prevp[keep] + k
                for j in range(di, L - 1):
                    ids[j] = ids[j + 1]
                L -= 1
                if L == 1:
                    T = n * dt
                # recheck the same position against its new neighbour
                if last:
                    i = max(i - 1, 0)
                continue
            i += 1
    final = np.empty(N)
    for a in range(N):
        final[a] = pos[cls[a]] + off[a]
    return T, M, final


def _ring(N, dt, seed, stream, horizon, bridge, lam=0.0, record_times=(), stop=True):
    rec = np.round(np.asarray(record_times, float) / dt).astype(np.int64)
    rng = make_rng(seed, stream)
    return _ring_kernel(rng, int(N), float(dt), int(round(horizon / dt)), bool(bridge),
                        float(lam), rec, stop)


def complete_coalescence_time(N, dt=1e-5, seed=0, stream=0, bridge_correction=True,
                              horizon=2.0) -> float:
    """First grid time at which N equally spaced circle starts form one class.

    If the horizon is exhausted the run is repeated on the same substream
    with the horizon doubled; the prefix of the path is unchanged.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if N == 1:
        return 0.0
    while True:
        T, _, _ = _ring(N, dt, seed, stream, horizon, bridge_correction)
        if math.isfinite(T):
            return float(T)
        horizon *= 2.0


def ring_run(N, dt, seed, stream=0, horizon=2.0, bridge_correction=True, lam=0.0,
             record_times=(), run_to_horizon=False):
    """Full ring run: (T, stopped sine martingale at record_times, final positions).

    With ``run_to_horizon`` the final label positions at ``horizon`` are
    returned and T is inf if coalescence did not happen by then.
    """
    return _ring(N, dt, seed, stream, horizon, bridge_correction, lam, record_times,
                 stop=not run_to_horizon)


def laplace_reference(lam: float) -> float:
    """E exp(lam T) = sqrt(lam) / sin(sqrt(lam)) for lam < pi^2."""
    if lam >= math.pi ** 2:
        raise ValueError("the transform is finite only for lambda < pi^2")
    if abs(lam) < 1e-12:
        return 1.0 + lam / 6.0
    if lam > 0:
        s = math.sqrt(lam)
        return s / math.sin(s)
    s = math.sqrt(-lam)
    return s / math.sinh(s)


def sine_martingale(gaps, lam, t) -> float:
    """exp(lam t) * sum_k sin(sqrt(lam) B_k)."""
    gaps = np.asarray(gaps, float)
    if np.any((gaps < 0) | (gaps > 1)):
        raise ValueError("gaps must lie in [0, 1]")
    if not 0 < lam < math.pi ** 2:
        raise ValueError("lambda must lie in (0, pi^2)")
    return float(math.exp(lam * t) * np.sin(math.sqrt(lam) * gaps).sum())


# ----------------------------------------------------------------------
# BES(3) passage
# ----------------------------------------------------------------------

@njit(cache=True)
def _bes3_kernel(rng, dt, bridge):
    sq = math.sqrt(dt)
    b0 = 0.0
    b1 = 0.0
    b2 = 0.0
    r_prev = 0.0
    n = 0
    while True:
        b0 += sq * rng.standard_normal()
        b1 += sq * rng.standard_normal()
        b2 += sq * rng.standard_normal()
        n += 1
        r = math.sqrt(b0 * b0 + b1 * b1 + b2 * b2)
        if r >= 1.0:
            return n * dt
        if bridge:
            e = 2.0 * (1.0 - r_prev) * (1.0 - r) / dt
            if e < _BRIDGE_CUT and rng.random() < math.exp(-e):
                return n * dt
        r_prev = r


def bes3_passage_time(dt=1e-4, seed=0, stream=0, bridge_correction=False) -> float:
    """First grid time at which 3d Brownian motion from 0 reaches norm 1."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return float(_bes3_kernel(make_rng(seed, stream), float(dt), bool(bridge_correction)))

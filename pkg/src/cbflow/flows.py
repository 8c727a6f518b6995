"""Event-based disturbance flows.

A flow is a finite, time-ordered list of events ``(t_k, f_k)``.  The map
of an interval ``I`` is the composition of the event maps with ``t_k`` in
``I``, latest event applied last.  Samplers produce flows whose event maps
are rotations ``f_theta(x) = f(x - theta) + theta`` of one base map; those
flows keep ``(base, angles)`` so trajectories can run in compiled code
without building a map object per event.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import csv
import json
import math

import numpy as np

from . import maps as M
from ._kernels import rotation_paths


def make_rng(seed, stream=0):
    """Counter-based Philox generator for substream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Interval:
    """Real interval with explicit endpoint flags; ``(lo, hi]`` by default."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = True

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("interval needs lo <= hi")

    @property
    def is_empty(self):
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    @property
    def length(self):
        return self.hi - self.lo

    def contains(self, t):
        t = np.asarray(t, float)
        lo_ok = (t >= self.lo) if self.lo_closed else (t > self.lo)
        hi_ok = (t <= self.hi) if self.hi_closed else (t < self.hi)
        return lo_ok & hi_ok

    def __neg__(self):
        return Interval(-self.hi, -self.lo, self.hi_closed, self.lo_closed)

    def within(self, other: "Interval"):
        """True if every point of self lies in other."""
        if self.is_empty:
            return True
        if self.lo < other.lo or (self.lo == other.lo and self.lo_closed and not other.lo_closed):
            return False
        if self.hi > other.hi or (self.hi == other.hi and self.hi_closed and not other.hi_closed):
            return False
        return True

    def to_list(self):
        return [self.lo, self.hi, self.lo_closed, self.hi_closed]

    @classmethod
    def from_list(cls, v):
        if len(v) == 2:
            return cls(float(v[0]), float(v[1]))
        return cls(float(v[0]), float(v[1]), bool(v[2]), bool(v[3]))


def split(I: Interval, t: float):
    """Return (I1, I2) with I = I1 + I2, the point t going to I1."""
    if not (I.lo <= t <= I.hi):
        raise ValueError("split point outside interval")
    return Interval(I.lo, t, I.lo_closed, True), Interval(t, I.hi, False, I.hi_closed)


@dataclass(frozen=True)
class SpaceTimePoint:
    s: float
    x: float


@dataclass(frozen=True, eq=False)
class EventFlow:
    """Time-ordered events on a sampled horizon.

    Either ``maps`` is given explicitly, or ``base`` and ``angles`` describe
    event k as ``rotate(base, angles[k])``.
    """

    times: np.ndarray
    horizon: Interval
    period: float = 1.0
    base: M.MonotoneMap | None = None
    angles: np.ndarray | None = None
    event_maps: tuple | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, float).ravel()
        if np.any(np.diff(t) <= 0):
            raise ValueError("event times must be strictly increasing")
        if len(t) and not np.all(self.horizon.contains(t)):
            raise ValueError("events outside the horizon")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        if self.event_maps is None:
            if self.base is None or self.angles is None:
                if len(t):
                    raise ValueError("events need maps or (base, angles)")
            else:
                a = np.asarray(self.angles, float).ravel()
                if len(a) != len(t):
                    raise ValueError("one angle per event")
                a.setflags(write=False)
                object.__setattr__(self, "angles", a)
                if self.base.period != self.period:
                    raise ValueError("base map period differs from flow period")
        else:
            em = tuple(self.event_maps)
            if len(em) != len(t):
                raise ValueError("one map per event")
            if any(m.period != self.period for m in em):
                raise ValueError("event map period differs from flow period")
            object.__setattr__(self, "event_maps", em)

    def __len__(self):
        return len(self.times)

    @property
    def is_rotation_flow(self):
        return self.event_maps is None and self.base is not None

    @cached_property
    def maps(self):
        if self.event_maps is not None:
            return self.event_maps
        if self.base is None:
            return ()
        return tuple(M.rotate(self.base, th) for th in self.angles)

    @property
    def events(self):
        return list(zip(self.times.tolist(), self.maps))

    def to_dict(self):
        return {
            "period": self.period if math.isfinite(self.period) else None,
            "horizon": self.horizon.to_list(),
            "provenance": _jsonable(self.provenance),
            "events": [[t, m.to_dict()] for t, m in self.events],
        }

    @classmethod
    def from_dict(cls, d):
        period = d.get("period", 1.0)
        period = np.inf if period is None else float(period)
        ev = d.get("events", [])
        times = [float(e[0]) for e in ev]
        ms = tuple(M.MonotoneMap.from_dict(e[1]) for e in ev)
        hz = d.get("horizon")
        if hz is None:
            hz = [min(times, default=0.0) - 1.0, max(times, default=0.0)]
        return cls(np.array(times), Interval.from_list(hz), period,
                   event_maps=ms, provenance=d.get("provenance", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, Interval):
            v = v.to_list()
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def empty_flow(horizon: Interval, period=1.0):
    return EventFlow(np.zeros(0), horizon, period, event_maps=())


# ----------------------------------------------------------------------
# samplers
# ----------------------------------------------------------------------

def _angles(rng, n):
    # uniform on (0, 1]
    return 1.0 - rng.random(n)


def sample_lattice_flow(profile: M.DisturbanceProfile, horizon: Interval, seed, stream=0):
    """Events at n / rho for the integers n with n / rho in the horizon."""
    if not (math.isfinite(horizon.lo) and math.isfinite(horizon.hi)):
        raise ValueError("horizon must be bounded")
    rho = profile.rho
    prov = {"embedding": "lattice", "eps": 1.0, "seed": int(seed), "stream": int(stream),
            "rho": rho, "horizon": horizon}
    if horizon.is_empty:
        return EventFlow(np.zeros(0), horizon, 1.0, profile.map, np.zeros(0), provenance=prov)
    n0 = math.floor(horizon.lo * rho) - 1
    n1 = math.ceil(horizon.hi * rho) + 1
    n = np.arange(n0, n1 + 1)
    t = n / rho
    t = t[horizon.contains(t)]
    rng = make_rng(seed, stream)
    return EventFlow(t, horizon, 1.0, profile.map, _angles(rng, len(t)), provenance=prov)


def sample_poisson_flow(profile: M.DisturbanceProfile, horizon: Interval, seed, stream=0):
    """Poisson(rho) event times in the horizon with uniform rotation angles."""
    if not (math.isfinite(horizon.lo) and math.isfinite(horizon.hi)):
        raise ValueError("horizon must be bounded")
    prov = {"embedding": "poisson", "eps": 1.0, "seed": int(seed), "stream": int(stream),
            "rho": profile.rho, "horizon": horizon}
    if horizon.is_empty or horizon.length == 0:
        return EventFlow(np.zeros(0), horizon, 1.0, profile.map, np.zeros(0), provenance=prov)
    rng = make_rng(seed, stream)
    count = rng.poisson(profile.rho * horizon.length)
    t = np.sort(horizon.lo + horizon.length * rng.random(count))
    # endpoints have probability zero; keep the contract exact anyway
    t = np.unique(t[horizon.contains(t)])
    return EventFlow(t, horizon, 1.0, profile.map, _angles(rng, len(t)), provenance=prov)


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def _mask(flow, I):
    if not I.within(flow.horizon):
        raise ValueError(f"interval {I} exceeds the sampled horizon {flow.horizon}")
    if I.is_empty:
        return np.zeros(len(flow), bool)
    return I.contains(flow.times)


def flow_map(flow: EventFlow, I: Interval) -> M.MonotoneMap:
    """Composition of the event maps with event time in I."""
    idx = np.flatnonzero(_mask(flow, I))
    out = M.identity(flow.period)
    ms = flow.maps
    for k in idx:
        out = M.compose(ms[k], out)
    return out


def _check_range(flow, s_min, t_max):
    h = flow.horizon
    if s_min < h.lo or t_max > h.hi:
        raise ValueError(f"times [{s_min}, {t_max}] exceed the sampled horizon {h}")


def trajectories(flow: EventFlow, starts, times, side="right"):
    """Values of several trajectories on a common time grid.

    Parameters
    ----------
    starts : sequence of SpaceTimePoint or (s, x) pairs
    times : sorted array of record times

    Returns
    -------
    values : (len(times), K) array, NaN where t < s
    collisions : (K, K) array of first event times at which the lifted
        difference is a multiple of the period (inf if never)
    """
    right = M._side_is_right(side)
    st = np.array([[e.s, e.x] if isinstance(e, SpaceTimePoint) else e for e in starts],
                  float).reshape(-1, 2)
    rec = np.asarray(times, float)
    if np.any(np.diff(rec) < 0):
        raise ValueError("times must be sorted")
    if len(st):
        _check_range(flow, float(st[:, 0].min()), float(rec.max()) if len(rec) else -np.inf)
    if flow.is_rotation_flow and math.isfinite(flow.period):
        xs, ym, yp = flow.base._extended()
        return rotation_paths(flow.times, flow.angles, xs, ym, yp, flow.period,
                              st[:, 0].copy(), st[:, 1].copy(), rec, right)
    return _generic_paths(flow, st, rec, right)


def _generic_paths(flow, st, rec, right):
    side = "right" if right else "left"
    K = len(st)
    out = np.full((len(rec), K), np.nan)
    coll = np.full((K, K), np.inf)
    z = st[:, 1].copy()
    p = flow.period

    def collided(d):
        if math.isfinite(p):
            q = d / p
            return abs(q - round(q)) * p <= 1e-9
        return abs(d) <= 1e-9

    for j in range(K):
        for k in range(j + 1, K):
            if st[j, 0] == st[k, 0] and collided(z[j] - z[k]):
                coll[j, k] = coll[k, j] = st[j, 0]
    ev_t = flow.times
    ms = flow.maps
    r = 0
    for e in range(len(ev_t) + 1):
        t_next = ev_t[e] if e < len(ev_t) else np.inf
        while r < len(rec) and rec[r] < t_next:
            m = st[:, 0] <= rec[r]
            out[r, m] = z[m]
            r += 1
        if e == len(ev_t):
            break
        act = st[:, 0] < t_next
        if act.any():
            z[act] = M.evaluate(ms[e], z[act], side)
        for j in range(K):
            for k in range(j + 1, K):
                if act[j] and act[k] and coll[j, k] == np.inf and collided(z[j] - z[k]):
                    coll[j, k] = coll[k, j] = t_next
        while r < len(rec) and rec[r] == t_next:
            m = st[:, 0] <= rec[r]
            out[r, m] = z[m]
            r += 1
    return out, coll


def trajectory(flow: EventFlow, e: SpaceTimePoint, times, side="right"):
    """X_t = Phi_(s,t](x) sampled at ``times`` (all >= s)."""
    times = np.asarray(times, float)
    if np.any(times < e.s):
        raise ValueError("trajectory times must not precede the start")
    order = np.argsort(times, kind="stable")
    vals, _ = trajectories(flow, [e], times[order], side)
    out = np.empty(len(times))
    out[order] = vals[:, 0]
    return out


def backward_trajectory(flow: EventFlow, e: SpaceTimePoint, times, side="right"):
    """Forward path for t >= s and (Phi_(t,s])^-1 (x) for t < s."""
    times = np.asarray(times, float)
    out = np.empty(len(times))
    fwd = times >= e.s
    if fwd.any():
        out[fwd] = trajectory(flow, e, times[fwd], side)
    bwd = ~fwd
    if bwd.any():
        rev = reverse(flow)
        out[bwd] = trajectory(rev, SpaceTimePoint(-e.s, e.x), -times[bwd], side)
    return out


# ----------------------------------------------------------------------
# transformations
# ----------------------------------------------------------------------

def rescale(flow: EventFlow, eps: float) -> EventFlow:
    """Event at t becomes an event at t / eps^2 with map scale(map, eps)."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if eps == 1:
        return flow
    h = flow.horizon
    hz = Interval(h.lo / eps ** 2, h.hi / eps ** 2, h.lo_closed, h.hi_closed)
    prov = dict(flow.provenance)
    prov["eps"] = prov.get("eps", 1.0) * eps
    prov["horizon"] = hz
    if flow.is_rotation_flow:
        return EventFlow(flow.times / eps ** 2, hz, flow.period / eps, M.scale(flow.base, eps),
                         flow.angles / eps, provenance=prov)
    return EventFlow(flow.times / eps ** 2, hz, flow.period / eps,
                     event_maps=tuple(M.scale(m, eps) for m in flow.maps), provenance=prov)


def reverse(flow: EventFlow) -> EventFlow:
    """Time reversal: events at -t in reversed order with inverted maps."""
    prov = dict(flow.provenance)
    prov["reversed"] = not prov.get("reversed", False)
    prov["horizon"] = -flow.horizon
    if flow.is_rotation_flow:
        # (f_theta)^-1 = (f^-1)_theta
        return EventFlow(-flow.times[::-1], -flow.horizon, flow.period, M.invert(flow.base),
                         flow.angles[::-1], provenance=prov)
    return EventFlow(-flow.times[::-1], -flow.horizon, flow.period,
                     event_maps=tuple(M.invert(m) for m in flow.maps[::-1]), provenance=prov)


def with_maps(flow: EventFlow, times, maps_, **prov) -> EventFlow:
    p = dict(flow.provenance)
    p.update(prov)
    return EventFlow(np.asarray(times, float), flow.horizon, flow.period,
                     event_maps=tuple(maps_), provenance=p)


def write_trajectory_csv(path, rows):
    """rows: iterable of (seed, e_s, e_x, t, z)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "e_s", "e_x", "t", "z"])
        for r in rows:
            w.writerow(r)


__all__ = [
    "Interval", "SpaceTimePoint", "EventFlow", "make_rng", "split", "empty_flow",
    "sample_lattice_flow", "sample_poisson_flow", "flow_map", "trajectory",
    "trajectories", "backward_trajectory", "rescale", "reverse", "with_maps",
    "write_trajectory_csv",
]

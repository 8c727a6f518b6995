"""Compactified path space and finite webs extracted from flows.

Paths are compared after the map (x, t) -> tanh(x) / (1 + |t|), which sends
the extended real line into [-1, 1] and damps large times.  A finite web is
the set of forward/backward paths through a finite set of space-time points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .flows import EventFlow, SpaceTimePoint, reverse, trajectory


def phi_compactify(x, t):
    """tanh(x) / (1 + |t|); x may be +-inf."""
    return np.tanh(np.asarray(x, float)) / (1.0 + np.abs(np.asarray(t, float)))


@dataclass(frozen=True, eq=False)
class CompactPath:
    """Sampled path on a time grid over the window [-n, n]."""

    times: np.ndarray
    values: np.ndarray
    start: SpaceTimePoint | None = None
    extended: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, float)
        v = np.asarray(self.values, float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def window(self):
        return float(max(abs(self.times[0]), abs(self.times[-1])))

    def compact(self):
        return phi_compactify(self.values, self.times)

    def resample(self, times):
        return np.interp(times, self.times, self.compact())


def truncation_slack(n) -> float:
    """Outside [-n, n] both compactified values are at most 1/(1+n) in size."""
    return 2.0 / (1.0 + n)


def dist_piF(f: CompactPath, g: CompactPath) -> float:
    """sup over the grid of |Phi(f(t), t) - Phi(g(t), t)|.

    Paths on different grids are compared on the union grid after linear
    interpolation of their compactified values.  The window truncation term
    is available separately from :func:`truncation_slack`.
    """
    if f.times.shape == g.times.shape and np.array_equal(f.times, g.times):
        a, b = f.compact(), g.compact()
    else:
        grid = np.union1d(f.times, g.times)
        a, b = f.resample(grid), g.resample(grid)
    d = np.abs(a - b)
    # equal infinite values compare as 0
    return float(np.nanmax(np.where(np.isnan(d), 0.0, d))) if len(d) else 0.0


def _directed(A, B):
    return max(min(dist_piF(a, b) for b in B) for a in A)


def hausdorff_F(A, B) -> float:
    """Hausdorff distance between finite path sets under dist_piF."""
    A, B = list(A), list(B)
    if not A or not B:
        raise ValueError("path sets must be nonempty")
    return max(_directed(A, B), _directed(B, A))


def directed_F(A, B) -> float:
    """sup_{a in A} inf_{b in B} dist_piF(a, b)."""
    return _directed(list(A), list(B))


def extract_web(flow: EventFlow, E, grid, side="right"):
    """Forward and backward paths through each point of E on ``grid``.

    Grid times outside the flow horizon hold the value at the nearest
    horizon end; such samples are flagged in ``CompactPath.extended``.
    """
    grid = np.asarray(grid, float)
    pts = [e if isinstance(e, SpaceTimePoint) else SpaceTimePoint(*e) for e in E]
    h = flow.horizon
    for e in pts:
        if e.s < h.lo or e.s > h.hi:
            raise ValueError(f"start {e} lies outside the horizon {h}")
    ext = (grid < h.lo) | (grid > h.hi)
    clipped = np.clip(grid, h.lo, h.hi)
    rev = reverse(flow) if len(flow) else flow
    out = []
    for e in pts:
        vals = np.empty(len(grid))
        fwd = clipped >= e.s
        if fwd.any():
            vals[fwd] = trajectory(flow, e, clipped[fwd], side)
        if (~fwd).any():
            vals[~fwd] = trajectory(rev, SpaceTimePoint(-e.s, e.x), -clipped[~fwd], side)
        out.append(CompactPath(grid, vals, e, ext))
    return out


def web_continuity_slack(phi: EventFlow, psi: EventFlow, E, grid, delta) -> float:
    """Certified bound on hausdorff_F(extract_web(phi), extract_web(psi)) - delta.

    For ``delta >= dist_C_n(phi, psi, n)`` and grid times inside (-n, n),
    every value of a phi path lies within ``delta`` of the range of the
    matching psi map over ``[x - delta, x + delta]`` and vice versa.  The
    returned slack is the largest spread of those ranges, damped by
    1/(1+|t|), so that hausdorff_F <= delta + slack.
    """
    grid = np.asarray(grid, float)
    worst = 0.0
    for a, b in ((phi, psi), (psi, phi)):
        rb = reverse(b) if len(b) else b
        for e in (e if isinstance(e, SpaceTimePoint) else SpaceTimePoint(*e) for e in E):
            hi_pt = SpaceTimePoint(e.s, e.x + delta)
            lo_pt = SpaceTimePoint(e.s, e.x - delta)
            fwd = grid >= e.s
            spread = np.zeros(len(grid))
            if fwd.any():
                up = trajectory(b, hi_pt, grid[fwd], "right")
                dn = trajectory(b, lo_pt, grid[fwd], "left")
                spread[fwd] = up - dn
            if (~fwd).any():
                up = trajectory(rb, SpaceTimePoint(-e.s, e.x + delta), -grid[~fwd], "right")
                dn = trajectory(rb, SpaceTimePoint(-e.s, e.x - delta), -grid[~fwd], "left")
                spread[~fwd] = up - dn
            worst = max(worst, float(np.max(spread / (1.0 + np.abs(grid)))))
    return worst


def write_paths_csv(path, paths):
    """Long format: path, e_s, e_x, t, z, extended."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "e_s", "e_x", "t", "z", "extended"])
        for k, p in enumerate(paths):
            s = p.start.s if p.start else math.nan
            x = p.start.x if p.start else math.nan
            ext = p.extended if p.extended is not None else np.zeros(len(p.times), bool)
            for t, z, f in zip(p.times, p.values, ext):
                w.writerow([k, s, x, t, z, int(bool(f))])


__all__ = ["phi_compactify", "CompactPath", "dist_piF", "hausdorff_F", "directed_F",
           "extract_web", "truncation_slack", "web_continuity_slack", "write_paths_csv"]

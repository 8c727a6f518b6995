"""Exact piecewise-linear algebra for monotone degree-p maps.

A map is stored as breakpoint records ``(x, y_minus, y_plus)`` on one
fundamental domain ``[0, period)``.  Between consecutive breakpoints the
graph is the straight segment from ``(x_i, y_plus_i)`` to
``(x_{i+1}, y_minus_{i+1})``.  Outside the domain the degree property
``f(x + p) = f(x) + p`` applies.  A map with ``period = inf`` is the
identity outside a bounded window.

Most operations work on the completed graph of the map, which is a
monotone polyline in the plane.  Inversion swaps the axes, the cross
transform rotates them by 45 degrees, and reading breakpoints back off
the polyline recovers the pair ``(f-, f+)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize_scalar

TOL = 1e-12          # breakpoints closer than this are merged
_SIMPLIFY_TOL = 1e-13


def _side_is_right(side):
    if side in ("right", "+", "plus"):
        return True
    if side in ("left", "-", "minus"):
        return False
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MonotoneMap:
    """Monotone degree-p map as an exact piecewise-linear pair (f-, f+).

    Parameters
    ----------
    xs, y_minus, y_plus : array_like
        Breakpoint records.  They are brought to canonical form on
        construction: reduced to ``[0, period)``, sorted, near-duplicates
        merged and collinear points removed.
    period : float
        Positive period, or ``np.inf`` for a map equal to the identity
        outside a bounded window.
    defect : bool
        Set by :func:`compose` when a flat of the inner map landed on a
        jump of the outer one.  The stored pair is then built from g+ o f+.
    """

    xs: np.ndarray
    y_minus: np.ndarray
    y_plus: np.ndarray
    period: float = 1.0
    defect: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        p = float(self.period)
        if not p > 0:
            raise ValueError("period must be positive")
        xs, ym, yp = _canonical(np.atleast_1d(np.asarray(self.xs, float)),
                                np.atleast_1d(np.asarray(self.y_minus, float)),
                                np.atleast_1d(np.asarray(self.y_plus, float)), p)
        object.__setattr__(self, "period", p)
        object.__setattr__(self, "xs", _frozen(xs))
        object.__setattr__(self, "y_minus", _frozen(ym))
        object.__setattr__(self, "y_plus", _frozen(yp))

    # convenience -------------------------------------------------------
    @property
    def breakpoints(self):
        return np.column_stack([self.xs, self.y_minus, self.y_plus])

    @property
    def is_periodic(self):
        return math.isfinite(self.period)

    def __call__(self, x, side="right"):
        return evaluate(self, x, side)

    def __repr__(self):
        return (f"MonotoneMap(period={self.period}, "
                f"n_breakpoints={len(self.xs)}, defect={self.defect})")

    def to_dict(self):
        return {
            "period": self.period if self.is_periodic else None,
            "breakpoints": self.breakpoints.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        period = d.get("period", 1.0)
        period = np.inf if period is None else float(period)
        bps = np.asarray(d["breakpoints"], float).reshape(-1, 3)
        return cls(bps[:, 0], bps[:, 1], bps[:, 2], period)

    @classmethod
    def from_breakpoints(cls, breakpoints, period=1.0):
        bps = np.asarray(breakpoints, float).reshape(-1, 3)
        return cls(bps[:, 0], bps[:, 1], bps[:, 2], period)

    def _extended(self):
        """Breakpoint arrays padded with one periodic neighbour on each side."""
        ext = self._cache.get("ext")
        if ext is None:
            xs, ym, yp, p = self.xs, self.y_minus, self.y_plus, self.period
            if self.is_periodic:
                ext = (np.concatenate([[xs[-1] - p], xs, [xs[0] + p]]),
                       np.concatenate([[ym[-1] - p], ym, [ym[0] + p]]),
                       np.concatenate([[yp[-1] - p], yp, [yp[0] + p]]))
            else:
                ext = (xs, ym, yp)
            self._cache["ext"] = ext
        return ext


def identity(period=1.0):
    if math.isfinite(period):
        return MonotoneMap([0.0], [0.0], [0.0], period)
    return MonotoneMap([], [], [], np.inf)


# ----------------------------------------------------------------------
# canonical form
# ----------------------------------------------------------------------

def _canonical(xs, ym, yp, p):
    if not (len(xs) == len(ym) == len(yp)):
        raise ValueError("breakpoint arrays differ in length")
    if np.any(~np.isfinite(xs)) or np.any(~np.isfinite(ym)) or np.any(~np.isfinite(yp)):
        raise ValueError("breakpoints must be finite")
    if np.any(ym > yp + 1e-9):
        raise ValueError("y_minus must not exceed y_plus")
    yp = np.maximum(yp, ym)
    periodic = math.isfinite(p)
    if periodic:
        if len(xs) == 0:
            return np.zeros(1), np.zeros(1), np.zeros(1)
        k = np.floor(xs / p)
        xs = xs - k * p
        ym = ym - k * p
        yp = yp - k * p
        wrap = xs >= p - TOL * max(1.0, p)
        xs = np.where(wrap, xs - p, xs)
        ym = np.where(wrap, ym - p, ym)
        yp = np.where(wrap, yp - p, yp)
        xs = np.where(np.abs(xs) <= TOL * max(1.0, p), 0.0, xs)
    elif len(xs) == 0:
        return xs, ym, yp
    order = np.lexsort((yp, xs))
    xs, ym, yp = xs[order], ym[order], yp[order]
    xs, ym, yp = _merge_close(xs, ym, yp)
    _check_monotone(xs, ym, yp, p)
    if not periodic:
        if abs(ym[0] - xs[0]) > 1e-9 or abs(yp[-1] - xs[-1]) > 1e-9:
            raise ValueError("non-periodic map must be the identity outside its window")
    xs, ym, yp = _simplify(xs, ym, yp, p)
    return xs, ym, yp


def _merge_close(xs, ym, yp):
    if len(xs) < 2:
        return xs, ym, yp
    start = np.concatenate([[True], np.diff(xs) > TOL * max(1.0, np.abs(xs).max())])
    if start.all():
        return xs, ym, yp
    gid = np.cumsum(start) - 1
    n = gid[-1] + 1
    first = np.flatnonzero(start)
    last = np.concatenate([first[1:] - 1, [len(xs) - 1]])
    nx = xs[first]
    nym = np.full(n, np.inf)
    nyp = np.full(n, -np.inf)
    np.minimum.at(nym, gid, ym)
    np.maximum.at(nyp, gid, yp)
    del last
    return nx, nym, nyp


def _check_monotone(xs, ym, yp, p):
    if len(xs) == 0:
        return
    if math.isfinite(p):
        nxt = np.append(ym[1:], ym[0] + p)
    else:
        nxt = ym[1:]
        yp = yp[:-1]
    scale = max(1.0, float(np.abs(nxt).max()) if len(nxt) else 1.0)
    if np.any(nxt < yp - 1e-9 * scale):
        raise ValueError("map is not non-decreasing")


def _simplify(xs, ym, yp, p):
    """Drop continuous breakpoints lying on the line through their neighbours."""
    n = len(xs)
    if n < 2 and math.isfinite(p):
        return xs, ym, yp
    if math.isfinite(p):
        px = np.concatenate([[xs[-1] - p], xs[:-1]])
        py = np.concatenate([[yp[-1] - p], yp[:-1]])
        nx = np.concatenate([xs[1:], [xs[0] + p]])
        ny = np.concatenate([ym[1:], [ym[0] + p]])
    else:
        if n < 1:
            return xs, ym, yp
        # identity continues outside the window
        px = np.concatenate([[xs[0] - 1.0], xs[:-1]])
        py = np.concatenate([[xs[0] - 1.0], yp[:-1]])
        nx = np.concatenate([xs[1:], [xs[-1] + 1.0]])
        ny = np.concatenate([ym[1:], [xs[-1] + 1.0]])
    cont = np.abs(yp - ym) <= _SIMPLIFY_TOL * max(1.0, p if math.isfinite(p) else 1.0)
    line = py + (xs - px) * (ny - py) / (nx - px)
    scale = np.maximum(1.0, np.abs(ym))
    drop = cont & (np.abs(line - ym) <= _SIMPLIFY_TOL * scale)
    if drop.all():
        if math.isfinite(p):
            # a straight degree-p line: keep the first point only
            drop[0] = False
        else:
            return xs[:0], ym[:0], yp[:0]
    keep = ~drop
    return xs[keep], ym[keep], yp[keep]


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def evaluate(f: MonotoneMap, x, side="right"):
    """Return f+(x) (``side='right'``) or f-(x) (``side='left'``) exactly."""
    right = _side_is_right(side)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xv = np.atleast_1d(x).ravel()
    xs, ym, yp = f._extended()
    if f.is_periodic:
        p = f.period
        k = np.floor(xv / p)
        u = xv - k * p
        over = u >= p
        u = np.where(over, u - p, u)
        k = np.where(over, k + 1, k)
        shift = k * p
    else:
        u = xv
        shift = 0.0
        if len(xs) == 0:
            out = xv.copy()
            return float(out[0]) if scalar else out.reshape(x.shape)
    i = np.searchsorted(xs, u, side="right") - 1
    if f.is_periodic:
        # u lies in [0, p) so i is within the padded range
        i = np.clip(i, 0, len(xs) - 2)
        inside = np.ones_like(u, dtype=bool)
    else:
        inside = (u >= xs[0]) & (u <= xs[-1])
        i = np.clip(i, 0, len(xs) - 1)
    j = np.minimum(i + 1, len(xs) - 1)
    at = u == xs[i]
    x0, x1 = xs[i], xs[j]
    y0, y1 = yp[i], ym[j]
    with np.errstate(invalid="ignore", divide="ignore"):
        lin = y0 + (u - x0) * (y1 - y0) / (x1 - x0)
    val = np.where(at, yp[i] if right else ym[i], lin)
    if not f.is_periodic:
        val = np.where(inside, val, u)
    out = val + shift
    if scalar:
        return float(out[0])
    return out.reshape(x.shape)


def displacement(f, x, side="right"):
    """f~(x) = f(x) - x."""
    return evaluate(f, x, side) - np.asarray(x, float)


# ----------------------------------------------------------------------
# curve helpers
# ----------------------------------------------------------------------

def _tile(f, a, b):
    """Breakpoint arrays covering [a, b] with margin (periodic tiling)."""
    xs, ym, yp = f.xs, f.y_minus, f.y_plus
    if f.is_periodic:
        p = f.period
        k = np.arange(math.floor(a / p) - 1, math.ceil(b / p) + 2)
        off = (k[:, None] * p)
        return ((xs[None, :] + off).ravel(), (ym[None, :] + off).ravel(),
                (yp[None, :] + off).ravel())
    lo = min(a, xs[0] if len(xs) else a) - 1.0
    hi = max(b, xs[-1] if len(xs) else b) + 1.0
    return (np.concatenate([[lo], xs, [hi]]), np.concatenate([[lo], ym, [hi]]),
            np.concatenate([[lo], yp, [hi]]))


def _eval_tiled(xs, ym, yp, y, snap=False):
    """Right-continuous evaluation on tiled breakpoint arrays (no reduction).

    With ``snap`` a point within TOL of a breakpoint takes that breakpoint's
    right value, which protects exact hits from rounding in the tiling.
    """
    i = np.clip(np.searchsorted(xs, y, side="right") - 1, 0, len(xs) - 2)
    if snap:
        tol = TOL * max(1.0, float(np.abs(xs).max()))
        i = np.where(xs[i + 1] - y <= tol, i + 1, i)
        i = np.minimum(i, len(xs) - 2)
        on = np.abs(y - xs[i]) <= tol
    else:
        on = y == xs[i]
    x0, x1 = xs[i], xs[i + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        lin = yp[i] + (y - x0) * (ym[i + 1] - yp[i]) / (x1 - x0)
    return np.where(on, yp[i], lin)


def _eval_tiled_left(xs, ym, yp, y):
    """Left limits on tiled breakpoint arrays; points within TOL of a
    breakpoint take its left value."""
    tol = TOL * max(1.0, float(np.abs(xs).max()))
    i = np.clip(np.searchsorted(xs, y, side="left"), 1, len(xs) - 1)
    i = np.where(y - xs[i - 1] <= tol, i - 1, i)
    i = np.clip(i, 1, len(xs) - 1)
    on = np.abs(xs[i] - y) <= tol
    x0, x1 = xs[i - 1], xs[i]
    with np.errstate(invalid="ignore", divide="ignore"):
        lin = yp[i - 1] + (y - x0) * (ym[i] - yp[i - 1]) / (x1 - x0)
    return np.where(on, ym[i], lin)


def _curve(xs, ym, yp):
    """Vertices of the completed graph, ordered along the curve."""
    X = np.repeat(xs, 2)
    Y = np.empty(2 * len(xs))
    Y[0::2] = ym
    Y[1::2] = yp
    keep = np.ones(len(X), bool)
    keep[1::2] = yp > ym
    return X[keep], Y[keep]


def _bps_from_curve(X, Y):
    start = np.concatenate([[True], np.abs(np.diff(X)) > TOL * max(1.0, np.abs(X).max())])
    first = np.flatnonzero(start)
    last = np.concatenate([first[1:] - 1, [len(X) - 1]])
    return X[first], Y[first], Y[last]


def _window_select(xs, ym, yp, p):
    tol = TOL * max(1.0, p)
    m = (xs >= -tol) & (xs < p - tol)
    return xs[m], ym[m], yp[m]


def _max_disp(f):
    if len(f.xs) == 0:
        return 0.0
    return float(max(np.abs(f.y_minus - f.xs).max(), np.abs(f.y_plus - f.xs).max()))


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def compose(g: MonotoneMap, f: MonotoneMap) -> MonotoneMap:
    """Return g o f as the pair built from g+ o f+ and its left limits."""
    if g.period != f.period:
        raise ValueError("period mismatch")
    p = f.period
    if f.is_periodic:
        a, b = -p, 2 * p
    else:
        pts = np.concatenate([f.xs, g.xs, [0.0]])
        a, b = float(pts.min()) - 1.0, float(pts.max()) + 1.0
    fx, fm, fp = _tile(f, a, b)
    lo_y, hi_y = float(fm.min()), float(fp.max())
    gx, _, _ = _tile(g, lo_y, hi_y)
    # preimages of g's breakpoints on sloped segments of f
    x0, x1 = fx[:-1], fx[1:]
    y0, y1 = fp[:-1], fm[1:]
    sloped = y1 > y0
    i0 = np.searchsorted(gx, y0, side="right")
    i1 = np.searchsorted(gx, y1, side="left")
    cnt = np.where(sloped, np.maximum(i1 - i0, 0), 0)
    seg = np.repeat(np.arange(len(x0)), cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    u = gx[np.repeat(i0, cnt) + offs]
    cx = x0[seg] + (u - y0[seg]) * (x1[seg] - x0[seg]) / (y1[seg] - y0[seg])
    # f- and f+ are known exactly at both kinds of candidate; breakpoints win ties
    cand = np.concatenate([fx, cx])
    fval = np.concatenate([fp, u])
    flim = np.concatenate([fm, u])
    order = np.lexsort((np.r_[np.zeros(len(fx)), np.ones(len(cx))], cand))
    cand, fval, flim = cand[order], fval[order], flim[order]
    m = (cand >= a) & (cand <= b)
    cand, fval, flim = cand[m], fval[m], flim[m]
    # near-coincident candidates are kept; canonicalisation merges them
    # into one breakpoint without losing the range they span
    gx, gm, gp = _tile(g, lo_y, hi_y)
    hp = _eval_tiled(gx, gm, gp, fval, snap=True)
    # left limit: g+ after a flat of f, g- after a rising piece
    after_flat = np.concatenate([[False], flim[1:] <= fval[:-1]])
    hm = np.where(after_flat, _eval_tiled(gx, gm, gp, flim, snap=True),
                  _eval_tiled_left(gx, gm, gp, flim))
    # remove rounding noise on very steep pieces
    hp = np.maximum.accumulate(hp)
    hm[1:] = np.clip(hm[1:], hp[:-1], hp[1:])
    hm[0] = min(hm[0], hp[0])
    # flats of f sitting on jumps of g
    flat = (~sloped) & (x1 > x0)
    defect = f.defect or g.defect
    if flat.any():
        lv = y0[flat]
        defect = defect or bool(np.any(evaluate(g, lv, "right") - evaluate(g, lv, "left") > 1e-12))
    if f.is_periodic:
        xs, ym, yp = _window_select(cand[1:], hm[1:], hp[1:], p)
    else:
        xs, ym, yp = cand, hm, hp
    return MonotoneMap(xs, ym, yp, p, defect)


def invert(f: MonotoneMap) -> MonotoneMap:
    """Return f^-1; jumps become flats and flats become jumps."""
    p = f.period
    if not f.is_periodic:
        X, Y = _curve(f.xs, f.y_minus, f.y_plus)
        xs, ym, yp = _bps_from_curve(Y, X)
        return MonotoneMap(xs, ym, yp, p, f.defect)
    d = _max_disp(f)
    fx, fm, fp = _tile(f, -2 * p - d, 3 * p + d)
    X, Y = _curve(fx, fm, fp)
    xs, ym, yp = _bps_from_curve(Y, X)
    xs, ym, yp = _window_select(xs, ym, yp, p)
    return MonotoneMap(xs, ym, yp, p, f.defect)


@dataclass(frozen=True, eq=False)
class Contraction:
    """Periodic 1-Lipschitz piecewise-linear function."""

    ts: np.ndarray
    values: np.ndarray
    period: float = 1.0

    def __post_init__(self):
        ts = np.atleast_1d(np.asarray(self.ts, float))
        vs = np.atleast_1d(np.asarray(self.values, float))
        p = float(self.period)
        if not (math.isfinite(p) and p > 0):
            raise ValueError("contraction needs a finite positive period")
        if len(ts) == 0:
            ts, vs = np.zeros(1), np.zeros(1)
        k = np.floor(ts / p)
        ts = ts - k * p
        ts = np.where(ts >= p - TOL * max(1.0, p), ts - p, ts)
        order = np.argsort(ts, kind="stable")
        ts, vs = ts[order], vs[order]
        keep = np.concatenate([[True], np.diff(ts) > TOL * max(1.0, p)])
        ts, vs = ts[keep], vs[keep]
        object.__setattr__(self, "ts", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vs))
        object.__setattr__(self, "period", p)

    def slopes(self):
        t2 = np.append(self.ts[1:], self.ts[0] + self.period)
        v2 = np.append(self.values[1:], self.values[0])
        return (v2 - self.values) / (t2 - self.ts)

    def __call__(self, t):
        t = np.asarray(t, float)
        p = self.period
        te = np.concatenate([self.ts, [self.ts[0] + p]])
        ve = np.concatenate([self.values, [self.values[0]]])
        u = t - np.floor((t - self.ts[0]) / p) * p
        return np.interp(u, te, ve)

    def __neg__(self):
        return Contraction(self.ts, -self.values, self.period)

    def sup_norm(self):
        return float(np.abs(self.values).max())

    def to_dict(self):
        return {"period": self.period, "samples": np.column_stack([self.ts, self.values]).tolist()}


def negate(c: Contraction) -> Contraction:
    return -c


def cross(f: MonotoneMap) -> Contraction:
    """Cross transform: the graph of f in axes rotated by 45 degrees."""
    if not f.is_periodic:
        raise ValueError("cross transform needs a finite period")
    p = f.period
    d = _max_disp(f)
    fx, fm, fp = _tile(f, -p - d, 2 * p + d)
    X, Y = _curve(fx, fm, fp)
    t = 0.5 * (X + Y)
    v = 0.5 * (Y - X)
    m = (t >= -TOL) & (t < p - TOL * max(1.0, p))
    return Contraction(t[m], v[m], p)


def uncross(g: Contraction) -> MonotoneMap:
    """Inverse of :func:`cross`."""
    sl = g.slopes()
    if np.any(np.abs(sl) > 1 + 1e-9):
        raise ValueError("not a contraction: slope exceeds 1 in absolute value")
    p = g.period
    lo, hi = float(g.values.min()), float(g.values.max())
    k = np.arange(math.floor((lo - 2 * p) / p), math.ceil((hi + 3 * p) / p) + 1)
    t = (g.ts[None, :] + k[:, None] * p).ravel()
    v = np.tile(g.values, len(k))
    X, Y = t - v, t + v
    # slopes of exactly +-1 in floating point may leave tiny reversals
    X = np.maximum.accumulate(X)
    Y = np.maximum.accumulate(Y)
    xs, ym, yp = _bps_from_curve(X, Y)
    xs, ym, yp = _window_select(xs, ym, yp, p)
    return MonotoneMap(xs, ym, yp, p)


def _sup_diff(c1: Contraction, c2: Contraction, w1=1.0, w2=1.0):
    if c1.period != c2.period:
        raise ValueError("period mismatch")
    knots = np.concatenate([c1.ts, c2.ts])
    return float(np.abs(w1 * c1(knots) - w2 * c2(knots)).max())


def dist_D(f: MonotoneMap, g: MonotoneMap) -> float:
    """Sup distance between the cross transforms of f and g."""
    if f.period != g.period:
        raise ValueError("period mismatch")
    return _sup_diff(cross(f), cross(g))


def sup_displacement(f: MonotoneMap) -> float:
    """sup |f(x) - x| over both modifications."""
    return _max_disp(f)


def _segments(f):
    """Per-segment (length, start displacement, end displacement) over one period."""
    if not f.is_periodic:
        raise ValueError("needs a finite period")
    p = f.period
    xs, ym, yp = f.xs, f.y_minus, f.y_plus
    x2 = np.append(xs[1:], xs[0] + p)
    y2 = np.append(ym[1:], ym[0] + p)
    return x2 - xs, yp - xs, y2 - x2


def mean_tilde(f: MonotoneMap) -> float:
    """Integral of f~ over one period."""
    L, a, b = _segments(f)
    return float(np.sum(L * (a + b) / 2.0))


def _square_integral(f):
    L, a, b = _segments(f)
    return float(np.sum(L * (a * a + a * b + b * b) / 3.0))


def _check_dstar(f):
    if not f.is_periodic:
        raise ValueError("needs a finite period")
    if _max_disp(f) <= 1e-15:
        raise ValueError("rho is undefined for the identity map")
    m = mean_tilde(f)
    if abs(m) > 1e-12:
        raise ValueError(f"displacement has nonzero mean {m:.3e}")


def rho(f: MonotoneMap) -> float:
    """Normaliser with rho * int_0^p f~^2 = 1."""
    _check_dstar(f)
    return 1.0 / _square_integral(f)


def _product_integrals(f, shifts, absolute=False):
    """int_0^p f~(u) f~(u - a) du for each shift a, exactly."""
    p = f.period
    shifts = np.atleast_1d(np.asarray(shifts, float))
    A = len(shifts)
    base = f.xs
    k1 = np.broadcast_to(base, (A, len(base)))
    k2 = np.mod(base[None, :] + shifts[:, None], p)
    knots = np.sort(np.concatenate([k1, k2, np.zeros((A, 1))], axis=1), axis=1)
    lo = knots
    hi = np.concatenate([knots[:, 1:], np.full((A, 1), p)], axis=1)
    L = hi - lo
    sh = shifts[:, None]
    # both factors are affine inside each piece; sample at interior points so
    # that rounding of the shifted knots cannot pick the wrong side of a jump
    q1 = lo + 0.25 * L
    q3 = lo + 0.75 * L
    u1 = evaluate(f, q1) - q1
    u3 = evaluate(f, q3) - q3
    v1 = evaluate(f, q1 - sh) - (q1 - sh)
    v3 = evaluate(f, q3 - sh) - (q3 - sh)
    a1, b1 = u1 - 0.5 * (u3 - u1), u3 + 0.5 * (u3 - u1)
    a2, b2 = v1 - 0.5 * (v3 - v1), v3 + 0.5 * (v3 - v1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s1 = np.where(L > 0, (b1 - a1) / L, 0.0)
        s2 = np.where(L > 0, (b2 - a2) / L, 0.0)
    A0 = a1 * a2
    B0 = a1 * s2 + a2 * s1
    C0 = s1 * s2

    def F(s):
        return A0 * s + B0 * s * s / 2.0 + C0 * s ** 3 / 3.0

    if not absolute:
        return np.sum(F(L), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r1 = np.where(s1 != 0, -a1 / s1, -1.0)
        r2 = np.where(s2 != 0, -a2 / s2, -1.0)
    r1 = np.clip(r1, 0.0, L)
    r2 = np.clip(r2, 0.0, L)
    c1 = np.minimum(r1, r2)
    c2 = np.maximum(r1, r2)
    tot = np.abs(F(c1)) + np.abs(F(c2) - F(c1)) + np.abs(F(L) - F(c2))
    return np.sum(tot, axis=1)


def kernel_b(f: MonotoneMap, a) -> float:
    """Covariance kernel rho * int_0^1 f~(u) f~(u - a) du."""
    _check_dstar(f)
    r = 1.0 / _square_integral(f)
    out = r * _product_integrals(f, a)
    return float(out[0]) if np.ndim(a) == 0 else out


def _abs_kernel(f, a):
    return _product_integrals(f, a, absolute=True) / _square_integral(f)


def localization_lambda(f: MonotoneMap, eps: float = 1.0, grid_size: int = 2048,
                        iterations: int = 32) -> float:
    """Smallest lambda in (0, 1] with rho int |f~(x+a) f~(x)| dx <= lambda
    for all a in [eps*lambda, 1 - eps*lambda].

    The feasible set can be open at its lower end; the bisection limit
    (upper end of the final bracket) is returned.
    """
    _check_dstar(f)
    if f.period != 1.0:
        raise ValueError("localization constant is defined for period-1 maps")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    diffs = np.mod(f.xs[:, None] - f.xs[None, :], 1.0).ravel()
    cand = np.unique(np.concatenate([np.linspace(0.0, 1.0, grid_size + 1), diffs, 1.0 - diffs]))
    vals = _abs_kernel(f, cand)
    # local refinement around the largest grid values
    h = 1.0 / grid_size
    extra_a, extra_v = [], []
    for idx in np.argsort(vals)[-8:]:
        c = cand[idx]
        res = minimize_scalar(lambda s: -float(_abs_kernel(f, s)[0]),
                              bounds=(max(c - h, 0.0), min(c + h, 1.0)), method="bounded",
                              options={"xatol": 1e-10})
        extra_a.append(res.x)
        extra_v.append(-res.fun)
    cand = np.concatenate([cand, extra_a])
    vals = np.concatenate([vals, extra_v])

    def feasible(lam):
        lo, hi = eps * lam, 1.0 - eps * lam
        if lo > hi:
            return True
        m = (cand >= lo) & (cand <= hi)
        worst = float(_abs_kernel(f, np.array([lo]))[0])
        if m.any():
            worst = max(worst, float(vals[m].max()))
        return worst <= lam

    lo, hi = 0.0, 1.0
    if not feasible(hi):
        return 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def rotate(f: MonotoneMap, theta: float) -> MonotoneMap:
    """f_theta(x) = f(x - theta) + theta."""
    return MonotoneMap(f.xs + theta, f.y_minus + theta, f.y_plus + theta, f.period, f.defect)


def scale(f: MonotoneMap, eps: float) -> MonotoneMap:
    """sigma_eps f(x) = f(eps x) / eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return MonotoneMap(f.xs / eps, f.y_minus / eps, f.y_plus / eps, f.period / eps, f.defect)


def translate_values(f: MonotoneMap, c: float) -> MonotoneMap:
    """x -> f(x) + c."""
    return MonotoneMap(f.xs, f.y_minus + c, f.y_plus + c, f.period, f.defect)


def center(f: MonotoneMap) -> MonotoneMap:
    """Shift values so that f~ has zero mean."""
    return translate_values(f, -mean_tilde(f))


# ----------------------------------------------------------------------
# disturbance profiles
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DisturbanceProfile:
    map: MonotoneMap
    rho: float
    lambda_1: float
    mean_tilde: float

    def to_dict(self):
        return {"map": self.map.to_dict(), "rho": self.rho,
                "lambda_1": self.lambda_1, "mean_tilde": self.mean_tilde}


def make_profile(f: MonotoneMap, rho_value=None) -> DisturbanceProfile:
    if f.period != 1.0:
        raise ValueError("a disturbance map has period 1")
    r = rho(f) if rho_value is None else float(rho_value)
    return DisturbanceProfile(f, r, localization_lambda(f, 1.0), mean_tilde(f))


def rmap(r: float) -> MonotoneMap:
    """f+(n + x) = n + (r v x ^ (1 - r)) on [0, 1)."""
    if not 0 < r <= 0.5:
        raise ValueError("r must lie in (0, 1/2]")
    return MonotoneMap([0.0, r, 1.0 - r], [-r, r, 1.0 - r], [r, r, 1.0 - r], 1.0)


def make_rmap(r: float) -> DisturbanceProfile:
    f = rmap(r)
    return make_profile(f, rho_value=3.0 / (2.0 * r ** 3))


def random_pl_map(rng, n_breaks=6, jump_prob=0.3, flat_prob=0.2, centered=True,
                  period=1.0) -> MonotoneMap:
    """Random monotone degree-1 piecewise-linear map, used for property tests."""
    xs = np.sort(rng.uniform(0.0, period, n_breaks))
    jumps = rng.exponential(1.0, n_breaks) * (rng.random(n_breaks) < jump_prob)
    rises = rng.exponential(1.0, n_breaks) * (rng.random(n_breaks) >= flat_prob)
    tot = jumps.sum() + rises.sum()
    if tot == 0:
        rises[:] = 1.0
        tot = rises.sum()
    jumps *= period / tot
    rises *= period / tot
    y0 = rng.uniform(-0.3, 0.3) * period + xs[0]
    ym = np.empty(n_breaks)
    yp = np.empty(n_breaks)
    y = y0
    for i in range(n_breaks):
        ym[i] = y
        y = y + jumps[i]
        yp[i] = y
        y = y + rises[i]
    f = MonotoneMap(xs, ym, yp, period)
    return center(f) if centered else f

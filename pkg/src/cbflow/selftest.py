"""Deterministic property suites for the map algebra, flows, flow metrics and webs.

Each suite returns a list of :class:`~cbflow.stats.Statistic` whose verdict
is PASS when the worst observed deviation is within tolerance.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import maps as M
from .flows import EventFlow, Interval, flow_map, reverse
from .metrics import dist_C_n, dist_D_n_upper, snap_to_grid, warp_value, TimeWarp
from .stats import exact_stat, bound_stat, info_stat
from .web import (CompactPath, dist_piF, hausdorff_F, directed_F, extract_web,
                  web_continuity_slack)

TOL = 1e-9
R_FAMILY = (0.5, 0.3, 0.2, 0.1, 0.05, 0.02)


def _grid(f, g=None, n=257):
    """Regular grid plus points 1e-7 either side of each breakpoint.

    Breakpoints themselves are left out: there a rounding error of one ulp
    decides which one-sided value is seen.
    """
    pts = [np.linspace(0.0, 1.0, n, endpoint=False) + 1.0 / (math.pi * n), f.xs]
    if g is not None:
        pts.append(g.xs)
    b = np.concatenate(pts[1:])
    return np.concatenate([pts[0], b - 1e-7, b + 1e-7])


def map_error(f, g) -> float:
    """Graph distance of two maps combined with a grid check of their values."""
    x = _grid(f, g)
    e = M.dist_D(f, g)
    for side in ("left", "right"):
        e = max(e, float(np.max(np.abs(M.evaluate(f, x, side) - M.evaluate(g, x, side)))))
    return e


def max_slope(f) -> float:
    xs = np.append(f.xs, f.xs[0] + f.period)
    ym = np.append(f.y_minus[1:], f.y_minus[0] + f.period)
    return float(np.max((ym - f.y_plus) / np.diff(xs)))


def scaled_error(f, g) -> float:
    """map_error in units of max(TOL, 8 ulp * steepest slope).

    A composite of many events can have slopes near 1e8, where one affine
    evaluation already carries an absolute error of order 1e-8.
    """
    tol = max(TOL, 8 * np.finfo(float).eps * max(max_slope(f), max_slope(g)))
    return map_error(f, g) / tol


def _fixture_maps(seed, n):
    rng = np.random.default_rng(seed)
    fs = [M.random_pl_map(rng, n_breaks=int(rng.integers(2, 9))) for _ in range(n)]
    fs += [M.rmap(r) for r in R_FAMILY]
    return fs, rng


# ----------------------------------------------------------------------
# map algebra
# ----------------------------------------------------------------------

def algebra_suite(n_maps=200, seed=0, criterion="1"):
    t0 = time.perf_counter()
    fs, rng = _fixture_maps(seed, n_maps)
    gs = [M.random_pl_map(rng, n_breaks=5) for _ in fs]
    hs = [M.random_pl_map(rng, n_breaks=5) for _ in fs]
    deg = axioms = eps_hold = two_d = rt = xinv = rinv = fr3 = 0.0
    eps_strict_missed = 0
    eps_strict_tested = 0
    for f, g, h in zip(fs, gs, hs):
        x = _grid(f)
        for side in ("left", "right"):
            deg = max(deg, float(np.max(np.abs(M.evaluate(f, x + 1.0, side)
                                               - M.evaluate(f, x, side) - 1.0))))
        dfg, dgf = M.dist_D(f, g), M.dist_D(g, f)
        axioms = max(axioms, M.dist_D(f, f), abs(dfg - dgf),
                     dfg - M.dist_D(f, h) - M.dist_D(h, g))
        # sandwich f-(x - e) - e <= g-(x) <= g+(x) <= f+(x + e) + e
        xx = _grid(f, g, 1025)

        def gap(e):
            lo = M.evaluate(f, xx - e, "left") - e - M.evaluate(g, xx, "left")
            hi = M.evaluate(g, xx, "right") - M.evaluate(f, xx + e, "right") - e
            return float(max(lo.max(), hi.max()))
        eps_hold = max(eps_hold, gap(dfg + TOL))
        if dfg > 1e-3:
            eps_strict_tested += 1
            if gap(dfg - 1e-3) <= 0:
                eps_strict_missed += 1
        two_d = max(two_d, abs(2 * M.dist_D(f, M.identity()) - M.sup_displacement(f)))
        c = M.cross(f)
        rt = max(rt, map_error(M.uncross(c), f))
        fi = M.invert(f)
        xinv = max(xinv, M._sup_diff(M.cross(fi), M.negate(c)))
        rf = M.rho(f)
        rinv = max(rinv, abs(M.rho(fi) - rf) / rf)
        fr3 = max(fr3, M.sup_displacement(f) - (3.0 / rf) ** (1.0 / 3.0))
    rr = max(abs(M.rho(M.rmap(r)) * 2 * r ** 3 / 3 - 1.0) for r in R_FAMILY)
    n = len(fs)
    out = [
        exact_stat("degree_property", criterion, deg, TOL, "f(x+1) = f(x) + 1", n),
        exact_stat("dist_D_metric_axioms", criterion, max(axioms, 0.0), TOL,
                   "d(f,f)=0, symmetry, triangle", n),
        exact_stat("eps_characterisation_holds", criterion, max(eps_hold, 0.0), TOL,
                   "sandwich holds at eps = d + 1e-9", n),
        exact_stat("eps_characterisation_sharp", criterion, eps_strict_missed, 0,
                   "sandwich fails at eps = d - 1e-3", eps_strict_tested),
        exact_stat("two_d_equals_sup_displacement", criterion, two_d, TOL,
                   "2 d(f, id) = ||f - id||", n),
        exact_stat("cross_uncross_roundtrip", criterion, rt, TOL, "uncross(cross f) = f", n),
        exact_stat("cross_of_inverse", criterion, xinv, TOL, "(f^-1)^x = -f^x", n),
        exact_stat("rho_of_inverse", criterion, rinv, TOL, "rho(f^-1) = rho(f) (relative)", n),
        bound_stat("jump_bound", criterion, fr3, TOL, "||f - id|| <= (3/rho)^(1/3)", n),
        exact_stat("rho_rmap", criterion, rr, TOL, "rho(r-map) = 3 / (2 r^3) (relative)",
                   len(R_FAMILY)),
    ]
    out.append(bound_stat("runtime_s", criterion, time.perf_counter() - t0, 10.0,
                          "suite finishes in 10 s"))
    return out


# ----------------------------------------------------------------------
# flow algebra
# ----------------------------------------------------------------------

def _random_flow(rng, H, n_events, rotation):
    t = np.sort(rng.uniform(H.lo, H.hi, n_events))
    if rotation:
        return EventFlow(t, H, base=M.random_pl_map(rng, 5), angles=rng.random(n_events))
    return EventFlow(t, H, event_maps=tuple(M.random_pl_map(rng, 4) for _ in t))


def flow_suite(n_flows=40, n_splits=5, seed=1, criterion="2"):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    H = Interval(-2.0, 2.0)
    lwf = weak = rr = rev = raw = 0.0
    n = 0
    x = np.linspace(-1.0, 2.0, 100)
    for k in range(n_flows):
        phi = _random_flow(rng, H, int(rng.integers(1, 12)), rotation=bool(k % 2))
        for _ in range(n_splits):
            a, b = np.sort(rng.uniform(-2, 2, 2))
            # split at an event time half of the time
            if rng.random() < 0.5 and len(phi):
                t = float(rng.choice(phi.times))
                a, b = min(a, t - 1e-3), max(b, t + 1e-3)
                a, b = max(a, -2.0), min(b, 2.0)
            else:
                t = float(rng.uniform(a, b))
            cl = bool(rng.random() < 0.5)
            I = Interval(a, b, cl, True)
            I1, I2 = Interval(a, t, cl, True), Interval(t, b, False, True)
            f, f1, f2 = flow_map(phi, I), flow_map(phi, I1), flow_map(phi, I2)
            f21 = M.compose(f2, f1)
            lwf = max(lwf, scaled_error(f, f21))
            raw = max(raw, map_error(f, f21))
            lo = M.evaluate(f2, M.evaluate(f1, x, "left"), "left")
            hi = M.evaluate(f2, M.evaluate(f1, x, "right"), "right")
            weak = max(weak, float(np.max(lo - M.evaluate(f, x, "left"))),
                       float(np.max(M.evaluate(f, x, "left") - M.evaluate(f, x, "right"))),
                       float(np.max(M.evaluate(f, x, "right") - hi)))
            r = reverse(phi)
            fr, fi = flow_map(r, -I), M.invert(f)
            rev = max(rev, scaled_error(fr, fi))
            raw = max(raw, map_error(fr, fi))
            n += 1
        rr2 = reverse(reverse(phi))
        rr = max(rr, float(np.max(np.abs(rr2.times - phi.times), initial=0.0)),
                 max((map_error(p, q) for p, q in zip(rr2.maps, phi.maps)), default=0.0))
    out = [
        exact_stat("composition_on_splits", criterion, lwf, 1.0,
                   "Phi_I = Phi_I2 o Phi_I1 for I = I1 + I2 (error / conditioned tol)", n),
        exact_stat("weak_flow_inequalities", criterion, max(weak, 0.0), TOL,
                   "sandwich of one-sided compositions", n),
        exact_stat("reverse_reverse", criterion, rr, TOL, "reverse(reverse(phi)) = phi",
                   n_flows),
        exact_stat("reverse_flow_map", criterion, rev, 1.0,
                   "flow_map(reverse, I) = invert(flow_map(-I)) (error / conditioned tol)", n),
        info_stat("raw_max_map_error", raw, "largest absolute error before scaling", n),
        bound_stat("runtime_s", criterion, time.perf_counter() - t0, 30.0,
                   "suite finishes in 30 s"),
    ]
    return out


# ----------------------------------------------------------------------
# flow metrics
# ----------------------------------------------------------------------

def _small_flow(rng, H, k, lim=0.9):
    prof = M.make_rmap(0.2)
    t = np.sort(rng.uniform(-lim, lim, k))
    return EventFlow(t, H, base=prof.map, angles=rng.random(k))


def metric_suite(seed=2, criterion="7"):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    H = Interval(-3.0, 3.0)
    n = 1
    out = []
    same = 0.0
    le_c = 0.0
    for _ in range(5):
        phi = _small_flow(rng, H, 4)
        psi = _small_flow(rng, H, 4)
        same = max(same, dist_D_n_upper(phi, phi, n))
        idw = warp_value(phi, psi, n, TimeWarp.identity())
        le_c = max(le_c, dist_D_n_upper(phi, psi, n) - dist_C_n(phi, psi, n),
                   idw - dist_C_n(phi, psi, n))
    out.append(exact_stat("d_D_upper_identical", criterion, same, TOL,
                          "d_D_upper(phi, phi) = 0", 5))
    out.append(bound_stat("d_D_upper_le_d_C", criterion, le_c, TOL,
                          "identity warp gives d_D_upper <= d_C", 5))
    phi = _small_flow(rng, H, 5)
    worst = 0.0
    for N in (4, 6, 8, 10):
        s = snap_to_grid(phi, N)
        err = max(M.dist_D(a, b) for a, b in zip(phi.maps, s.maps))
        worst = max(worst, err / (4 * 2.0 ** -N))
        out.append(info_stat(f"snap_error_N{N}", err, "max event-map dist_D after snapping"))
    out.append(bound_stat("snap_error_ratio", criterion, worst, 1.0,
                          "snap event-map error <= 4 * 2^-N (as ratio)", 4))
    g = M.rotate(M.rmap(0.3), 0.2)
    phi1 = EventFlow([0.5], H, event_maps=(g,))
    for d in (0.01, 0.05):
        psi1 = EventFlow([0.5 + d], H, event_maps=(g,))
        du = dist_D_n_upper(phi1, psi1, n)
        dc = dist_C_n(phi1, psi1, n)
        out.append(bound_stat(f"time_shift_{d}_d_D_upper", criterion, du, 2 * d,
                              "d_D_upper <= 2 delta"))
        out.append(bound_stat(f"time_shift_{d}_d_C_large", criterion, -dc, -0.1,
                              "d_C >= 0.1 (stored negated)"))
    out.append(bound_stat("runtime_s", criterion, time.perf_counter() - t0, 60.0,
                          "suite finishes in 60 s"))
    return out


# ----------------------------------------------------------------------
# webs
# ----------------------------------------------------------------------

def _random_paths(rng, grid, k):
    return [CompactPath(grid, np.cumsum(rng.normal(0, 0.3, len(grid)))) for _ in range(k)]


def web_pairs(seed=3, n_pairs=20):
    """Yield (phi, psi, E, grid, n) for nearby random flow pairs."""
    rng = np.random.default_rng(seed)
    H = Interval(-3.0, 3.0)
    n = 2
    E = [(s, x) for s in (-1.0, 0.0, 1.0) for x in (0.1, 0.5, 0.9)]
    grid = np.linspace(-1.9, 1.9, 77)
    for _ in range(n_pairs):
        f = M.random_pl_map(rng, 4)
        k = 3
        times = np.sort(rng.uniform(-1.5, 1.5, k))
        phi = EventFlow(times, H, event_maps=tuple(M.rotate(f, th) for th in rng.random(k)))
        psi_maps = tuple(M.compose(M.MonotoneMap([0.0], [c], [c]), m)
                         for m, c in zip(phi.maps, rng.uniform(-0.02, 0.02, k)))
        psi = EventFlow(times, H, event_maps=psi_maps)
        yield phi, psi, E, grid, n


def web_suite(seed=3, n_pairs=20, criterion="8"):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    grid = np.linspace(-3, 3, 61)
    sym = tri = ident = mono = 0.0
    for _ in range(30):
        a, b, c = _random_paths(rng, grid, 3)
        ident = max(ident, dist_piF(a, a))
        sym = max(sym, abs(dist_piF(a, b) - dist_piF(b, a)))
        tri = max(tri, dist_piF(a, c) - dist_piF(a, b) - dist_piF(b, c))
        A, B, C = (_random_paths(rng, grid, 3) for _ in range(3))
        ident = max(ident, hausdorff_F(A, A))
        sym = max(sym, abs(hausdorff_F(A, B) - hausdorff_F(B, A)))
        tri = max(tri, hausdorff_F(A, C) - hausdorff_F(A, B) - hausdorff_F(B, C))
        mono = max(mono, directed_F(A, B + C) - directed_F(A, B), directed_F(A, A + B))
    out = [
        exact_stat("path_metric_identity", criterion, ident, TOL, "d(a, a) = 0", 30),
        exact_stat("path_metric_symmetry", criterion, sym, TOL, "d(a, b) = d(b, a)", 30),
        bound_stat("path_metric_triangle", criterion, tri, TOL, "triangle inequality", 30),
        bound_stat("hausdorff_monotone", criterion, mono, TOL,
                   "enlarging B never increases A -> B", 30),
    ]
    worst = -math.inf
    slacks = []
    for phi, psi, E, grid_w, n in web_pairs(seed, n_pairs):
        A = extract_web(phi, E, grid_w)
        B = extract_web(psi, E, grid_w)
        h = hausdorff_F(A, B)
        d = dist_C_n(phi, psi, n)
        sl = web_continuity_slack(phi, psi, E, grid_w, d)
        slacks.append(sl)
        worst = max(worst, h - d - sl)
    out.append(bound_stat("web_continuity", criterion, worst, TOL,
                          "hausdorff_F - dist_C_n - slack <= 0", n_pairs))
    out.append(info_stat("web_slack_max", max(slacks), "largest certified slack", n_pairs))
    out.append(bound_stat("runtime_s", criterion, time.perf_counter() - t0, 60.0,
                          "suite finishes in 60 s"))
    return out

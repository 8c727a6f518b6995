import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbflow import maps as M


def brute_eval(f, x):
    """Right values from the breakpoint table without the library evaluator."""
    u = np.mod(x, 1.0)
    k = x - u
    xs = np.r_[f.xs, f.xs[0] + 1]
    ym = np.r_[f.y_minus, f.y_minus[0] + 1]
    yp = np.r_[f.y_plus, f.y_plus[0] + 1]
    # shift u into [xs[0], xs[0] + 1)
    s = np.where(u < xs[0], u + 1, u)
    kk = np.where(u < xs[0], k - 1, k)
    i = np.searchsorted(xs, s, side="right") - 1
    on = s == xs[i]
    lin = yp[i] + (s - xs[i]) * (ym[i + 1] - yp[i]) / (xs[i + 1] - xs[i])
    return np.where(on, yp[i], lin) + kk


def grid_inverse(f, y, h=1e-5):
    """inf{x : f+(x) > y} by scanning a fine grid (right-continuous inverse)."""
    x = np.arange(-2.0, 3.0, h)
    v = M.evaluate(f, x, "right")
    return np.array([x[np.argmax(v > yy)] for yy in np.atleast_1d(y)])


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="module")
def maps50():
    r = np.random.default_rng(11)
    return [M.random_pl_map(r, n_breaks=int(r.integers(2, 8))) for _ in range(50)]


def test_identity_evaluation():
    assert M.evaluate(M.identity(), 0.3) == 0.3


def test_rmap_half_value():
    assert M.evaluate(M.rmap(0.5), 0.9) == pytest.approx(0.5, abs=1e-15)


def test_rmap_formula_on_grid():
    for r in (0.5, 0.2, 0.05):
        x = np.linspace(-1.3, 2.7, 4001) + 1e-9
        u = np.mod(x, 1.0)
        want = np.floor(x) + np.minimum(np.maximum(u, r), 1 - r)
        assert np.allclose(M.evaluate(M.rmap(r), x, "right"), want, atol=1e-12)


def test_evaluate_matches_table_oracle(maps50):
    x = np.linspace(-2, 3, 997) + 1e-6
    for f in maps50:
        assert np.allclose(M.evaluate(f, x, "right"), brute_eval(f, x), atol=1e-12)


def test_degree_property(maps50):
    x = np.linspace(-1, 1, 501) + 1e-7
    for f in maps50:
        for side in ("left", "right"):
            assert np.allclose(M.evaluate(f, x + 1, side), M.evaluate(f, x, side) + 1, atol=1e-12)


def test_left_value_is_left_limit(maps50):
    for f in maps50:
        for x in f.xs:
            assert M.evaluate(f, x, "left") == pytest.approx(
                float(M.evaluate(f, x - 1e-10, "right")), abs=1e-6)


def test_canonical_form_is_stable():
    f = M.MonotoneMap([0.0, 0.25, 0.5, 0.5 + 1e-14], [0.0, 0.25, 0.5, 0.6], [0.0, 0.25, 0.5, 0.6])
    # collinear point at 0.25 dropped, near-duplicates merged into one jump
    assert 0.25 not in f.xs
    assert M.evaluate(f, 0.5, "left") == pytest.approx(0.5)
    assert M.evaluate(f, 0.5, "right") == pytest.approx(0.6)


def test_rejects_decreasing_map():
    with pytest.raises(ValueError):
        M.MonotoneMap([0.2, 0.6], [0.5, 0.3], [0.5, 0.3])


def test_json_roundtrip(maps50):
    for f in maps50[:10]:
        g = M.MonotoneMap.from_dict(f.to_dict())
        assert M.dist_D(f, g) == 0.0


# ----------------------------------------------------------------------
# composition and inversion
# ----------------------------------------------------------------------

def test_compose_with_identity(maps50):
    for f in maps50:
        assert M.dist_D(M.compose(M.identity(), f), f) < 1e-12
        assert M.dist_D(M.compose(f, M.identity()), f) < 1e-12


def test_rmap_half_idempotent():
    f = M.rmap(0.5)
    h = M.compose(f, f)
    x = np.linspace(-1, 2, 3001) + 1e-9
    assert np.allclose(M.evaluate(h, x), M.evaluate(f, M.evaluate(f, x)), atol=1e-12)
    assert M.dist_D(h, f) < 1e-12


def test_compose_matches_pointwise(maps50, rng):
    x = np.linspace(-1, 2, 2001) + 1e-7 * rng.random()
    for f, g in zip(maps50, maps50[1:]):
        h = M.compose(g, f)
        assert np.allclose(M.evaluate(h, x, "right"),
                           M.evaluate(g, M.evaluate(f, x, "right"), "right"), atol=1e-9)


def test_compose_left_limits(maps50):
    for f, g in zip(maps50, maps50[1:]):
        h = M.compose(g, f)
        for x in h.xs:
            assert M.evaluate(h, x, "left") == pytest.approx(
                float(M.evaluate(g, M.evaluate(f, x - 1e-11))), abs=1e-6)


def test_compose_associative(maps50):
    for f, g, h in zip(maps50, maps50[1:], maps50[2:]):
        a = M.compose(h, M.compose(g, f))
        b = M.compose(M.compose(h, g), f)
        assert M.dist_D(a, b) < 1e-9


def test_compose_near_coincident_preimages():
    # two of g's breakpoints pulled back onto a slope of order 1e11
    f = M.MonotoneMap([0.2, 0.2 + 4e-12, 0.7], [0.1, 0.9, 0.95], [0.1, 0.9, 0.95])
    g = M.MonotoneMap([0.3, 0.5], [0.3, 0.8], [0.3, 0.8])
    h = M.compose(g, f)
    x = np.linspace(0, 1, 1001) + 1e-7
    assert np.allclose(M.evaluate(h, x), M.evaluate(g, M.evaluate(f, x)), atol=1e-9)


def test_invert_identity():
    assert M.dist_D(M.invert(M.identity()), M.identity()) == 0.0


def test_invert_rmap_half_is_unit_step():
    g = M.invert(M.rmap(0.5))
    y = np.linspace(-1.4, 2.4, 39) + 1e-3
    want = np.floor(y + 0.5)
    assert np.allclose(M.evaluate(g, y, "right"), want)
    assert np.allclose(M.evaluate(g, y, "right"), grid_inverse(M.rmap(0.5), y), atol=1e-4)


def test_invert_matches_grid_infimum(maps50):
    y = np.linspace(-0.5, 1.5, 41) + 1e-4
    for f in maps50[:15]:
        assert np.allclose(M.evaluate(M.invert(f), y, "right"), grid_inverse(f, y), atol=2e-5)


def test_invert_involution_and_isometry(maps50):
    for f, g in zip(maps50, maps50[1:]):
        assert M.dist_D(M.invert(M.invert(f)), f) < 1e-12
        assert M.dist_D(M.invert(f), M.invert(g)) == pytest.approx(M.dist_D(f, g), abs=1e-12)


def test_invert_of_composition(maps50):
    for f, g in zip(maps50, maps50[1:]):
        a = M.invert(M.compose(g, f))
        b = M.compose(M.invert(f), M.invert(g))
        assert M.dist_D(a, b) < 1e-9


def test_infinite_period_maps():
    f = M.MonotoneMap([0.0, 1.5], [0.0, 1.5], [0.5, 1.5], period=math.inf)
    assert M.evaluate(f, -3.0) == -3.0 and M.evaluate(f, 5.0) == 5.0
    g = M.invert(f)
    y = np.linspace(-1, 3, 41) + 1e-3
    assert np.allclose(M.evaluate(M.compose(g, f), y), M.evaluate(g, M.evaluate(f, y)))
    assert M.evaluate(M.compose(f, f), 0.5) == pytest.approx(float(M.evaluate(f, M.evaluate(f, 0.5))))


# ----------------------------------------------------------------------
# cross transform and the metric
# ----------------------------------------------------------------------

def test_cross_identity_is_zero():
    c = M.cross(M.identity())
    assert c.sup_norm() == 0.0


def test_cross_rmap_half_sawtooth():
    c = M.cross(M.rmap(0.5))
    t = np.linspace(-1, 2, 601)
    u = np.mod(t + 0.25, 1.0) - 0.25
    want = np.where(u <= 0.25, u, 0.5 - u)
    assert np.allclose(c(t), want, atol=1e-12)


def test_cross_solves_sandwich(maps50):
    # (x + f-(x))/2 <= t <= (x + f+(x))/2 at x = t - c(t)
    for f in maps50[:20]:
        c = M.cross(f)
        t = np.linspace(0, 1, 301)
        x = t - c(t)
        # x is rounded, so each side is read 1e-9 outward
        lo = (x + M.evaluate(f, x - 1e-9, "left")) / 2
        hi = (x + M.evaluate(f, x + 1e-9, "right")) / 2
        assert np.all(lo <= t + 1e-9) and np.all(t <= hi + 1e-9)


def test_uncross_zero_and_sawtooth():
    assert M.dist_D(M.uncross(M.cross(M.identity())), M.identity()) == 0.0
    assert M.dist_D(M.uncross(M.cross(M.rmap(0.5))), M.rmap(0.5)) < 1e-12


def test_cross_is_one_lipschitz(maps50):
    for f in maps50:
        assert np.all(np.abs(M.cross(f).slopes()) <= 1 + 1e-12)


def test_dist_rmap_half_to_identity():
    f = M.rmap(0.5)
    assert M.dist_D(f, M.identity()) == pytest.approx(0.25, abs=1e-15)
    # grid-sup oracle on the cross transforms
    t = np.linspace(0, 1, 100001)
    assert np.max(np.abs(M.cross(f)(t))) == pytest.approx(0.25, abs=1e-9)


def test_dist_is_sup_of_cross_difference(maps50):
    t = np.linspace(0, 1, 20001)
    for f, g in zip(maps50, maps50[1:]):
        brute = np.max(np.abs(M.cross(f)(t) - M.cross(g)(t)))
        d = M.dist_D(f, g)
        assert brute <= d + 1e-12 and d - brute < 1e-4


def test_sup_displacement():
    assert M.sup_displacement(M.identity()) == 0.0
    for r in (0.5, 0.3, 0.1):
        assert M.sup_displacement(M.rmap(r)) == pytest.approx(r, abs=1e-15)


# ----------------------------------------------------------------------
# rho, kernel, localisation
# ----------------------------------------------------------------------

def quad_tilde(f, n=400_001):
    x = (np.arange(n) + 0.5) / n
    return M.evaluate(f, x) - x


def test_rho_rmap_values():
    assert M.rho(M.rmap(0.5)) == pytest.approx(12.0, rel=1e-12)
    assert M.rho(M.rmap(0.1)) == pytest.approx(1500.0, rel=1e-12)
    assert M.make_rmap(0.5).rho == 12.0 and M.make_rmap(0.1).rho == pytest.approx(1500.0)


def test_rho_matches_quadrature(maps50):
    for f in maps50[:10]:
        ft = quad_tilde(f)
        assert M.rho(f) == pytest.approx(1.0 / np.mean(ft ** 2), rel=1e-5)


def test_mean_tilde_zero_for_rmaps():
    for r in (0.5, 0.2, 0.05):
        assert abs(M.make_rmap(r).mean_tilde) < 1e-15
        assert abs(np.mean(quad_tilde(M.rmap(r)))) < 1e-6


def test_rho_requires_centred_map():
    f = M.MonotoneMap([0.0], [0.1], [0.1])
    with pytest.raises(ValueError):
        M.rho(f)


def test_kernel_b_normalised_and_matches_quadrature(maps50):
    n = 200_000
    x = (np.arange(n) + 0.5) / n
    for f in maps50[:8]:
        assert M.kernel_b(f, 0.0) == pytest.approx(1.0, abs=1e-12)
        ft = M.evaluate(f, x) - x
        for a in (0.13, 0.5, 0.77):
            fa = M.evaluate(f, x - a) - (x - a)
            assert M.kernel_b(f, a) == pytest.approx(M.rho(f) * np.mean(ft * fa), abs=1e-4)


def test_kernel_b_rmap_vanishes_in_middle():
    for r in (0.2, 0.1, 0.05):
        a = np.linspace(2 * r, 1 - 2 * r, 101)
        assert np.max(np.abs(M.kernel_b(M.rmap(r), a))) < 1e-9


def test_jump_bound(maps50):
    for f in maps50:
        assert M.sup_displacement(f) <= (3 / M.rho(f)) ** (1 / 3) + 1e-12


def _feasible(f, lam, eps=1.0, n=4001):
    a = np.linspace(eps * lam, 1 - eps * lam, n)
    if len(a) == 0 or eps * lam > 1 - eps * lam:
        return True
    return np.max(M._abs_kernel(f, a)) <= lam + 1e-9


def test_localization_lambda_rmap_bound():
    for r in (0.2, 0.1, 0.05):
        lam = M.localization_lambda(M.rmap(r))
        assert lam <= 2 * r + 1e-12
        assert _feasible(M.rmap(r), lam)
        assert not _feasible(M.rmap(r), lam - 1e-6)


def test_localization_lambda_wave_not_localised():
    # full-period triangle displacement: f~ = 0.05 * triangle wave.  At lag
    # 1/2 the absolute correlation is 1, so no lambda < 1/2 works for eps = 1;
    # above 1/2 the lag range [lambda, 1 - lambda] is empty.
    xs = np.array([0.0, 0.25, 0.5, 0.75])
    d = 0.05 * np.array([0.0, 1.0, 0.0, -1.0])
    f = M.MonotoneMap(xs, xs + d, xs + d)
    assert M.localization_lambda(f) == pytest.approx(0.5, abs=1e-8)
    assert M.localization_lambda(f, 0.5) > 0.99


def test_localization_lambda_minimal(maps50):
    for f in maps50[:6]:
        lam = M.localization_lambda(f)
        assert _feasible(f, lam)
        if lam > 1e-6 and lam < 1:
            assert not _feasible(f, lam - 1e-6, n=20001)


# ----------------------------------------------------------------------
# transforms
# ----------------------------------------------------------------------

def test_rotate_and_scale_trivial(maps50):
    for f in maps50[:10]:
        assert M.dist_D(M.rotate(f, 0.0), f) < 1e-15
        assert M.dist_D(M.rotate(f, 1.0), f) < 1e-12
        assert M.dist_D(M.scale(f, 1.0), f) == 0.0
    assert M.dist_D(M.scale(M.identity(), 0.3), M.identity(1 / 0.3)) == 0.0


def test_rotate_definition(maps50):
    x = np.linspace(-1, 2, 301) + 1e-7
    for f in maps50[:10]:
        g = M.rotate(f, 0.37)
        assert np.allclose(M.evaluate(g, x), M.evaluate(f, x - 0.37) + 0.37, atol=1e-12)


def test_scale_definition(maps50):
    x = np.linspace(-3, 5, 301) + 1e-7
    for f in maps50[:10]:
        g = M.scale(f, 0.25)
        assert g.period == 4.0
        assert np.allclose(M.evaluate(g, x), M.evaluate(f, 0.25 * x) / 0.25, atol=1e-11)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 9))
def test_cross_uncross_roundtrip_property(seed, nb):
    f = M.random_pl_map(np.random.default_rng(seed), n_breaks=nb)
    assert M.dist_D(M.uncross(M.cross(f)), f) < 1e-9
    fi = M.invert(f)
    assert M._sup_diff(M.cross(fi), M.negate(M.cross(f))) < 1e-9
    assert M.rho(fi) == pytest.approx(M.rho(f), rel=1e-9)
    assert 2 * M.dist_D(f, M.identity()) == pytest.approx(M.sup_displacement(f), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_metric_axioms_property(seed):
    r = np.random.default_rng(seed)
    f, g, h = (M.random_pl_map(r, 5) for _ in range(3))
    assert M.dist_D(f, f) == 0
    assert M.dist_D(f, g) == pytest.approx(M.dist_D(g, f), abs=1e-15)
    assert M.dist_D(f, g) <= M.dist_D(f, h) + M.dist_D(h, g) + 1e-12

import math

import numpy as np
import pytest
from scipy import integrate

from wavegal import assembly as asm
from wavegal import geometry as geo
from wavegal import quadrature as quad
from wavegal.geometry import Side, Subregion
from wavegal.harness import geometry_oracles
from wavegal.problems import registry_get


def test_one_point_rule():
    r = quad.gauss_square(1)
    np.testing.assert_allclose(r.points, [[0.5, 0.5]])
    np.testing.assert_allclose(r.weights, [1.0])


def test_two_point_rule_exactness():
    r = quad.gauss_square(2)
    x, y = r.points.T
    assert np.sum(r.weights * x ** 3 * y ** 3) == pytest.approx(1 / 16, abs=1e-16)


@pytest.mark.parametrize("n", range(1, 8))
def test_weights_sum_to_one(n):
    assert quad.gauss_square(n).weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert quad.gauss_triangle(n).weights.sum() == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_triangle_rule_degree(n):
    r = quad.gauss_triangle(n)
    x, y = r.points.T
    # int x^a y^b over the unit right triangle = a! b! / (a + b + 2)!
    for a in range(r.order + 1):
        b = r.order - a
        exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
        assert np.sum(r.weights * x ** a * y ** b) == pytest.approx(exact, rel=1e-13)


def test_rule_order_range():
    with pytest.raises(ValueError):
        quad.gauss_square(0)


def test_affine_triangle_linear_exact():
    cell = (0.0, 0.0, 1.0)
    tri = Subregion(Side.PLUS, [("seg", (0.0, 0.0), (1.0, 0.0)), ("seg", (1.0, 0.0), (0.0, 1.0)),
                                ("seg", (0.0, 1.0), (0.0, 0.0))], cell)
    val = quad.integrate_subregion(lambda x, y: 2 * x + 3 * y + 1, tri, n=2)
    assert val == pytest.approx(2 / 6 + 3 / 6 + 1 / 2, rel=1e-14)


def test_circle_band_area(circle):
    area, length = geometry_oracles(circle, level=6)
    assert area == pytest.approx(math.pi / 16, abs=1e-8)
    assert length == pytest.approx(math.pi / 2, abs=1e-8)


def test_curved_region_against_adaptive_reference(circle):
    cell = (0.6875, 0.625, 1 / 16)
    dec = geo.decompose_cut_cell(circle, cell)
    minus = next(r for r in dec.regions if r.side is Side.MINUS)
    f = lambda x, y: x ** 2 + y ** 2
    val = quad.integrate_subregion(f, minus, n=5, curve=circle)
    x0, y0, h = cell
    xmax = 0.5 + math.sqrt(1 / 16 - (y0 - 0.5) ** 2)
    top = lambda x: min(y0 + h, 0.5 + math.sqrt(max(0.0, 1 / 16 - (x - 0.5) ** 2)))
    ref, _ = integrate.dblquad(lambda y, x: f(x, y), x0, xmax, lambda x: y0, top,
                               epsabs=1e-15, epsrel=1e-13)
    assert val == pytest.approx(ref, rel=1e-9)


def test_arc_integrals(circle):
    full = (0.0, 2 * math.pi)
    assert quad.integrate_arc(circle, np.ones_like, full, n=5, panels=8) == pytest.approx(
        math.pi / 2, abs=1e-10)
    assert abs(quad.integrate_arc(circle, np.cos, full, n=5, panels=8)) < 1e-10


def test_arc_length_flower_against_trapezoid():
    curve = registry_get("flower5").curve
    val = quad.integrate_arc(curve, np.ones_like, (0.0, math.pi), n=8, panels=64)
    t = np.linspace(0.0, math.pi, 1_000_001)
    ref = integrate.trapezoid(curve.speed(t), t)
    assert val == pytest.approx(ref, rel=1e-8)


def _plus_area_below_arc(x0, y0, h):
    # area of the cell below the lower half of the circle
    yc = lambda x: 0.5 - math.sqrt(max(0.0, 1 / 16 - (x - 0.5) ** 2))
    f = lambda x: min(max(yc(x) - y0, 0.0), h)
    return integrate.quad(f, x0, x0 + h, epsabs=1e-20, epsrel=1e-13, limit=200)[0]


def test_tangent_edge_cusp(circle):
    # the bottom edge touches the circle at the cell corner (1/2, 1/4)
    h = 2.0 ** -9
    cell = (0.5, 0.25, h)
    x, y, w, s = quad.cell_points(circle, cell, geo.arc_in_cell(circle, cell))
    assert w.sum() == pytest.approx(h * h, rel=1e-13)
    plus = _plus_area_below_arc(*cell)
    assert w[s > 0].sum() == pytest.approx(plus, rel=1e-9)


def test_tiny_corner_region(circle):
    # a level-11 cell whose cut-off corner is ~2e-6 of its area
    L, cx, cy = 11, 897, 528
    h = 2.0 ** -L
    xs, ys = np.meshgrid(np.arange(cx - 2, cx + 3), np.arange(cy - 2, cy + 3))
    q = asm.level_quadrature(circle, L, xs.ravel(), ys.ravel())
    tot = np.bincount(q.cell, weights=q.w, minlength=xs.size)
    np.testing.assert_allclose(tot, h * h, rtol=1e-12)
    k = int(np.nonzero((xs.ravel() == cx) & (ys.ravel() == cy))[0][0])
    plus = np.sum(q.w[(q.cell == k) & (q.side > 0)])
    ref = _plus_area_below_arc(cx * h, cy * h, h)
    assert 0 < ref < 1e-5 * h * h
    assert plus == pytest.approx(ref, rel=1e-6)


def test_level_quadrature_weights_partition_cells(circle):
    L = 6
    n = 2 ** L
    cy, cx = np.divmod(np.arange(n * n), n)
    q = asm.level_quadrature(circle, L, cx, cy)
    tot = np.bincount(q.cell, weights=q.w, minlength=n * n)
    np.testing.assert_allclose(tot, 1.0 / (n * n), rtol=1e-12)
    assert set(np.unique(q.side)) <= {-1, 1}

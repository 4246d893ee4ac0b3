"""Manufactured data must be consistent with the exact solutions."""
import math

import numpy as np
import pytest

from wavegal import problems
from wavegal.problems import registry_get

EXACT = [n for n in problems.names() if registry_get(n).has_exact]


def test_registry_names():
    assert {"circle-1e6", "circle-poisson", "flower3-unknown", "smooth-sine"} <= set(problems.names())
    with pytest.raises(KeyError):
        registry_get("nope")


def test_circle_1e6_solution():
    p = registry_get("circle-1e6")
    x, y = np.array([0.9, 0.1]), np.array([0.2, 0.95])
    r3 = ((x - 0.5) ** 2 + (y - 0.5) ** 2) ** 1.5
    np.testing.assert_allclose(p.exact["u_plus"](x, y), r3 / 1e6 + (1 - 1e-6) / 64, rtol=1e-14)
    np.testing.assert_allclose(p.exact["u_minus"](0.5, 0.6), 0.1 ** 3, rtol=1e-14)


def test_circle_poisson_data():
    p = registry_get("circle-poisson")
    assert p.a_plus(0.1, 0.1) == 1.0 and p.a_minus(0.5, 0.5) == 1e4
    assert p.f_plus(0.3, 0.3) == -16.0 and p.f_minus(0.5, 0.5) == -16.0
    assert p.g is None and p.g_gamma is None and p.g_b is None
    assert not p.has_exact


def test_flower3_data():
    p = registry_get("flower3-unknown")
    x, y = 0.1, 0.3
    assert p.f_plus(x, y) == pytest.approx(-16 * math.sin(math.pi * (4 * x - 2)) * math.sin(math.pi * (4 * y - 2)))
    t = np.linspace(0, 6, 7)
    np.testing.assert_allclose(p.g(t), -np.sin(t) - 1)
    np.testing.assert_allclose(p.g_gamma(t), np.cos(t))


def _sample(p, side, n=40, seed=0):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0.02, 0.98, (2, 4 * n))
    keep = (p.curve.side(x, y) == side) if p.curve is not None else np.ones(len(x), bool)
    # stay away from the interface for the difference quotients
    if p.curve is not None:
        e = 2e-3
        for dx, dy in ((e, 0), (-e, 0), (0, e), (0, -e)):
            keep &= p.curve.side(x + dx, y + dy) == side
    return x[keep][:n], y[keep][:n]


@pytest.mark.parametrize("name", EXACT)
@pytest.mark.parametrize("side", [-1, 1])
def test_source_is_minus_divergence_of_flux(name, side):
    p = registry_get(name)
    if p.curve is None and side < 0:
        return
    x, y = _sample(p, side)
    a = p.a_minus if side < 0 else p.a_plus
    grad = p.exact["grad_u_minus" if side < 0 else "grad_u_plus"]
    f = p.f_minus if side < 0 else p.f_plus
    e = 1e-5
    flux_x = lambda x, y: a(x, y) * grad(x, y)[0]
    flux_y = lambda x, y: a(x, y) * grad(x, y)[1]
    div = ((flux_x(x + e, y) - flux_x(x - e, y)) + (flux_y(x, y + e) - flux_y(x, y - e))) / (2 * e)
    scale = np.abs(f(x, y)).max() + 1e-12
    np.testing.assert_allclose(-div, f(x, y), rtol=0, atol=1e-5 * scale)


@pytest.mark.parametrize("name", [n for n in EXACT if registry_get(n).curve is not None])
def test_jump_data_match_exact_solution(name):
    p = registry_get(name)
    t = np.linspace(0, 2 * math.pi, 101, endpoint=False)
    x, y = p.curve.point(t)
    jump = p.exact["u_plus"](x, y) - p.exact["u_minus"](x, y)
    g = p.g(t) if p.g is not None else 0.0
    np.testing.assert_allclose(jump, g, atol=1e-12 * (1 + np.abs(jump).max()))
    nx, ny = p.curve.normal(t)
    (px, py), (mx, my) = p.exact["grad_u_plus"](x, y), p.exact["grad_u_minus"](x, y)
    flux = (p.a_plus(x, y) * (px * nx + py * ny) - p.a_minus(x, y) * (mx * nx + my * ny))
    gg = p.g_gamma(t) if p.g_gamma is not None else 0.0
    np.testing.assert_allclose(flux, gg, atol=1e-10 * (1 + np.abs(flux).max()))


@pytest.mark.parametrize("name", EXACT)
def test_interface_stays_inside(name):
    p = registry_get(name)
    if p.curve is None:
        return
    x, y = p.curve.point(np.linspace(0, 2 * math.pi, 2000))
    assert x.min() > 0 and x.max() < 1 and y.min() > 0 and y.max() < 1

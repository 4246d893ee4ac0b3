"""Benchmark problems on the unit square.

Manufactured examples are specified by ``a_+-`` and ``u_+-`` as sympy
expressions; sources, jumps and boundary data follow by differentiation:

* ``f_+- = -div(a_+- grad u_+-)``
* ``g(t) = u_+(gamma(t)) - u_-(gamma(t))`` and ``g'`` by the chain rule
* ``g_Gamma(t) = (a_+ grad u_+ - a_- grad u_-) . nu``
* ``g_b = u_+`` on the boundary (``Omega_minus`` stays away from it)

The curves of the examples are polar graphs about (1/2, 1/2).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import sympy as sym

from .assembly import ProblemSpec
from .geometry import PolarCurve

X, Y, T = sym.symbols("x y t", real=True)
RHO2 = (X - sym.Rational(1, 2)) ** 2 + (Y - sym.Rational(1, 2)) ** 2
THETA = sym.atan2(Y - sym.Rational(1, 2), X - sym.Rational(1, 2))


def _lam(expr, args=(X, Y)):
    f = sym.lambdify(args, expr, modules="numpy")

    def call(*a):
        a = [np.asarray(v, dtype=float) for v in a]
        with np.errstate(all="ignore"):
            out = f(*a)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(*a).shape)
    return call


def _lam_grad(expr):
    gx, gy = _lam(sym.diff(expr, X)), _lam(sym.diff(expr, Y))
    return lambda x, y: (gx(x, y), gy(x, y))


def polar_curve(r_expr, name):
    """PolarCurve from a sympy expression of the angle ``t``."""
    return PolarCurve(_lam(r_expr, (T,)), _lam(sym.diff(r_expr, T), (T,)), name=name)


def polar_from_coeffs(c0, c1=0.0, k=0, phase=0.0, name="custom"):
    """``r(t) = c0 + c1 sin(k t + phase)``."""
    return polar_curve(sym.Float(c0) + sym.Float(c1) * sym.sin(k * T + sym.Float(phase)), name)


def _nonzero(fn, samples=256):
    t = np.linspace(0, 2 * math.pi, samples, endpoint=False)
    return np.max(np.abs(fn(t))) > 1e-13


def manufactured(name, curve, a_plus, a_minus, u_plus, u_minus, description=""):
    a_plus, a_minus = sym.sympify(a_plus), sym.sympify(a_minus)
    fp = -(sym.diff(a_plus * sym.diff(u_plus, X), X) + sym.diff(a_plus * sym.diff(u_plus, Y), Y))
    fm = -(sym.diff(a_minus * sym.diff(u_minus, X), X) + sym.diff(a_minus * sym.diff(u_minus, Y), Y))
    up, um = _lam(u_plus), _lam(u_minus)
    gup, gum = _lam_grad(u_plus), _lam_grad(u_minus)
    ap, am = _lam(a_plus), _lam(a_minus)

    def g(t):
        px, py = curve.point(t)
        return up(px, py) - um(px, py)

    def dg(t):
        px, py = curve.point(t)
        tx, ty = curve.tangent(t)
        (pxg, pyg), (mxg, myg) = gup(px, py), gum(px, py)
        return (pxg - mxg) * tx + (pyg - myg) * ty

    def g_gamma(t):
        px, py = curve.point(t)
        nx, ny = curve.normal(t)
        (pxg, pyg), (mxg, myg) = gup(px, py), gum(px, py)
        a1, a0 = ap(px, py), am(px, py)
        return (a1 * pxg - a0 * mxg) * nx + (a1 * pyg - a0 * myg) * ny

    spec = ProblemSpec(
        name=name, curve=curve, a_plus=ap, a_minus=am,
        f_plus=_lam(fp), f_minus=_lam(fm),
        g=g if _nonzero(g) else None, dg=dg if _nonzero(g) else None,
        g_gamma=g_gamma if _nonzero(g_gamma) else None,
        g_b=up, grad_g_b=gup,
        exact={"u_plus": up, "u_minus": um, "grad_u_plus": gup, "grad_u_minus": gum},
        description=description)
    return spec


def _circle():
    return polar_curve(sym.Rational(1, 4) + 0 * T, "circle")


def _circle_1e6():
    ap, am = sym.Float(1e6), sym.Integer(1)
    r3 = RHO2 ** sym.Rational(3, 2)
    return manufactured(
        "circle-1e6", _circle(), ap, am,
        r3 / ap + sym.Rational(1, 64) * (1 / am - 1 / ap), r3 / am,
        "circle r=1/4, a+=1e6, a-=1; continuous solution, nonzero boundary data")


def _star(ap_value, name):
    s = (2 * X - 1) ** 2 + (2 * Y - 1) ** 2
    ap = sym.Float(ap_value)
    return manufactured(
        name, polar_curve(sym.sin(5 * T - sym.pi / 5) / 20 + sym.Rational(1, 4), "star"),
        ap, s + 1,
        (sym.sin(2 * X - 1) * sym.cos(2 * Y - 1) + sym.log(sym.sqrt(s))) / ap, s,
        f"five-petal star, a+={ap_value:g}, a-=(2x-1)^2+(2y-1)^2+1. The small "
        "coefficient is ambiguous between the two sides; this entry puts it on a+.")


def _flower5():
    r = sym.Rational(1, 5) + sym.Rational(2, 25) * sym.sin(5 * T)
    ap = 2 + sym.sin(5 * (X - sym.Rational(1, 2))) * sym.sin(5 * (Y - sym.Rational(1, 2)))
    prod = sym.sin(10 * X - 5) * sym.sin(10 * Y - 5) * (RHO2 - r.subs(T, THETA) ** 2)
    return manufactured("flower5", polar_curve(r, "flower5"), ap, 1000 * ap,
                        prod + 1, prod / 1000 + 31,
                        "five-petal flower, a-=1e3 a+, discontinuous solution")


def _flower8():
    r = sym.pi / 12 + sym.sin(8 * T) / 10
    return manufactured("flower8", polar_curve(r, "flower8"), sym.Integer(1), sym.Float(1e-3),
                        sym.cos(4 * X - 2), 1000 * sym.sin(4 * Y - 2) + 1500,
                        "eight-petal flower, a+=1, a-=1e-3, discontinuous solution")


def _flower6():
    r = (1 + sym.Rational(2, 5) * sym.sin(6 * T)) ** sym.Rational(-1, 4) / sym.sqrt(10)
    ap, am = sym.Float(1e4), sym.Integer(1)
    up = (RHO2 ** 2 * (1 + sym.Rational(2, 5) * sym.sin(6 * THETA)) - sym.Rational(1, 100)) / ap
    return manufactured("flower6", polar_curve(r, "flower6"), ap, am, up, ap / am * up,
                        "six-petal curve, a+=1e4, a-=1; continuous solution")


def _circle_poisson():
    const = lambda v: (lambda x, y: np.full(np.broadcast(x, y).shape, float(v)))
    return ProblemSpec(
        name="circle-poisson", curve=_circle(), a_plus=const(1.0), a_minus=const(1e4),
        f_plus=const(-16.0), f_minus=const(-16.0),
        description="circle r=1/4, a+=1, a-=1e4, f=-16, homogeneous data; exact solution unknown")


def _flower3():
    c = sym.cos(4 * X - 2) * sym.cos(4 * Y - 2)
    ap, am = _lam(1000 * (2 + c)), _lam(2 + c)
    fp = _lam(-16 * sym.sin(sym.pi * (4 * X - 2)) * sym.sin(sym.pi * (4 * Y - 2)))
    fm = _lam(-16 * sym.cos(sym.pi * (4 * X - 2)) * sym.cos(sym.pi * (4 * Y - 2)))
    r = sym.Rational(1, 4) + sym.sin(3 * T) / 8
    return ProblemSpec(
        name="flower3-unknown", curve=polar_curve(r, "flower3"), a_plus=ap, a_minus=am,
        f_plus=fp, f_minus=fm,
        g=lambda t: -np.sin(t) - 1.0, dg=lambda t: -np.cos(t), g_gamma=np.cos,
        description="three-petal flower, jump g=-sin(t)-1, flux jump cos(t); exact solution unknown")


def _smooth_sine():
    u = sym.sin(sym.pi * X) * sym.sin(sym.pi * Y)
    one = lambda x, y: np.ones(np.broadcast(x, y).shape)
    f = _lam(2 * sym.pi ** 2 * u)
    uu, gu = _lam(u), _lam_grad(u)
    return ProblemSpec(
        name="smooth-sine", curve=None, a_plus=one, a_minus=one, f_plus=f, f_minus=f,
        exact={"u_plus": uu, "u_minus": uu, "grad_u_plus": gu, "grad_u_minus": gu},
        description="no interface, a=1, u=sin(pi x) sin(pi y)")


_REGISTRY = {
    "circle-1e6": _circle_1e6,
    "star-a100": lambda: _star(1e2, "star-a100"),
    "star-a0.01": lambda: _star(1e-2, "star-a0.01"),
    "flower5": _flower5,
    "flower8": _flower8,
    "flower6": _flower6,
    "circle-poisson": _circle_poisson,
    "flower3-unknown": _flower3,
    "smooth-sine": _smooth_sine,
}


def names():
    return list(_REGISTRY)


@lru_cache(maxsize=None)
def registry_get(name):
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(_REGISTRY)}") from None

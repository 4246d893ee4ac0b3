"""Gauss rules on squares, curved subregions and curve arcs.

Curved subregions are integrated by a fan decomposition: every boundary
piece ``E(u)``, ``u`` in [0, 1], together with an interior point ``C`` spans
a (possibly curved) triangle, parametrised over the unit square by the
collapsed map ``X(u, v) = C + v (E(u) - C)`` with Jacobian
``v det(E(u) - C, E'(u))``.  For a straight piece this is the usual
Duffy-type map onto a reference right triangle.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class DegenerateMapError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_legendre(n):
    """``n``-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = _gl(int(n))
    return x.copy(), w.copy()


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray     # (m, 2) reference coordinates
    weights: np.ndarray    # (m,)
    order: int             # polynomial degree integrated exactly
    domain: str            # "square" or "triangle"


def gauss_square(n):
    """Tensor ``n x n`` Gauss-Legendre rule on the unit square."""
    if not 1 <= n <= 10:
        raise ValueError(f"quadrature order must be in 1..10, got {n}")
    x, w = gauss_legendre(n)
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    return QuadRule(np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel(),
                    2 * n - 1, "square")


def gauss_triangle(n):
    """Collapsed (Duffy) rule on the right triangle with vertices (0,0), (1,0), (0,1)."""
    if not 1 <= n <= 10:
        raise ValueError(f"quadrature order must be in 1..10, got {n}")
    x, w = gauss_legendre(n)
    # (u, v) -> (u (1 - v), v) has Jacobian (1 - v)
    U, V = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w) * (1 - V)
    return QuadRule(np.stack([(U * (1 - V)).ravel(), V.ravel()], axis=1),
                    W.ravel(), 2 * n - 2, "triangle")


# --- fan quadrature of subregions -------------------------------------------

def _piece_nodes(curve, piece, u):
    """``E(u)`` and ``E'(u)`` of one boundary piece."""
    if piece[0] == "arc":
        _, ta, tb = piece
        t = ta + u * (tb - ta)
        ex, ey = curve.point(t)
        dx, dy = curve.tangent(t)
        return ex, ey, dx * (tb - ta), dy * (tb - ta)
    _, (ax, ay), (bx, by) = piece
    return (ax + u * (bx - ax), ay + u * (by - ay),
            np.full_like(u, bx - ax), np.full_like(u, by - ay))


def _fan_center(curve, pieces, samples=8):
    """Area centroid of the polygon approximating the region boundary."""
    xs, ys = [], []
    u = np.linspace(0, 1, samples, endpoint=False)
    for p in pieces:
        if p[0] == "arc":
            ex, ey, _, _ = _piece_nodes(curve, p, u)
            xs.extend(ex)
            ys.extend(ey)
        else:
            xs.append(p[1][0])
            ys.append(p[1][1])
    # local coordinates avoid cancellation for tiny regions far from the origin
    ox, oy = xs[0], ys[0]
    x, y = np.array(xs) - ox, np.array(ys) - oy
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    if abs(a) < 1e-300:
        return float(ox + x.mean()), float(oy + y.mean())
    return (float(ox + ((x + xn) * cr).sum() / (6 * a)),
            float(oy + ((y + yn) * cr).sum() / (6 * a)))


def _fan(curve, pieces, u, wu, tol):
    cx, cy = _fan_center(curve, pieces)
    X, Y, W = [], [], []
    for p in pieces:
        ex, ey, dx, dy = _piece_nodes(curve, p, u)
        det = (ex - cx) * dy - (ey - cy) * dx
        if np.any(det < -tol):
            raise DegenerateMapError(f"negative Jacobian in fan map of {p}")
        # tensor: u along the piece, v from centre to piece
        X.append(cx + u[None, :] * (ex - cx)[:, None])
        Y.append(cy + u[None, :] * (ey - cy)[:, None])
        W.append((wu * det)[:, None] * (wu * u)[None, :])
    return [np.concatenate([a.ravel() for a in Z]) for Z in (X, Y, W)]


def _chord_segment(curve, pieces, u, wu, tol):
    """Convex polygon (arc replaced by its chord) plus the signed arc-chord segment.

    The segment is parametrised by ``L(u) + v (E(u) - L(u))`` between the
    chord ``L`` and the arc ``E``; its orientation is opposite to the
    region's, hence the minus sign in the weights.
    """
    arc = pieces[0]
    ex, ey, dx, dy = _piece_nodes(curve, arc, u)
    (ax, bx), (ay, by) = curve.point(np.array([arc[1], arc[2]]))
    poly = [("seg", (ax, ay), (bx, by))] + list(pieces[1:])
    px, py, pw = _fan(curve, poly, u, wu, tol)
    lx, ly = ax + u * (bx - ax), ay + u * (by - ay)
    # d/du of L + v (E - L) and d/dv
    dux = (bx - ax) + u[None, :] * (dx - (bx - ax))[:, None]
    duy = (by - ay) + u[None, :] * (dy - (by - ay))[:, None]
    dvx, dvy = (ex - lx)[:, None], (ey - ly)[:, None]
    det = dux * dvy - duy * dvx
    if np.any(det > tol) and np.any(det < -tol):
        raise DegenerateMapError("arc folds over its chord")
    sx = lx[:, None] + u[None, :] * dvx
    sy = ly[:, None] + u[None, :] * dvy
    sw = -(wu[:, None] * wu[None, :]) * det
    return (np.concatenate([px, sx.ravel()]), np.concatenate([py, sy.ravel()]),
            np.concatenate([pw, sw.ravel()]))


def subregion_points(curve, subregion, n=5, jac_tol=1e-13):
    """Physical quadrature points ``(x, y, w)`` for a :class:`~wavegal.geometry.Subregion`.

    The fan map from the region centroid is tried first.  Regions that are
    not star-shaped about it (e.g. the cusp between a tangent edge and the
    curve) fall back to the chord/segment split.  Raises
    :class:`DegenerateMapError` if neither map is valid.
    """
    u, wu = gauss_legendre(n)
    size = subregion.cell[2]
    tol = jac_tol * size * size
    try:
        return tuple(_fan(curve, subregion.pieces, u, wu, tol))
    except DegenerateMapError:
        if subregion.pieces[0][0] != "arc":
            raise
    return _chord_segment(curve, subregion.pieces, u, wu, tol)


def integrate_subregion(f, subregion, n=5, curve=None):
    """``int f`` over a subregion; ``f`` is vectorised in ``(x, y)``."""
    curve = curve if curve is not None else getattr(subregion, "curve", None)
    x, y, w = subregion_points(curve, subregion, n)
    return float(np.sum(w * f(x, y)))


def arc_points(curve, t0, t1, n=5):
    """Points ``gamma(t)`` with weights ``|gamma'(t)| dt`` on ``[t0, t1]``."""
    u, wu = gauss_legendre(n)
    t = t0 + (t1 - t0) * u
    x, y = curve.point(t)
    return x, y, wu * (t1 - t0) * curve.speed(t), t


def integrate_arc(curve, g, interval, n=5, panels=1):
    """``int g(t) |gamma'(t)| dt`` over the parameter interval, with Gauss panels."""
    t0, t1 = interval
    edges = np.linspace(t0, t1, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        _, _, w, t = arc_points(curve, a, b, n)
        total += float(np.sum(w * g(t)))
    return total


def square_points(cell, n=5):
    """Tensor Gauss points ``(x, y, w)`` of a square cell ``(x0, y0, size)``."""
    x0, y0, s = cell
    u, wu = gauss_legendre(n)
    X, Y = np.meshgrid(x0 + s * u, y0 + s * u, indexing="xy")
    return X.ravel(), Y.ravel(), (s * s) * np.outer(wu, wu).ravel()


def cell_points(curve, cell, arcs, n=5, max_depth=6, _depth=0):
    """Quadrature points ``(x, y, w, side)`` of a cell split by the curve.

    Single-arc cells use the two fan-mapped subregions; several arcs, a
    closed arc, or a fan map with a negative Jacobian trigger subdivision
    into four children.
    """
    from .geometry import GeometryError, clip_arcs, split_single_arc, whole_cell, TWO_PI
    if not arcs:
        reg = whole_cell(curve, cell)
        x, y, w = square_points(cell, n)
        return x, y, w, np.full(len(x), int(reg.side), dtype=np.int8)
    closed = len(arcs) == 1 and arcs[0][1] - arcs[0][0] >= TWO_PI - 1e-12
    if len(arcs) == 1 and not closed:
        try:
            out = []
            for reg in split_single_arc(curve, cell, *arcs[0]):
                x, y, w = subregion_points(curve, reg, n)
                out.append((x, y, w, np.full(len(x), int(reg.side), dtype=np.int8)))
            return tuple(np.concatenate(a) for a in zip(*out))
        except DegenerateMapError:
            pass
    if _depth >= max_depth:
        raise GeometryError(f"cell {cell}: could not decompose within {max_depth} subdivisions")
    x0, y0, s = cell
    hs = 0.5 * s
    out = []
    for dy in (0, 1):
        for dx in (0, 1):
            child = (x0 + dx * hs, y0 + dy * hs, hs)
            sub = clip_arcs(curve, arcs, (child[0], child[0] + hs, child[1], child[1] + hs))
            out.append(cell_points(curve, child, sub, n, max_depth, _depth + 1))
    return tuple(np.concatenate(a) for a in zip(*out))

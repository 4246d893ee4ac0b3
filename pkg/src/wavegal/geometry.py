"""Interface curves, the angle function and cut-cell geometry.

Conventions
-----------
* ``Omega_minus`` is the region enclosed by the curve (it contains the centre
  ``(1/2, 1/2)``), ``Omega_plus`` the rest of the unit square.
* Curves are traversed counter-clockwise, so ``Omega_minus`` lies to the left.
* A cell is *cut* when the curve passes through its open interior.  A curve
  that only touches a cell (tangency, running along an edge, passing a
  corner) does not cut it.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
ON_TOL = 1e-12
CENTER = (0.5, 0.5)


class GeometryError(RuntimeError):
    pass


class Side(enum.IntEnum):
    MINUS = -1
    ON = 0
    PLUS = 1


class CellClass(enum.Enum):
    INSIDE = "inside"      # entirely in Omega_minus
    OUTSIDE = "outside"    # entirely in Omega_plus
    CUT = "cut"


def theta(x, y):
    """Polar angle about (1/2, 1/2) in (-pi, pi]; 0 at the centre itself."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx, dy = x - 0.5, y - 0.5
    t = np.arctan2(dy, dx)
    # arctan2(+-0, negative) gives +-pi; the branch convention wants +pi
    t = np.where((dy == 0) & (dx < 0), math.pi, t)
    t = np.where((dx == 0) & (dy == 0), 0.0, t)
    return t if t.ndim else float(t)


def grad_theta(x, y):
    """Gradient of :func:`theta`, ``((1/2 - y), (x - 1/2)) / rho^2``."""
    dx = np.asarray(x, dtype=float) - 0.5
    dy = np.asarray(y, dtype=float) - 0.5
    rho2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        return -dy / rho2, dx / rho2


class InterfaceCurve:
    """Closed simple curve ``gamma(t)``, ``t`` in [0, 2 pi), inside (0, 1)^2."""

    name = "curve"

    def point(self, t):
        raise NotImplementedError

    def tangent(self, t):
        raise NotImplementedError

    def side(self, x, y):
        raise NotImplementedError

    # shared helpers -------------------------------------------------------

    def _validate(self, samples=4096):
        t = np.linspace(0.0, TWO_PI, samples, endpoint=False)
        x, y = self.point(t)
        if np.any(x <= 0) or np.any(x >= 1) or np.any(y <= 0) or np.any(y >= 1):
            raise GeometryError(f"{self.name}: curve leaves the open unit square")
        tx, ty = self.tangent(t)
        if np.any(np.hypot(tx, ty) == 0):
            raise GeometryError(f"{self.name}: degenerate parametrisation")
        # shoelace area must be positive for a counter-clockwise curve
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area <= 0:
            raise GeometryError(f"{self.name}: curve must be counter-clockwise")

    def speed(self, t):
        tx, ty = self.tangent(t)
        return np.hypot(tx, ty)

    def normal(self, t):
        """Unit normal pointing into ``Omega_plus`` (outward for a ccw curve)."""
        tx, ty = self.tangent(t)
        s = np.hypot(tx, ty)
        if np.any(s == 0):
            raise GeometryError("zero tangent: degenerate parametrisation")
        return ty / s, -tx / s

    def inside(self, x, y):
        """:class:`Side` of a single point."""
        return Side(int(self.side(np.float64(x), np.float64(y))))

    def perimeter_estimate(self, samples=4096):
        t = np.linspace(0.0, TWO_PI, samples + 1)
        x, y = self.point(t)
        return float(np.sum(np.hypot(np.diff(x), np.diff(y))))

    def arc_length(self, t0=0.0, t1=TWO_PI, n=16, panels=256):
        from .quadrature import gauss_legendre
        edges = np.linspace(t0, t1, panels + 1)
        u, w = gauss_legendre(n)
        tt = edges[:-1, None] + np.diff(edges)[:, None] * u[None, :]
        return float(np.sum(self.speed(tt) * w[None, :] * np.diff(edges)[:, None]))


class PolarCurve(InterfaceCurve):
    """Star-shaped curve ``(1/2, 1/2) + r(t) (cos t, sin t)``.

    ``r`` and ``dr`` are vectorised callables of the angle.
    """

    def __init__(self, r, dr, name="polar", validate=True):
        self.r, self.dr, self.name = r, dr, name
        if validate:
            if np.any(np.asarray(r(np.linspace(0, TWO_PI, 4096))) <= 0):
                raise GeometryError(f"{name}: r must be positive")
            self._validate()

    def point(self, t):
        t = np.asarray(t, dtype=float)
        r = self.r(t)
        return 0.5 + r * np.cos(t), 0.5 + r * np.sin(t)

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        r, dr = self.r(t), self.dr(t)
        c, s = np.cos(t), np.sin(t)
        return dr * c - r * s, dr * s + r * c

    def level_set(self, x, y):
        """``rho - r(theta)``: negative in ``Omega_minus``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.hypot(x - 0.5, y - 0.5) - self.r(theta(x, y))

    def side(self, x, y):
        d = self.level_set(x, y)
        return np.where(np.abs(d) <= ON_TOL, 0, np.sign(d)).astype(np.int8)


class ParametricCurve(InterfaceCurve):
    """General parametric curve; inside tests use a winding number of a dense polygon."""

    def __init__(self, x, y, dx, dy, name="parametric", samples=8192):
        self._x, self._y, self._dx, self._dy, self.name = x, y, dx, dy, name
        self._validate()
        t = np.linspace(0.0, TWO_PI, samples, endpoint=False)
        self._poly = np.stack(self.point(t), axis=1)

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self._x(t), self._y(t)

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        return self._dx(t), self._dy(t)

    def side(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        p = self._poly
        q = np.roll(p, -1, axis=0)
        wn = np.zeros(x.shape, dtype=np.int64)
        ondist = np.full(x.shape, np.inf)
        for (x0, y0), (x1, y1) in zip(p, q):
            up = (y0 <= y) & (y1 > y)
            down = (y0 > y) & (y1 <= y)
            cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
            wn += (up & (cross > 0)).astype(np.int64)
            wn -= (down & (cross < 0)).astype(np.int64)
            ex, ey = x1 - x0, y1 - y0
            tt = np.clip(((x - x0) * ex + (y - y0) * ey) / (ex * ex + ey * ey), 0, 1)
            ondist = np.minimum(ondist, np.hypot(x - x0 - tt * ex, y - y0 - tt * ey))
        out = np.where(wn != 0, -1, 1).astype(np.int8)
        out[ondist <= ON_TOL] = 0
        return out


# --- tracing the curve through a uniform grid -------------------------------

def _sample_count(curve, h, base=4096, chord_frac=1.0 / 8):
    need = curve.perimeter_estimate() / (chord_frac * h)
    return int(max(base, 2 ** math.ceil(math.log2(max(need, 1.0)))))


def _bisect(fun, lo, hi, iters=60):
    """Vectorised bisection for a sign change of ``fun`` in ``[lo, hi]``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = np.sign(fun(lo))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = np.sign(fun(mid))
        left = fm == flo
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(hi))):
            break
    return 0.5 * (lo + hi)


def _deadband_floor(u, eps):
    """``floor(u)`` where samples within ``eps`` of an integer keep the previous index."""
    idx = np.floor(u).astype(np.int64)
    near = np.abs(u - np.rint(u)) < eps
    if near.all():
        raise GeometryError("curve runs along grid lines; cannot trace")
    valid = np.where(~near, np.arange(len(u)), -1)
    last = np.maximum.accumulate(valid)
    first = np.argmax(~near)
    last[last < 0] = first
    return idx[last]


@dataclass
class LevelTrace:
    """Arcs of the curve inside the cells of the level-``level`` grid.

    Each arc ``a`` lies in cell ``(cx[a], cy[a])`` for ``t`` in
    ``[t0[a], t1[a]]`` (``t1`` may exceed ``2 pi``).  ``closed`` marks the
    case of the whole curve inside a single cell.
    """

    level: int
    cx: np.ndarray
    cy: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    closed: bool = False
    _cells: tuple = field(default=None, repr=False)

    @property
    def h(self):
        return 2.0 ** -self.level

    def cut_cells(self):
        """Unique cut cells ``(cx, cy)`` in lexicographic (y, x) order."""
        if self._cells is None:
            n = 2 ** self.level
            code = np.unique(self.cy.astype(np.int64) * n + self.cx)
            self._cells = (code % n, code // n)
        return self._cells

    def cut_mask(self):
        n = 2 ** self.level
        m = np.zeros((n, n), dtype=bool)
        m[self.cy, self.cx] = True
        return m

    def arcs_by_cell(self):
        """Dict ``(cx, cy) -> list of (t0, t1)``."""
        out = {}
        for a in range(len(self.t0)):
            out.setdefault((int(self.cx[a]), int(self.cy[a])), []).append(
                (float(self.t0[a]), float(self.t1[a])))
        return out


def trace_level(curve, level):
    """Trace ``curve`` through the uniform grid of width ``2^-level``.

    Results are cached on the curve object.
    """
    cache = curve.__dict__.setdefault("_trace_cache", {})
    if level in cache:
        return cache[level]
    h = 2.0 ** -level
    M = _sample_count(curve, h)
    t = np.linspace(0.0, TWO_PI, M + 1)
    x, y = curve.point(t)
    eps = ON_TOL / h
    cx = _deadband_floor(x / h, eps)
    cy = _deadband_floor(y / h, eps)
    # closedness: the last sample repeats the first
    cx[-1], cy[-1] = cx[0], cy[0]

    ev_t, ev_kind, ev_val = [], [], []
    for kind, c, coord in ((0, cx, 0), (1, cy, 1)):
        i = np.nonzero(c[1:] != c[:-1])[0]
        if len(i) == 0:
            continue
        line = np.maximum(c[i], c[i + 1]) * h

        def f(s, line=line, coord=coord):
            return curve.point(s)[coord] - line
        ev_t.append(_bisect(f, t[i], t[i + 1]))
        ev_kind.append(np.full(len(i), kind))
        ev_val.append(c[i + 1])

    if not ev_t:
        tr = LevelTrace(level, np.array([cx[0]]), np.array([cy[0]]),
                        np.array([0.0]), np.array([TWO_PI]), closed=True)
        cache[level] = tr
        return tr

    et = np.concatenate(ev_t)
    ek = np.concatenate(ev_kind)
    ev = np.concatenate(ev_val)
    order = np.lexsort((ek, et))
    et, ek, ev = et[order], ek[order], ev[order]
    # cell state after each event
    n_ev = len(et)
    sx = np.empty(n_ev, dtype=np.int64)
    sy = np.empty(n_ev, dtype=np.int64)
    curx, cury = cx[0], cy[0]
    for e in range(n_ev):
        if ek[e] == 0:
            curx = ev[e]
        else:
            cury = ev[e]
        sx[e], sy[e] = curx, cury
    # arc e runs from event e to event e+1; the last wraps to the first
    t0 = et
    t1 = np.append(et[1:], et[0] + TWO_PI)
    keep = (t1 - t0) > 1e-14
    tr = LevelTrace(level, sx[keep], sy[keep], t0[keep], t1[keep])
    cache[level] = tr
    return tr


def cut_mask(curve, level):
    return trace_level(curve, level).cut_mask()


# --- clipping arcs against an arbitrary box ----------------------------------

def _box_margin(curve, box):
    x0, x1, y0, y1 = box

    def m(t):
        x, y = curve.point(t)
        return np.minimum(np.minimum(x - x0, x1 - x), np.minimum(y - y0, y1 - y))
    return m


def clip_arcs(curve, arcs, box, samples_per_arc=64):
    """Sub-intervals of the ``arcs`` (list of ``(t0, t1)``) whose points lie in the open ``box``.

    ``box`` is ``(x0, x1, y0, y1)``.  Sign changes of the distance to the box
    boundary are located by bisection; touching the boundary without
    crossing it is ignored.
    """
    margin = _box_margin(curve, box)
    size = min(box[1] - box[0], box[3] - box[2])
    out = []
    for t0, t1 in arcs:
        length = curve.arc_length(t0, t1, n=4, panels=4) if t1 > t0 else 0.0
        n = max(samples_per_arc, int(math.ceil(16 * length / size)) + 1)
        t = np.linspace(t0, t1, n + 1)
        m = margin(t)
        # deadband near the boundary: take the sign of the previous sample
        s = np.where(np.abs(m) < ON_TOL, 0, np.sign(m))
        nz = np.nonzero(s)[0]
        if len(nz) == 0:
            continue
        fill = np.maximum.accumulate(np.where(s != 0, np.arange(len(s)), -1))
        fill[fill < 0] = nz[0]
        s = s[fill]
        ch = np.nonzero(s[1:] != s[:-1])[0]
        cuts = _bisect(margin, t[ch], t[ch + 1]) if len(ch) else np.array([])
        bounds = np.concatenate([[t0], cuts, [t1]])
        states = np.concatenate([[s[0]], s[ch + 1]])
        for k in range(len(states)):
            if states[k] > 0 and bounds[k + 1] - bounds[k] > 1e-14:
                out.append((float(bounds[k]), float(bounds[k + 1])))
    # merge pieces that meet (e.g. across the arc seams)
    merged = []
    for a in sorted(out):
        if merged and abs(a[0] - merged[-1][1]) < 1e-13:
            merged[-1] = (merged[-1][0], a[1])
        else:
            merged.append(a)
    if len(merged) > 1 and abs(merged[0][0] + TWO_PI - merged[-1][1]) < 1e-13:
        merged = [(merged[-1][0], merged[0][1] + TWO_PI)] + merged[1:-1]
    return merged


# --- per-cell API ------------------------------------------------------------

def _cell_box(cell):
    x0, y0, s = cell
    return (x0, x0 + s, y0, y0 + s)


def arc_in_cell(curve, cell):
    """Maximal parameter intervals with ``gamma(t)`` inside the open cell.

    ``cell = (x0, y0, size)``.  A curve entirely inside yields ``[(0, 2 pi)]``.
    """
    arcs = clip_arcs(curve, [(0.0, TWO_PI)], _cell_box(cell),
                     samples_per_arc=4096)
    if len(arcs) == 1 and arcs[0][1] - arcs[0][0] >= TWO_PI - 1e-12:
        return [(0.0, TWO_PI)]
    return arcs


def classify_cell(curve, cell):
    if arc_in_cell(curve, cell):
        return CellClass.CUT
    x0, y0, s = cell
    side = curve.side(x0 + 0.5 * s, y0 + 0.5 * s)
    return CellClass.INSIDE if side < 0 else CellClass.OUTSIDE


EDGES = ("bottom", "right", "top", "left")


def boundary_param(px, py, cell):
    """Counter-clockwise perimeter parameter ``s`` in [0, 4) of boundary points."""
    x0, y0, size = cell
    u = (np.asarray(px) - x0) / size
    v = (np.asarray(py) - y0) / size
    d = np.stack([v, 1 - u, 1 - v, u])          # distance to bottom/right/top/left
    e = np.argmin(d, axis=0)
    s = np.select([e == 0, e == 1, e == 2, e == 3], [u, 1 + v, 3 - u, 4 - v])
    s = np.clip(s, 0, 4)
    return np.where(s >= 4, 0.0, s), e


def edge_crossings(curve, cell, max_crossings=8):
    """Transversal crossings ``(edge, t, (x, y))`` of the curve with the cell edges."""
    arcs = arc_in_cell(curve, cell)
    if arcs == [(0.0, TWO_PI)]:
        return []
    ts = sorted(t for a in arcs for t in a)
    if len(ts) > max_crossings:
        raise GeometryError(f"cell {cell}: {len(ts)} crossings; refine the cell")
    out = []
    for t in ts:
        x, y = curve.point(np.array([t]))
        _, e = boundary_param(x, y, cell)
        out.append((EDGES[int(e[0])], t % TWO_PI, (float(x[0]), float(y[0]))))
    return out


@dataclass
class Subregion:
    """Piece of a cell on one side of the curve.

    ``pieces`` is the ccw boundary as a list of ``("arc", t_start, t_end)``
    and ``("seg", (x, y), (x, y))`` items; whole cells have only segments.
    """

    side: Side
    pieces: list
    cell: tuple

    @property
    def kind(self):
        n = len([p for p in self.pieces if p[0] == "seg" and p[1] != p[2]])
        if not any(p[0] == "arc" for p in self.pieces):
            return "square"
        return "curved-triangle" if n <= 2 else "curved-quad"


@dataclass
class CutDecomposition:
    cell: tuple
    regions: list       # list of Subregion (leaves, possibly in sub-cells)
    arcs: list          # parameter intervals of the curve inside the cell


def _corner(cell, k):
    x0, y0, s = cell
    return [(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)][k % 4]


def _boundary_point(cell, s):
    x0, y0, size = cell
    s = s % 4
    k = int(math.floor(s))
    f = s - k
    (ax, ay), (bx, by) = _corner(cell, k), _corner(cell, k + 1)
    return (ax + f * (bx - ax), ay + f * (by - ay))


def _boundary_walk(cell, s_from, s_to):
    """Straight segments walking the cell boundary ccw from ``s_from`` to ``s_to``."""
    if s_to <= s_from:
        s_to += 4
    nodes = [s_from] + [float(c) for c in range(int(math.floor(s_from)) + 1,
                                               int(math.ceil(s_to)))] + [s_to]
    pts = [_boundary_point(cell, s) for s in nodes]
    return [("seg", pts[i], pts[i + 1]) for i in range(len(pts) - 1)
            if pts[i] != pts[i + 1]]


def split_single_arc(curve, cell, t0, t1):
    """The two subregions cut from ``cell`` by one arc entering at ``t0`` and leaving at ``t1``."""
    px, py = curve.point(np.array([t0, t1]))
    s, _ = boundary_param(px, py, cell)
    s_in, s_out = float(s[0]), float(s[1])
    minus = [("arc", t0, t1)] + _boundary_walk(cell, s_out, s_in)
    plus = [("arc", t1, t0)] + _boundary_walk(cell, s_in, s_out)
    return [Subregion(Side.MINUS, minus, cell), Subregion(Side.PLUS, plus, cell)]


def whole_cell(curve, cell):
    x0, y0, s = cell
    side = Side.MINUS if curve.side(x0 + 0.5 * s, y0 + 0.5 * s) < 0 else Side.PLUS
    pts = [_corner(cell, k) for k in range(5)]
    return Subregion(side, [("seg", pts[k], pts[k + 1]) for k in range(4)], cell)


def decompose_cut_cell(curve, cell, arcs=None, max_depth=6, _depth=0):
    """Partition a cell into subregions on either side of the curve.

    A single arc splits the cell in two.  Cells with several arcs, or with
    the whole curve inside, are subdivided into four children recursively
    (at most ``max_depth`` times).
    """
    if arcs is None:
        arcs = arc_in_cell(curve, cell)
    if not arcs:
        return CutDecomposition(cell, [whole_cell(curve, cell)], [])
    closed = len(arcs) == 1 and arcs[0][1] - arcs[0][0] >= TWO_PI - 1e-12
    if len(arcs) == 1 and not closed:
        return CutDecomposition(cell, split_single_arc(curve, cell, *arcs[0]), arcs)
    if _depth >= max_depth:
        raise GeometryError(f"cell {cell}: topology too complex after {max_depth} subdivisions")
    regions = []
    x0, y0, s = cell
    hs = 0.5 * s
    for dy in (0, 1):
        for dx in (0, 1):
            child = (x0 + dx * hs, y0 + dy * hs, hs)
            sub = clip_arcs(curve, arcs, _cell_box(child))
            regions += decompose_cut_cell(curve, child, sub, max_depth, _depth + 1).regions
    return CutDecomposition(cell, regions, arcs)

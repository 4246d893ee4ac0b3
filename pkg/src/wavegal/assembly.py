"""Galerkin systems for the interface problem.

Two routes produce the same matrix:

``assemble_fine`` + ``transform_system``
    Stiffness matrix of all hats at one fine level, then the congruence
    ``C S C^T`` with the exact hat expansions ``C`` of the basis.  Simple
    and used as an oracle, but the fine grid grows like ``4^(2J-1)``.

``assemble_full``
    Multilevel band assembly.  Elements of the standard part live in the
    level-``J`` hats; added wavelets of level ``j`` live in the level
    ``j+1`` hats near the curve.  For each hat level ``m`` the stiffness
    matrix is integrated only on cells touching the supports ``D_m`` of
    level-``m`` functions, and coarser functions enter through their nodal
    values (bilinear interpolation is exact for coarser hats).  With
    ``E_m`` the nodal values on the patch of all components of level
    ``<= m`` and ``E'_m`` those of level ``< m``::

        G = sum_m  F_m^T K_m E_m  +  E'_m^T K_m F_m

    where ``F_m`` holds the level-``m`` components.  Every pair of basis
    functions is integrated once, at the finer of their two levels.

The right-hand side is ``<f, v> - <g_Gamma, v>_Gamma - <a grad G, grad v>``
where ``G`` is the lifting of the jump and boundary data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from . import kernels
from .basis2d import expansion_matrix
from .quadrature import cell_points, gauss_legendre

log = logging.getLogger(__name__)

MAX_LEVEL = 7


class MemoryGuardError(RuntimeError):
    pass


class AssemblyError(RuntimeError):
    pass


# --- problem data ------------------------------------------------------------

def _broadcast(fn):
    def wrapped(*args):
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), shape)
    return wrapped


@dataclass
class ProblemSpec:
    """Data of ``-div(a grad u) = f`` with jumps across ``curve``.

    Scalar fields take ``(x, y)`` arrays; ``g``, ``dg`` and ``g_gamma`` take
    the curve angle.  ``grad_g_b`` returns a pair.  Missing ``g``/``g_b`` mean
    zero data.  ``exact`` optionally holds ``u_plus``, ``u_minus``,
    ``grad_u_plus``, ``grad_u_minus``.
    """

    name: str
    curve: Optional[geo.InterfaceCurve]
    a_plus: Callable
    a_minus: Callable
    f_plus: Callable
    f_minus: Callable
    g: Optional[Callable] = None
    dg: Optional[Callable] = None
    g_gamma: Optional[Callable] = None
    g_b: Optional[Callable] = None
    grad_g_b: Optional[Callable] = None
    exact: Optional[dict] = None
    description: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in ("a_plus", "a_minus", "f_plus", "f_minus"):
            setattr(self, k, _broadcast(getattr(self, k)))
        if self.g is not None and self.dg is None:
            log.warning("%s: no derivative of g supplied, using central differences", self.name)
            g = self.g
            self.dg = lambda t: (g(t + 1e-6) - g(t - 1e-6)) / 2e-6
        if self.g_b is not None and self.grad_g_b is None:
            gb = self.g_b
            self.grad_g_b = lambda x, y: ((gb(x + 1e-6, y) - gb(x - 1e-6, y)) / 2e-6,
                                          (gb(x, y + 1e-6) - gb(x, y - 1e-6)) / 2e-6)

    def sided(self, fm, fp, x, y, side):
        x, y = np.asarray(x, float), np.asarray(y, float)
        out = np.empty(np.broadcast(x, y).shape)
        minus = np.asarray(side) < 0
        if minus.any():
            out[minus] = fm(x[minus], y[minus])
        if (~minus).any():
            out[~minus] = fp(x[~minus], y[~minus])
        return out

    def coef(self, x, y, side):
        return self.sided(self.a_minus, self.a_plus, x, y, side)

    def source(self, x, y, side):
        return self.sided(self.f_minus, self.f_plus, x, y, side)

    @property
    def has_exact(self):
        return self.exact is not None

    def exact_value(self, x, y, side):
        return self.sided(self.exact["u_minus"], self.exact["u_plus"], x, y, side)

    def exact_grad(self, x, y, side):
        gm, gp = self.exact["grad_u_minus"], self.exact["grad_u_plus"]
        gx = self.sided(lambda a, b: gm(a, b)[0], lambda a, b: gp(a, b)[0], x, y, side)
        gy = self.sided(lambda a, b: gm(a, b)[1], lambda a, b: gp(a, b)[1], x, y, side)
        return gx, gy


# --- lifting -------------------------------------------------------------------

class Lifting:
    """``G_+ = g~ + u_LR + u_BT`` on ``Omega_plus`` and ``G_- = u_LR + u_BT``.

    ``g~(x, y) = g(theta(x, y))`` extends the jump radially; ``u_LR`` and
    ``u_BT`` interpolate the remaining boundary mismatch linearly, first
    between the left/right edges, then between bottom/top.
    """

    def __init__(self, problem):
        self.p = problem
        self.zero = problem.g is None and problem.g_b is None

    def g_tilde(self, x, y):
        if self.p.g is None:
            return np.zeros(np.broadcast(x, y).shape)
        return self.p.g(geo.theta(x, y))

    def grad_g_tilde(self, x, y):
        if self.p.g is None:
            z = np.zeros(np.broadcast(x, y).shape)
            return z, z
        d = self.p.dg(geo.theta(x, y))
        tx, ty = geo.grad_theta(x, y)
        return d * tx, d * ty

    def _gb(self, x, y):
        if self.p.g_b is None:
            return np.zeros(np.broadcast(x, y).shape)
        return np.broadcast_to(self.p.g_b(x, y), np.broadcast(x, y).shape)

    def _grad_gb(self, x, y):
        shape = np.broadcast(x, y).shape
        if self.p.g_b is None:
            return np.zeros(shape), np.zeros(shape)
        gx, gy = self.p.grad_g_b(x, y)
        return np.broadcast_to(gx, shape), np.broadcast_to(gy, shape)

    # edge mismatches and their tangential derivatives
    def _lr(self, y):
        zero, one = np.zeros_like(y), np.ones_like(y)
        L = self._gb(zero, y) - self.g_tilde(zero, y)
        R = self._gb(one, y) - self.g_tilde(one, y)
        dL = self._grad_gb(zero, y)[1] - self.grad_g_tilde(zero, y)[1]
        dR = self._grad_gb(one, y)[1] - self.grad_g_tilde(one, y)[1]
        return L, R, dL, dR

    def u_lr(self, x, y):
        L, R, _, _ = self._lr(y)
        return L * (1 - x) + R * x

    def grad_u_lr(self, x, y):
        L, R, dL, dR = self._lr(y)
        return R - L, dL * (1 - x) + dR * x

    def _bt(self, x):
        zero, one = np.zeros_like(x), np.ones_like(x)
        B = self._gb(x, zero) - self.g_tilde(x, zero) - self.u_lr(x, zero)
        T = self._gb(x, one) - self.g_tilde(x, one) - self.u_lr(x, one)
        dB = self._grad_gb(x, zero)[0] - self.grad_g_tilde(x, zero)[0] - self.grad_u_lr(x, zero)[0]
        dT = self._grad_gb(x, one)[0] - self.grad_g_tilde(x, one)[0] - self.grad_u_lr(x, one)[0]
        return B, T, dB, dT

    def u_bt(self, x, y):
        B, T, _, _ = self._bt(x)
        return B * (1 - y) + T * y

    def grad_u_bt(self, x, y):
        B, T, dB, dT = self._bt(x)
        return dB * (1 - y) + dT * y, T - B

    def G_minus(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros(x.shape)
        return self.u_lr(x, y) + self.u_bt(x, y)

    def G_plus(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros(x.shape)
        return self.g_tilde(x, y) + self.G_minus(x, y)

    def grad_G_minus(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros(x.shape), np.zeros(x.shape)
        a, b = self.grad_u_lr(x, y)
        c, d = self.grad_u_bt(x, y)
        return a + c, b + d

    def grad_G_plus(self, x, y):
        gx, gy = self.grad_G_minus(x, y)
        if self.zero or self.p.g is None:
            return gx, gy
        tx, ty = self.grad_g_tilde(x, y)
        return gx + tx, gy + ty

    def value(self, x, y, side):
        side = np.asarray(side)
        return np.where(side < 0, self.G_minus(x, y), self.G_plus(x, y))

    def grad(self, x, y, side):
        side = np.asarray(side)
        mx, my = self.grad_G_minus(x, y)
        px, py = self.grad_G_plus(x, y)
        return np.where(side < 0, mx, px), np.where(side < 0, my, py)


def build_lifting(problem):
    return Lifting(problem)


# --- per-level element integration -----------------------------------------------

@dataclass
class LevelQuad:
    """Quadrature points of a set of cells at one level (cell index is local)."""

    level: int
    cx: np.ndarray
    cy: np.ndarray
    cell: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    side: np.ndarray
    arc_cell: np.ndarray
    arc_x: np.ndarray
    arc_y: np.ndarray
    arc_w: np.ndarray
    arc_t: np.ndarray


def level_quadrature(curve, level, cx, cy, n=5):
    """Quadrature of the cells ``(cx, cy)`` of the level grid, split by ``curve``."""
    h = 2.0 ** -level
    nside = 2 ** level
    ncell = len(cx)
    codes = cy.astype(np.int64) * nside + cx
    u, wu = gauss_legendre(n)
    reg_parts, arc_parts = [], []
    cut = np.zeros(ncell, dtype=bool)
    if curve is not None:
        tr = geo.trace_level(curve, level)
        acode = tr.cy.astype(np.int64) * nside + tr.cx
        order = np.argsort(codes)
        pos = np.searchsorted(codes[order], acode)
        pos = np.minimum(pos, ncell - 1)
        hit = codes[order][pos] == acode
        arc_local = order[pos[hit]]
        t0, t1 = tr.t0[hit], tr.t1[hit]
        cut[arc_local] = True
        # arcs: Gauss points on each parameter interval
        if len(arc_local):
            panels = 16 if tr.closed else 1
            for p in range(panels):
                a = t0 + (t1 - t0) * p / panels
                b = t0 + (t1 - t0) * (p + 1) / panels
                tt = a[:, None] + (b - a)[:, None] * u[None, :]
                ax, ay = curve.point(tt)
                arc_parts.append((np.repeat(arc_local, n), ax.ravel(), ay.ravel(),
                                  (wu[None, :] * (b - a)[:, None] * curve.speed(tt)).ravel(),
                                  tt.ravel()))
        # cut cells with exactly one (open) arc go through the batch kernel
        cnt = np.bincount(arc_local, minlength=ncell)
        closed = tr.closed
        single = np.nonzero((cnt == 1) & ~closed)[0] if len(arc_local) else np.zeros(0, int)
        first = {}
        for k, c in enumerate(arc_local):
            first.setdefault(int(c), []).append((float(t0[k]), float(t1[k])))
        if len(single):
            ta = np.array([first[int(c)][0][0] for c in single])
            tb = np.array([first[int(c)][0][1] for c in single])
            x0, y0 = cx[single] * h, cy[single] * h
            tt = ta[:, None] + (tb - ta)[:, None] * u[None, :]
            ax, ay = curve.point(tt)
            dx, dy = curve.tangent(tt)
            dx, dy = dx * (tb - ta)[:, None], dy * (tb - ta)[:, None]
            ts = ta[:, None] + (tb - ta)[:, None] * np.linspace(0, 1, 9)[None, :]
            sx, sy = curve.point(ts)
            s_all, _ = geo.boundary_param(np.concatenate([sx[:, 0], sx[:, -1]]),
                                          np.concatenate([sy[:, 0], sy[:, -1]]),
                                          (np.tile(x0, 2), np.tile(y0, 2), h))
            s_in, s_out = s_all[:len(single)], s_all[len(single):]
            X, Y, W, ok = kernels.fan_points(
                x0.astype(float), y0.astype(float), h, ax, ay, dx, dy, sx, sy,
                s_in, s_out, u, wu)
            good = np.nonzero(ok)[0]
            if len(good):
                P = X.shape[2]
                sides = np.broadcast_to(np.array([-1, 1], dtype=np.int8)[None, :, None],
                                        (len(good), 2, P))
                Wg = W[good]
                keep = Wg != 0
                reg_parts.append((np.broadcast_to(single[good][:, None, None], Wg.shape)[keep],
                                  X[good][keep], Y[good][keep], Wg[keep], sides[keep]))
            slow = [int(c) for c in single[~ok]]
        else:
            slow = []
        slow += [int(c) for c in np.nonzero((cnt > 1) | ((cnt == 1) & closed))[0]]
        for c in slow:
            cell = (cx[c] * h, cy[c] * h, h)
            x, y, w, s = cell_points(curve, cell, first[c], n)
            reg_parts.append((np.full(len(x), c), x, y, w, s))
    # uncut cells: tensor Gauss points, one side per cell
    unc = np.nonzero(~cut)[0]
    if len(unc):
        X = (cx[unc, None] + u[None, :]) * h
        Y = (cy[unc, None] + u[None, :]) * h
        if curve is None:
            side = np.ones(len(unc), dtype=np.int8)
        else:
            side = curve.side((cx[unc] + 0.5) * h, (cy[unc] + 0.5) * h)
            side = np.where(side < 0, -1, 1).astype(np.int8)
        nn = n * n
        reg_parts.append((np.repeat(unc, nn),
                          np.broadcast_to(X[:, None, :], (len(unc), n, n)).ravel(),
                          np.broadcast_to(Y[:, :, None], (len(unc), n, n)).ravel(),
                          np.tile((h * h) * np.outer(wu, wu).ravel(), len(unc)),
                          np.repeat(side, nn)))
    cat = lambda parts, k, dt=float: (np.concatenate([p[k] for p in parts]).astype(dt)
                                      if parts else np.zeros(0, dt))
    return LevelQuad(level, cx, cy,
                     cat(reg_parts, 0, np.int64), cat(reg_parts, 1), cat(reg_parts, 2),
                     cat(reg_parts, 3), cat(reg_parts, 4, np.int8),
                     cat(arc_parts, 0, np.int64), cat(arc_parts, 1), cat(arc_parts, 2),
                     cat(arc_parts, 3), cat(arc_parts, 4))


def element_data(problem, lifting, q):
    """Element matrices and load vectors ``(Ke, Fe)`` for the cells of ``q``."""
    h = 2.0 ** -q.level
    ncell = len(q.cx)
    xi = q.x / h - q.cx[q.cell]
    eta = q.y / h - q.cy[q.cell]
    coef = problem.coef(q.x, q.y, q.side)
    if np.any(coef <= 0):
        raise AssemblyError(f"{problem.name}: nonpositive coefficient at level {q.level}")
    src = problem.source(q.x, q.y, q.side)
    if lifting is None or lifting.zero:
        gx = gy = np.zeros_like(q.x)
    else:
        gx, gy = lifting.grad(q.x, q.y, q.side)
    Ke, Fe = kernels.element_integrals(q.cell, xi, eta, q.w, coef, src, gx, gy, ncell, h)
    if problem.g_gamma is not None and len(q.arc_cell):
        axi = q.arc_x / h - q.cx[q.arc_cell]
        aeta = q.arc_y / h - q.cy[q.arc_cell]
        zero = np.zeros_like(axi)
        _, Fa = kernels.element_integrals(q.arc_cell, axi, aeta, q.arc_w, zero,
                                          -problem.g_gamma(q.arc_t), zero, zero, ncell, h)
        Fe = Fe + Fa
    return Ke, Fe


def cell_corner_codes(level, cx, cy):
    """Interior node codes of the four cell corners (-1 on the boundary).

    Corner order: (0,0), (1,0), (0,1), (1,1).
    """
    n = 2 ** level
    out = np.empty((len(cx), 4), dtype=np.int64)
    for k, (dx, dy) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
        ix, iy = cx + dx, cy + dy
        ok = (ix >= 1) & (ix <= n - 1) & (iy >= 1) & (iy <= n - 1)
        out[:, k] = np.where(ok, (iy - 1) * (n - 1) + (ix - 1), -1)
    return out


def scatter(level, cx, cy, Ke, Fe, nodes):
    """Global-to-local assembly onto the sorted node codes ``nodes``."""
    codes = cell_corner_codes(level, cx, cy)
    loc = np.searchsorted(nodes, codes)
    loc = np.where(codes >= 0, loc, -1)
    valid = codes >= 0
    if np.any(valid & (nodes[np.minimum(loc, len(nodes) - 1)] != codes)):
        raise AssemblyError("cell corner outside the node patch")
    ii = np.broadcast_to(loc[:, :, None], Ke.shape)
    jj = np.broadcast_to(loc[:, None, :], Ke.shape)
    m = (ii >= 0) & (jj >= 0)
    K = sp.csr_matrix((Ke[m], (ii[m], jj[m])), shape=(len(nodes), len(nodes)))
    load = np.bincount(loc[valid], weights=Fe[valid], minlength=len(nodes))
    return K, load


def assemble_level(problem, lifting, level, cx, cy, nodes, n=5):
    q = level_quadrature(problem.curve, level, cx, cy, n)
    Ke, Fe = element_data(problem, lifting, q)
    return scatter(level, cx, cy, Ke, Fe, nodes)


# --- fine-grid route -----------------------------------------------------------------

@dataclass
class FineStiffness:
    level: int
    matrix: sp.csr_matrix
    load: np.ndarray


def _guard(level, allow_large):
    if level > 2 * MAX_LEVEL - 1 and not allow_large:
        raise MemoryGuardError(f"hat level {level} exceeds the memory guard; "
                               "pass allow_large=True to override")


def assemble_fine(problem, level, n=5, lifting=None, allow_large=False):
    """Stiffness matrix and load of all interior hats of ``level``."""
    if level < 3:
        raise ValueError("fine level must be >= 3")
    if level > 11 and not allow_large:
        raise MemoryGuardError(f"full fine grid at level {level} is too large; "
                               "use assemble_full or allow_large=True")
    lifting = lifting if lifting is not None else build_lifting(problem)
    nside = 2 ** level
    cy, cx = np.divmod(np.arange(nside * nside, dtype=np.int64), nside)
    nodes = np.arange((nside - 1) ** 2, dtype=np.int64)
    K, load = assemble_level(problem, lifting, level, cx, cy, nodes, n)
    return FineStiffness(level, K, load)


@dataclass
class LevelPart:
    """Basis functions represented in the hats of one level, on a node patch."""

    level: int
    rows: slice              # positions in the coefficient vector
    nodes: np.ndarray        # sorted interior node codes (the patch A_m)
    R: sp.csr_matrix         # (n_rows, |nodes|) hat coefficients
    K: Optional[sp.csr_matrix] = None
    load: Optional[np.ndarray] = None
    interp: dict = field(default_factory=dict)   # k -> (|nodes|, |nodes_k|)


@dataclass
class GalerkinSystem:
    matrix: Optional[sp.csr_matrix]
    rhs: np.ndarray
    basis: object
    parts: list
    operator: Optional[spla.LinearOperator] = None

    @property
    def n(self):
        return len(self.rhs)

    def aslinearoperator(self):
        if self.operator is not None:
            return self.operator
        return spla.aslinearoperator(self.matrix)

    def diagonal(self):
        if self.matrix is not None:
            return self.matrix.diagonal()
        return self._diag


def transform_system(fine, basis):
    """``C S C^T`` and ``C b`` with the exact fine-hat expansions ``C``."""
    if isinstance(basis, NodalBasis):
        C = sp.identity((2 ** basis.J - 1) ** 2, format="csr")
        if fine.level != basis.J:
            raise ValueError("nodal basis needs the fine level J")
    else:
        if fine.level != basis.fine_level:
            raise ValueError(f"fine level {fine.level} != basis fine level {basis.fine_level}")
        C = expansion_matrix(basis, fine_level=fine.level)
    G = (C @ fine.matrix @ C.T).tocsr()
    G = ((G + G.T) * 0.5).tocsr()
    nodes = np.arange((2 ** fine.level - 1) ** 2, dtype=np.int64)
    part = LevelPart(fine.level, slice(0, len(basis)), nodes, C.tocsr())
    return GalerkinSystem(G, C @ fine.load, basis, [part])


# --- nodal (FEM) basis ------------------------------------------------------------

@dataclass
class NodalBasis:
    """All unnormalised hats of level ``J`` (the bilinear FEM basis)."""

    J: int

    def __len__(self):
        return (2 ** self.J - 1) ** 2

    @property
    def fine_level(self):
        return self.J

    augmented = False
    J0 = None


# --- multilevel band route --------------------------------------------------------

def _node_xy(level, codes):
    n1 = 2 ** level - 1
    iy, ix = np.divmod(codes, n1)
    return ix + 1, iy + 1


def _patch(level, D):
    """Cells touching the nodes ``D`` and the interior nodes of those cells."""
    n = 2 ** level
    ix, iy = _node_xy(level, D)
    ccx = np.concatenate([ix - 1, ix, ix - 1, ix])
    ccy = np.concatenate([iy - 1, iy - 1, iy, iy])
    code = np.unique(ccy * n + ccx)
    cy, cx = np.divmod(code, n)
    corners = cell_corner_codes(level, cx, cy).ravel()
    nodes = np.unique(corners[corners >= 0])
    return cx, cy, nodes


def interpolation(src_level, src_nodes, dst_level, dst_nodes):
    """Bilinear interpolation from nodal values on ``src_nodes`` to ``dst_nodes``.

    Exact for functions in the span of the level-``src_level`` hats; source
    nodes not listed carry value zero.
    """
    r = 2 ** (dst_level - src_level)
    ns = 2 ** src_level
    ix, iy = _node_xy(dst_level, dst_nodes)
    px, py = ix / r, iy / r
    cx = np.minimum(np.floor(px).astype(np.int64), ns - 1)
    cy = np.minimum(np.floor(py).astype(np.int64), ns - 1)
    fx, fy = px - cx, py - cy
    rows, cols, vals = [], [], []
    row = np.arange(len(dst_nodes))
    for dx, wx in ((0, 1 - fx), (1, fx)):
        for dy, wy in ((0, 1 - fy), (1, fy)):
            sx, sy = cx + dx, cy + dy
            w = wx * wy
            ok = (w != 0) & (sx >= 1) & (sx <= ns - 1) & (sy >= 1) & (sy <= ns - 1)
            code = (sy - 1) * (ns - 1) + (sx - 1)
            pos = np.searchsorted(src_nodes, code)
            pos = np.minimum(pos, len(src_nodes) - 1)
            ok &= src_nodes[pos] == code
            rows.append(row[ok])
            cols.append(pos[ok])
            vals.append(w[ok])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(len(dst_nodes), len(src_nodes)))


def _remap_columns(M, cols):
    M = M.tocsr()
    idx = np.searchsorted(cols, M.indices)
    return sp.csr_matrix((M.data, idx, M.indptr), shape=(M.shape[0], len(cols)))


def _standard_expansion(basis, nrows):
    if isinstance(basis, NodalBasis):
        return sp.identity(nrows, format="csr")
    return expansion_matrix(basis, np.arange(nrows), fine_level=basis.J)


def build_parts(basis):
    """Level decomposition of ``basis`` (without stiffness data)."""
    J = basis.J
    nstd = (2 ** J - 1) ** 2
    parts = [LevelPart(J, slice(0, nstd), np.arange(nstd, dtype=np.int64),
                       _standard_expansion(basis, nstd).tocsr())]
    if isinstance(basis, NodalBasis) or len(basis) == nstd:
        return parts
    lv = basis.level
    for j in range(J, int(lv.max()) + 1):
        # skip the standard block, which carries level J0 (= J when J == J0)
        sel = np.nonzero(lv == j)[0]
        sel = sel[sel >= nstd]
        if len(sel) == 0:
            continue
        R = expansion_matrix(basis, sel, fine_level=j + 1)
        D = np.unique(R.indices).astype(np.int64)
        parts.append(LevelPart(j + 1, slice(int(sel[0]), int(sel[-1]) + 1), D,
                               _remap_columns(R, D)))
    return parts


def assemble_full(problem, basis, n=5, explicit=True, allow_large=False, lifting=None):
    """Galerkin system of ``basis`` by multilevel band assembly.

    ``explicit=False`` skips forming the matrix and returns a system with a
    matrix-free operator (needed for very large reference solves).
    """
    J = basis.J
    if J > MAX_LEVEL and not allow_large:
        raise MemoryGuardError(f"J={J} exceeds the memory guard (J <= {MAX_LEVEL}); "
                               "pass allow_large=True to override")
    lifting = lifting if lifting is not None else build_lifting(problem)
    parts = build_parts(basis)
    # stiffness and load on each patch
    for i, part in enumerate(parts):
        if i == 0:
            nside = 2 ** J
            cy, cx = np.divmod(np.arange(nside * nside, dtype=np.int64), nside)
        else:
            cx, cy, nodes = _patch(part.level, part.nodes)
            # R was indexed by D; re-index onto the full patch
            part.R = _remap_columns(
                sp.csr_matrix((part.R.data, part.nodes[part.R.indices], part.R.indptr),
                              shape=(part.R.shape[0], int(nodes.max()) + 1)), nodes)
            part.nodes = nodes
        part.K, part.load = assemble_level(problem, lifting, part.level, cx, cy, part.nodes, n)
        for k in range(i):
            src = parts[k]
            part.interp[k] = interpolation(src.level, src.nodes, part.level, part.nodes)
    rhs = np.concatenate([p.R @ p.load for p in parts])
    N = len(rhs)
    if explicit:
        G = _explicit_matrix(parts, N)
        return GalerkinSystem(G, rhs, basis, parts)
    op = _MultilevelOperator(parts, N)
    sysm = GalerkinSystem(None, rhs, basis, parts, operator=op)
    sysm._diag = op.diagonal()
    return sysm


def _explicit_matrix(parts, N):
    blocks = [[None] * len(parts) for _ in parts]
    for m, part in enumerate(parts):
        M = (part.K @ part.R.T).tocsc()
        blocks[m][m] = (part.R @ M).tocsr()
        for k in range(m):
            X = parts[k].R @ (part.interp[k].T @ M)
            X = sp.csr_matrix(X)
            blocks[k][m] = X if blocks[k][m] is None else blocks[k][m] + X
            blocks[m][k] = X.T.tocsr() if blocks[m][k] is None else blocks[m][k] + X.T
    for i in range(len(parts)):
        for k in range(len(parts)):
            if blocks[i][k] is None:
                blocks[i][k] = sp.csr_matrix((parts[i].R.shape[0], parts[k].R.shape[0]))
    G = sp.bmat(blocks, format="csr")
    G = ((G + G.T) * 0.5).tocsr()
    G.eliminate_zeros()
    return G


class _MultilevelOperator(spla.LinearOperator):
    def __init__(self, parts, N):
        super().__init__(np.float64, (N, N))
        self.parts = parts

    def _matvec(self, c):
        c = np.asarray(c).ravel()
        parts = self.parts
        vals = [p.R.T @ c[p.rows] for p in parts]
        y = np.zeros_like(c, dtype=float)
        for m, part in enumerate(parts):
            s = vals[m].copy()
            for k in range(m):
                s += part.interp[k] @ vals[k]
            y[part.rows] += part.R @ (part.K @ s)
            if m:
                q = part.K @ vals[m]
                for k in range(m):
                    y[parts[k].rows] += parts[k].R @ (part.interp[k].T @ q)
        return y

    _rmatvec = _matvec

    def diagonal(self):
        d = []
        for p in self.parts:
            RK = (p.R @ p.K).tocsr()
            d.append(np.asarray(RK.multiply(p.R).sum(axis=1)).ravel())
        return np.concatenate(d)


# --- solution evaluation ------------------------------------------------------------

class Solution:
    """``u_J = sum of hat expansions + G`` evaluated pointwise."""

    def __init__(self, levels, lifting, curve):
        self.levels = levels          # list of (level, node codes, nodal values)
        self.lifting = lifting
        self.curve = curve

    @staticmethod
    def _eval_level(level, nodes, vals, x, y, grad=False):
        n = 2 ** level
        h = 1.0 / n
        px, py = x * n, y * n
        cx = np.clip(np.floor(px).astype(np.int64), 0, n - 1)
        cy = np.clip(np.floor(py).astype(np.int64), 0, n - 1)
        fx, fy = px - cx, py - cy
        codes = cell_corner_codes(level, cx, cy)
        pos = np.searchsorted(nodes, codes)
        pos = np.minimum(pos, len(nodes) - 1)
        hit = (codes >= 0) & (nodes[pos] == codes)
        v = np.where(hit, vals[pos], 0.0)
        v00, v10, v01, v11 = v[:, 0], v[:, 1], v[:, 2], v[:, 3]
        if not grad:
            return (v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy)
                    + v01 * (1 - fx) * fy + v11 * fx * fy)
        gx = ((v10 - v00) * (1 - fy) + (v11 - v01) * fy) / h
        gy = ((v01 - v00) * (1 - fx) + (v11 - v10) * fx) / h
        return gx, gy

    def side(self, x, y):
        if self.curve is None:
            return np.ones(np.shape(x), dtype=np.int8)
        return self.curve.side(x, y)

    def hat_value(self, x, y):
        x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
        out = np.zeros(len(x))
        for level, nodes, vals in self.levels:
            out += self._eval_level(level, nodes, vals, x, y)
        return out

    def hat_grad(self, x, y):
        x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
        gx, gy = np.zeros(len(x)), np.zeros(len(x))
        for level, nodes, vals in self.levels:
            a, b = self._eval_level(level, nodes, vals, x, y, grad=True)
            gx += a
            gy += b
        return gx, gy

    def value(self, x, y, side=None):
        x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
        side = self.side(x, y) if side is None else np.broadcast_to(side, x.shape)
        out = self.hat_value(x, y)
        if self.lifting is not None and not self.lifting.zero:
            out = out + self.lifting.value(x, y, side)
        return out

    def grad(self, x, y, side=None):
        x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
        side = self.side(x, y) if side is None else np.broadcast_to(side, x.shape)
        gx, gy = self.hat_grad(x, y)
        if self.lifting is not None and not self.lifting.zero:
            a, b = self.lifting.grad(x, y, side)
            gx, gy = gx + a, gy + b
        return gx, gy


def compose_solution(coeffs, system, lifting=None, curve=None):
    """Field evaluator of ``sum c_eta eta + G``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if len(coeffs) != system.n:
        raise ValueError(f"expected {system.n} coefficients, got {len(coeffs)}")
    levels = [(p.level, p.nodes, p.R.T @ coeffs[p.rows]) for p in system.parts]
    return Solution(levels, lifting, curve)


def export_triplets(matrix, path):
    """Write a sparse matrix as ``row col value`` lines (0-based)."""
    M = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for r, c, v in zip(M.row, M.col, M.data):
            fh.write(f"{r} {c} {v:.17g}\n")

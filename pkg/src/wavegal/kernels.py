"""Hot loops of the assembly, in a numba and a vectorised numpy flavour.

Both flavours compute the same numbers; :mod:`wavegal._accel` decides which
one the public wrappers call.

fan_points
    Quadrature points of the two subregions of a cell cut by a single arc
    (see :mod:`wavegal.quadrature` for the fan construction).  Each region
    is bounded by the arc plus at most five straight boundary segments;
    unused segments have zero length and therefore zero weight.
element_integrals
    Bilinear element matrices ``int a grad N_i . grad N_j`` and load vectors
    ``int (s N_i - a grad G . grad N_i)`` from point data.
"""
from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit

N_PIECES = 6          # arc + five boundary segments
JAC_TOL = 1e-13       # relative to the cell area


# --- fan quadrature ----------------------------------------------------------

def _walk_nodes_np(s_from, s_to):
    s_end = np.where(s_to > s_from, s_to, s_to + 4.0)
    base = np.floor(s_from)
    nodes = [s_from] + [np.minimum(base + k, s_end) for k in (1, 2, 3, 4)] + [s_end]
    return np.stack(nodes, axis=1)          # (nc, 6)


def _boundary_xy_np(x0, y0, h, s):
    s = np.mod(s, 4.0)
    k = np.floor(s).astype(np.int64)
    f = s - k
    # corners (0,0),(1,0),(1,1),(0,1) in ccw order
    cxs = np.array([0.0, 1.0, 1.0, 0.0, 0.0])
    cys = np.array([0.0, 0.0, 1.0, 1.0, 0.0])
    u = cxs[k] + f * (cxs[k + 1] - cxs[k])
    v = cys[k] + f * (cys[k + 1] - cys[k])
    return x0[:, None] + h * u, y0[:, None] + h * v


def _centroid_np(px, py):
    qx, qy = np.roll(px, -1, axis=1), np.roll(py, -1, axis=1)
    cr = px * qy - qx * py
    a = 0.5 * cr.sum(axis=1)
    safe = np.abs(a) > 1e-300
    a_s = np.where(safe, a, 1.0)
    cx = np.where(safe, ((px + qx) * cr).sum(axis=1) / (6 * a_s), px.mean(axis=1))
    cy = np.where(safe, ((py + qy) * cr).sum(axis=1) / (6 * a_s), py.mean(axis=1))
    return cx, cy


def fan_points_numpy(x0, y0, h, ax, ay, adx, ady, sx, sy, s_in, s_out, u, wu):
    nc, n = ax.shape
    X = np.zeros((nc, 2, N_PIECES, n, n))
    Y = np.zeros_like(X)
    W = np.zeros_like(X)
    ok = np.ones(nc, dtype=bool)
    for side in (0, 1):
        if side == 0:       # Omega_minus: arc forward, then boundary s_out -> s_in
            ex, ey, dx, dy = ax, ay, adx, ady
            px, py = sx, sy
            nodes = _walk_nodes_np(s_out, s_in)
        else:               # Omega_plus: arc backward, then boundary s_in -> s_out
            ex, ey, dx, dy = ax[:, ::-1], ay[:, ::-1], -adx[:, ::-1], -ady[:, ::-1]
            px, py = sx[:, ::-1], sy[:, ::-1]
            nodes = _walk_nodes_np(s_in, s_out)
        bx, by = _boundary_xy_np(x0, y0, h, nodes)
        cx, cy = _centroid_np(np.concatenate([px, bx], axis=1) - x0[:, None],
                              np.concatenate([py, by], axis=1) - y0[:, None])
        cx, cy = cx + x0, cy + y0
        pieces = [(ex, ey, dx, dy)]
        for k in range(5):
            ddx = (bx[:, k + 1] - bx[:, k])[:, None]
            ddy = (by[:, k + 1] - by[:, k])[:, None]
            pieces.append((bx[:, k, None] + u[None, :] * ddx, by[:, k, None] + u[None, :] * ddy,
                           np.broadcast_to(ddx, (nc, n)), np.broadcast_to(ddy, (nc, n))))
        for p, (Ex, Ey, Dx, Dy) in enumerate(pieces):
            rx, ry = Ex - cx[:, None], Ey - cy[:, None]
            det = rx * Dy - ry * Dx
            ok &= ~np.any(det < -JAC_TOL * h * h, axis=1)
            X[:, side, p] = cx[:, None, None] + rx[:, :, None] * u[None, None, :]
            Y[:, side, p] = cy[:, None, None] + ry[:, :, None] * u[None, None, :]
            W[:, side, p] = (wu * det)[:, :, None] * (wu * u)[None, None, :]
    shape = (nc, 2, N_PIECES * n * n)
    return X.reshape(shape), Y.reshape(shape), W.reshape(shape), ok


@njit(cache=True)
def _boundary_xy_nb(x0, y0, h, s):
    s = s % 4.0
    k = int(np.floor(s))
    f = s - k
    cxs = (0.0, 1.0, 1.0, 0.0, 0.0)
    cys = (0.0, 0.0, 1.0, 1.0, 0.0)
    return (x0 + h * (cxs[k] + f * (cxs[k + 1] - cxs[k])),
            y0 + h * (cys[k] + f * (cys[k + 1] - cys[k])))


@njit(cache=True)
def fan_points_numba(x0, y0, h, ax, ay, adx, ady, sx, sy, s_in, s_out, u, wu):
    nc, n = ax.shape
    ns = sx.shape[1]
    X = np.zeros((nc, 2, N_PIECES, n, n))
    Y = np.zeros_like(X)
    W = np.zeros_like(X)
    ok = np.ones(nc, dtype=np.bool_)
    bx = np.empty(6)
    by = np.empty(6)
    Ex = np.empty(n)
    Ey = np.empty(n)
    Dx = np.empty(n)
    Dy = np.empty(n)
    for c in range(nc):
        for side in range(2):
            if side == 0:
                sa, sb = s_out[c], s_in[c]
            else:
                sa, sb = s_in[c], s_out[c]
            s_end = sb if sb > sa else sb + 4.0
            base = np.floor(sa)
            for k in range(6):
                if k == 0:
                    s = sa
                elif k == 5:
                    s = s_end
                else:
                    s = min(base + k, s_end)
                bx[k], by[k] = _boundary_xy_nb(x0[c], y0[c], h, s)
            # centroid of the polygon: arc samples then boundary nodes
            m = ns + 6
            area = 0.0
            cxa = 0.0
            cya = 0.0
            for i in range(m):
                j = (i + 1) % m
                if i < ns:
                    pi_x = sx[c, i] if side == 0 else sx[c, ns - 1 - i]
                    pi_y = sy[c, i] if side == 0 else sy[c, ns - 1 - i]
                else:
                    pi_x, pi_y = bx[i - ns], by[i - ns]
                if j < ns:
                    pj_x = sx[c, j] if side == 0 else sx[c, ns - 1 - j]
                    pj_y = sy[c, j] if side == 0 else sy[c, ns - 1 - j]
                else:
                    pj_x, pj_y = bx[j - ns], by[j - ns]
                # cell-local coordinates against cancellation
                pi_x -= x0[c]
                pi_y -= y0[c]
                pj_x -= x0[c]
                pj_y -= y0[c]
                cr = pi_x * pj_y - pj_x * pi_y
                area += cr
                cxa += (pi_x + pj_x) * cr
                cya += (pi_y + pj_y) * cr
            area *= 0.5
            if abs(area) > 1e-300:
                cx = x0[c] + cxa / (6.0 * area)
                cy = y0[c] + cya / (6.0 * area)
            else:
                cx = 0.0
                cy = 0.0
                for i in range(ns):
                    cx += sx[c, i]
                    cy += sy[c, i]
                for i in range(6):
                    cx += bx[i]
                    cy += by[i]
                cx /= m
                cy /= m
            for p in range(N_PIECES):
                for i in range(n):
                    if p == 0:
                        if side == 0:
                            Ex[i], Ey[i], Dx[i], Dy[i] = ax[c, i], ay[c, i], adx[c, i], ady[c, i]
                        else:
                            r = n - 1 - i
                            Ex[i], Ey[i], Dx[i], Dy[i] = ax[c, r], ay[c, r], -adx[c, r], -ady[c, r]
                    else:
                        k = p - 1
                        Dx[i] = bx[k + 1] - bx[k]
                        Dy[i] = by[k + 1] - by[k]
                        Ex[i] = bx[k] + u[i] * Dx[i]
                        Ey[i] = by[k] + u[i] * Dy[i]
                for i in range(n):
                    rx = Ex[i] - cx
                    ry = Ey[i] - cy
                    det = rx * Dy[i] - ry * Dx[i]
                    if det < -JAC_TOL * h * h:
                        ok[c] = False
                    for j in range(n):
                        X[c, side, p, i, j] = cx + rx * u[j]
                        Y[c, side, p, i, j] = cy + ry * u[j]
                        W[c, side, p, i, j] = wu[i] * det * wu[j] * u[j]
    return (X.reshape((nc, 2, N_PIECES * n * n)), Y.reshape((nc, 2, N_PIECES * n * n)),
            W.reshape((nc, 2, N_PIECES * n * n)), ok)


def fan_points(*args):
    """Dispatch to the numba or numpy fan kernel."""
    if _accel.enabled():
        return fan_points_numba(*args)
    return fan_points_numpy(*args)


# --- element integrals --------------------------------------------------------

def element_integrals_numpy(cell, xi, eta, w, coef, src, gx, gy, ncells, h):
    om_x, om_y = 1.0 - xi, 1.0 - eta
    N = np.stack([om_x * om_y, xi * om_y, om_x * eta, xi * eta], axis=1)
    Dx = np.stack([-om_y, om_y, -eta, eta], axis=1) / h
    Dy = np.stack([-om_x, -xi, om_x, xi], axis=1) / h
    wa = w * coef
    Ke = np.empty((ncells, 4, 4))
    Fe = np.empty((ncells, 4))
    for i in range(4):
        for j in range(i, 4):
            v = np.bincount(cell, weights=wa * (Dx[:, i] * Dx[:, j] + Dy[:, i] * Dy[:, j]),
                            minlength=ncells)
            Ke[:, i, j] = v
            Ke[:, j, i] = v
        Fe[:, i] = np.bincount(cell, weights=w * src * N[:, i]
                               - wa * (gx * Dx[:, i] + gy * Dy[:, i]), minlength=ncells)
    return Ke, Fe


@njit(cache=True)
def element_integrals_numba(cell, xi, eta, w, coef, src, gx, gy, ncells, h):
    Ke = np.zeros((ncells, 4, 4))
    Fe = np.zeros((ncells, 4))
    N = np.empty(4)
    Dx = np.empty(4)
    Dy = np.empty(4)
    for p in range(len(cell)):
        c = cell[p]
        a, b = xi[p], eta[p]
        N[0] = (1 - a) * (1 - b)
        N[1] = a * (1 - b)
        N[2] = (1 - a) * b
        N[3] = a * b
        Dx[0] = -(1 - b) / h
        Dx[1] = (1 - b) / h
        Dx[2] = -b / h
        Dx[3] = b / h
        Dy[0] = -(1 - a) / h
        Dy[1] = -a / h
        Dy[2] = (1 - a) / h
        Dy[3] = a / h
        wa = w[p] * coef[p]
        for i in range(4):
            for j in range(4):
                Ke[c, i, j] += wa * (Dx[i] * Dx[j] + Dy[i] * Dy[j])
            Fe[c, i] += w[p] * src[p] * N[i] - wa * (gx[p] * Dx[i] + gy[p] * Dy[i])
    return Ke, Fe


def element_integrals(cell, xi, eta, w, coef, src, gx, gy, ncells, h):
    """Per-cell ``(Ke, Fe)`` from quadrature point data (cell-local ``xi, eta``)."""
    args = (np.ascontiguousarray(cell, dtype=np.int64),) + tuple(
        np.ascontiguousarray(a, dtype=np.float64) for a in (xi, eta, w, coef, src, gx, gy))
    if _accel.enabled():
        return element_integrals_numba(*args, int(ncells), float(h))
    return element_integrals_numpy(*args, int(ncells), float(h))

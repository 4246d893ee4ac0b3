"""Tensor-product wavelet bases on the unit square.

A 2D element at level ``j`` is ``f_{j;k1}(x) g_{j;k2}(y)`` with ``f, g`` from
``Phi_j`` or ``Psi_j``.  With the H^1 scaling ``2^{-j}`` the normalisation
factors cancel and the element equals the *unnormalised* product
``f(2^j x - k1) g(2^j y - k2)``, so expansions in fine hats stay rational.

Sets are stored as parallel integer arrays (level, group, iy, ix) where
``ix``/``iy`` are positions in :func:`wavegal.wavelet1d.enumerate_level`
order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import wavelet1d as w1
from .wavelet1d import Family, InvalidLevelError


class Group(enum.IntEnum):
    PHIPHI = 0
    PHIPSI = 1   # scaling in x, wavelet in y
    PSIPHI = 2   # wavelet in x, scaling in y
    PSIPSI = 3


GROUP_FAMILIES = {
    Group.PHIPHI: (Family.SCALING, Family.SCALING),
    Group.PHIPSI: (Family.SCALING, Family.WAVELET),
    Group.PSIPHI: (Family.WAVELET, Family.SCALING),
    Group.PSIPSI: (Family.WAVELET, Family.WAVELET),
}


@dataclass(frozen=True)
class BasisIndex2D:
    x: w1.BasisIndex1D
    y: w1.BasisIndex1D
    group: Group

    def __post_init__(self):
        if self.x.level != self.y.level:
            raise ValueError("both factors must share one level")
        fx, fy = GROUP_FAMILIES[self.group]
        if self.x.family is not fx or self.y.family is not fy:
            raise ValueError(f"factor families do not match group {self.group.name}")

    @property
    def level(self):
        return self.x.level

    @property
    def h1_scale(self):
        return Fraction(1, 2 ** self.level)


@dataclass
class BasisSet:
    """Ordered collection of 2D basis elements.

    Entries are sorted by level, then group, then y position, then x
    position; :meth:`entry` materialises one :class:`BasisIndex2D`.
    """

    J0: int
    J: int
    level: np.ndarray
    group: np.ndarray
    iy: np.ndarray
    ix: np.ndarray
    augmented: bool = False

    def __len__(self):
        return len(self.level)

    @property
    def fine_level(self):
        """Smallest hat level representing every element exactly."""
        if self.augmented and np.any(self.level >= self.J):
            return int(self.level.max()) + 1
        return self.J

    @property
    def n_standard(self):
        return (2 ** self.J - 1) ** 2

    def level_counts(self):
        """``{level: count}``; the PhiPhi block is reported at level J0."""
        out = {}
        for j in np.unique(self.level):
            out[int(j)] = int(np.sum(self.level == j))
        return out

    def summary_rows(self):
        """Per-level CSV rows ``(level, group, count)``."""
        rows = []
        for j in np.unique(self.level):
            for g in Group:
                c = int(np.sum((self.level == j) & (self.group == g)))
                if c:
                    rows.append((int(j), g.name, c))
        return rows

    def entry(self, i):
        j, g = int(self.level[i]), Group(int(self.group[i]))
        fx, fy = GROUP_FAMILIES[g]
        return BasisIndex2D(w1.enumerate_level(j, fx)[int(self.ix[i])],
                            w1.enumerate_level(j, fy)[int(self.iy[i])], g)

    @property
    def entries(self):
        return [self.entry(i) for i in range(len(self))]

    def block(self, j, g):
        """Slice of the entries at level ``j`` in group ``g``."""
        sel = np.nonzero((self.level == j) & (self.group == g))[0]
        if len(sel) == 0:
            return slice(0, 0)
        return slice(int(sel[0]), int(sel[-1]) + 1)


def _check(J0, J):
    if J0 < w1.J0 or J < J0:
        raise InvalidLevelError(f"need {w1.J0} <= J0 <= J, got J0={J0}, J={J}")


def _group_arrays(j, g):
    fx, fy = GROUP_FAMILIES[g]
    nx, ny = w1.level_size(j, fx), w1.level_size(j, fy)
    iy, ix = np.divmod(np.arange(nx * ny), nx)
    return iy, ix


def build_standard_set(J0, J):
    """``Phi^{2D}_{J0}`` followed by ``Psi^{2D}_j``, ``j = J0..J-1``."""
    _check(J0, J)
    lv, gr, iy, ix = [], [], [], []
    blocks = [(J0, Group.PHIPHI)] + [(j, g) for j in range(J0, J)
                                     for g in (Group.PHIPSI, Group.PSIPHI, Group.PSIPSI)]
    for j, g in blocks:
        a, b = _group_arrays(j, g)
        lv.append(np.full(len(a), j))
        gr.append(np.full(len(a), int(g)))
        iy.append(a)
        ix.append(b)
    cat = lambda xs: np.concatenate(xs).astype(np.int64)
    return BasisSet(J0, J, cat(lv), cat(gr), cat(iy), cat(ix))


def dual_support_box(idx):
    """``(x0, x1, y0, y1)`` of the dual partner's support, as Fractions."""
    dx, dy = w1.dual_support(idx.x), w1.dual_support(idx.y)
    return (dx.lo, dx.hi, dy.lo, dy.hi)


def _select_by_cut_cells(j, g, cells_x, cells_y):
    """Positions (iy, ix) in group ``g`` whose open dual box contains a listed cell."""
    fx, fy = GROUP_FAMILIES[g]
    pairs = []
    for fam, cells in ((fx, cells_x), (fy, cells_y)):
        lo, hi = w1.dual_support_bounds(j, fam)
        # column c -> candidate positions i with lo[i] <= c < hi[i]
        width = hi - lo
        pos = np.repeat(np.arange(len(lo)), width)
        col = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)])
        order = np.argsort(col, kind="stable")
        pairs.append((col[order], pos[order]))
    (colx, posx), (coly, posy) = pairs
    n = 2 ** j
    startx = np.searchsorted(colx, np.arange(n + 1))
    starty = np.searchsorted(coly, np.arange(n + 1))
    sel_x, sel_y = [], []
    cnt_x = startx[cells_x + 1] - startx[cells_x]
    cnt_y = starty[cells_y + 1] - starty[cells_y]
    for c in range(len(cells_x)):
        xs = posx[startx[cells_x[c]]:startx[cells_x[c]] + cnt_x[c]]
        ys = posy[starty[cells_y[c]]:starty[cells_y[c]] + cnt_y[c]]
        sel_x.append(np.tile(xs, len(ys)))
        sel_y.append(np.repeat(ys, len(xs)))
    if not sel_x:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    sx, sy = np.concatenate(sel_x), np.concatenate(sel_y)
    nx = w1.level_size(j, fx)
    code = np.unique(sy * nx + sx)
    return code // nx, code % nx


def augmentation(curve, j):
    """``S_j`` as ``{group: (iy, ix)}``: wavelets whose open dual box meets the curve."""
    from .geometry import trace_level
    cx, cy = trace_level(curve, j).cut_cells()
    return {g: _select_by_cut_cells(j, g, cx, cy)
            for g in (Group.PHIPSI, Group.PSIPHI, Group.PSIPSI)}


def build_augmented_set(J0, J, curve):
    """Standard set plus ``S_j``, ``j = J..2J-2``; ``curve=None`` adds nothing."""
    base = build_standard_set(J0, J)
    if curve is None:
        base.augmented = True
        return base
    lv, gr, iy, ix = [base.level], [base.group], [base.iy], [base.ix]
    for j in range(J, 2 * J - 1):
        for g, (a, b) in augmentation(curve, j).items():
            lv.append(np.full(len(a), j))
            gr.append(np.full(len(a), int(g)))
            iy.append(a)
            ix.append(b)
    cat = lambda xs: np.concatenate(xs).astype(np.int64)
    return BasisSet(J0, J, cat(lv), cat(gr), cat(iy), cat(ix), augmented=True)


# --- expansions -------------------------------------------------------------

@lru_cache(maxsize=None)
def hat_expansion_1d(j, family, fine_level):
    """CSR ``(|level j family|, 2^fine - 1)`` of unnormalised expansions.

    Scaling rows need ``fine_level >= j``, wavelet rows ``fine_level >= j+1``.
    """
    fam = Family(family)
    if fam is Family.SCALING:
        M = sp.identity(2 ** j - 1, format="csr")
        cur = j
    else:
        M = w1.refinement_matrix(j, fam)
        cur = j + 1
    if fine_level < cur:
        raise InvalidLevelError(f"level-{j} {fam.value} not representable at {fine_level}")
    while cur < fine_level:
        M = (M @ w1.prolongation(cur)).tocsr()
        cur += 1
    return M


def expansion_matrix(bset, rows=None, fine_level=None):
    """Sparse ``(len(rows), (2^L - 1)^2)`` matrix of H^1-scaled hat expansions.

    Node ordering is y-major: ``(m_y - 1)(2^L - 1) + (m_x - 1)``.
    """
    L = bset.fine_level if fine_level is None else fine_level
    rows = np.arange(len(bset)) if rows is None else np.asarray(rows)
    blocks, order = [], []
    key = bset.level[rows] * 4 + bset.group[rows]
    for k in np.unique(key):
        j, g = int(k // 4), Group(int(k % 4))
        sel = rows[key == k]
        fx, fy = GROUP_FAMILIES[g]
        Mx = hat_expansion_1d(j, fx.value, L)[bset.ix[sel]]
        My = hat_expansion_1d(j, fy.value, L)[bset.iy[sel]]
        blocks.append(_rowwise_kron(My, Mx))
        order.append(np.nonzero(key == k)[0])
    M = sp.vstack(blocks).tocsr()
    perm = np.empty(len(rows), dtype=np.int64)
    perm[np.concatenate(order)] = np.arange(len(rows))
    return M[perm]


def _rowwise_kron(A, B):
    """Row-wise Kronecker product: row r is ``kron(A[r], B[r])``."""
    A, B = A.tocsr(), B.tocsr()
    nb = B.shape[1]
    rows, cols, vals = [], [], []
    for r in range(A.shape[0]):
        a0, a1 = A.indptr[r], A.indptr[r + 1]
        b0, b1 = B.indptr[r], B.indptr[r + 1]
        ai, av = A.indices[a0:a1], A.data[a0:a1]
        bi, bv = B.indices[b0:b1], B.data[b0:b1]
        cols.append((ai[:, None] * nb + bi[None, :]).ravel())
        vals.append((av[:, None] * bv[None, :]).ravel())
        rows.append(np.full(len(ai) * len(bi), r))
    if not rows:
        return sp.csr_matrix((A.shape[0], A.shape[1] * nb))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(A.shape[0], A.shape[1] * nb))


def expand_to_fine_2d(idx, fine_level, h1_scaled=True):
    """Exact coefficients over the unnormalised fine hats ``phi(2^{J'}x - m_x) phi(2^{J'}y - m_y)``.

    Returns a dict ``(m_x, m_y) -> Fraction``.  With ``h1_scaled`` the
    element is ``2^{-j} eta``; otherwise the normalised ``eta`` itself
    (an extra exact factor ``2^j``).
    """
    ex = w1.expand_to_fine(idx.x, fine_level)
    ey = w1.expand_to_fine(idx.y, fine_level)
    f = Fraction(1) if h1_scaled else Fraction(2 ** idx.level)
    return {(mx, my): f * cx * cy for mx, cx in ex.coeffs.items()
            for my, cy in ey.coeffs.items()}

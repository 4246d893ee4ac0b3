"""Biorthogonal wavelet system on (0, 1) derived from the hat function.

Everything here is exact: filter coefficients, primal functions and
refinement coefficients are :class:`fractions.Fraction` objects.  Floating
point only appears in :meth:`Expansion.values` and :func:`refinement_matrix`,
which feed the assembly code.

Normalisation
-------------
Basis functions follow ``eta_{j;k} = 2^{j/2} eta(2^j x - k)``.  Refinement
rows and expansions are stored *unnormalised*, i.e. for ``eta(2^j x - k)`` in
terms of the hats ``phi(2^{J'} x - m)``; the ``2^{(j-J')/2}`` factor that
converts to normalised coefficients is carried separately in
:attr:`Expansion.sqrt2_exponent`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

J0 = 3

F = Fraction


class InvalidLevelError(ValueError):
    """Raised for scale levels outside the admissible range."""


@dataclass(frozen=True)
class FilterSeq:
    """Finitely supported sequence ``{coeffs}_{[lo, hi]}``."""

    coeffs: tuple
    lo: int

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("empty filter")
        if self.coeffs[0] == 0 or self.coeffs[-1] == 0:
            raise ValueError("filter end coefficients must be nonzero")

    @property
    def hi(self):
        return self.lo + len(self.coeffs) - 1

    @property
    def support(self):
        return (self.lo, self.hi)

    def items(self):
        return zip(range(self.lo, self.hi + 1), self.coeffs)

    def as_dict(self):
        return dict(self.items())

    def replace_coeff(self, k, value):
        """Copy with the coefficient at integer position ``k`` replaced."""
        c = list(self.coeffs)
        c[k - self.lo] = F(value)
        lo = self.lo
        while c and c[0] == 0:
            c.pop(0)
            lo += 1
        while c and c[-1] == 0:
            c.pop()
        if not c:
            return ZERO_FILTER
        return FilterSeq(tuple(c), lo)


class _ZeroFilter(FilterSeq):
    def __post_init__(self):
        pass

    @property
    def hi(self):
        return self.lo - 1

    def items(self):
        return iter(())


ZERO_FILTER = _ZeroFilter((), 0)


@dataclass(frozen=True)
class FilterBank:
    a: FilterSeq
    b: FilterSeq
    a_dual: FilterSeq
    b_dual: FilterSeq

    def replace(self, **kw):
        d = dict(a=self.a, b=self.b, a_dual=self.a_dual, b_dual=self.b_dual)
        d.update(kw)
        return FilterBank(**d)


def _filt(values, lo):
    return FilterSeq(tuple(F(v) for v in values), lo)


def build_filter_bank():
    """The primal/dual lowpass and highpass filters of the hat-function wavelet."""
    return FilterBank(
        a=_filt([F(1, 4), F(1, 2), F(1, 4)], -1),
        b=_filt([F(-1, 8), F(-1, 4), F(3, 4), F(-1, 4), F(-1, 8)], -1),
        a_dual=_filt([F(-1, 8), F(1, 4), F(3, 4), F(1, 4), F(-1, 8)], -2),
        b_dual=_filt([F(-1, 4), F(1, 2), F(-1, 4)], 0),
    )


# Laurent polynomials in z = e^{-i xi}, stored as {exponent: Fraction}.

def _laurent(filt):
    return {k: c for k, c in filt.items() if c != 0}


def _lmul(p, q):
    out = {}
    for i, a in p.items():
        for j, b in q.items():
            out[i + j] = out.get(i + j, 0) + a * b
    return {k: v for k, v in out.items() if v != 0}


def _ladd(p, q):
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0) + v
    return {k: v for k, v in out.items() if v != 0}


def _conj(p):
    # real coefficients: conj(p(xi)) = p(z^{-1})
    return {-k: v for k, v in p.items()}


def _shift_pi(p):
    # xi -> xi + pi  <=>  z -> -z
    return {k: (-v if k % 2 else v) for k, v in p.items()}


def verify_perfect_reconstruction(bank):
    """Check the 2x2 biorthogonal filter-bank identity as Laurent polynomials.

    ``[[ta(xi), ta(xi+pi)], [tb(xi), tb(xi+pi)]] @
    [[conj a(xi), conj b(xi)], [conj a(xi+pi), conj b(xi+pi)]] == I``.
    """
    ta, tb = _laurent(bank.a_dual), _laurent(bank.b_dual)
    a, b = _laurent(bank.a), _laurent(bank.b)
    rows = [(ta, _shift_pi(ta)), (tb, _shift_pi(tb))]
    cols = [(_conj(a), _conj(_shift_pi(a))), (_conj(b), _conj(_shift_pi(b)))]
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            entry = _ladd(_lmul(r0, c0), _lmul(r1, c1))
            expected = {0: F(1)} if i == j else {}
            if entry != expected:
                return False
    return True


@dataclass(frozen=True)
class PiecewiseLinear1D:
    """Continuous piecewise-linear function with breakpoints ``k 2^{-level}``.

    ``values`` maps breakpoint index to the exact function value; the
    function is zero at every breakpoint not listed.
    """

    level: int
    values: dict = field(hash=False)

    @property
    def support(self):
        keys = [k for k, v in self.values.items() if v != 0]
        if not keys:
            return (F(0), F(0))
        s = F(1, 2 ** self.level)
        return ((min(keys) - 1) * s, (max(keys) + 1) * s)

    def __call__(self, x):
        x = F(x)
        t = x * 2 ** self.level
        k = t.numerator // t.denominator
        frac = t - k
        v0 = self.values.get(k, F(0))
        if frac == 0:
            return v0
        v1 = self.values.get(k + 1, F(0))
        return v0 + (v1 - v0) * frac

    def evaluate(self, x):
        """Floating-point evaluation at an array of points."""
        keys = sorted(self.values)
        if not keys:
            return np.zeros_like(np.asarray(x, dtype=float))
        ks = np.arange(keys[0] - 1, keys[-1] + 2)
        vs = np.array([float(self.values.get(int(k), 0)) for k in ks])
        return np.interp(np.asarray(x, dtype=float), ks / 2.0 ** self.level, vs,
                         left=0.0, right=0.0)

    def moment(self, p):
        """Exact ``int x^p f(x) dx``."""
        keys = sorted(self.values)
        if not keys:
            return F(0)
        h = F(1, 2 ** self.level)
        total = F(0)
        for k in range(keys[0] - 1, keys[-1] + 1):
            x0, x1 = k * h, (k + 1) * h
            v0, v1 = self.values.get(k, F(0)), self.values.get(k + 1, F(0))
            # f(x) = v0 + (v1 - v0)(x - x0)/h on [x0, x1]
            slope = (v1 - v0) / h
            c0 = v0 - slope * x0
            total += c0 * (x1 ** (p + 1) - x0 ** (p + 1)) / (p + 1)
            total += slope * (x1 ** (p + 2) - x0 ** (p + 2)) / (p + 2)
        return total

    def integral(self):
        return self.moment(0)

    def dilate(self, j, k):
        """The function ``x -> f(2^j x - k)``."""
        shift = k * 2 ** self.level
        return PiecewiseLinear1D(self.level + j,
                                 {b + shift: v for b, v in self.values.items()})


class Generator(enum.Enum):
    PHI = "phi"
    PSI = "psi"
    PSI_L = "psiL"
    PSI_R = "psiR"


def build_primal(fn):
    """Exact piecewise-linear form of ``phi``, ``psi``, ``psi^L`` or ``psi^R``."""
    fn = Generator(fn)
    if fn is Generator.PHI:
        return PiecewiseLinear1D(0, {0: F(1)})
    if fn is Generator.PSI:
        b = build_filter_bank().b
        # psi = 2 sum_k b(k) phi(2x - k): the value at breakpoint k/2 is 2 b(k)
        return PiecewiseLinear1D(1, {k: 2 * c for k, c in b.items()})
    left = {1: F(1, 2), 3: F(-1), 4: F(1, 2)}
    if fn is Generator.PSI_L:
        return PiecewiseLinear1D(1, left)
    # psi^R(x) = psi^L(1 - x): breakpoint m/2 maps to (2 - m)/2
    return PiecewiseLinear1D(1, {2 - m: v for m, v in left.items()})


class Family(enum.Enum):
    SCALING = "scaling"
    WAVELET = "wavelet"


class Kind(enum.Enum):
    INTERIOR = "interior"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True, order=True)
class BasisIndex1D:
    family: Family
    kind: Kind
    level: int
    translate: int

    def __post_init__(self):
        j, k = self.level, self.translate
        n = 2 ** j
        if self.family is Family.SCALING:
            ok = self.kind is Kind.INTERIOR and 1 <= k <= n - 1
        elif self.kind is Kind.LEFT:
            ok = k == 0
        elif self.kind is Kind.RIGHT:
            ok = k == n - 1
        else:
            ok = 1 <= k <= n - 2
        if not ok:
            raise ValueError(f"invalid 1D index {self}")

    @property
    def generator(self):
        if self.family is Family.SCALING:
            return Generator.PHI
        return {Kind.INTERIOR: Generator.PSI, Kind.LEFT: Generator.PSI_L,
                Kind.RIGHT: Generator.PSI_R}[self.kind]


def _check_level(j):
    if j < J0:
        raise InvalidLevelError(f"level {j} is below the coarsest level J0={J0}")


def enumerate_level(j, family):
    """``Phi_j`` (2^j - 1 hats) or ``Psi_j`` (2^j wavelets) in canonical order."""
    _check_level(j)
    family = Family(family)
    n = 2 ** j
    if family is Family.SCALING:
        return [BasisIndex1D(family, Kind.INTERIOR, j, k) for k in range(1, n)]
    out = [BasisIndex1D(family, Kind.LEFT, j, 0)]
    out += [BasisIndex1D(family, Kind.INTERIOR, j, k) for k in range(1, n - 1)]
    out.append(BasisIndex1D(family, Kind.RIGHT, j, n - 1))
    return out


def level_size(j, family):
    return 2 ** j - 1 if Family(family) is Family.SCALING else 2 ** j


def primal_function(idx):
    """Unnormalised ``eta(2^j x - k)`` as an exact piecewise-linear function."""
    return build_primal(idx.generator).dilate(idx.level, idx.translate)


def refinement_row(idx, bank=None):
    """Coefficients of ``eta(2^j x - k)`` over the hats ``phi(2^{j+1} x - m)``.

    Built from the filters, not from point values, so it can be checked
    against :func:`primal_function`.
    """
    bank = bank or build_filter_bank()
    j, k = idx.level, idx.translate
    if idx.family is Family.SCALING:
        row = {2 * k + n: 2 * c for n, c in bank.a.items()}
    elif idx.kind is Kind.INTERIOR:
        row = {2 * k + n: 2 * c for n, c in bank.b.items()}
    elif idx.kind is Kind.LEFT:
        row = {1: F(1, 2), 3: F(-1), 4: F(1, 2)}
    else:
        top = 2 ** (j + 1)
        row = {top - 1: F(1, 2), top - 3: F(-1), top - 4: F(1, 2)}
    return {m: c for m, c in row.items() if 1 <= m <= 2 ** (j + 1) - 1 and c != 0}


@dataclass(frozen=True)
class Expansion:
    """``eta_{j;k} = 2^{sqrt2_exponent/2} * sum_m coeffs[m] * phi_{J';m}``."""

    level: int
    coeffs: dict = field(hash=False)
    sqrt2_exponent: int = 0

    def values(self, normalized=True):
        """Dense float coefficient vector indexed by ``m - 1``."""
        out = np.zeros(2 ** self.level - 1)
        for m, c in self.coeffs.items():
            out[m - 1] = float(c)
        if normalized:
            out *= 2.0 ** (self.sqrt2_exponent / 2)
        return out


def _apply_scaling_refinement(coeffs, j):
    """Re-express a combination of level-j hats in level-(j+1) hats."""
    a = build_filter_bank().a
    out = {}
    for k, c in coeffs.items():
        for n, an in a.items():
            m = 2 * k + n
            if 1 <= m <= 2 ** (j + 1) - 1:
                out[m] = out.get(m, 0) + 2 * an * c
    return {m: v for m, v in out.items() if v != 0}


def expand_to_fine(idx, fine_level):
    """Exact expansion of basis function ``idx`` over ``Phi_{fine_level}``."""
    j = idx.level
    if idx.family is Family.SCALING:
        if fine_level < j:
            raise InvalidLevelError(f"cannot expand level-{j} hat into level {fine_level}")
        coeffs, cur = {idx.translate: F(1)}, j
    else:
        if fine_level < j + 1:
            raise InvalidLevelError(f"level-{j} wavelet needs fine level >= {j + 1}")
        coeffs, cur = refinement_row(idx), j + 1
    while cur < fine_level:
        coeffs = _apply_scaling_refinement(coeffs, cur)
        cur += 1
    return Expansion(fine_level, coeffs, j - fine_level)


def refinement_matrix(j, family, normalized=False):
    """Sparse float matrix whose rows are the refinement rows of level ``j``.

    Shape ``(|Phi_j| or |Psi_j|, 2^{j+1} - 1)``; rows follow
    :func:`enumerate_level` order.  ``normalized=True`` applies the
    ``2^{-1/2}`` factor between normalised levels ``j`` and ``j+1``.
    """
    idxs = enumerate_level(j, family)
    rows, cols, vals = [], [], []
    for r, idx in enumerate(idxs):
        for m, c in refinement_row(idx).items():
            rows.append(r)
            cols.append(m - 1)
            vals.append(float(c))
    scale = 2.0 ** -0.5 if normalized else 1.0
    return sp.csr_matrix((np.array(vals) * scale, (rows, cols)),
                         shape=(len(idxs), 2 ** (j + 1) - 1))


def prolongation(j):
    """Unnormalised hat refinement ``phi(2^j x - k) = sum P[k, m] phi(2^{j+1} x - m)``.

    Works for any ``j >= 1`` (no J0 restriction), shape ``(2^j-1, 2^{j+1}-1)``.
    """
    n = 2 ** j - 1
    k = np.arange(1, n + 1)
    rows = np.repeat(np.arange(n), 3)
    cols = (np.stack([2 * k - 1, 2 * k, 2 * k + 1], axis=1) - 1).ravel()
    vals = np.tile([0.5, 1.0, 0.5], n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, 2 ** (j + 1) - 1))


# --- dual supports ---------------------------------------------------------

@dataclass(frozen=True)
class DualSupport1D:
    lo: Fraction
    hi: Fraction

    def scaled(self, j, k):
        """Support of ``eta~(2^j x - k)`` intersected with [0, 1]."""
        s = F(1, 2 ** j)
        return DualSupport1D(max(F(0), (self.lo + k) * s), min(F(1), (self.hi + k) * s))

    def as_floats(self):
        return (float(self.lo), float(self.hi))


def _hull(intervals):
    return (min(i[0] for i in intervals), max(i[1] for i in intervals))


def _refinable_support(filt):
    # S = hull(sum_k (S + k)/2) over supp(filt) = [lo, hi]; the affine map
    # x -> (x + c)/2 has fixed point c, so S = [lo, hi].
    return (F(filt.lo), F(filt.hi))


def _self_similar_support(self_scale_terms, terms):
    """Smallest interval ``S`` with ``S >= S/2`` (self terms) and the ``terms``.

    ``terms`` are already-known intervals of the form ``(supp + shift)/2``.
    The self term forces ``0`` into the hull; the remaining terms fix the ends.
    """
    base = _hull(terms)
    if self_scale_terms:
        base = (min(base[0], F(0)), max(base[1], F(0)))
    return base


def _dual_generator_supports():
    bank = build_filter_bank()
    phi = _refinable_support(bank.a_dual)
    half = lambda iv, k: ((iv[0] + k) / 2, (iv[1] + k) / 2)
    psi = _hull([half(phi, n) for n, _ in bank.b_dual.items()])
    # phi~^L refines through phi~^L(2.) and phi~(2. - k), k = 3..6
    phi_l = _self_similar_support(True, [half(phi, k) for k in (3, 4, 5, 6)])
    # psi~^L = M phi~^L(2.) + ... phi~(2. - 3) + ... phi~(2. - 4)
    psi_l = _hull([half(phi_l, 0), half(phi, 3), half(phi, 4)])
    mirror = lambda iv: (1 - iv[1], 1 - iv[0])
    return {
        "phi": phi, "psi": psi, "phiL": phi_l, "psiL": psi_l,
        "phiR": mirror(phi_l), "psiR": mirror(psi_l),
    }


_DUAL = {k: DualSupport1D(*v) for k, v in _dual_generator_supports().items()}


def dual_support(item):
    """Support interval of a dual generator (by tag) or of the dual of ``idx``.

    Tags: ``"phi"``, ``"psi"``, ``"phiL"``, ``"psiL"``, ``"phiR"``, ``"psiR"``
    (unit scale).  For a :class:`BasisIndex1D` the dual partner follows the
    bijection between the primal and dual index sets: the two leftmost
    primal functions of each level pair with the vector-valued left boundary
    dual, the two rightmost with the right one.
    """
    if isinstance(item, str):
        return _DUAL[item]
    j, k, n = item.level, item.translate, 2 ** item.level
    if item.family is Family.SCALING:
        if k <= 2:
            return _DUAL["phiL"].scaled(j, 0)
        if k >= n - 2:
            return _DUAL["phiR"].scaled(j, n - 1)
        return _DUAL["phi"].scaled(j, k)
    if k <= 1:
        return _DUAL["psiL"].scaled(j, 0)
    if k >= n - 2:
        return _DUAL["psiR"].scaled(j, n - 1)
    return _DUAL["psi"].scaled(j, k)


def dual_support_bounds(j, family):
    """Integer bounds ``(lo, hi)`` (units of ``2^{-j}``) of all duals on level j.

    Vectorised companion of :func:`dual_support`; arrays follow
    :func:`enumerate_level` order.
    """
    idxs = enumerate_level(j, family)
    lo = np.empty(len(idxs), dtype=np.int64)
    hi = np.empty(len(idxs), dtype=np.int64)
    scale = 2 ** j
    for r, idx in enumerate(idxs):
        d = dual_support(idx)
        lo[r], hi[r] = int(d.lo * scale), int(d.hi * scale)
    return lo, hi

from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavegal import basis2d as b2
from wavegal import wavelet1d as w1
from wavegal.basis2d import BasisIndex2D, Group
from wavegal.wavelet1d import Family, Kind


@pytest.mark.parametrize("J,n", [(3, 49), (4, 225), (5, 961)])
def test_standard_set_size(J, n):
    bs = b2.build_standard_set(3, J)
    assert len(bs) == n == bs.n_standard
    assert bs.fine_level == J


def test_standard_set_level_counts():
    bs = b2.build_standard_set(3, 5)
    counts = bs.level_counts()
    # 7^2 PhiPhi + 2*7*8 + 8^2 at level 3, 2*15*16 + 16^2 at level 4
    assert counts == {3: 49 + 112 + 64, 4: 480 + 256}


@pytest.mark.parametrize("J,n", [(4, 2345), (5, 10401)])
def test_augmented_size_circle(circle, J, n):
    bs = b2.build_augmented_set(3, J, circle)
    assert len(bs) == n


def test_augmented_contains_standard(circle):
    std = b2.build_standard_set(3, 4)
    aug = b2.build_augmented_set(3, 4, circle)
    m = len(std)
    for name in ("level", "group", "iy", "ix"):
        np.testing.assert_array_equal(getattr(aug, name)[:m], getattr(std, name))
    assert set(np.unique(aug.level[m:])) == {4, 5, 6}
    assert aug.fine_level == 7


def test_augmented_without_curve_is_standard():
    bs = b2.build_augmented_set(3, 4, None)
    assert len(bs) == 225


def test_added_elements_meet_curve(circle):
    aug = b2.build_augmented_set(3, 4, circle)
    t = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    px, py = circle.point(t)
    rng = np.random.default_rng(3)
    for i in rng.choice(np.arange(225, len(aug)), 40, replace=False):
        x0, x1, y0, y1 = (float(v) for v in b2.dual_support_box(aug.entry(i)))
        assert np.any((px > x0) & (px < x1) & (py > y0) & (py < y1))


def _wav(j, k):
    n = 2 ** j
    kind = Kind.LEFT if k == 0 else Kind.RIGHT if k == n - 1 else Kind.INTERIOR
    return w1.BasisIndex1D(Family.WAVELET, kind, j, k)


def _hat(j, k):
    return w1.BasisIndex1D(Family.SCALING, Kind.INTERIOR, j, k)


def test_dual_box_interior_wavelets():
    j, k1, k2 = 4, 5, 9
    box = b2.dual_support_box(BasisIndex2D(_wav(j, k1), _wav(j, k2), Group.PSIPSI))
    s = F(1, 16)
    assert box == ((k1 - 1) * s, (k1 + 2) * s, (k2 - 1) * s, (k2 + 2) * s)


def test_dual_box_mixed():
    j, k1, k2 = 4, 5, 9
    box = b2.dual_support_box(BasisIndex2D(_hat(j, k1), _wav(j, k2), Group.PHIPSI))
    s = F(1, 16)
    assert box == ((k1 - 2) * s, (k1 + 2) * s, (k2 - 1) * s, (k2 + 2) * s)


def test_dual_box_left_boundary():
    box = b2.dual_support_box(BasisIndex2D(_wav(4, 0), _hat(4, 7), Group.PSIPHI))
    assert box[:2] == (0, F(3, 16))


def test_index_level_mismatch_rejected():
    with pytest.raises(ValueError):
        BasisIndex2D(_hat(3, 1), _hat(4, 1), Group.PHIPHI)
    with pytest.raises(ValueError):
        BasisIndex2D(_hat(3, 1), _hat(3, 1), Group.PSIPSI)


def test_hat_product_expands_to_unit_entry():
    idx = BasisIndex2D(_hat(4, 3), _hat(4, 11), Group.PHIPHI)
    assert b2.expand_to_fine_2d(idx, 4) == {(3, 11): 1}


def test_mixed_product_expansion_pointwise():
    j = 4
    idx = BasisIndex2D(_wav(j, 6), _hat(j, 9), Group.PSIPHI)
    coeffs = b2.expand_to_fine_2d(idx, j + 1)
    fx, fy = w1.primal_function(idx.x), w1.primal_function(idx.y)
    n = 2 ** (j + 1)
    for mx in range(1, n):
        for my in range(1, n):
            # the H^1-scaled element is the unnormalised product
            assert coeffs.get((mx, my), 0) == fx(F(mx, n)) * fy(F(my, n))


@pytest.mark.parametrize("j,L", [(3, 5), (4, 6), (3, 6)])
def test_interior_wavelet_product_nnz_bound(j, L):
    idx = BasisIndex2D(_wav(j, 3), _wav(j, 4), Group.PSIPSI)
    nnz = sum(1 for v in b2.expand_to_fine_2d(idx, L).values() if v != 0)
    assert nnz <= (3 * 2 ** (L - j) + 1) ** 2


@settings(max_examples=25, deadline=None)
@given(pos=st.integers(0, 10 ** 6))
def test_expansion_matrix_matches_exact_expansion(circle_aug4, pos):
    bs = circle_aug4
    i = pos % len(bs)
    L = bs.fine_level
    row = b2.expansion_matrix(bs, rows=[i]).toarray().ravel()
    dense = np.zeros_like(row)
    n1 = 2 ** L - 1
    for (mx, my), c in b2.expand_to_fine_2d(bs.entry(i), L).items():
        dense[(my - 1) * n1 + (mx - 1)] = float(c)
    np.testing.assert_allclose(row, dense, rtol=0, atol=1e-15)


def test_standard_transform_is_invertible():
    T = b2.expansion_matrix(b2.build_standard_set(3, 4)).toarray()
    assert T.shape == (225, 225)
    assert np.isfinite(np.linalg.cond(T))

"""The numba and numpy kernels must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from wavegal import _accel, kernels
from wavegal import assembly as asm
from wavegal.problems import registry_get

pytestmark = pytest.mark.skipif(not _accel.AVAILABLE, reason="numba not importable")


@pytest.fixture
def numpy_kernels():
    old = _accel.set_enabled(False)
    yield
    _accel.set_enabled(old)


def _quad(name, level):
    curve = registry_get(name).curve
    n = 2 ** level
    cy, cx = np.divmod(np.arange(n * n), n)
    return asm.level_quadrature(curve, level, cx, cy)


@pytest.mark.parametrize("name,level", [("circle-poisson", 8), ("flower5", 7), ("flower8", 7)])
def test_fan_kernels_agree(name, level):
    old = _accel.set_enabled(True)
    try:
        a = _quad(name, level)
        _accel.set_enabled(False)
        b = _quad(name, level)
    finally:
        _accel.set_enabled(old)
    np.testing.assert_array_equal(a.cell, b.cell)
    np.testing.assert_array_equal(a.side, b.side)
    for f in ("x", "y", "w"):
        np.testing.assert_allclose(getattr(a, f), getattr(b, f), rtol=1e-12, atol=1e-18)


def test_element_kernels_agree():
    rng = np.random.default_rng(7)
    m, nc = 500, 40
    args = (rng.integers(0, nc, m), rng.random(m), rng.random(m), rng.random(m),
            rng.random(m) + 1, rng.standard_normal(m), rng.standard_normal(m),
            rng.standard_normal(m))
    Ka, Fa = kernels.element_integrals_numba(*args, nc, 0.125)
    Kb, Fb = kernels.element_integrals_numpy(*args, nc, 0.125)
    np.testing.assert_allclose(Ka, Kb, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(Fa, Fb, rtol=1e-12, atol=1e-12)


def test_fine_matrix_independent_of_kernel(numpy_kernels):
    p = registry_get("circle-1e6")
    A = asm.assemble_fine(p, 5).matrix
    _accel.set_enabled(True)
    B = asm.assemble_fine(p, 5).matrix
    assert abs(A - B).max() <= 1e-12 * abs(B).max()


@pytest.mark.parametrize("value,expected", [("0", "False"), ("off", "False"), ("1", "True")])
def test_environment_flag(value, expected):
    env = dict(os.environ, WAVEGAL_NUMBA=value)
    out = subprocess.run([sys.executable, "-c", "from wavegal import _accel; print(_accel.enabled())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected

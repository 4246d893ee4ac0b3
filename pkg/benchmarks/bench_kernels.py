"""Compare the numba and numpy kernel paths.

Times cut-cell quadrature (fan kernel), element integration and a full
band assembly for a few examples, best of ``--repeat`` runs after one
warm-up call (which also triggers jit compilation).

    python3 benchmarks/bench_kernels.py --level 8 --repeat 3
"""
import argparse
import time

import numpy as np

from wavegal import _accel, kernels
from wavegal import assembly as asm
from wavegal import basis2d as b2
from wavegal.problems import registry_get


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _cases(level, J):
    for name in ("circle-1e6", "flower5", "flower8"):
        p = registry_get(name)
        n = 2 ** level
        cy, cx = np.divmod(np.arange(n * n), n)
        yield f"quadrature {name} 2^-{level}", lambda p=p, cx=cx, cy=cy: asm.level_quadrature(
            p.curve, level, cx, cy)
    rng = np.random.default_rng(0)
    m, nc = 2_000_000, 40_000
    args = (rng.integers(0, nc, m), rng.random(m), rng.random(m), rng.random(m),
            rng.random(m) + 1, rng.standard_normal(m), rng.standard_normal(m),
            rng.standard_normal(m), nc, 1.0 / 256)
    yield f"element integrals {m} points", lambda: kernels.element_integrals(*args)
    p = registry_get("circle-1e6")
    bs = b2.build_augmented_set(3, J, p.curve)
    yield f"band assembly circle-1e6 J={J}", lambda: asm.assemble_full(p, bs)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=8, help="quadrature grid level")
    ap.add_argument("--J", type=int, default=5, help="level of the band assembly case")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'case':<40} {'numba s':>9} {'numpy s':>9} {'speedup':>8}")
    old = _accel.enabled()
    try:
        for label, fn in _cases(args.level, args.J):
            t = {}
            for flag in (True, False):
                _accel.set_enabled(flag)
                t[flag] = _best(fn, args.repeat)
            print(f"{label:<40} {t[True]:>9.3f} {t[False]:>9.3f} {t[False] / t[True]:>7.1f}x")
    finally:
        _accel.set_enabled(old)


if __name__ == "__main__":
    main()

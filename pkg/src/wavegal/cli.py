"""Command line entry point ``wavegal``.

``wavegal run``            convergence study of one example
``wavegal list-examples``  registered examples
``wavegal verify``         property suite (filters, moments, span, geometry)

Options of ``run`` can also come from a key-value file (``--config``);
flags given on the command line win over the file.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys

from . import __version__
from . import _accel


def _add_run_options(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="key = value file with any of the options below")
    p.add_argument("--example", default=S, help="registered example name")
    p.add_argument("--jmin", type=int, default=S, help="smallest level J (default 4)")
    p.add_argument("--jmax", type=int, default=S, help="largest level J (default 5)")
    p.add_argument("--j0", type=int, default=S, help="coarsest level J0 (default 3)")
    p.add_argument("--quad-order", type=int, default=S, help="Gauss points per direction (default 5)")
    p.add_argument("--error-grid", type=int, default=S,
                   help="errors on the 2^-L cell-centre grid (default 10)")
    p.add_argument("--error-norm", choices=("homogeneous", "exact"), default=S,
                   help="normalise by ||u - G|| (default) or ||u||")
    p.add_argument("--solver", choices=("direct", "gmres", "cg"), default=S)
    p.add_argument("--tol", type=float, default=S, help="iterative tolerance (default 1e-8)")
    p.add_argument("--max-iter", type=int, default=S)
    p.add_argument("--cond", choices=("off", "dense", "iter"), default=S,
                   help="condition numbers (dense falls back to iter above 6000 unknowns)")
    p.add_argument("--scaling", choices=("none", "jacobi"), default=S,
                   help="symmetric diagonal scaling for solves and condition numbers")
    p.add_argument("--bases", default=S, help="comma list of augmented,wavelet,fem")
    p.add_argument("--jref", type=int, default=S,
                   help="reference level (default: exact solution, else 7)")
    p.add_argument("--out", default=S, help="output directory (default results)")
    p.add_argument("--parallel-rows", action="store_true", default=S)
    p.add_argument("--export-matrices", action="store_true", default=S,
                   help="write each Galerkin matrix as 'row col value' triplets")
    p.add_argument("--no-plots", dest="plots", action="store_false", default=S)
    p.add_argument("--allow-large", action="store_true", default=S,
                   help="lift the memory guards")


def build_parser():
    ap = argparse.ArgumentParser(prog="wavegal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--no-numba", action="store_true", help="use the numpy kernels")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("run", help="run a convergence study"))
    sub.add_parser("list-examples", help="list registered examples")
    sub.add_parser("verify", help="run the property suite")
    return ap


def config_from_args(ns):
    from .harness import StudyConfig, load_config
    opts = load_config(ns.config) if getattr(ns, "config", None) else {}
    names = {f.name for f in dataclasses.fields(StudyConfig)}
    opts.update({k: v for k, v in vars(ns).items() if k in names})
    return StudyConfig(**opts)


def _fmt(v, spec=".3e"):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return format(v, spec) if isinstance(v, float) else str(v)


def cmd_run(ns):
    from .harness import run_study
    cfg = config_from_args(ns)
    res = run_study(cfg)
    if res.reference_level is not None:
        print(f"errors against the reference solution at J={res.reference_level}")
    print(f"{'basis':<10} {'J':>2} {'N_J':>7} {'kappa':>10} {'rel_l2':>10} {'order':>6} "
          f"{'rel_h1':>10} {'order':>6}")
    failed = 0
    for r in res.rows:
        print(f"{r.basis:<10} {r.J:>2} {r.NJ:>7} {_fmt(r.kappa):>10} {_fmt(r.rel_l2):>10} "
              f"{_fmt(r.l2_order, '.3f'):>6} {_fmt(r.rel_h1):>10} {_fmt(r.h1_order, '.3f'):>6}"
              + (f"  FAILED: {r.failure}" if r.failure else ""))
        failed += r.failure is not None
    for a in res.artifacts:
        print(f"wrote {a}")
    return 1 if failed else 0


def cmd_list(_):
    from .problems import names, registry_get
    for n in names():
        p = registry_get(n)
        tag = "exact" if p.has_exact else "reference"
        print(f"{n:<16} [{tag}] {p.description}")
    return 0


def cmd_verify(_):
    from .harness import property_suite
    checks = property_suite()
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name}: {c.detail}")
    return 0 if all(c.ok for c in checks) else 1


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(ns.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if ns.no_numba:
        _accel.set_enabled(False)
    handler = {"run": cmd_run, "list-examples": cmd_list, "verify": cmd_verify}[ns.command]
    try:
        return handler(ns)
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"wavegal: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

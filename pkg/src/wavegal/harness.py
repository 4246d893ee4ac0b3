"""Convergence studies: build, assemble, solve, measure, write tables and plots.

A study runs every ``J`` in ``[jmin, jmax]`` for each requested basis:

``augmented``  standard wavelets plus the interface wavelets ``S_j``
``wavelet``    the standard (truncated) wavelet basis
``fem``        the level-``J`` hats

Errors are sampled at the cell centres of the uniform ``2^-error_grid``
grid.  With ``error_norm="homogeneous"`` (default) relative errors are
normalised by ``||u - G||``, the part of the solution left after removing
the lifting ``G``; ``"exact"`` normalises by ``||u||``.  The two coincide
when the jump and boundary data vanish.
"""
from __future__ import annotations

import concurrent.futures as cf
import configparser
import csv
import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import assembly as asm
from . import basis2d as b2
from . import solver as slv
from . import wavelet1d as w1
from .problems import registry_get

log = logging.getLogger(__name__)

BASES = ("augmented", "wavelet", "fem")
CSV_FIELDS = ("J", "NJ", "kappa", "rel_l2", "l2_order", "rel_h1", "h1_order", "basis")
EXPLICIT_MAX_N = 60000      # above this the band operator stays matrix-free


@dataclass
class StudyConfig:
    example: str = "circle-1e6"
    jmin: int = 4
    jmax: int = 5
    j0: int = 3
    quad_order: int = 5
    error_grid: int = 10
    error_norm: str = "homogeneous"
    solver: str = "direct"
    tol: float = 1e-8
    max_iter: Optional[int] = None
    cond: str = "off"
    scaling: str = "none"
    bases: tuple = ("augmented", "fem")
    jref: Optional[int] = None
    out: Optional[str] = "results"
    parallel_rows: bool = False
    export_matrices: bool = False
    plots: bool = True
    allow_large: bool = False

    def __post_init__(self):
        if isinstance(self.bases, str):
            self.bases = tuple(b.strip() for b in self.bases.split(",") if b.strip())
        self.bases = tuple(self.bases)
        bad = [b for b in self.bases if b not in BASES]
        if bad:
            raise ValueError(f"unknown basis {bad}; choose from {BASES}")
        if self.cond not in ("off", "dense", "iter"):
            raise ValueError("cond must be off, dense or iter")
        if self.solver not in ("direct", "gmres", "cg"):
            raise ValueError("solver must be direct, gmres or cg")
        if self.error_norm not in ("homogeneous", "exact"):
            raise ValueError("error_norm must be homogeneous or exact")
        if self.jmax >= self.jmin and self.jmax > asm.MAX_LEVEL and not self.allow_large:
            raise asm.MemoryGuardError(f"jmax={self.jmax} exceeds the guard {asm.MAX_LEVEL}")
        if self.jmax >= self.jmin and self.error_grid < self.jmax + 2:
            raise ValueError(f"error_grid must be >= jmax + 2 = {self.jmax + 2}")

    @property
    def levels(self):
        return list(range(self.jmin, self.jmax + 1))


def _field_types():
    return {f.name: f.type for f in dataclasses.fields(StudyConfig)}


def parse_config_text(text):
    """``key = value`` lines (``#`` comments) into a dict of typed options.

    Keys are the long CLI flag names; dashes and underscores are
    interchangeable.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string("[study]\n" + text)
    types = _field_types()
    sec = cp["study"]
    out = {}
    for raw in sec:
        key = raw.replace("-", "_")
        if key == "config":
            continue
        if key not in types:
            raise ValueError(f"unknown config key {raw!r}")
        t = str(types[key])
        val = sec[raw].strip()
        if "bool" in t:
            out[key] = sec.getboolean(raw)
        elif val.lower() in ("", "none") and "Optional" in t:
            out[key] = None
        elif "int" in t:
            out[key] = int(val)
        elif "float" in t:
            out[key] = float(val)
        elif key == "bases":
            out[key] = tuple(b.strip() for b in val.split(",") if b.strip())
        else:
            out[key] = val
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def dump_config(cfg):
    """Inverse of :func:`parse_config_text`."""
    lines = []
    for f in dataclasses.fields(StudyConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(v)
        lines.append(f"{f.name.replace('_', '-')} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


# --- errors and orders --------------------------------------------------------------

class ExactField:
    """``value``/``grad`` adapter over a problem's exact solution."""

    def __init__(self, problem):
        if not problem.has_exact:
            raise ValueError(f"{problem.name} has no exact solution")
        self.p = problem

    def value(self, x, y, side):
        return self.p.exact_value(x, y, side)

    def grad(self, x, y, side):
        return self.p.exact_grad(x, y, side)


@dataclass
class ErrorReport:
    rel_l2: float
    rel_h1: float
    l2: float          # root-mean-square of u_J - u over the samples
    h1: float
    points: int


def compute_errors(solution, target, grid_level=10, curve=None, shift=None, rows_per_chunk=None):
    """Relative l2 errors of values and gradients on the cell centres of a uniform grid.

    ``target`` provides ``value(x, y, side)`` and ``grad(x, y, side)``.
    ``shift`` (a lifting) is subtracted from the target in the value
    denominator only.  Points on the curve (side 0) are skipped.
    """
    n = 2 ** grid_level
    xs = (np.arange(n) + 0.5) / n
    rows = rows_per_chunk or max(1, (1 << 18) // n)
    e0 = e1 = d0 = d1 = 0.0
    count = 0
    for r0 in range(0, n, rows):
        X, Y = np.meshgrid(xs, xs[r0:r0 + rows])
        X, Y = X.ravel(), Y.ravel()
        if curve is not None:
            side = curve.side(X, Y)
            keep = side != 0
            X, Y, side = X[keep], Y[keep], side[keep]
        else:
            side = np.ones(len(X), dtype=np.int8)
        u = target.value(X, Y, side)
        gx, gy = target.grad(X, Y, side)
        uh = solution.value(X, Y, side)
        hx, hy = solution.grad(X, Y, side)
        ref = u if shift is None or shift.zero else u - shift.value(X, Y, side)
        e0 += float(np.sum((uh - u) ** 2))
        e1 += float(np.sum((hx - gx) ** 2 + (hy - gy) ** 2))
        d0 += float(np.sum(ref ** 2))
        d1 += float(np.sum(gx ** 2 + gy ** 2))
        count += len(X)
    rel = lambda e, d: math.sqrt(e / d) if d > 0 else (0.0 if e == 0 else math.inf)
    return ErrorReport(rel(e0, d0), rel(e1, d1), math.sqrt(e0 / max(count, 1)),
                       math.sqrt(e1 / max(count, 1)), count)


def order(err_prev, err_cur, n_prev, n_cur):
    """``2 log2(e_prev / e_cur) / log2(N_cur / N_prev)``; infinite for a zero error."""
    if min(err_prev, n_prev, n_cur) <= 0 or err_cur < 0:
        raise ValueError("errors and sizes must be positive")
    if err_cur == 0:
        return math.inf
    return 2.0 * math.log2(err_prev / err_cur) / math.log2(n_cur / n_prev)


def coefficient_contrast(problem, grid=1024):
    """``||a||_inf ||1/a||_inf`` from samples on a ``grid x grid`` mesh per side."""
    xs = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(xs, xs)
    X, Y = X.ravel(), Y.ravel()
    side = problem.curve.side(X, Y) if problem.curve is not None else np.ones(len(X))
    a = np.concatenate([problem.a_minus(X[side < 0], Y[side < 0]),
                        problem.a_plus(X[side > 0], Y[side > 0])])
    return float(np.max(np.abs(a)) * np.max(1.0 / np.abs(a)))


# --- one study row -----------------------------------------------------------------

@dataclass
class StudyRow:
    J: int
    NJ: int
    basis: str
    kappa: Optional[float] = None
    rel_l2: float = math.nan
    l2_order: Optional[float] = None
    rel_h1: float = math.nan
    h1_order: Optional[float] = None
    abs_l2: float = math.nan
    abs_h1: float = math.nan
    iterations: Optional[int] = None
    residual: Optional[float] = None
    c_w: Optional[float] = None
    timings: dict = field(default_factory=dict)
    failure: Optional[str] = None

    def csv_row(self):
        fmt = lambda v: "" if v is None else (f"{v:.6e}" if isinstance(v, float) else str(v))
        return [self.J, self.NJ, fmt(self.kappa), fmt(self.rel_l2), fmt(self.l2_order),
                fmt(self.rel_h1), fmt(self.h1_order), self.basis]


def build_basis(kind, j0, J, curve):
    if kind == "augmented":
        return b2.build_augmented_set(j0, J, curve)
    if kind == "wavelet":
        return b2.build_standard_set(j0, J)
    if kind == "fem":
        return asm.NodalBasis(J)
    raise ValueError(f"unknown basis {kind!r}")


def assemble(problem, kind, J, cfg, lifting):
    basis = build_basis(kind, cfg.j0, J, problem.curve)
    explicit = len(basis) <= EXPLICIT_MAX_N or cfg.cond != "off" or cfg.export_matrices
    return asm.assemble_full(problem, basis, n=cfg.quad_order, explicit=explicit,
                             allow_large=cfg.allow_large, lifting=lifting)


def solve_system(system, cfg):
    if system.matrix is None or cfg.solver == "cg":
        return slv.solve_cg(system, tol=min(cfg.tol, 1e-10), max_iter=cfg.max_iter or 20000)
    if cfg.solver == "gmres":
        return slv.solve_gmres(system, tol=cfg.tol, max_iter=cfg.max_iter, scaling=cfg.scaling)
    return slv.solve_direct(system, scaling=cfg.scaling)


def reference_solution(problem, jref, cfg, lifting):
    """Augmented-basis solution at ``jref`` (iterative solve when large)."""
    log.info("%s: reference solve at J=%d", problem.name, jref)
    basis = b2.build_augmented_set(cfg.j0, jref, problem.curve)
    system = asm.assemble_full(problem, basis, n=cfg.quad_order,
                               explicit=len(basis) <= EXPLICIT_MAX_N,
                               allow_large=cfg.allow_large or jref <= asm.MAX_LEVEL,
                               lifting=lifting)
    if system.matrix is not None:
        rep = slv.solve_direct(system)
    else:
        rep = slv.solve_cg(system, tol=1e-12, max_iter=50000)
        if not rep.converged:
            log.warning("reference CG: %s (residual %.2e)", rep.message, rep.residual)
    return asm.compose_solution(rep.coeffs, system, lifting, problem.curve)


def run_row(problem, kind, J, cfg, target, lifting, contrast=None):
    row = StudyRow(J, 0, kind)
    try:
        t0 = time.perf_counter()
        system = assemble(problem, kind, J, cfg, lifting)
        row.NJ = system.n
        t1 = time.perf_counter()
        rep = solve_system(system, cfg)
        row.iterations, row.residual = rep.iterations, rep.residual
        if not rep.converged:
            row.failure = rep.message
        t2 = time.perf_counter()
        if cfg.cond != "off":
            mode = "dense" if cfg.cond == "dense" and system.n <= slv.DENSE_MAX else "iterative"
            cr = slv.condition_number(system, mode=mode, scaling=cfg.scaling)
            row.kappa = cr.kappa
            if contrast:
                row.c_w = cr.kappa / contrast
        t3 = time.perf_counter()
        sol = asm.compose_solution(rep.coeffs, system, lifting, problem.curve)
        shift = lifting if cfg.error_norm == "homogeneous" else None
        er = compute_errors(sol, target, cfg.error_grid, problem.curve, shift=shift)
        row.rel_l2, row.rel_h1, row.abs_l2, row.abs_h1 = er.rel_l2, er.rel_h1, er.l2, er.h1
        t4 = time.perf_counter()
        row.timings = {"assemble": t1 - t0, "solve": t2 - t1, "cond": t3 - t2, "errors": t4 - t3}
        if cfg.export_matrices and cfg.out:
            asm.export_triplets(system.matrix, os.path.join(
                cfg.out, f"{problem.name}_J{J}_{kind}_matrix.txt"))
    except Exception as exc:            # recorded per row, the study goes on
        log.exception("%s J=%d %s failed", problem.name, J, kind)
        row.failure = f"{type(exc).__name__}: {exc}"
    return row


def fill_orders(rows):
    """Orders from consecutive successful rows of the same basis."""
    by_basis = {}
    for r in rows:
        by_basis.setdefault(r.basis, []).append(r)
    for rs in by_basis.values():
        rs.sort(key=lambda r: r.J)
        for prev, cur in zip(rs, rs[1:]):
            ok = (prev.failure is None and cur.failure is None and cur.J == prev.J + 1
                  and prev.NJ > 0 and cur.NJ > prev.NJ)
            if ok and prev.rel_l2 > 0:
                cur.l2_order = order(prev.rel_l2, cur.rel_l2, prev.NJ, cur.NJ)
            if ok and prev.rel_h1 > 0:
                cur.h1_order = order(prev.rel_h1, cur.rel_h1, prev.NJ, cur.NJ)
    return rows


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list
    artifacts: list
    reference_level: Optional[int] = None


def run_study(cfg):
    """Run all rows of ``cfg`` and write the artifacts into ``cfg.out``."""
    problem = registry_get(cfg.example)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
    if not cfg.levels:
        rows = []
        arts = write_outputs(cfg, problem, rows) if cfg.out else []
        return StudyResult(cfg, rows, arts)
    lifting = asm.build_lifting(problem)
    jref = cfg.jref
    if jref is None and not problem.has_exact:
        jref = 7
    if jref is not None:
        target = reference_solution(problem, jref, cfg, lifting)
    else:
        target = ExactField(problem)
    contrast = coefficient_contrast(problem) if cfg.cond != "off" else None
    tasks = [(kind, J) for kind in cfg.bases for J in cfg.levels]
    if cfg.parallel_rows and len(tasks) > 1:
        with cf.ThreadPoolExecutor(max_workers=min(len(tasks), os.cpu_count() or 1)) as ex:
            rows = list(ex.map(lambda t: run_row(problem, t[0], t[1], cfg, target, lifting,
                                                 contrast), tasks))
    else:
        rows = [run_row(problem, k, J, cfg, target, lifting, contrast) for k, J in tasks]
    fill_orders(rows)
    arts = write_outputs(cfg, problem, rows, jref) if cfg.out else []
    return StudyResult(cfg, rows, arts, jref)


# --- outputs -----------------------------------------------------------------------

def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow(r.csv_row())
    return path


def write_outputs(cfg, problem, rows, jref=None):
    base = os.path.join(cfg.out, problem.name)
    arts = [write_csv(rows, base + ".csv")]
    meta = {"example": problem.name, "description": problem.description,
            "reference_level": jref, "config": dump_config(cfg),
            "rows": [dataclasses.asdict(r) for r in rows]}
    with open(base + "_rows.json", "w") as fh:
        json.dump(meta, fh, indent=1, default=str)
    arts.append(base + "_rows.json")
    if cfg.plots and rows:
        for which in ("l2", "h1"):
            p = plot_errors(rows, which, f"{base}_{which}.svg", problem.name)
            if p:
                arts.append(p)
    return arts


def plot_errors(rows, which, path, title=""):
    """Static SVG of ``log2 N_J`` against ``log2`` of the relative error."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    key = "rel_l2" if which == "l2" else "rel_h1"
    okey = "l2_order" if which == "l2" else "h1_order"
    fig, ax = plt.subplots(figsize=(5, 4))
    drawn = False
    for basis in dict.fromkeys(r.basis for r in rows):
        rs = sorted((r for r in rows if r.basis == basis and r.failure is None
                     and np.isfinite(getattr(r, key)) and getattr(r, key) > 0),
                    key=lambda r: r.J)
        if not rs:
            continue
        x = [math.log2(r.NJ) for r in rs]
        y = [math.log2(getattr(r, key)) for r in rs]
        ax.plot(x, y, "o-", label=basis)
        drawn = True
        for r, xi, yi in zip(rs, x, y):
            o = getattr(r, okey)
            if o is not None and np.isfinite(o):
                ax.annotate(f"{o:.2f}", (xi, yi), textcoords="offset points", xytext=(4, 4),
                            fontsize=8)
    if not drawn:
        plt.close(fig)
        return None
    ax.set_xlabel("log2 N_J")
    ax.set_ylabel(f"log2 relative {'L2' if which == 'l2' else 'H1-seminorm'} error")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


# --- property suite -----------------------------------------------------------------

@dataclass
class Check:
    name: str
    ok: bool
    detail: str


def check_filter_bank():
    bank = w1.build_filter_bank()
    ok = w1.verify_perfect_reconstruction(bank)
    broken = 0
    total = 0
    for name in ("a", "b", "a_dual", "b_dual"):
        filt = getattr(bank, name)
        for k in range(filt.lo, filt.hi + 1):
            total += 1
            mutated = bank.replace(**{name: filt.replace_coeff(k, filt.as_dict()[k] + Fraction(1, 100))})
            broken += not w1.verify_perfect_reconstruction(mutated)
    return Check("filter perfect reconstruction", ok and broken == total,
                 f"identity holds: {ok}; {broken}/{total} single-coefficient mutations detected")


def check_moments():
    psi = w1.build_primal("psi")
    L, R = w1.build_primal("psiL"), w1.build_primal("psiR")
    vals = {"int psi": psi.moment(0), "int x psi": psi.moment(1),
            "int psiL": L.moment(0), "int psiR": R.moment(0)}
    ok = all(v == 0 for v in vals.values())
    return Check("vanishing moments", ok, ", ".join(f"{k} = {v}" for k, v in vals.items()))


def check_span(levels=(4, 5)):
    out = []
    rng = np.random.default_rng(1)
    import scipy.sparse.linalg as spla
    for J in levels:
        bs = b2.build_standard_set(w1.J0, J)
        T = b2.expansion_matrix(bs, fine_level=J).tocsc()
        n = (2 ** J - 1) ** 2
        b = rng.standard_normal(n)
        x = spla.spsolve(T, b)
        res = np.linalg.norm(T @ x - b) / np.linalg.norm(b)
        kappa = np.linalg.cond(T.toarray())
        ok = len(bs) == n and T.shape == (n, n) and np.isfinite(kappa) and res < 1e-10
        out.append(Check(f"span J={J}", bool(ok),
                         f"N={len(bs)} (expected {n}), cond={kappa:.3g}, residual={res:.2e}"))
    return out


def geometry_oracles(curve, level=7, n=5):
    """``(|Omega_minus|, |Gamma|)`` from cut-cell quadrature on the level grid."""
    nside = 2 ** level
    cy, cx = np.divmod(np.arange(nside * nside, dtype=np.int64), nside)
    q = asm.level_quadrature(curve, level, cx, cy, n)
    return float(np.sum(q.w[q.side < 0])), float(np.sum(q.arc_w))


def check_geometry(level=7):
    from .problems import registry_get as get
    curve = get("circle-poisson").curve
    area, length = geometry_oracles(curve, level)
    ea, el = abs(area - math.pi / 16), abs(length - math.pi / 2)
    return Check(f"circle oracles at 2^-{level}", ea < 1e-8 and el < 1e-8,
                 f"|area - pi/16| = {ea:.2e}, |length - pi/2| = {el:.2e}")


def property_suite():
    return [check_filter_bank(), check_moments(), *check_span(), check_geometry()]

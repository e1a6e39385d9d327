"""Command-line front end.

Subcommands: ``branch``, ``verify``, ``spectrum``, ``classify``, ``oracle``.
Exit codes: 0 success, 1 verification failure, 2 bad flags or parameter
range, 3 continuation failure (partial files are kept and start with
``# INCOMPLETE``).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

from . import diagnostics, oracles
from .errors import GelfandError, InvalidMeshSpec, LambdaOutOfRange, NonConvergence, StepUnderflow
from .grid import DiskRadial, Rectangle, build_mesh
from .mfsolver import EIGHT_PI, ContinuationConfig, continue_branch, newton_solve
from .spectrum import bessel_zero, constrained_spectrum, disk_spectrum

log = logging.getLogger("gelfand")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_CONTINUATION = 0, 1, 2, 3
INCOMPLETE = "# INCOMPLETE"

DEFAULTS = {
    "nr": 2048,
    "n": 64,
    "lmin": -10.0,
    "lmax": EIGHT_PI - 0.1,
    "step": 0.2,
    "min_step": 1e-5,
    "max_step": 0.25,
    "tol": 1e-10,
    "max_newton": 40,
    "emax": 10.0,
    "guard": 1e-3,
    "out": ".",
    "format": "csv",
    "precision": 12,
    "k": 6,
    "lam": 0.0,
    "cluster_rtol": 1e-6,
}


class UsageError(Exception):
    pass


# -- config file -----------------------------------------------------------


def read_config(path) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_CONVERTERS = {
    "nr": int, "n": int, "k": int, "max_newton": int, "precision": int,
    "lmin": float, "lmax": float, "step": float, "min_step": float, "max_step": float,
    "tol": float, "emax": float, "guard": float, "lam": float, "cluster_rtol": float,
    "out": str, "format": str,
}


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {value!r}")


def _merge(args, file_cfg: Dict[str, str]):
    """Fill unset flags from the config file, then from built-in defaults.

    Returns the set of keys given explicitly by flag or file.
    """
    explicit = {k for k, v in vars(args).items() if v is not None and v is not False}
    for key, value in file_cfg.items():
        if key in ("disk", "uniform"):
            if hasattr(args, key) and not getattr(args, key):
                setattr(args, key, _bool(value))
        elif key == "rect":
            if hasattr(args, "rect") and args.rect is None and not args.disk:
                parts = value.replace(",", " ").split()
                if len(parts) != 2:
                    raise UsageError("config 'rect' needs two side lengths")
                args.rect = [float(p) for p in parts]
        elif key == "rect_sweep":
            if hasattr(args, "rect_sweep") and args.rect_sweep is None:
                args.rect_sweep = value
        elif key in _CONVERTERS:
            if hasattr(args, key) and getattr(args, key) is None:
                try:
                    setattr(args, key, _CONVERTERS[key](value))
                except ValueError:
                    raise UsageError(f"bad value for {key}: {value!r}") from None
        else:
            raise UsageError(f"unknown config key {key!r}")
        explicit.add(key)
    for key, value in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    return explicit


# -- formatting ------------------------------------------------------------


def fmt(x, precision: int = 12) -> str:
    """``%.*e`` with ``precision`` significant digits; integers stay integers."""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.*e" % (precision - 1, x)


def _json_num(x, precision: int):
    if isinstance(x, int) and not isinstance(x, bool):
        return x
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(fmt(x, precision))


def write_csv(path: Path, header, rows, precision: int, incomplete: bool = False):
    lines = []
    if incomplete:
        lines.append(INCOMPLETE)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v, precision) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


# -- domain / config -------------------------------------------------------


def _domain(args):
    if getattr(args, "disk", False):
        if getattr(args, "rect", None) is not None:
            raise UsageError("--disk and --rect are mutually exclusive")
        return DiskRadial(0, args.nr), "disk", {"n_r": args.nr}
    if getattr(args, "rect", None) is not None:
        a, b = args.rect
        return Rectangle(a, b, args.n, args.n), f"rect {a:g} {b:g}", {"n_x": args.n, "n_y": args.n}
    raise UsageError("choose a domain with --disk or --rect A B")


def _continuation(args, lmax=None) -> ContinuationConfig:
    lmax = args.lmax if lmax is None else lmax
    if lmax > EIGHT_PI - args.guard:
        raise LambdaOutOfRange(f"--lmax {lmax:g} exceeds 8 pi - {args.guard:g} = {EIGHT_PI - args.guard:.6f}")
    try:
        return ContinuationConfig(
            lambda_start=min(args.lmin, lmax), lambda_end=lmax, step=args.step, min_step=args.min_step,
            max_step=args.max_step, newton_tol=args.tol, max_newton=args.max_newton, e_max=args.emax,
            ceiling_guard=args.guard,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- branch output -----------------------------------------------------------


PLOT_GP = """\
# gnuplot script: mean field energy diagram and classical bifurcation diagram
set datafile separator ","
set key top right
set multiplot layout 1,2
set xlabel "E"
set ylabel "mu"
set title "mu against the energy E"
plot "diagram.csv" using 1:2 with linespoints pointtype 7 pointsize 0.4 title "mu(E)"
set xlabel "sgn(v) |v|_inf"
set ylabel "mu"
set title "mu against the signed sup norm"
plot "sup_norm.csv" using 1:2 with linespoints pointtype 7 pointsize 0.4 title "mu"
unset multiplot
"""


def write_branch_files(out: Path, branch, precision: int, fmt_json: bool, incomplete: bool = False):
    out.mkdir(parents=True, exist_ok=True)
    pts = branch.points
    write_csv(out / "branch.csv", diagnostics.BranchPoint.CSV_FIELDS, [p.row() for p in pts], precision, incomplete)
    write_csv(out / "diagram.csv", ("E", "mu", "lambda"), [(p.E, p.mu, p.lam) for p in pts], precision, incomplete)
    write_csv(out / "sup_norm.csv", ("signed_sup_v", "mu", "lambda"), [(p.u_sup, p.mu, p.lam) for p in pts],
              precision, incomplete)
    (out / "plot.gp").write_text(PLOT_GP)
    if fmt_json:
        rows = [dict(zip(diagnostics.BranchPoint.CSV_FIELDS, (_json_num(v, precision) for v in p.row()))) for p in pts]
        write_json(out / "branch.json", {"incomplete": incomplete, "points": rows})


def _run_branch(args, mesh):
    cfg = _continuation(args)
    try:
        return continue_branch(mesh, cfg), None
    except StepUnderflow as exc:
        return exc.branch, exc


def cmd_branch(args) -> int:
    spec, _, _ = _domain(args)
    mesh = build_mesh(spec)
    out = Path(args.out)
    branch, failure = _run_branch(args, mesh)
    if failure is not None:
        if branch is not None and len(branch):
            write_branch_files(out, branch, args.precision, args.format == "json", incomplete=True)
        print(f"continuation failed: {failure}", file=sys.stderr)
        return EXIT_CONTINUATION
    write_branch_files(out, branch, args.precision, args.format == "json")
    print(f"{len(branch)} points, lambda in [{branch.lambdas[0]:.6g}, {branch.lambdas[-1]:.6g}], "
          f"stop: {branch.stop_reason}")
    return EXIT_OK


def cmd_verify(args) -> int:
    spec, domain, resolution = _domain(args)
    mesh = build_mesh(spec)
    out = Path(args.out)
    branch, failure = _run_branch(args, mesh)
    if failure is not None:
        if branch is not None and len(branch):
            write_branch_files(out, branch, args.precision, args.format == "json", incomplete=True)
        print(f"continuation failed: {failure}", file=sys.stderr)
        return EXIT_CONTINUATION
    write_branch_files(out, branch, args.precision, args.format == "json")
    rep = diagnostics.verify_branch(branch)
    p = args.precision
    report = {
        "domain": domain,
        "resolution": resolution,
        "lambda_range": [_json_num(branch.lambdas[0], p), _json_num(branch.lambdas[-1], p)],
        "stop_reason": branch.stop_reason,
        "lambda_star": None if rep.lambda_star is None else _json_num(rep.lambda_star, p),
        "E_star": None if rep.E_star is None else _json_num(rep.E_star, p),
        "mu_star": None if rep.mu_star is None else _json_num(rep.mu_star, p),
        "checks": [
            {**c.to_dict(), "residual": _json_num(c.residual, p), "tolerance": _json_num(c.tolerance, p)}
            for c in rep.checks
        ],
        "pass": rep.passed,
    }
    write_json(out / "report.json", report)
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:36s} {fmt(c.residual, 4):>12s}  tol {fmt(c.tolerance, 2)}")
    if rep.lambda_star is not None:
        print(f"lambda_* = {rep.lambda_star:.10g}  E_* = {rep.E_star:.10g}  mu_* = {rep.mu_star:.10g}")
    if not rep.passed:
        print("failing checks: " + ", ".join(rep.failing()), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_spectrum(args) -> int:
    spec, _, _ = _domain(args)
    mesh = build_mesh(spec)
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if args.uniform:
        lam = 0.0
        import numpy as np

        rho = np.full(mesh.size, 1.0 / mesh.area)
    else:
        lam = args.lam
        if lam >= EIGHT_PI:
            raise LambdaOutOfRange(f"--lambda {lam:g} must be < 8 pi")
        state = _solve_at(mesh, lam)
        rho = state.rho
    if mesh.is_disk:
        res = disk_spectrum(mesh, rho, lam, k=args.k, n_max=max(8, args.k), cluster_rtol=args.cluster_rtol)
    else:
        res = constrained_spectrum(mesh, rho, lam, args.k)
        from .spectrum import cluster_tags

        res.clusters = cluster_tags(res.sigmas, args.cluster_rtol)
    header = ["index", "sigma", "mode", "multiplicity", "residual"]
    bessel = mesh.is_disk and args.uniform
    if bessel:
        header.append("bessel_sigma")
    rows = []
    for i, (s, mode, mult, r) in enumerate(zip(res.sigmas, res.modes, res.multiplicities(), res.residuals), 1):
        row = [i, float(s), int(mode), int(mult), float(r)]
        if bessel:
            # radial modes of the constrained problem sit at the zeros of J_1
            order = 1 if mode == 0 else mode
            row.append(math.pi * bessel_zero(order, res.indices[i - 1] + 1) ** 2)
        rows.append(row)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "spectrum.csv", header, rows, args.precision)
    for row in rows:
        print("  ".join(fmt(v, 8) if isinstance(v, float) else str(v) for v in row))
    return EXIT_OK


def _solve_at(mesh, lam):
    """Converged state at ``lam``, reached by continuation from 0."""
    if lam == 0.0:
        return newton_solve(mesh, 0.0)
    cfg = ContinuationConfig(lambda_start=min(lam, 0.0), lambda_end=max(lam, 0.0), e_max=math.inf)
    branch = continue_branch(mesh, cfg, postprocess=lambda m, s: _Dummy())
    return branch.states[0] if lam < 0 else branch.states[-1]


class _Dummy:
    E = 0.0


# -- classify --------------------------------------------------------------


@dataclass(frozen=True)
class _ClassifyJob:
    ratio: float
    spec: object
    cfg: ContinuationConfig
    e_max: Optional[float]


def _classify_one(job: _ClassifyJob):
    mesh = build_mesh(job.spec)
    e_max = job.e_max if job.e_max is not None else 5 * diagnostics.energy_zero(mesh)
    ev = diagnostics.classify_domain(mesh, replace(job.cfg, e_max=e_max))
    return job.ratio, ev


def _sweep_workers(n_jobs: int) -> int:
    env = os.environ.get("GELFAND_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError(f"GELFAND_THREADS must be a positive integer, got {env!r}") from None
        if cap < 1:
            raise UsageError(f"GELFAND_THREADS must be a positive integer, got {env!r}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def cmd_classify(args) -> int:
    lmax = args.lmax if "lmax" in args.explicit else EIGHT_PI - args.guard
    cfg = replace(_continuation(args, lmax=lmax), lambda_start=0.0)
    e_max = args.emax if "emax" in args.explicit else None
    jobs = []
    if args.rect_sweep is not None:
        try:
            ratios = sorted({float(r) for r in args.rect_sweep.split(",") if r.strip()})
        except ValueError:
            raise UsageError(f"bad --rect-sweep list {args.rect_sweep!r}") from None
        if not ratios or any(not (0 < r <= 1) for r in ratios):
            raise UsageError("--rect-sweep ratios must lie in (0, 1]")
        jobs = [_ClassifyJob(r, Rectangle(r, 1.0, args.n, args.n), cfg, e_max) for r in ratios]
    else:
        spec, _, _ = _domain(args)
        ratio = 1.0 if isinstance(spec, DiskRadial) else spec.a / spec.b
        jobs = [_ClassifyJob(ratio, spec, cfg, e_max)]
    workers = _sweep_workers(len(jobs))
    if workers == 1:
        results = [_classify_one(j) for j in jobs]
    else:
        # spawn keeps workers small: a forked worker would inherit the parent's memory
        with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
            results = list(pool.map(_classify_one, jobs))
    results.sort(key=lambda r: r[0])
    rows = [(r, ev.verdict, ev.E_last, ev.lambda_last, ev.growth_exponent) for r, ev in results]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "classify.csv", ("ratio", "verdict", "E_last", "lambda_last", "growth_exponent"), rows,
              args.precision)
    for row in rows:
        print(f"ratio {row[0]:g}: {row[1]}  (E_last {row[2]:.6g}, lambda_last {row[3]:.8g}, growth {row[4]:.4g})")
    verdicts = [r[1] for r in rows]
    for (r0, v0), (r1, v1) in zip(zip([r[0] for r in rows], verdicts), zip([r[0] for r in rows[1:]], verdicts[1:])):
        if v0 != v1:
            print(f"verdict changes between ratio {r0:g} ({v0}) and {r1:g} ({v1})")
    return EXIT_OK


# -- oracle ----------------------------------------------------------------


def cmd_oracle(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ("alpha", "lambda", "mu", "mass_eu", "E", "g", "mean_z")
    rows = oracles.oracle_table()
    write_csv(out / "oracle.csv", header, rows, args.precision)
    print(",".join(header))
    for row in rows:
        print(",".join(fmt(v, args.precision) for v in row))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p, domain=True, branch=True):
    if domain:
        p.add_argument("--disk", action="store_true", default=False, help="unit disk (radial reduction)")
        p.add_argument("--rect", nargs=2, type=float, metavar=("A", "B"), help="rectangle (0,A)x(0,B), A <= B")
        p.add_argument("--nr", type=int, help="radial cells on the disk (default 2048)")
        p.add_argument("--n", type=int, help="cells per side on rectangles (default 64)")
    if branch:
        p.add_argument("--lmin", type=float, help="lower end of the lambda range (default -10)")
        p.add_argument("--lmax", type=float, help="upper end of the lambda range (default 8 pi - 0.1)")
        p.add_argument("--step", type=float, help="initial continuation step (default 0.2)")
        p.add_argument("--min-step", dest="min_step", type=float, help="minimum step (default 1e-5)")
        p.add_argument("--max-step", dest="max_step", type=float, help="maximum step (default 0.25)")
        p.add_argument("--tol", type=float, help="Newton tolerance (default 1e-10)")
        p.add_argument("--max-newton", dest="max_newton", type=int, help="Newton iteration cap (default 40)")
        p.add_argument("--emax", type=float, help="energy cap (default 10; classify: 5 E_0)")
        p.add_argument("--guard", type=float, help="lambda ceiling guard delta (default 1e-3)")
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--format", choices=("csv", "json"), help="also write JSON when 'json' (default csv)")
    p.add_argument("--precision", type=int, help="significant digits in output (default 12)")
    p.add_argument("--config", help="key = value configuration file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gelfand", description="Mean field branch continuation and diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("branch", help="trace the branch and write branch.csv, diagram.csv, plot.gp")
    _add_common(p)
    p = sub.add_parser("verify", help="trace the branch, run the identity suite, write report.json")
    _add_common(p)
    p = sub.add_parser("spectrum", help="constrained spectrum at one lambda or for the uniform density")
    _add_common(p, branch=False)
    p.add_argument("--uniform", action="store_true", default=False, help="uniform density, lambda = 0")
    p.add_argument("--lambda", dest="lam", type=float, help="branch parameter (default 0)")
    p.add_argument("--k", type=int, help="number of eigenvalues (default 6)")
    p.add_argument("--cluster-rtol", dest="cluster_rtol", type=float, help="relative gap for clustering (default 1e-6)")
    p = sub.add_parser("classify", help="first/second kind evidence from the energy growth near 8 pi")
    _add_common(p)
    p.add_argument("--rect-sweep", dest="rect_sweep", help="comma-separated aspect ratios a/b in (0, 1]")
    p = sub.add_parser("oracle", help="closed-form disk values")
    _add_common(p, domain=False, branch=False)
    return parser


COMMANDS = {"branch": cmd_branch, "verify": cmd_verify, "spectrum": cmd_spectrum,
            "classify": cmd_classify, "oracle": cmd_oracle}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        file_cfg = read_config(args.config) if args.config else {}
        args.explicit = _merge(args, file_cfg)
        if args.precision < 1 or args.precision > 17:
            raise UsageError("--precision must be between 1 and 17")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except (UsageError, InvalidMeshSpec, LambdaOutOfRange, OSError) as exc:
        print(f"gelfand: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergence, StepUnderflow) as exc:
        print(f"gelfand: continuation failed: {exc}", file=sys.stderr)
        return EXIT_CONTINUATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

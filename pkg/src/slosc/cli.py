"""Command-line front end.

Commands
--------
solve        locate eigenvalues around the positivity point, emit a
             spectrum table (n, lambda, zero_count, inertia, agreement)
inertia      inertia of the pencil matrix over a lambda grid, or over the
             mesh nodes at a fixed --lambda (restricted form)
conjugate    conjugate points (left and right) at a fixed --lambda
eigencurves  table of the first --n-max eigencurves over a lambda grid
verify       solve + oscillation verification; exit 0 iff every check holds

Exit codes: 0 success, 1 verification failure, 2 problem-file or argument
error, 3 numerical failure.  Output is deterministic: floats are printed
in their shortest round-trip form and headers carry only run parameters.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ProblemError
from .forms import assemble, build_mesh, inertia, pencil_matrix, eigencurve
from .model import load_problem
from .shooting import ShootingConfig, conjugate_points, right_conjugate_points
from .spectrum import (
    SpectrumConfig,
    solve_spectrum,
    verify_oscillation,
)
from ._parallel import parallel_map


@dataclass
class RunConfig:
    """Parsed invocation; mirrors the CLI flags."""

    command: str
    problem: str
    n_max: int = 5
    xi: str = "auto"
    mesh_n: int = 2000
    tol_ode: float = 1e-10
    tol_eig: float = 1e-10
    lambda_min: float = 0.0
    lambda_max: float = 100.0
    lambda_steps: int = 21
    lam: float | None = None
    out: str | None = None
    fmt: str = "csv"
    eigenfunctions: str | None = None


def fmt_float(v: float) -> str:
    """Shortest decimal that round-trips; reproducible across runs."""
    return repr(float(v))


def _open_out(config: RunConfig):
    if config.out in (None, "-"):
        return sys.stdout, False
    return open(config.out, "w", encoding="utf-8"), True


def _emit(config: RunConfig, header_lines, columns, rows) -> None:
    fh, close = _open_out(config)
    try:
        if config.fmt == "csv":
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
        else:
            for line in header_lines:
                fh.write(line + "\n")
            widths = [max(len(c), *(len(r[i]) for r in rows), 1)
                      if rows else len(c) for i, c in enumerate(columns)]
            fh.write("  ".join(c.ljust(w)
                               for c, w in zip(columns, widths)) + "\n")
            for row in rows:
                fh.write("  ".join(v.ljust(w)
                                   for v, w in zip(row, widths)) + "\n")
    finally:
        if close:
            fh.close()


def _xi_value(config: RunConfig):
    if config.xi == "auto":
        return "auto"
    try:
        return float(config.xi)
    except ValueError:
        raise ProblemError(f"--xi must be a real number or 'auto', "
                           f"got {config.xi!r}")


def _configs(config: RunConfig):
    spec_cfg = SpectrumConfig(mesh_n=config.mesh_n,
                              refine_rtol=config.tol_eig)
    shoot_cfg = ShootingConfig(rtol=config.tol_ode)
    return spec_cfg, shoot_cfg


def _lambda_grid(config: RunConfig) -> np.ndarray:
    if config.lambda_steps < 2:
        raise ProblemError("--lambda-steps must be at least 2")
    return np.linspace(config.lambda_min, config.lambda_max,
                       config.lambda_steps)


def _cmd_solve(problem, config: RunConfig) -> int:
    spec_cfg, shoot_cfg = _configs(config)
    report = solve_spectrum(problem, config.n_max, xi=_xi_value(config),
                            config=spec_cfg, shoot_config=shoot_cfg)
    header = [
        f"problem = {config.problem}",
        f"xi = {fmt_float(report.xi)}",
        f"mesh_n = {report.mesh_n}",
        f"side_status = +:{report.side_status.get(1, 'n/a')} "
        f"-:{report.side_status.get(-1, 'n/a')}",
    ]
    rows = [
        [str(r.index), fmt_float(r.lam), str(r.zero_count),
         str(r.inertia_at_lambda), str(bool(r.agreement)).lower()]
        for r in report.records
    ]
    _emit(config, header,
          ["n", "lambda", "zero_count", "inertia", "method_agreement"], rows)
    if config.eigenfunctions:
        import os

        os.makedirs(config.eigenfunctions, exist_ok=True)
        for r in report.records:
            tag = f"p{r.index}" if r.index > 0 else f"m{-r.index}"
            path = os.path.join(config.eigenfunctions,
                                f"eigenfunction_{tag}.csv")
            y, qd = r.eigenfunction.normalized_pair()
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("t,y,quasi_derivative\n")
                for t, a, b in zip(r.eigenfunction.t, y, qd):
                    fh.write(f"{fmt_float(t)},{fmt_float(a)},"
                             f"{fmt_float(b)}\n")
    return 0


def _cmd_inertia(problem, config: RunConfig) -> int:
    spec_cfg, _ = _configs(config)
    mesh = build_mesh(problem, config.mesh_n)
    forms = assemble(problem, mesh)
    if config.lam is not None:
        from .forms import restricted_inertia

        xs = [x for x in mesh.nodes if x > 0.0]
        vals = parallel_map(
            lambda x: restricted_inertia(problem, mesh, config.lam, x,
                                         forms=forms,
                                         tol=spec_cfg.inertia_tol), xs)
        rows = [[fmt_float(x), str(v.negative), str(v.zero),
                 str(v.positive)] for x, v in zip(xs, vals)]
        header = [f"problem = {config.problem}",
                  f"lambda = {fmt_float(config.lam)}",
                  f"mesh_n = {config.mesh_n}", "scan = x"]
        _emit(config, header, ["x", "negative", "zero", "positive"], rows)
        return 0
    grid = _lambda_grid(config)
    vals = parallel_map(
        lambda lam: inertia(pencil_matrix(forms, lam),
                            spec_cfg.inertia_tol), grid)
    rows = [[fmt_float(lam), str(v.negative), str(v.zero), str(v.positive)]
            for lam, v in zip(grid, vals)]
    header = [f"problem = {config.problem}", f"mesh_n = {config.mesh_n}",
              "scan = lambda"]
    _emit(config, header, ["lambda", "negative", "zero", "positive"], rows)
    return 0


def _cmd_conjugate(problem, config: RunConfig) -> int:
    if config.lam is None:
        raise ProblemError("conjugate requires --lambda")
    _, shoot_cfg = _configs(config)
    left = conjugate_points(problem, config.lam, shoot_cfg)
    right = right_conjugate_points(problem, config.lam, shoot_cfg)
    rows = [[fmt_float(x), "left"] for x in left]
    rows += [[fmt_float(x), "right"] for x in right]
    header = [f"problem = {config.problem}",
              f"lambda = {fmt_float(config.lam)}"]
    _emit(config, header, ["x", "side"], rows)
    return 0


def _cmd_eigencurves(problem, config: RunConfig) -> int:
    spec_cfg, _ = _configs(config)
    mesh = build_mesh(problem, config.mesh_n)
    forms = assemble(problem, mesh)
    grid = _lambda_grid(config)
    names = [f"Lambda_{n}" for n in range(1, config.n_max + 1)]

    def row(lam):
        return [eigencurve(problem, mesh, lam, n, forms=forms)
                for n in range(1, config.n_max + 1)]

    table = parallel_map(row, grid)
    rows = [[fmt_float(lam)] + [fmt_float(v) for v in vals]
            for lam, vals in zip(grid, table)]
    header = [f"problem = {config.problem}", f"mesh_n = {config.mesh_n}"]
    _emit(config, header, ["lambda"] + names, rows)
    return 0


def _cmd_verify(problem, config: RunConfig) -> int:
    spec_cfg, shoot_cfg = _configs(config)
    report = solve_spectrum(problem, config.n_max, xi=_xi_value(config),
                            config=spec_cfg, shoot_config=shoot_cfg)
    ver = verify_oscillation(problem, report)
    header = [
        f"problem = {config.problem}",
        f"xi = {fmt_float(report.xi)}",
        f"mesh_n = {report.mesh_n}",
        f"records = {len(report.records)}",
        f"result = {'PASS' if ver.passed else 'FAIL'}",
    ]
    rows = [[c.name, str(c.index), "pass" if c.passed else "FAIL", c.detail]
            for c in ver.checks]
    _emit(config, header, ["check", "n", "status", "detail"], rows)
    return 0 if ver.passed else 1


_COMMANDS = {
    "solve": _cmd_solve,
    "inertia": _cmd_inertia,
    "conjugate": _cmd_conjugate,
    "eigencurves": _cmd_eigencurves,
    "verify": _cmd_verify,
}


def run(config: RunConfig) -> int:
    """Execute one parsed invocation; returns the process exit code."""
    if config.command not in _COMMANDS:
        print(f"error: unknown command {config.command!r}", file=sys.stderr)
        return 2
    if config.n_max < 1:
        print("error: --n-max must be >= 1", file=sys.stderr)
        return 2
    if config.mesh_n < 8:
        print("error: --mesh-n must be >= 8", file=sys.stderr)
        return 2
    try:
        problem = load_problem(config.problem)
    except (ProblemError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[config.command](problem, config)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="slosc",
        description="Eigenvalues, zero counts, conjugate points, and "
                    "oscillation verification for -(py')' + (q - lambda r)y "
                    "= 0 with measure coefficients")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("problem", help="problem JSON file")
    ap.add_argument("--n-max", type=int, default=5)
    ap.add_argument("--xi", default="auto",
                    help="positivity point (real) or 'auto' (default)")
    ap.add_argument("--mesh-n", type=int, default=2000)
    ap.add_argument("--tol-ode", type=float, default=1e-10)
    ap.add_argument("--tol-eig", type=float, default=1e-10)
    ap.add_argument("--lambda-min", type=float, default=0.0)
    ap.add_argument("--lambda-max", type=float, default=100.0)
    ap.add_argument("--lambda-steps", type=int, default=21)
    ap.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="single spectral parameter (conjugate, x-scan)")
    ap.add_argument("--out", default=None, help="output path (default stdout)")
    ap.add_argument("--format", dest="fmt", choices=("csv", "text"),
                    default="csv")
    ap.add_argument("--eigenfunctions", default=None,
                    help="directory for per-record eigenfunction CSVs")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = RunConfig(**vars(args))
    return run(config)


if __name__ == "__main__":
    sys.exit(main())

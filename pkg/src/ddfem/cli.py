"""Command-line driver: ``run`` one level, ``study`` a refinement sequence, ``plot`` a field.

Settings come from command-line flags, then an optional ``key = value``
config file, then the defaults (M=30, delta=1e-6, levels 2..64).

Exit status is 0 on success, 1 on a usage error and 2 when a solve fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import (
    DEFAULT_LEVELS,
    ErrorReport,
    compute_errors,
    get_case,
    run_study,
)
from .dd import SolverConfig, fixed_point_solve
from .linalg import LinearSolverError
from .mesh import DIAGONALS, Mesh, generate_uniform_mesh
from .spaces import ASSEMBLY_DEGREE, ERROR_DEGREE, MAX_QUADRATURE_DEGREE

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2

ERROR_CSV_HEADER = [
    "case", "epsilon", "sigma", "n", "l2", "h1_semi", "energy", "star",
    "dissipation", "iters", "converged",
]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    case: str = "example1"
    epsilon: float = 1e-6
    sigma: float = 1.0
    n: int = 16
    levels: tuple = DEFAULT_LEVELS
    diagonal: str = "up"
    assembly_degree: int = ASSEMBLY_DEGREE
    error_degree: int = ERROR_DEGREE
    max_iter: int = 30
    tol: float = 1e-6
    freeze: str = "element"
    output: Optional[str] = None
    format: str = "csv"
    plot: bool = False
    trace: Optional[str] = None
    workers: int = 1

    def validate(self) -> "RunConfig":
        try:
            get_case(self.case)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise UsageError(f"--epsilon must be positive, got {self.epsilon}")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise UsageError(f"--sigma must be nonnegative, got {self.sigma}")
        if self.n < 1:
            raise UsageError(f"--n must be a positive integer, got {self.n}")
        levels = list(self.levels)
        if not levels or any(k < 1 or k & (k - 1) for k in levels) or levels != sorted(set(levels)):
            raise UsageError(f"--levels must be strictly increasing powers of two, got {levels}")
        if self.diagonal not in DIAGONALS:
            raise UsageError(f"--diagonal must be one of {DIAGONALS}")
        for name in ("assembly_degree", "error_degree"):
            if not 1 <= getattr(self, name) <= MAX_QUADRATURE_DEGREE:
                raise UsageError(f"--{name.replace('_', '-')} must lie in 1..{MAX_QUADRATURE_DEGREE}")
        if self.max_iter < 1:
            raise UsageError("--max-iter must be at least 1")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.freeze not in ("element", "global", "off"):
            raise UsageError("--freeze must be element, global or off")
        if self.format not in ("csv", "markdown"):
            raise UsageError("--format must be csv or markdown")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")
        return self

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            max_iter=self.max_iter, tol=self.tol, freeze=self.freeze, degree=self.assembly_degree
        )


# -- config file ---------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_levels(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(",", " ").split())


_CONVERTERS = {
    "case": str,
    "epsilon": float,
    "sigma": float,
    "n": int,
    "levels": _parse_levels,
    "diagonal": str,
    "assembly_degree": int,
    "error_degree": int,
    "max_iter": int,
    "tol": float,
    "freeze": str,
    "output": str,
    "format": str,
    "plot": _parse_bool,
    "trace": str,
    "workers": int,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes and underscores are interchangeable."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return values


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="key = value file; flags override it")
    p.add_argument("--case", default=S, help="example1 or example2")
    p.add_argument("--epsilon", type=float, default=S, help="diffusivity (default 1e-6)")
    p.add_argument("--sigma", type=float, default=S, help="reaction coefficient (default 1)")
    p.add_argument("--diagonal", default=S, help="mesh diagonal orientation: up or down")
    p.add_argument("--assembly-degree", type=int, default=S, dest="assembly_degree")
    p.add_argument("--error-degree", type=int, default=S, dest="error_degree")
    p.add_argument("--max-iter", type=int, default=S, dest="max_iter", help="solve cap M (default 30)")
    p.add_argument("--tol", type=float, default=S, help="stopping tolerance delta (default 1e-6)")
    p.add_argument("--freeze", default=S, help="freezing test: element (default), global or off")
    p.add_argument("--output", "-o", default=S, help="output file (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ddfem", description="Dynamic-diffusion FEM for convection-diffusion-reaction.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    S = argparse.SUPPRESS

    run = sub.add_parser("run", help="solve one case on one mesh")
    _add_common(run)
    run.add_argument("--n", type=int, default=S, help="cells per side")
    run.add_argument("--trace", default=S, help="iteration trace CSV path")
    run.add_argument("--plot", action="store_const", const=True, default=S, help="also write an SVG of u_h")

    study = sub.add_parser("study", help="refinement study with convergence rates")
    _add_common(study)
    study.add_argument("--levels", type=_parse_levels, default=S, help="e.g. '2,4,8,16,32,64'")
    study.add_argument("--format", default=S, help="csv (default) or markdown")
    study.add_argument("--workers", type=int, default=S, help="levels solved in parallel")

    plot = sub.add_parser("plot", help="solve one case and write an SVG of u_h")
    _add_common(plot)
    plot.add_argument("--n", type=int, default=S, help="cells per side")
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file and explicit flags (in increasing priority)."""
    merged = {}
    if getattr(ns, "config", None):
        try:
            merged.update(read_config_file(ns.config))
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
    merged.update({k: v for k, v in vars(ns).items() if k not in ("command", "config")})
    known = {f.name for f in fields(RunConfig)}
    try:
        cfg = RunConfig(**{k: v for k, v in merged.items() if k in known})
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    cfg.levels = tuple(cfg.levels)
    return cfg.validate()


# -- outputs -------------------------------------------------------------------


def error_row_csv(cfg: RunConfig, errors: ErrorReport, iterations: int, converged: bool) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ERROR_CSV_HEADER)
    writer.writerow([
        cfg.case, repr(float(cfg.epsilon)), repr(float(cfg.sigma)), cfg.n,
        repr(errors.l2), repr(errors.h1_semi), repr(errors.energy), repr(errors.star),
        repr(errors.dissipation), iterations, "true" if converged else "false",
    ])
    return out.getvalue()


def read_error_csv(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ERROR_CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = []
    for cells in reader:
        row = dict(zip(header, cells))
        for key in ("epsilon", "sigma", "l2", "h1_semi", "energy", "star", "dissipation"):
            row[key] = float(row[key])
        row["n"] = int(row["n"])
        row["iters"] = int(row["iters"])
        row["converged"] = row["converged"] == "true"
        rows.append(row)
    return rows


# Value -> color ramp: dark blue, cyan, yellow, dark red at 0, 1/3, 2/3, 1.
RAMP = ((0.0, (49, 54, 149)), (1 / 3, (116, 173, 209)), (2 / 3, (254, 224, 144)), (1.0, (165, 0, 38)))


def ramp_color(t: float) -> str:
    t = min(1.0, max(0.0, float(t)))
    for (t0, c0), (t1, c1) in zip(RAMP, RAMP[1:]):
        if t <= t1:
            s = (t - t0) / (t1 - t0)
            rgb = [round(a + s * (b - a)) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*RAMP[-1][1])


def render_svg(mesh: Mesh, values: np.ndarray, title: str = "", size: int = 480) -> str:
    """Flat-shaded triangles colored by the mean vertex value, with a color bar."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    margin, bar = 20, 60
    width, height = size + 2 * margin + bar, size + 2 * margin + 20
    v = mesh.vertices
    px = margin + v[:, 0] * size
    py = margin + 20 + (1.0 - v[:, 1]) * size
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        f'<text x="{margin}" y="14" font-family="sans-serif" font-size="12">{title}</text>',
    ]
    for tri in mesh.triangles:
        t = (values[tri].mean() - lo) / span
        pts = " ".join(f"{px[i]:.3f},{py[i]:.3f}" for i in tri)
        color = ramp_color(t)
        lines.append(f'<polygon points="{pts}" fill="{color}" stroke="{color}" stroke-width="0.3"/>')
    x0, y0, steps = margin + size + 15, margin + 20, 64
    for k in range(steps):
        y = y0 + size * k / steps
        lines.append(
            f'<rect x="{x0}" y="{y:.3f}" width="15" height="{size / steps + 0.5:.3f}" '
            f'fill="{ramp_color(1.0 - (k + 0.5) / steps)}"/>'
        )
    lines.append(f'<text x="{x0}" y="{y0 - 4}" font-family="sans-serif" font-size="10">{hi:.4g}</text>')
    lines.append(
        f'<text x="{x0}" y="{y0 + size + 12}" font-family="sans-serif" font-size="10">{lo:.4g}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _solve(cfg: RunConfig):
    problem = get_case(cfg.case).problem(cfg.epsilon, cfg.sigma)
    mesh = generate_uniform_mesh(cfg.n, cfg.diagonal)
    u, report = fixed_point_solve(problem, mesh, cfg.solver_config())
    return problem, mesh, u, report


def _plot_title(cfg: RunConfig) -> str:
    return f"{cfg.case}  eps={cfg.epsilon:g}  sigma={cfg.sigma:g}  {cfg.n}x{cfg.n}  (coarse-scale u_h)"


# -- commands ------------------------------------------------------------------


def cmd_run(cfg: RunConfig) -> int:
    try:
        problem, mesh, u, report = _solve(cfg)
    except (LinearSolverError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    errors = compute_errors(problem, mesh, u, report.coefficients.xi, cfg.error_degree)
    _write(error_row_csv(cfg, errors, report.iterations, report.converged), cfg.output)
    trace = cfg.trace
    if trace is None and cfg.output is not None:
        trace = str(Path(cfg.output).with_suffix(".trace.csv"))
    if trace is not None:
        Path(trace).write_text(report.trace_csv())
    if cfg.plot:
        base = Path(cfg.output) if cfg.output else Path(f"{cfg.case}_n{cfg.n}.csv")
        base.with_suffix(".svg").write_text(render_svg(mesh, u.nodal, _plot_title(cfg)))
    return EXIT_OK


def cmd_plot(cfg: RunConfig) -> int:
    try:
        _, mesh, u, _ = _solve(cfg)
    except (LinearSolverError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    path = cfg.output or f"{cfg.case}_n{cfg.n}.svg"
    Path(path).write_text(render_svg(mesh, u.nodal, _plot_title(cfg)))
    return EXIT_OK


def cmd_study(cfg: RunConfig) -> int:
    results = []
    table = run_study(
        cfg.case,
        cfg.epsilon,
        cfg.sigma,
        cfg.levels,
        cfg.solver_config(),
        cfg.diagonal,
        cfg.error_degree,
        workers=cfg.workers,
        results=results,
    )
    text = table.to_csv() if cfg.format == "csv" else table.to_markdown()
    if cfg.format == "markdown" and cfg.case == "example2" and cfg.epsilon <= 1e-3:
        text += "\nLayer integrals are under-resolved by the fixed error quadrature on coarse meshes.\n"
    _write(text, cfg.output)
    summary = sys.stderr if cfg.output is None else sys.stdout
    failed = False
    for r in results:
        if r.errors is None:
            failed = True
            print(f"level {r.n}: FAILED {r.error}", file=summary)
        else:
            e = r.errors
            status = "converged" if r.converged else "not converged"
            print(
                f"level {r.n}: l2={e.l2:.4e} h1={e.h1_semi:.4e} star={e.star:.4e} "
                f"iters={r.iterations} {status}",
                file=summary,
            )
    return EXIT_SOLVER if failed else EXIT_OK


COMMANDS = {"run": cmd_run, "study": cmd_study, "plot": cmd_plot}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ddfem {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return COMMANDS[ns.command](cfg)


if __name__ == "__main__":
    sys.exit(main())

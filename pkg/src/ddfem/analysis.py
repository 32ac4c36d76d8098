"""Error norms, convergence-rate tables and the two manufactured benchmarks."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import ProblemSpec, constant, constant_vector, local_stiffness
from .dd import SolverConfig, fixed_point_solve
from .linalg import LinearSolverError
from .mesh import Mesh, generate_uniform_mesh, mesh_geometry
from .spaces import ERROR_DEGREE, FieldCoefficients, field_at_points, physical_points, quadrature_rule


@dataclass(frozen=True)
class ErrorReport:
    l2: float
    h1_semi: float
    energy: float
    star: float
    dissipation: float


def compute_errors(
    problem: ProblemSpec,
    mesh: Mesh,
    u_hb: FieldCoefficients,
    xi=None,
    degree: int = ERROR_DEGREE,
) -> ErrorReport:
    """Errors of ``u_hb`` against the manufactured solution.

    The star norm adds ``sum_T xi_T ||grad u_hb||_T^2`` to the squared energy
    norm ``eps |e|_1^2 + gamma ||e||_0^2``. ``xi=None`` means no dissipation.
    """
    if problem.exact is None or problem.exact_grad is None:
        raise ValueError("problem has no manufactured solution")
    rule = quadrature_rule(degree)
    area, _, grads = mesh_geometry(mesh)
    x, y = physical_points(mesh, rule)
    value, grad = field_at_points(u_hb, mesh, rule, grads)
    ux, uy = problem.exact_grad(x, y)
    w = area[:, None] * rule.weights[None, :]
    l2 = math.sqrt(float(np.sum(w * (problem.exact(x, y) - value) ** 2)))
    h1 = math.sqrt(float(np.sum(w * ((ux - grad[..., 0]) ** 2 + (uy - grad[..., 1]) ** 2))))
    gamma = problem.coercivity_constant(mesh)
    energy2 = problem.epsilon * h1**2 + gamma * l2**2
    if xi is None:
        diss = 0.0
    else:
        xi = np.asarray(xi, dtype=float)
        c = np.column_stack([u_hb.nodal[mesh.triangles], u_hb.bubble])
        diss = float(np.dot(xi, np.einsum("ti,tij,tj->t", c, local_stiffness(mesh), c)))
    return ErrorReport(l2, h1, math.sqrt(energy2), math.sqrt(energy2 + diss), diss)


# -- rates -------------------------------------------------------------------

RATE_COLUMNS = ("l2", "h1", "star")
CSV_HEADER = ["n", "h", "err_l2", "rate_l2", "err_h1", "rate_h1", "err_star", "rate_star", "iters", "converged"]


def rate(coarse: Optional[float], fine: Optional[float]) -> Optional[float]:
    """``log2(coarse/fine)``; ``None`` when undefined."""
    if coarse is None or fine is None or not coarse > 0 or not fine > 0:
        return None
    return math.log2(coarse / fine)


@dataclass
class RateRow:
    n: int
    errors: tuple  # (l2, h1, star), entries may be None for a failed level
    rates: tuple = (None, None, None)
    iterations: int = 0
    converged: bool = False

    @property
    def h(self) -> float:
        return math.sqrt(2.0) / self.n


@dataclass
class RateTable:
    rows: list = field(default_factory=list)
    title: str = ""

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            cells = [r.n, _fmt(r.h)]
            for e, q in zip(r.errors, r.rates):
                cells += [_fmt(e), _fmt(q)]
            cells += [r.iterations, "true" if r.converged else "false"]
            writer.writerow(cells)
        return out.getvalue()

    def to_markdown(self, digits: int = 4) -> str:
        head = ["mesh", "‖u-u_hb‖₀", "rate", "|u-u_hb|₁", "rate", "|||u-u_hb|||_*", "rate", "iters"]
        body = []
        for r in self.rows:
            cells = [f"{r.n}x{r.n}"]
            for e, q in zip(r.errors, r.rates):
                cells.append("--" if e is None else f"{e:.{digits}e}" if e < 10**-digits else f"{e:.{digits}f}")
                cells.append("--" if q is None else f"{q:.{digits}f}")
            cells.append(f"{r.iterations}{'' if r.converged else '*'}")
            body.append(cells)
        widths = [max(len(c) for c in col) for col in zip(head, *body)]
        lines = []
        if self.title:
            lines += [self.title, ""]
        lines.append("| " + " | ".join(h.ljust(w) for h, w in zip(head, widths)) + " |")
        lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
        for cells in body:
            lines.append("| " + " | ".join(c.rjust(w) for c, w in zip(cells, widths)) + " |")
        if any(not r.converged for r in self.rows):
            lines += ["", "`*` fixed point did not reach the tolerance within the iteration cap"]
        return "\n".join(lines) + "\n"

    def column(self, name: str) -> list:
        i = RATE_COLUMNS.index(name)
        return [r.errors[i] for r in self.rows]

    def rate_column(self, name: str) -> list:
        i = RATE_COLUMNS.index(name)
        return [r.rates[i] for r in self.rows]


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def convergence_rates(levels: Sequence[int], errors: Sequence[Sequence[Optional[float]]], **extra) -> RateTable:
    """Rate table from per-level error triples ``(l2, h1, star)``.

    Rates compare successive levels; the first row's rates are blank.
    """
    if len(levels) != len(errors):
        raise ValueError("one error triple per level is required")
    iters = extra.get("iterations", [0] * len(levels))
    conv = extra.get("converged", [True] * len(levels))
    rows = []
    for i, (n, e) in enumerate(zip(levels, errors)):
        e = tuple(e)
        if i == 0:
            q = (None,) * len(e)
        else:
            q = tuple(rate(a, b) for a, b in zip(rows[-1].errors, e))
        rows.append(RateRow(int(n), e, q, iters[i], conv[i]))
    return RateTable(rows)


def read_rate_table_csv(text: str) -> RateTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = []
    for cells in reader:
        val = [None if c == "" else float(c) for c in cells[2:8]]
        rows.append(
            RateRow(int(cells[0]), (val[0], val[2], val[4]), (val[1], val[3], val[5]), int(cells[8]), cells[9] == "true")
        )
    return RateTable(rows)


# -- benchmarks ----------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    description: str
    make: Callable[[float, float], ProblemSpec]

    def problem(self, epsilon: float, sigma: float) -> ProblemSpec:
        return self.make(epsilon, sigma)


def example1(epsilon: float, sigma: float) -> ProblemSpec:
    """Smooth solution ``100 x^2 (1-x)^2 y (1-y) (1-2y)`` with ``beta = (3, 2)``."""
    bx, by = 3.0, 2.0

    def X(x):
        return x**2 * (1 - x) ** 2

    def dX(x):
        return 2 * x * (1 - x) * (1 - 2 * x)

    def ddX(x):
        return 2 - 12 * x + 12 * x**2

    def Y(y):
        return y * (1 - y) * (1 - 2 * y)

    def dY(y):
        return 1 - 6 * y + 6 * y**2

    def ddY(y):
        return -6 + 12 * y

    def exact(x, y):
        return 100 * X(x) * Y(y)

    def grad(x, y):
        return 100 * dX(x) * Y(y), 100 * X(x) * dY(y)

    def f(x, y):
        lap = 100 * (ddX(x) * Y(y) + X(x) * ddY(y))
        ux, uy = grad(x, y)
        return -epsilon * lap + bx * ux + by * uy + sigma * exact(x, y)

    return ProblemSpec(
        epsilon=epsilon,
        beta=constant_vector(bx, by),
        sigma=constant(sigma),
        f=f,
        gamma=float(sigma),  # div(beta) = 0
        exact=exact,
        exact_grad=grad,
        name=f"example1(eps={epsilon:g}, sigma={sigma:g})",
    )


def example2(epsilon: float, sigma: float) -> ProblemSpec:
    """Solution ``p(x) p(y)`` with exponential layers at ``x = 1`` and ``y = 1``, ``beta = (1, 1)``.

    ``p(s) = (exp((s-1)/eps) - 1)/(exp(-1/eps) - 1) + s - 1`` satisfies
    ``-eps p'' + p' = 1``, so ``f = p(x) + p(y) + sigma u``.
    """
    denom = math.expm1(-1.0 / epsilon)  # -> -1 for small eps

    def p(s):
        return np.expm1((s - 1) / epsilon) / denom + s - 1

    def dp(s):
        return np.exp((s - 1) / epsilon) / (epsilon * denom) + 1

    def exact(x, y):
        return p(x) * p(y)

    def grad(x, y):
        return dp(x) * p(y), p(x) * dp(y)

    def f(x, y):
        return p(x) + p(y) + sigma * p(x) * p(y)

    return ProblemSpec(
        epsilon=epsilon,
        beta=constant_vector(1.0, 1.0),
        sigma=constant(sigma),
        f=f,
        gamma=float(sigma),
        exact=exact,
        exact_grad=grad,
        name=f"example2(eps={epsilon:g}, sigma={sigma:g})",
    )


def example2_laplacian(epsilon: float):
    """``lap u`` for example 2, used to check its source term."""
    denom = math.expm1(-1.0 / epsilon)

    def p(s):
        return np.expm1((s - 1) / epsilon) / denom + s - 1

    def ddp(s):
        return np.exp((s - 1) / epsilon) / (epsilon**2 * denom)

    return lambda x, y: ddp(x) * p(y) + p(x) * ddp(y)


_CASES = {
    "example1": BenchmarkCase("example1", "smooth solution, no layers, beta=(3,2)", example1),
    "example2": BenchmarkCase("example2", "boundary layers along x=1 and y=1, beta=(1,1)", example2),
}


def builtin_cases() -> list[BenchmarkCase]:
    return list(_CASES.values())


def get_case(name: str) -> BenchmarkCase:
    try:
        return _CASES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(_CASES)}") from None


# -- studies -------------------------------------------------------------------

DEFAULT_LEVELS = (2, 4, 8, 16, 32, 64)


@dataclass
class LevelResult:
    n: int
    errors: Optional[ErrorReport]
    iterations: int
    converged: bool
    error: Optional[str] = None
    u: Optional[FieldCoefficients] = None
    report: object = None


class StudyError(RuntimeError):
    pass


def solve_level(
    case: str,
    epsilon: float,
    sigma: float,
    n: int,
    config: SolverConfig | None = None,
    diagonal: str = "up",
    error_degree: int = ERROR_DEGREE,
    keep_fields: bool = False,
) -> LevelResult:
    problem = get_case(case).problem(epsilon, sigma)
    mesh = generate_uniform_mesh(n, diagonal)
    try:
        u, report = fixed_point_solve(problem, mesh, config)
    except (LinearSolverError, FloatingPointError) as exc:
        return LevelResult(n, None, 0, False, error=f"level {n}: {exc}")
    errors = compute_errors(problem, mesh, u, report.coefficients.xi, error_degree)
    return LevelResult(
        n,
        errors,
        report.iterations,
        report.converged,
        u=u if keep_fields else None,
        report=report if keep_fields else None,
    )


def run_study(
    case: str,
    epsilon: float,
    sigma: float,
    levels: Sequence[int] = DEFAULT_LEVELS,
    config: SolverConfig | None = None,
    diagonal: str = "up",
    error_degree: int = ERROR_DEGREE,
    workers: int = 1,
    results: list | None = None,
) -> RateTable:
    """Solve every level, measure errors and tabulate rates.

    Failed levels appear with blank errors; their messages are appended to
    ``results`` (as :class:`LevelResult`) when a list is passed.
    """
    levels = [int(n) for n in levels]
    if not levels or any(n < 1 or n & (n - 1) for n in levels) or levels != sorted(set(levels)):
        raise ValueError(f"levels must be strictly increasing powers of two, got {levels}")
    get_case(case)
    args = [(case, epsilon, sigma, n, config, diagonal, error_degree) for n in levels]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(solve_level, *zip(*args)))
    else:
        out = [solve_level(*a) for a in args]
    if results is not None:
        results.extend(out)
    triples = [
        (r.errors.l2, r.errors.h1_semi, r.errors.star) if r.errors else (None, None, None) for r in out
    ]
    table = convergence_rates(
        levels,
        triples,
        iterations=[r.iterations for r in out],
        converged=[r.converged for r in out],
    )
    table.title = f"{case}: eps={epsilon:g}, sigma={sigma:g}"
    return table

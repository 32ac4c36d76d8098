"""Residual-driven dynamic diffusion and the damped fixed-point solver.

On every element the artificial diffusivity is

    xi_T(w_h) = h_T ||R(w_h)||_T / (A_T(w_h) + tau)   if Pe_T > 1, else 0,

with ``R = beta.grad(w_h) + sigma*w_h - f``,
``A_T = max|beta| |w_h|_{1,T} + max|sigma| ||w_h||_{0,T}`` and
``tau = ||f||_T`` (or 1 where f vanishes). Only the coarse part of a field
enters, and ``0 <= xi_T <= h_T`` always.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import (
    AssembledSystem,
    ProblemSpec,
    apply_dirichlet,
    assemble_B,
    assemble_dd_matrix,
    boundary_values,
    local_stiffness,
    _coefficients_at,
)
from .linalg import TripletBuffer, compress, restrict, solve
from .mesh import Mesh, mesh_geometry
from .spaces import (
    ASSEMBLY_DEGREE,
    DofMap,
    FieldCoefficients,
    field_at_points,
    physical_points,
    quadrature_rule,
)

log = logging.getLogger(__name__)

FREEZE_RATIO = 0.2
OMEGA = 0.5
# relative threshold below which f is treated as vanishing on an element
F_ZERO_TOL = 1e-14


class BoundViolation(AssertionError):
    """Artificial diffusivity left the interval [0, h_T]."""


@dataclass(frozen=True)
class DDCoefficients:
    """Per-element diffusivity and the quantities it is built from."""

    xi: np.ndarray
    residual_norm: np.ndarray
    a_t: np.ndarray
    tau: np.ndarray
    peclet: np.ndarray


class DDContext:
    """Element data that stays fixed across fixed-point iterations."""

    def __init__(self, problem: ProblemSpec, mesh: Mesh, degree: int = ASSEMBLY_DEGREE):
        self.problem = problem
        self.mesh = mesh
        self.degree = degree
        self.rule = quadrature_rule(degree)
        self.area, self.h, self.grads = mesh_geometry(mesh)
        x, y = physical_points(mesh, self.rule)
        self.beta, self.sigma, self.f = _coefficients_at(problem, x, y)
        self.weights = self.area[:, None] * self.rule.weights[None, :]
        speed2 = (self.beta**2).sum(axis=-1)
        self.beta_max = np.sqrt(speed2.max(axis=1))
        self.sigma_max = np.abs(self.sigma).max(axis=1)
        self.beta_l2 = np.sqrt((self.weights * speed2).sum(axis=1))
        self.peclet = self.beta_l2 * self.h / (2.0 * problem.epsilon)
        self.f_norm = np.sqrt((self.weights * self.f**2).sum(axis=1))
        f_global = np.sqrt((self.f_norm**2).sum())
        f_nonzero = self.f_norm > F_ZERO_TOL * (1.0 + f_global)
        self.tau = np.where(f_nonzero, self.f_norm, 1.0)
        self._stiffness = None

    @property
    def stiffness(self) -> np.ndarray:
        if self._stiffness is None:
            self._stiffness = local_stiffness(self.mesh)
        return self._stiffness

    def residual(self, w: FieldCoefficients) -> np.ndarray:
        """(nt, nq) coarse-scale residual at the rule points."""
        value, grad = field_at_points(w.coarse(), self.mesh, self.rule, self.grads)
        return (self.beta * grad).sum(axis=-1) + self.sigma * value - self.f

    def evaluate(self, w: FieldCoefficients) -> DDCoefficients:
        coarse = w.coarse()
        value, grad = field_at_points(coarse, self.mesh, self.rule, self.grads)
        res = (self.beta * grad).sum(axis=-1) + self.sigma * value - self.f
        res_norm = np.sqrt((self.weights * res**2).sum(axis=1))
        h1 = np.sqrt((self.weights * (grad**2).sum(axis=-1)).sum(axis=1))
        l2 = np.sqrt((self.weights * value**2).sum(axis=1))
        a_t = self.beta_max * h1 + self.sigma_max * l2
        active = self.peclet > 1.0
        # res_norm <= a_t + tau holds exactly; the clip only absorbs rounding
        ratio = np.minimum(res_norm / (a_t + self.tau), 1.0)
        xi = np.where(active, self.h * ratio, 0.0)
        check_xi_bound(xi, self.h)
        return DDCoefficients(xi, res_norm, a_t, self.tau.copy(), self.peclet.copy())


def check_xi_bound(xi, h, rtol: float = 1e-12) -> None:
    xi = np.asarray(xi)
    if np.any(xi < 0) or np.any(xi > h * (1.0 + rtol)):
        worst = int(np.argmax(np.maximum(-xi, xi - h)))
        raise BoundViolation(
            f"xi out of [0, h_T] on element {worst}: xi={xi[worst]!r}, h_T={h[worst]!r}"
        )


def compute_peclet(problem: ProblemSpec, mesh: Mesh, element: int, degree: int = ASSEMBLY_DEGREE) -> float:
    """Element Peclet number ``||beta||_{0,T} h_T / (2 eps)`` (L2 norm over T)."""
    return float(DDContext(problem, mesh, degree).peclet[element])


def compute_xi(
    problem: ProblemSpec, mesh: Mesh, element: int, w: FieldCoefficients, degree: int = ASSEMBLY_DEGREE
):
    """Diffusivity on one element and its parts ``(residual_norm, a_t, tau)``.

    Bubble coefficients of ``w`` are ignored.
    """
    dd = DDContext(problem, mesh, degree).evaluate(w)
    return float(dd.xi[element]), (
        float(dd.residual_norm[element]),
        float(dd.a_t[element]),
        float(dd.tau[element]),
    )


def supg_parameter(ctx: DDContext) -> np.ndarray:
    """``h/(2 max|beta|) (coth(Pe) - 1/Pe)`` per element, zero where beta vanishes."""
    pe = ctx.peclet
    small = pe < 1e-3
    safe = np.where(small, 1.0, pe)
    xi_pe = np.where(small, pe / 3.0 - pe**3 / 45.0, 1.0 / np.tanh(safe) - 1.0 / safe)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(ctx.beta_max > 0, ctx.h / (2.0 * ctx.beta_max) * xi_pe, 0.0)
    return tau


def supg_initialize(
    problem: ProblemSpec,
    mesh: Mesh,
    dofs: DofMap | None = None,
    system: AssembledSystem | None = None,
    ctx: DDContext | None = None,
) -> FieldCoefficients:
    """Coarse-only SUPG solution on the P1 space (bubble block zero).

    Solves ``B(u_h, v_h) + sum_T tau_T (beta.grad u_h + sigma u_h - f, beta.grad v_h)_T
    = (f, v_h) + (g, v_h)_N``.
    """
    mesh = problem.prepare_mesh(mesh)
    if dofs is None:
        dofs = DofMap.build(mesh)
    if system is None:
        system = assemble_B(problem, mesh, dofs)
    if ctx is None:
        ctx = DDContext(problem, mesh)
    nv = mesh.n_vertices
    tau = supg_parameter(ctx)
    phi = ctx.rule.points  # hat functions at rule points, (nq, 3)
    stream = np.einsum("tqk,tik->tqi", ctx.beta, ctx.grads)  # beta . grad(phi_i)
    trial = stream + ctx.sigma[..., None] * phi[None, :, :]
    w = ctx.weights * tau[:, None]
    local = np.einsum("tq,tqj,tqi->tij", w, trial, stream)
    load = np.einsum("tq,tq,tqi->ti", w, ctx.f, stream)

    buf = TripletBuffer()
    buf.add_local(mesh.triangles, local)
    A = restrict(system.matrix, np.arange(nv)) + compress(buf, nv)
    rhs = system.rhs[:nv].copy()
    np.add.at(rhs, mesh.triangles, load)

    free = dofs.free_vertices
    fixed = dofs.constrained_vertices
    lift = boundary_values(problem, mesh)
    b = rhs[free]
    if fixed.size and np.any(lift[fixed]):
        b = b - A[free][:, fixed] @ lift[fixed]
    u = lift.copy()
    if free.size:
        u[free] = solve(restrict(A, free), b)
    return FieldCoefficients(u, np.zeros(mesh.n_triangles))


def damping_factor(k: int, previous, current, ratio: float = FREEZE_RATIO, omega: float = OMEGA):
    """Per-element relaxation weight: 0 freezes xi, ``omega`` otherwise.

    ``previous``/``current`` are element residual norms of the last two
    iterates. Freezing needs ``k >= 1`` and a relative change of at most
    ``ratio``.
    """
    current = np.asarray(current, dtype=float)
    if k < 1 or previous is None:
        return np.full(current.shape, omega)
    previous = np.asarray(previous, dtype=float)
    frozen = np.abs(previous - current) <= ratio * previous
    return np.where(frozen, 0.0, omega)


@dataclass
class SolverConfig:
    max_iter: int = 30
    tol: float = 1e-6
    freeze: str = "element"  # "element", "global" or "off"
    freeze_ratio: float = FREEZE_RATIO
    omega: float = OMEGA
    degree: int = ASSEMBLY_DEGREE

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        if self.freeze not in ("element", "global", "off"):
            raise ValueError(f"unknown freezing mode {self.freeze!r}")


@dataclass
class IterationState:
    k: int
    u: FieldCoefficients
    xi: np.ndarray
    residual_norm_history: tuple  # (||R(u^{k-1})||_T or None, ||R(u^k)||_T)


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    final_increment: float = float("inf")
    increments: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    frozen_counts: list = field(default_factory=list)
    xi: Optional[np.ndarray] = None  # diffusivity of the last linear solve
    coefficients: Optional[DDCoefficients] = None  # evaluated at the returned u_h
    residuals: list = field(default_factory=list)  # relative residual of each linear solve

    def trace_rows(self):
        for k, (inc, dis, fz) in enumerate(zip(self.increments, self.dissipation, self.frozen_counts)):
            yield k, inc, dis, fz

    def trace_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["k", "max_increment", "dissipation", "frozen_elements"])
        for k, inc, dis, fz in self.trace_rows():
            writer.writerow([k, repr(float(inc)), repr(float(dis)), fz])
        return out.getvalue()


def dissipation(xi, u: FieldCoefficients, mesh: Mesh, stiffness: np.ndarray) -> float:
    """``sum_T xi_T ||grad u_hb||^2_T``."""
    c = np.column_stack([u.nodal[mesh.triangles], u.bubble])
    energy = np.einsum("ti,tij,tj->t", c, stiffness, c)
    return float(np.dot(xi, energy))


class _LinearizedProblem:
    """The reduced system ``A_B + A_DD(xi)`` with its lift, for repeated solves."""

    def __init__(self, problem: ProblemSpec, mesh: Mesh, dofs: DofMap, ctx: DDContext):
        self.mesh, self.dofs, self.ctx = mesh, dofs, ctx
        self.full = assemble_B(problem, mesh, dofs, ctx.degree)
        self.boundary = boundary_values(problem, mesh)
        self.reduced = apply_dirichlet(self.full, self.boundary)
        self.free = dofs.full_index
        self.fixed = dofs.constrained_vertices
        self.has_lift = bool(self.fixed.size and np.any(self.boundary[self.fixed]))
        self.last_residual = 0.0

    def solve(self, xi) -> FieldCoefficients:
        dd_full = assemble_dd_matrix(xi, self.mesh, self.dofs, self.ctx.stiffness)
        A = self.reduced.matrix + restrict(dd_full, self.free)
        b = self.reduced.rhs
        if self.has_lift:
            b = b - dd_full[self.free][:, self.fixed] @ self.boundary[self.fixed]
        x = solve(A, b)
        r = A @ x - b
        nb = np.linalg.norm(b)
        self.last_residual = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
        return FieldCoefficients.from_free_vector(x, self.dofs, self.boundary)


def _relative_increment(new: np.ndarray, old: np.ndarray) -> float:
    diff = float(np.max(np.abs(new - old))) if new.size else 0.0
    scale = float(np.max(np.abs(old))) if old.size else 0.0
    return diff / scale if scale > 0 else diff


def fixed_point_solve(
    problem: ProblemSpec, mesh: Mesh, config: SolverConfig | None = None
) -> tuple[FieldCoefficients, SolveReport]:
    """Damped fixed-point iteration for the dynamic-diffusion scheme.

    Starts from the SUPG solution with zero diffusivity. Each step relaxes
    ``xi <- omega*xi(u_h^k) + (1-omega)*xi`` per element (``omega`` from
    :func:`damping_factor`), solves the linear system on the enriched space
    and stops once the relative max-norm change of the nodal values drops
    below ``config.tol`` or after ``config.max_iter`` solves.
    """
    config = config or SolverConfig()
    mesh = problem.prepare_mesh(mesh)
    dofs = DofMap.build(mesh)
    ctx = DDContext(problem, mesh, config.degree)
    lin = _LinearizedProblem(problem, mesh, dofs, ctx)
    u = supg_initialize(problem, mesh, dofs, lin.full, ctx)

    report = SolveReport()
    xi = np.zeros(mesh.n_triangles)
    r_prev = None
    for k in range(config.max_iter):
        dd = ctx.evaluate(u)
        if config.freeze == "global":
            cur = np.sqrt(np.sum(dd.residual_norm**2))
            prev = None if r_prev is None else np.sqrt(np.sum(r_prev**2))
            omega = np.full(
                mesh.n_triangles,
                float(damping_factor(k, prev, cur, config.freeze_ratio, config.omega)),
            )
        elif config.freeze == "off":
            omega = np.full(mesh.n_triangles, config.omega)
        else:
            omega = damping_factor(k, r_prev, dd.residual_norm, config.freeze_ratio, config.omega)
        xi = omega * dd.xi + (1.0 - omega) * xi
        check_xi_bound(xi, ctx.h)

        u_new = lin.solve(xi)
        inc = _relative_increment(u_new.nodal, u.nodal)
        report.increments.append(inc)
        report.dissipation.append(dissipation(xi, u_new, mesh, ctx.stiffness))
        report.frozen_counts.append(int(np.count_nonzero(omega == 0.0)))
        report.residuals.append(lin.last_residual)
        log.debug("iteration %d: increment %.3e, frozen %d", k, inc, report.frozen_counts[-1])
        r_prev = dd.residual_norm
        u = u_new
        report.iterations = k + 1
        report.final_increment = inc
        if inc < config.tol:
            report.converged = True
            break
    report.xi = xi
    report.coefficients = ctx.evaluate(u)
    return u, report


def solve_with_xi(problem: ProblemSpec, mesh: Mesh, xi, degree: int = ASSEMBLY_DEGREE) -> FieldCoefficients:
    """One linear solve of the scheme with a prescribed diffusivity."""
    mesh = problem.prepare_mesh(mesh)
    dofs = DofMap.build(mesh)
    ctx = DDContext(problem, mesh, degree)
    return _LinearizedProblem(problem, mesh, dofs, ctx).solve(np.asarray(xi, dtype=float))

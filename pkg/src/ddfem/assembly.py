"""Assembly of the convection-diffusion-reaction form on the enriched space.

Matrices are first built in the full layout (every vertex, then every
bubble) and reduced to the free dofs by :func:`apply_dirichlet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .linalg import TripletBuffer, compress, restrict
from .mesh import Mesh, mesh_geometry
from .spaces import (
    ASSEMBLY_DEGREE,
    DofMap,
    basis_gradients,
    basis_values,
    physical_points,
    quadrature_rule,
)

ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorFn = Callable[[np.ndarray, np.ndarray], tuple]


def constant(c: float) -> ScalarFn:
    def fn(x, y):
        return np.full(np.shape(x), float(c))

    fn.constant_value = float(c)
    return fn


def constant_vector(bx: float, by: float) -> VectorFn:
    def fn(x, y):
        shape = np.shape(x)
        return np.full(shape, float(bx)), np.full(shape, float(by))

    fn.constant_value = (float(bx), float(by))
    return fn


@dataclass(frozen=True)
class ProblemSpec:
    """Data of ``-eps*lap(u) + beta.grad(u) + sigma*u = f``.

    Coefficient callables take coordinate arrays ``(x, y)`` and return arrays
    of the same shape (``beta`` returns a pair). ``neumann`` selects boundary
    edges by midpoint; unselected edges are Dirichlet with value
    ``dirichlet`` (zero when ``None``). ``gamma`` overrides the computed
    coercivity constant.
    """

    epsilon: float
    beta: VectorFn = field(default_factory=lambda: constant_vector(0.0, 0.0))
    sigma: ScalarFn = field(default_factory=lambda: constant(0.0))
    f: ScalarFn = field(default_factory=lambda: constant(0.0))
    g: Optional[ScalarFn] = None
    neumann: Optional[Callable[[float, float], bool]] = None
    dirichlet: Optional[ScalarFn] = None
    gamma: Optional[float] = None
    div_beta: Optional[ScalarFn] = None
    exact: Optional[ScalarFn] = None
    exact_grad: Optional[VectorFn] = None
    name: str = ""

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"diffusivity must be positive, got {self.epsilon!r}")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma!r}")

    def prepare_mesh(self, mesh: Mesh) -> Mesh:
        return mesh.with_neumann(self.neumann) if self.neumann is not None else mesh

    def divergence_of_beta(self, x, y) -> np.ndarray:
        if self.div_beta is not None:
            return np.asarray(self.div_beta(x, y), dtype=float)
        if hasattr(self.beta, "constant_value"):
            return np.zeros(np.shape(x))
        d = 1e-5
        bxp, _ = self.beta(x + d, y)
        bxm, _ = self.beta(x - d, y)
        _, byp = self.beta(x, y + d)
        _, bym = self.beta(x, y - d)
        return (np.asarray(bxp) - bxm + np.asarray(byp) - bym) / (2 * d)

    def coercivity_constant(self, mesh: Mesh, degree: int = ASSEMBLY_DEGREE) -> float:
        """``gamma``: the override if set, else max(0, min of sigma - div(beta)/2) at quadrature points."""
        if self.gamma is not None:
            return float(self.gamma)
        x, y = physical_points(mesh, quadrature_rule(degree))
        values = np.asarray(self.sigma(x, y), dtype=float) - 0.5 * self.divergence_of_beta(x, y)
        return max(0.0, float(values.min()))


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Matrix and load vector, either in the full layout or reduced to free dofs."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofs: DofMap
    reduced: bool = False
    boundary: Optional[np.ndarray] = None  # vertex values used for the lift


def element_dofs_full(mesh: Mesh) -> np.ndarray:
    """(nt, 4) full-layout indices: three vertices then the element bubble."""
    bubble = mesh.n_vertices + np.arange(mesh.n_triangles)
    return np.column_stack([mesh.triangles, bubble])


def _coefficients_at(problem: ProblemSpec, x, y):
    bx, by = problem.beta(x, y)
    beta = np.stack(np.broadcast_arrays(np.asarray(bx, float), np.asarray(by, float)), axis=-1)
    sigma = np.broadcast_to(np.asarray(problem.sigma(x, y), dtype=float), x.shape)
    f = np.broadcast_to(np.asarray(problem.f(x, y), dtype=float), x.shape)
    return beta, sigma, f


def local_B_matrices(problem: ProblemSpec, mesh: Mesh, degree: int = ASSEMBLY_DEGREE):
    """Element matrices ``K[t, i, j] = B(phi_j, phi_i)`` on the local basis and loads ``(f, phi_i)``."""
    rule = quadrature_rule(degree)
    area, _, grads = mesh_geometry(mesh)
    phi = basis_values(rule)  # (nq, 4)
    dphi = basis_gradients(grads, rule)  # (nt, nq, 4, 2)
    x, y = physical_points(mesh, rule)
    beta, sigma, f = _coefficients_at(problem, x, y)
    w = area[:, None] * rule.weights[None, :]  # (nt, nq)
    diffusion = problem.epsilon * np.einsum("tq,tqik,tqjk->tij", w, dphi, dphi)
    adv = np.einsum("tqk,tqjk->tqj", beta, dphi)  # beta . grad(phi_j)
    convection = np.einsum("tq,tqj,qi->tij", w, adv, phi)
    reaction = np.einsum("tq,tq,qi,qj->tij", w, sigma, phi, phi)
    loads = np.einsum("tq,tq,qi->ti", w, f, phi)
    return diffusion + convection + reaction, loads


def neumann_load(problem: ProblemSpec, mesh: Mesh) -> np.ndarray:
    """Per-vertex ``(g, phi_v)`` over Neumann edges, 3-point Gauss-Legendre per edge."""
    load = np.zeros(mesh.n_vertices)
    edges = mesh.neumann_edges()
    if problem.g is None or len(edges) == 0:
        return load
    s, ws = np.polynomial.legendre.leggauss(3)
    s = 0.5 * (1.0 + s)
    ws = 0.5 * ws
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    g = np.broadcast_to(np.asarray(problem.g(pts[..., 0], pts[..., 1]), float), pts.shape[:2])
    gw = g * ws[None, :] * length[:, None]
    np.add.at(load, edges[:, 0], (gw * (1.0 - s)[None, :]).sum(axis=1))
    np.add.at(load, edges[:, 1], (gw * s[None, :]).sum(axis=1))
    return load


def assemble_B(
    problem: ProblemSpec, mesh: Mesh, dofs: DofMap | None = None, degree: int = ASSEMBLY_DEGREE
) -> AssembledSystem:
    """Full-layout matrix of ``B`` and load vector ``(f, v) + (g, v)_N`` over vertices and bubbles."""
    if dofs is None:
        dofs = DofMap.build(mesh)
    local, loads = local_B_matrices(problem, mesh, degree)
    if not (np.all(np.isfinite(local)) and np.all(np.isfinite(loads))):
        raise FloatingPointError("non-finite coefficient values at quadrature points")
    edofs = element_dofs_full(mesh)
    buf = TripletBuffer()
    buf.add_local(edofs, local)
    n = dofs.full_size
    rhs = np.zeros(n)
    np.add.at(rhs, edofs, loads)
    rhs[: mesh.n_vertices] += neumann_load(problem, mesh)
    return AssembledSystem(compress(buf, n), rhs, dofs)


def local_stiffness(mesh: Mesh, degree: int = ASSEMBLY_DEGREE) -> np.ndarray:
    """(nt, 4, 4) element matrices of ``(grad u, grad v)_T`` on the local basis."""
    rule = quadrature_rule(degree)
    area, _, grads = mesh_geometry(mesh)
    dphi = basis_gradients(grads, rule)
    w = area[:, None] * rule.weights[None, :]
    return np.einsum("tq,tqik,tqjk->tij", w, dphi, dphi)


def assemble_dd_matrix(
    xi, mesh: Mesh, dofs: DofMap | None = None, stiffness: np.ndarray | None = None
) -> sp.csr_matrix:
    """Full-layout matrix of ``sum_T xi_T (grad u, grad v)_T``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (mesh.n_triangles,):
        raise ValueError(f"expected {mesh.n_triangles} element values, got shape {xi.shape}")
    if not np.all(np.isfinite(xi)) or np.any(xi < 0):
        raise ValueError("artificial diffusivity must be finite and nonnegative")
    if dofs is None:
        dofs = DofMap.build(mesh)
    if stiffness is None:
        stiffness = local_stiffness(mesh)
    buf = TripletBuffer()
    buf.add_local(element_dofs_full(mesh), xi[:, None, None] * stiffness)
    return compress(buf, dofs.full_size)


def boundary_values(problem: ProblemSpec, mesh: Mesh) -> np.ndarray:
    """Vertex array with Dirichlet data on constrained vertices (zeros elsewhere)."""
    values = np.zeros(mesh.n_vertices)
    if problem.dirichlet is not None:
        idx = mesh.dirichlet_vertices()
        x, y = mesh.vertices[idx, 0], mesh.vertices[idx, 1]
        values[idx] = np.broadcast_to(np.asarray(problem.dirichlet(x, y), float), x.shape)
    return values


def apply_dirichlet(system: AssembledSystem, lift=None) -> AssembledSystem:
    """Reduce a full-layout system to the free dofs.

    ``lift`` is a per-vertex array whose entries on constrained vertices are
    the Dirichlet values (``None`` means homogeneous data). The load vector
    is corrected by the lifted columns.
    """
    if system.reduced:
        raise ValueError("system is already reduced")
    dofs = system.dofs
    free = dofs.full_index
    constrained = dofs.constrained_vertices
    A = sp.csr_matrix(system.matrix)
    rhs = system.rhs[free].copy()
    boundary = np.zeros(dofs.n_vertices)
    if lift is not None:
        lift = np.asarray(lift, dtype=float)
        if lift.shape != (dofs.n_vertices,):
            raise ValueError(f"lift must hold {dofs.n_vertices} vertex values, got {lift.shape}")
        if not np.all(np.isfinite(lift[constrained])):
            raise ValueError("missing Dirichlet value on a constrained vertex")
        boundary[constrained] = lift[constrained]
        if constrained.size:
            rhs -= A[free][:, constrained] @ boundary[constrained]
    return AssembledSystem(restrict(A, free), rhs, dofs, reduced=True, boundary=boundary)


def reduce_matrix(A: sp.spmatrix, dofs: DofMap) -> sp.csr_matrix:
    return restrict(A, dofs.full_index)

"""P1 + cubic-bubble spaces on triangles: quadrature, basis, dof map, fields.

The enriched space is the sum of the continuous piecewise-linear space
(vanishing on Dirichlet vertices) and one bubble ``27*l1*l2*l3`` per element.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np
from scipy.special import roots_jacobi

from .mesh import Mesh, mesh_geometry

MAX_QUADRATURE_DEGREE = 10

# Rule degrees used for system assembly and for error integrals.
ASSEMBLY_DEGREE = 6
ERROR_DEGREE = 8


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-triangle rule in barycentric coordinates.

    ``weights`` sum to one, so ``area * weights @ g(points)`` integrates
    ``g`` over a physical triangle.
    """

    points: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)
    exactness_degree: int


@lru_cache(maxsize=None)
def quadrature_rule(min_degree: int) -> QuadratureRule:
    """Positive-weight collapsed Gauss rule exact for polynomials of degree ``min_degree``.

    Gauss-Jacobi (weight ``1-u``) points in the collapsed direction times
    Gauss-Legendre points along the rays; ``m`` points per direction are
    exact to degree ``2m - 1``.
    """
    if int(min_degree) != min_degree or not 1 <= min_degree <= MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"unsupported quadrature degree {min_degree!r}; expected 1..{MAX_QUADRATURE_DEGREE}"
        )
    m = max(1, ceil((min_degree + 1) / 2))
    xj, wj = roots_jacobi(m, 1.0, 0.0)
    xl, wl = np.polynomial.legendre.leggauss(m)
    u = 0.5 * (1.0 + xj)
    v = 0.5 * (1.0 + xl)
    # int_0^1 int_0^1 g(u, (1-u) v) (1-u) dv du, reference area 1/2
    s = np.repeat(u, m)
    t = np.outer(1.0 - u, v).ravel()
    w = np.outer(wj / 4.0, wl / 2.0).ravel() * 2.0
    points = np.column_stack([1.0 - s - t, s, t])
    points.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(points, w, 2 * m - 1)


def bubble_eval(bary) -> np.ndarray:
    """Unit-maximum cubic bubble ``27*l1*l2*l3`` at barycentric point(s)."""
    bary = np.asarray(bary, dtype=float)
    return 27.0 * bary[..., 0] * bary[..., 1] * bary[..., 2]


def bubble_gradient(grads, bary) -> np.ndarray:
    """Physical gradient of the bubble.

    ``grads`` holds the barycentric gradients, shape ``(..., 3, 2)``; ``bary``
    holds points, shape ``(nq, 3)`` or ``(3,)``. Result has shape
    ``grads.shape[:-2] + bary.shape[:-1] + (2,)``.
    """
    grads = np.asarray(grads, dtype=float)
    bary = np.asarray(bary, dtype=float)
    # d(l1 l2 l3)/d l_i = product of the other two
    partial = 27.0 * np.stack(
        [bary[..., 1] * bary[..., 2], bary[..., 0] * bary[..., 2], bary[..., 0] * bary[..., 1]],
        axis=-1,
    )
    return np.einsum("...ik,qi->...qk", grads, partial.reshape(-1, 3)).reshape(
        grads.shape[:-2] + bary.shape[:-1] + (2,)
    )


def basis_values(rule: QuadratureRule) -> np.ndarray:
    """(nq, 4) values of the three hat functions and the bubble at the rule points."""
    return np.column_stack([rule.points, bubble_eval(rule.points)])


def basis_gradients(grads: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """(nt, nq, 4, 2) physical gradients of the local basis at the rule points."""
    nt, nq = grads.shape[0], rule.points.shape[0]
    out = np.empty((nt, nq, 4, 2))
    out[:, :, :3, :] = grads[:, None, :, :]
    out[:, :, 3, :] = bubble_gradient(grads, rule.points)
    return out


def physical_points(mesh: Mesh, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Physical coordinates ``(x, y)`` of the rule points, each of shape (nt, nq)."""
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    xy = np.einsum("qi,tik->tqk", rule.points, p)
    return xy[..., 0], xy[..., 1]


@dataclass(frozen=True, eq=False)
class DofMap:
    """Numbering of the enriched space.

    Free vertices are numbered first in vertex order, followed by one bubble
    per element in element order. ``nodal_dof_of_vertex`` is ``-1`` on
    Dirichlet vertices.

    Assembly uses a "full" layout with every vertex followed by every
    bubble; ``full_index`` maps reduced dofs into it.
    """

    nodal_dof_of_vertex: np.ndarray
    bubble_dof_of_element: np.ndarray
    n_vertices: int
    n_elements: int

    @classmethod
    def build(cls, mesh: Mesh) -> "DofMap":
        constrained = np.zeros(mesh.n_vertices, dtype=bool)
        constrained[mesh.dirichlet_vertices()] = True
        nodal = np.full(mesh.n_vertices, -1, dtype=np.int64)
        free = np.flatnonzero(~constrained)
        nodal[free] = np.arange(free.size)
        bubble = free.size + np.arange(mesh.n_triangles, dtype=np.int64)
        for a in (nodal, bubble):
            a.setflags(write=False)
        return cls(nodal, bubble, mesh.n_vertices, mesh.n_triangles)

    @property
    def free_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.nodal_dof_of_vertex >= 0)

    @property
    def constrained_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.nodal_dof_of_vertex < 0)

    @property
    def n_free_nodal(self) -> int:
        return int(np.count_nonzero(self.nodal_dof_of_vertex >= 0))

    @property
    def total_dofs(self) -> int:
        return self.n_free_nodal + self.n_elements

    @property
    def full_size(self) -> int:
        return self.n_vertices + self.n_elements

    @property
    def full_index(self) -> np.ndarray:
        return np.concatenate([self.free_vertices, self.n_vertices + np.arange(self.n_elements)])


@dataclass(frozen=True, eq=False)
class FieldCoefficients:
    """Coefficients of ``w_hb = w_h + w_b``.

    ``nodal`` holds a value for every vertex (Dirichlet vertices carry their
    boundary value, zero for homogeneous data); ``bubble`` one value per
    element.
    """

    nodal: np.ndarray
    bubble: np.ndarray

    def coarse(self) -> "FieldCoefficients":
        """The coarse-scale part ``w_h`` (bubble block dropped)."""
        return FieldCoefficients(self.nodal, np.zeros_like(self.bubble))

    def free_vector(self, dofs: DofMap) -> np.ndarray:
        return np.concatenate([self.nodal[dofs.free_vertices], self.bubble])

    @classmethod
    def from_free_vector(cls, x, dofs: DofMap, boundary=None) -> "FieldCoefficients":
        x = np.asarray(x, dtype=float)
        nodal = np.zeros(dofs.n_vertices)
        if boundary is not None:
            nodal[dofs.constrained_vertices] = np.asarray(boundary, dtype=float)[
                dofs.constrained_vertices
            ]
        nodal[dofs.free_vertices] = x[: dofs.n_free_nodal]
        return cls(nodal, x[dofs.n_free_nodal :].copy())

    @classmethod
    def zeros(cls, dofs: DofMap) -> "FieldCoefficients":
        return cls(np.zeros(dofs.n_vertices), np.zeros(dofs.n_elements))


def interpolate_nodal(u, mesh: Mesh, dofs: DofMap | None = None) -> FieldCoefficients:
    """Lagrange interpolant of ``u(x, y)``; bubble block is zero."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    values = np.broadcast_to(np.asarray(u(x, y), dtype=float), x.shape).copy()
    return FieldCoefficients(values, np.zeros(mesh.n_triangles))


def evaluate_field(coeffs: FieldCoefficients, mesh: Mesh, element: int, bary):
    """Value and gradient of ``w_h + w_b`` at a barycentric point of one element."""
    bary = np.asarray(bary, dtype=float)
    _, _, grads = mesh_geometry(mesh)
    g = grads[element]
    nodal = coeffs.nodal[mesh.triangles[element]]
    b = coeffs.bubble[element]
    value = nodal @ bary + b * bubble_eval(bary)
    gradient = nodal @ g + b * bubble_gradient(g, bary)
    return float(value), gradient


def field_at_points(coeffs: FieldCoefficients, mesh: Mesh, rule: QuadratureRule, grads=None):
    """Values (nt, nq) and gradients (nt, nq, 2) of a field at every rule point."""
    if grads is None:
        grads = mesh_geometry(mesh)[2]
    nodal = coeffs.nodal[mesh.triangles]  # (nt, 3)
    values = nodal @ rule.points.T + coeffs.bubble[:, None] * bubble_eval(rule.points)[None, :]
    coarse_grad = np.einsum("ti,tik->tk", nodal, grads)
    gradients = coarse_grad[:, None, :] + coeffs.bubble[:, None, None] * bubble_gradient(
        grads, rule.points
    )
    return values, gradients

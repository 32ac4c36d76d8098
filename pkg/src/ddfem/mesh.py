"""Uniform triangulations of the unit square and per-element geometry."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

DIRICHLET = 0
NEUMANN = 1

DIAGONALS = ("up", "down")


class MeshError(ValueError):
    """Raised for structurally invalid meshes (degenerate or inverted cells)."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    boundary_edges : (nb, 2) int array of vertex pairs
    boundary_tags : (nb,) int array, ``DIRICHLET`` or ``NEUMANN``
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(
            self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2)
        )
        object.__setattr__(self, "boundary_tags", _frozen(self.boundary_tags, np.int64))
        if self.boundary_tags.shape[0] != self.boundary_edges.shape[0]:
            raise MeshError("one tag per boundary edge is required")
        if np.any(self.triangles < 0) or np.any(self.triangles >= len(self.vertices)):
            raise MeshError("triangle references a vertex out of range")
        bad = np.flatnonzero(signed_areas(self.vertices, self.triangles) <= 0.0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has non-positive signed area")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def dirichlet_vertices(self) -> np.ndarray:
        """Sorted vertex indices lying on a Dirichlet-tagged edge."""
        edges = self.boundary_edges[self.boundary_tags == DIRICHLET]
        return np.unique(edges.ravel())

    def neumann_edges(self) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == NEUMANN]

    def with_neumann(self, selector: Callable[[float, float], bool]) -> "Mesh":
        """Copy of the mesh with edges whose midpoint satisfies ``selector`` tagged Neumann."""
        mid = self.vertices[self.boundary_edges].mean(axis=1)
        tags = np.array(
            [NEUMANN if selector(x, y) else DIRICHLET for x, y in mid], dtype=np.int64
        )
        return Mesh(self.vertices, self.triangles, self.boundary_edges, tags)


@dataclass(frozen=True)
class ElementGeometry:
    area: float
    diameter: float
    barycentric_gradients: np.ndarray  # (3, 2), row i is grad(lambda_i)


def signed_areas(vertices, triangles) -> np.ndarray:
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def generate_uniform_mesh(n: int, diagonal: str = "up") -> Mesh:
    """N x N uniform triangulation of the unit square.

    Vertices are numbered row by row (index ``j*(n+1) + i`` for the point
    ``(i/n, j/n)``). Each square cell is cut along its bottom-left to
    top-right diagonal (``"up"``) or its top-left to bottom-right diagonal
    (``"down"``). All boundary edges are tagged Dirichlet.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    if diagonal not in DIAGONALS:
        raise ValueError(f"diagonal must be one of {DIAGONALS}, got {diagonal!r}")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(s, s)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    if diagonal == "up":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v01])
        upper = np.column_stack([v10, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    k = np.arange(n)
    bottom = np.column_stack([k, k + 1])
    right = np.column_stack([k * (n + 1) + n, (k + 1) * (n + 1) + n])
    top = np.column_stack([n * (n + 1) + k + 1, n * (n + 1) + k])
    left = np.column_stack([(k + 1) * (n + 1), k * (n + 1)])
    edges = np.vstack([bottom, right, top, left])
    return Mesh(vertices, triangles, edges, np.full(len(edges), DIRICHLET))


def mesh_geometry(mesh: Mesh):
    """Vectorised geometry for every element.

    Returns
    -------
    area : (nt,) array
    diameter : (nt,) array, longest edge
    grads : (nt, 3, 2) array of barycentric gradients
    """
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    twice = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grads = np.empty(p.shape[:1] + (3, 2))
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, a] - y[:, b]) / twice
        grads[:, i, 1] = (x[:, b] - x[:, a]) / twice
    edges = p[:, [1, 2, 0]] - p
    diameter = np.sqrt((edges**2).sum(axis=2)).max(axis=1)
    return 0.5 * twice, diameter, grads


def element_geometry(mesh: Mesh, t: int) -> ElementGeometry:
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    return triangle_geometry(mesh.vertices[mesh.triangles[t]])


def triangle_geometry(p) -> ElementGeometry:
    """Geometry of a single triangle given its (3, 2) vertex coordinates."""
    p = np.asarray(p, dtype=float)
    x, y = p[:, 0], p[:, 1]
    twice = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    if not twice > 0.0:
        raise MeshError(f"degenerate or inverted triangle (signed area {0.5 * twice:g})")
    grads = np.empty((3, 2))
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        grads[i] = ((y[a] - y[b]) / twice, (x[b] - x[a]) / twice)
    diameter = max(np.hypot(*(p[(i + 1) % 3] - p[i])) for i in range(3))
    return ElementGeometry(float(0.5 * twice), float(diameter), grads)


def edge_counts(mesh: Mesh) -> dict[tuple[int, int], int]:
    """Number of triangles sharing each (sorted) edge."""
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(min(a, b)), int(max(a, b)))
            counts[key] = counts.get(key, 0) + 1
    return counts


def write_mesh_text(mesh: Mesh, stem) -> tuple[Path, Path]:
    """Write ``<stem>.nodes`` ("x y" per line) and ``<stem>.elements`` ("i j k", 0-based)."""
    stem = Path(stem)
    nodes = stem.with_suffix(".nodes")
    elements = stem.with_suffix(".elements")
    nodes.write_text("".join(f"{x!r} {y!r}\n" for x, y in mesh.vertices.tolist()))
    elements.write_text("".join(f"{i} {j} {k}\n" for i, j, k in mesh.triangles.tolist()))
    return nodes, elements


def read_mesh_text(stem) -> tuple[np.ndarray, np.ndarray]:
    stem = Path(stem)
    vertices = np.loadtxt(stem.with_suffix(".nodes"), ndmin=2)
    triangles = np.loadtxt(stem.with_suffix(".elements"), dtype=np.int64, ndmin=2)
    return vertices, triangles

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import gradient_energy, l2_energy, single_element_mesh
from ddfem.assembly import (
    ProblemSpec,
    apply_dirichlet,
    assemble_B,
    assemble_dd_matrix,
    constant,
    constant_vector,
    local_stiffness,
)
from ddfem.dd import solve_with_xi
from ddfem.mesh import generate_uniform_mesh, mesh_geometry
from ddfem.spaces import DofMap, FieldCoefficients

UNIT = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]


def full_matrix(problem, mesh):
    return assemble_B(problem, mesh).matrix.toarray()


def test_local_stiffness_unit_triangle():
    A = full_matrix(ProblemSpec(epsilon=1.0), single_element_mesh(UNIT))
    expected = [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]]
    assert np.allclose(A[:3, :3], expected, atol=1e-14)


def test_local_mass_unit_triangle():
    mesh = single_element_mesh(UNIT)
    with_mass = full_matrix(ProblemSpec(epsilon=1.0, sigma=constant(1.0)), mesh)
    without = full_matrix(ProblemSpec(epsilon=1.0), mesh)
    expected = 0.5 / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    assert np.allclose((with_mass - without)[:3, :3], expected, atol=1e-15)


def test_bubble_p1_diffusion_coupling_vanishes():
    mesh = generate_uniform_mesh(3, "down")
    A = full_matrix(ProblemSpec(epsilon=2.5), mesh)
    nv = mesh.n_vertices
    assert np.max(np.abs(A[:nv, nv:])) <= 1e-14
    assert np.max(np.abs(A[nv:, :nv])) <= 1e-14


def test_dd_matrix_examples():
    mesh = generate_uniform_mesh(3)
    assert assemble_dd_matrix(np.zeros(mesh.n_triangles), mesh).count_nonzero() == 0
    ones = assemble_dd_matrix(np.ones(mesh.n_triangles), mesh).toarray()
    assert np.allclose(ones, full_matrix(ProblemSpec(epsilon=1.0), mesh), atol=1e-13)


@pytest.mark.parametrize("bad", [-1e-3, np.nan, np.inf])
def test_dd_matrix_rejects_bad_values(bad):
    mesh = generate_uniform_mesh(2)
    xi = np.zeros(mesh.n_triangles)
    xi[3] = bad
    with pytest.raises(ValueError):
        assemble_dd_matrix(xi, mesh)


def test_dd_matrix_rejects_wrong_length():
    with pytest.raises(ValueError):
        assemble_dd_matrix(np.zeros(3), generate_uniform_mesh(2))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 4), diagonal=st.sampled_from(["up", "down"]), seed=st.integers(0, 2**32 - 1))
def test_dd_quadratic_form_matches_oracle(n, diagonal, seed):
    rng = np.random.default_rng(seed)
    mesh = generate_uniform_mesh(n, diagonal)
    _, h, _ = mesh_geometry(mesh)
    xi = rng.uniform(0, 1, mesh.n_triangles) * h
    v = rng.standard_normal(mesh.n_vertices + mesh.n_triangles)
    A = assemble_dd_matrix(xi, mesh)
    got = v @ (A @ v)
    ref = sum(
        xi[t] * gradient_energy(mesh.vertices[tri], v[tri], v[mesh.n_vertices + t])
        for t, tri in enumerate(mesh.triangles)
    )
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-14)
    assert got >= -1e-12 * max(1.0, abs(ref))
    assert abs(A - A.T).max() <= 1e-14


velocities = st.tuples(st.floats(-5, 5), st.floats(-5, 5))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 4),
    diagonal=st.sampled_from(["up", "down"]),
    eps=st.floats(1e-6, 10),
    beta=velocities,
    rot=st.floats(-3, 3),
    sigma=st.floats(0, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_coercivity(n, diagonal, eps, beta, rot, sigma, seed):
    """v^T (A_B + A_DD) v >= eps |v|_1^2 + gamma ||v||_0^2 for v vanishing on the boundary."""
    rng = np.random.default_rng(seed)

    def velocity(x, y):  # constant part plus a divergence-free rotation
        return beta[0] + rot * (y - 0.5), beta[1] - rot * (x - 0.5)

    problem = ProblemSpec(epsilon=eps, beta=velocity, sigma=constant(sigma))
    mesh = generate_uniform_mesh(n, diagonal)
    dofs = DofMap.build(mesh)
    _, h, _ = mesh_geometry(mesh)
    xi = rng.uniform(0, 1, mesh.n_triangles) * h
    reduced = apply_dirichlet(assemble_B(problem, mesh, dofs))
    A = reduced.matrix + apply_dirichlet(
        type(reduced)(assemble_dd_matrix(xi, mesh, dofs), np.zeros(dofs.full_size), dofs)
    ).matrix
    x = rng.standard_normal(dofs.total_dofs)
    w = FieldCoefficients.from_free_vector(x, dofs)
    gamma = problem.coercivity_constant(mesh)
    assert gamma == pytest.approx(sigma, abs=1e-8)
    h1 = sum(gradient_energy(mesh.vertices[t], w.nodal[t], w.bubble[i]) for i, t in enumerate(mesh.triangles))
    l2 = sum(l2_energy(mesh.vertices[t], w.nodal[t], w.bubble[i]) for i, t in enumerate(mesh.triangles))
    lhs = x @ (A @ x)
    rhs = eps * h1 + gamma * l2
    scale = (eps + 5 + sigma + 1) * (h1 + l2 + 1)
    assert lhs >= rhs - 1e-10 * scale


def test_coercivity_constant_with_divergence():
    problem = ProblemSpec(epsilon=1.0, beta=lambda x, y: (2 * x, 0 * y), sigma=constant(3.0))
    assert problem.coercivity_constant(generate_uniform_mesh(2)) == pytest.approx(2.0, abs=1e-6)
    clamped = ProblemSpec(epsilon=1.0, beta=lambda x, y: (2 * x, 0 * y))
    assert clamped.coercivity_constant(generate_uniform_mesh(2)) == 0.0
    assert ProblemSpec(epsilon=1.0, gamma=0.25).coercivity_constant(generate_uniform_mesh(1)) == 0.25


@pytest.mark.parametrize("bad", [dict(epsilon=0.0), dict(epsilon=-1.0), dict(epsilon=1.0, gamma=-1.0)])
def test_problem_validation(bad):
    with pytest.raises(ValueError):
        ProblemSpec(**bad)


def test_homogeneous_reduction_is_restriction():
    problem = ProblemSpec(epsilon=0.3, beta=constant_vector(1, 2), sigma=constant(1), f=constant(1))
    mesh = generate_uniform_mesh(4)
    full = assemble_B(problem, mesh)
    red = apply_dirichlet(full)
    idx = full.dofs.full_index
    assert np.array_equal(red.matrix.toarray(), full.matrix.toarray()[np.ix_(idx, idx)])
    assert np.array_equal(red.rhs, full.rhs[idx])
    with pytest.raises(ValueError):
        apply_dirichlet(red)


def test_missing_boundary_value_rejected():
    mesh = generate_uniform_mesh(2)
    system = assemble_B(ProblemSpec(epsilon=1.0), mesh)
    lift = np.zeros(mesh.n_vertices)
    lift[0] = np.nan
    with pytest.raises(ValueError, match="Dirichlet"):
        apply_dirichlet(system, lift)


def test_constant_lift_reproduced():
    c = 2.5
    problem = ProblemSpec(
        epsilon=0.01, beta=constant_vector(1, 0.5), sigma=constant(2.0), f=constant(2.0 * c), dirichlet=constant(c)
    )
    mesh = generate_uniform_mesh(4)
    u = solve_with_xi(problem, mesh, np.zeros(mesh.n_triangles))
    assert np.allclose(u.nodal, c, atol=1e-12)
    assert np.allclose(u.bubble, 0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    coef=st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
    eps=st.floats(1e-6, 10),
    beta=velocities,
    sigma=st.floats(0, 3),
    n=st.integers(1, 5),
)
def test_galerkin_reproduces_linear_solutions(coef, eps, beta, sigma, n):
    a, b, c = coef

    def exact(x, y):
        return a + b * x + c * y

    problem = ProblemSpec(
        epsilon=eps,
        beta=constant_vector(*beta),
        sigma=constant(sigma),
        f=lambda x, y: beta[0] * b + beta[1] * c + sigma * exact(x, y),
        dirichlet=exact,
    )
    mesh = generate_uniform_mesh(n)
    u = solve_with_xi(problem, mesh, np.zeros(mesh.n_triangles))
    x, y = mesh.vertices.T
    assert np.allclose(u.nodal, exact(x, y), atol=1e-10)
    assert np.allclose(u.bubble, 0, atol=1e-10)


def test_neumann_edge_contribution():
    """u = 1 + x with eps du/dn = eps on x = 1 and Dirichlet data elsewhere."""
    eps = 0.7
    problem = ProblemSpec(
        epsilon=eps,
        g=constant(eps),
        neumann=lambda x, y: x > 1 - 1e-12,
        dirichlet=lambda x, y: 1 + x,
    )
    mesh = generate_uniform_mesh(4)
    u = solve_with_xi(problem, mesh, np.zeros(mesh.n_triangles))
    assert np.allclose(u.nodal, 1 + mesh.vertices[:, 0], atol=1e-12)
    assert len(DofMap.build(problem.prepare_mesh(mesh)).free_vertices) == 9 + 3


def test_neumann_load_integrates_trace():
    problem = ProblemSpec(epsilon=1.0, g=lambda x, y: y**2, neumann=lambda x, y: x > 1 - 1e-12)
    mesh = problem.prepare_mesh(generate_uniform_mesh(3))
    rhs = assemble_B(problem, mesh).rhs
    # the hat functions on x = 1 sum to one, so the loads add up to int_0^1 y^2 dy
    assert rhs[: mesh.n_vertices].sum() == pytest.approx(1 / 3, rel=1e-13)


def test_single_cell_mesh_keeps_only_bubbles():
    mesh = generate_uniform_mesh(1)
    problem = ProblemSpec(epsilon=1.0, f=constant(1.0))
    red = apply_dirichlet(assemble_B(problem, mesh))
    assert red.matrix.shape == (2, 2)
    u = solve_with_xi(problem, mesh, np.zeros(2))
    assert np.all(u.nodal == 0)
    assert np.all(u.bubble > 0)


def test_non_finite_coefficients_rejected():
    problem = ProblemSpec(epsilon=1.0, f=lambda x, y: np.full(np.shape(x), np.nan))
    with pytest.raises(FloatingPointError):
        assemble_B(problem, generate_uniform_mesh(2))


def test_local_stiffness_matches_oracle():
    mesh = generate_uniform_mesh(2, "down")
    K = local_stiffness(mesh)
    rng = np.random.default_rng(5)
    for t, tri in enumerate(mesh.triangles):
        c = rng.standard_normal(4)
        ref = gradient_energy(mesh.vertices[tri], c[:3], c[3])
        assert c @ K[t] @ c == pytest.approx(ref, rel=1e-13)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastqmc.fem import (AssemblyError, DofMap, FeFunction, VectorField, _local_blocks,
                          assemble, assemble_load, broken_norms,
                          export_function, export_matrix, form_value, functional_average_u2,
                          midpoint_jumps, project_cr)
from elastqmc.fields import FieldSpec, constant_sample, sample_fields
from elastqmc.mesh import TriMesh, make_structured_mesh, refine_family, refine_uniform
from elastqmc.quadrature import triangle_rule
from oracles import smooth_form_values


def _mesh(n=4, seed=1):
    return make_structured_mesh(n=n, perturb=0.15, seed=seed, n_crossed=2)


def _random_sample(seed=0, Lambda=10.0):
    rng = np.random.default_rng(seed)
    spec = FieldSpec(mu0="const:1.6", lambda_hat0="one", Lambda=Lambda, n_diag=4)
    y, z = rng.uniform(-0.5, 0.5, (2, 10))
    return sample_fields(spec, y, z, M=32, M_grad=64, check_gradient=False)


def _random_function(dm, seed):
    return FeFunction(dm, np.random.default_rng(seed).standard_normal(dm.n_dofs))


def _load(x1, x2):
    return 1 - x2**2, 2 * x1 - 20 + 0 * x2


def _duffy_rule(n):
    # collapsed tensor Gauss rule on the reference triangle, barycentric output
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = (t + 1) / 2, w / 2
    a, b = np.meshgrid(t, t, indexing="ij")
    wa, wb = np.meshgrid(w, w, indexing="ij")
    x, y = a, b * (1 - a)
    wt = (wa * wb * (1 - a)).ravel() * 2        # normalised to sum 1
    return np.stack([1 - x.ravel() - y.ravel(), x.ravel(), y.ravel()], axis=1), wt


@pytest.mark.parametrize("space", ["cr", "p1"])
def test_matrix_exactly_symmetric(space):
    A = assemble(_mesh(), _random_sample(), space).matrix
    assert abs(A - A.T).max() == 0.0


def test_constant_mu_has_no_gradient_term():
    mesh = _mesh()
    dm = DofMap.build(mesh, "cr")
    blocks = _local_blocks(dm, constant_sample(2.0, Lambda=3.0), 4)
    # with grad mu = 0 the block is the mu-Laplacian plus (mu+lam) div-div, by hand
    G = dm.basis_gradients()
    areas = mesh.signed_areas()
    expect = np.zeros((mesh.n_triangles, 3, 2, 3, 2))
    for t in range(mesh.n_triangles):
        for a in range(3):
            for b in range(3):
                for c in range(2):
                    for d in range(2):
                        v = 5.0 * G[t, a, c] * G[t, b, d]
                        if c == d:
                            v += 2.0 * G[t, a] @ G[t, b]
                        expect[t, a, c, b, d] = areas[t] * v
    np.testing.assert_allclose(blocks, expect.reshape(-1, 6, 6), atol=1e-12)


def test_reference_element_cr_block():
    mesh = TriMesh.from_triangles(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]))
    blocks = _local_blocks(DofMap.build(mesh, "cr"), constant_sample(1.0, 1.0, 0.0), 2)
    expect = np.array([[6, 2, -4, 0, -2, -2],
                       [2, 6, -2, -2, 0, -4],
                       [-4, -2, 4, 0, 0, 2],
                       [0, -2, 0, 2, 0, 0],
                       [-2, 0, 0, 0, 2, 0],
                       [-2, -4, 2, 0, 0, 4]], dtype=float)
    np.testing.assert_allclose(blocks[0], expect, atol=1e-14)


def _textbook_p1(mesh, mu_fn, lam):
    """Standard P1 elasticity stiffness (2 mu eps:eps + lam div div) in Voigt form."""
    from scipy.sparse import coo_matrix
    bnd = mesh.boundary_vertices()
    free = -np.ones(mesh.n_vertices, dtype=int)
    free[~bnd] = np.arange((~bnd).sum())
    n = 2 * int((~bnd).sum())
    rows, cols, vals = [], [], []
    for tri in mesh.triangles:
        p = mesh.vertices[tri]
        J = np.array([p[1] - p[0], p[2] - p[0]]).T
        area = 0.5 * np.linalg.det(J)
        dref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        grads = dref @ np.linalg.inv(J)
        mu = mu_fn(*p.mean(axis=0))
        B = np.zeros((3, 6))
        for a in range(3):
            B[0, 2 * a] = grads[a, 0]
            B[1, 2 * a + 1] = grads[a, 1]
            B[2, 2 * a] = grads[a, 1]
            B[2, 2 * a + 1] = grads[a, 0]
        D = np.array([[2 * mu + lam, lam, 0], [lam, 2 * mu + lam, 0], [0, 0, mu]])
        K = area * B.T @ D @ B
        dofs = [2 * free[v] + c if free[v] >= 0 else -1 for v in tri for c in range(2)]
        for i in range(6):
            for j in range(6):
                if dofs[i] >= 0 and dofs[j] >= 0:
                    rows.append(dofs[i])
                    cols.append(dofs[j])
                    vals.append(K[i, j])
    return coo_matrix((vals, (rows, cols)), shape=(n, n)).toarray()


def test_p1_matches_textbook_elasticity_with_affine_mu():
    # on H^1_0 the symmetric form coincides with 2 mu eps:eps + lam div div
    mesh = _mesh(5, seed=7)
    A = assemble(mesh, constant_sample("affine", Lambda=4.0), "p1").matrix.toarray()
    ref = _textbook_p1(mesh, lambda x1, x2: 1 + x1 + x2, 4.0)
    np.testing.assert_allclose(A, ref, atol=1e-12 * np.abs(ref).max())


def test_symmetric_form_equals_strain_form_on_smooth_fields():
    bhat, b, plain = smooth_form_values()
    assert abs(bhat - b) <= 1e-6 * abs(b)
    # without the gradient term the two differ
    assert abs(plain - b) > 1e-3


@pytest.mark.parametrize("space", ["cr", "p1"])
def test_form_value_matches_matrix(space):
    mesh = _mesh()
    sample = _random_sample(3)
    A = assemble(mesh, sample, space).matrix
    dm = DofMap.build(mesh, space)
    u, v = _random_function(dm, 1), _random_function(dm, 2)
    assert form_value(u, v, sample) == pytest.approx(v.coeffs @ (A @ u.coeffs), rel=1e-12)


def test_coercive_on_random_sample():
    mesh = _mesh(3)
    for space in ("cr", "p1"):
        A = assemble(mesh, _random_sample(5, Lambda=1000.0), space).matrix.toarray()
        assert np.linalg.eigvalsh(A).min() > 0


def test_quadrature_degree_minimum():
    with pytest.raises(AssemblyError):
        assemble(_mesh(), constant_sample(), quad_degree=1)


def test_nonfinite_coefficients_rejected():
    class Bad:
        def evaluate(self, x1, x2):
            return np.full(x1.shape, np.nan), 1.0, 0.0, 0.0

    with pytest.raises(AssemblyError):
        assemble(_mesh(), Bad())


@pytest.mark.parametrize("space", ["cr", "p1"])
def test_zero_load(space):
    mesh = _mesh()
    sys = assemble(mesh, constant_sample(), space, f=lambda x1, x2: (0 * x1, 0 * x2))
    np.testing.assert_array_equal(sys.rhs, 0.0)


@pytest.mark.parametrize("space", ["cr", "p1"])
def test_constant_load_gives_third_of_area(space):
    mesh = _mesh()
    dm = DofMap.build(mesh, space)
    rhs = assemble_load(mesh, lambda x1, x2: (1 + 0 * x1, 0 * x2), dm)
    expect = np.zeros(dm.n_dofs)
    for t, nodes in enumerate(dm.node_of_local):
        for node in nodes:
            if dm.free_index[node] >= 0:
                expect[2 * dm.free_index[node]] += mesh.signed_areas()[t] / 3
    np.testing.assert_allclose(rhs, expect, atol=1e-15)


@pytest.mark.parametrize("space", ["cr", "p1"])
def test_load_matches_collapsed_gauss_oracle(space):
    mesh = _mesh()
    dm = DofMap.build(mesh, space)
    bary, w = _duffy_rule(8)
    phi = dm.basis_values(bary)
    X = np.einsum("qi,tic->tqc", bary, mesh.vertices[mesh.triangles])
    f = np.stack(_load(X[..., 0], X[..., 1]), axis=-1)
    local = np.einsum("q,t,qa,tqc->tac", w, mesh.signed_areas(), phi, f).reshape(-1, 6)
    dofs = dm.local_dofs()
    ref = np.zeros(dm.n_dofs)
    np.add.at(ref, dofs[dofs >= 0], local[dofs >= 0])
    np.testing.assert_allclose(assemble_load(mesh, _load, dm), ref, atol=1e-10)


@pytest.mark.parametrize("space", ["cr", "p1"])
def test_functional_is_integral_of_u2(space):
    mesh = _mesh()
    u = _random_function(DofMap.build(mesh, space), 4)
    bary, w = triangle_rule(2)
    vals = u.values_at(bary)[..., 1]
    expect = np.sum(w[None, :] * mesh.signed_areas()[:, None] * vals)
    assert functional_average_u2(u) == pytest.approx(expect, rel=1e-13)


def test_functional_of_zero_and_single_node():
    mesh = make_structured_mesh(n=2)
    dm = DofMap.build(mesh, "cr")
    assert functional_average_u2(FeFunction.zeros(dm)) == 0.0
    c = np.zeros(dm.n_dofs)
    c[1] = 1.0
    # a CR basis function integrates to (|K1| + |K2|) / 3
    node = dm.free_nodes[0]
    tris = [t for t in range(mesh.n_triangles) if node in dm.node_of_local[t]]
    assert functional_average_u2(FeFunction(dm, c)) == pytest.approx(
        mesh.signed_areas()[tris].sum() / 3, rel=1e-14)


def test_projection_reproduces_affine_fields_at_interior_midpoints():
    mesh = _mesh()
    u = project_cr(mesh, lambda x1, x2: (1 + 2 * x1 - x2, 3 * x2 - 0.5))
    mids = mesh.edge_midpoints[u.dofmap.free_nodes]
    expect = np.stack([1 + 2 * mids[:, 0] - mids[:, 1], 3 * mids[:, 1] - 0.5], axis=1)
    np.testing.assert_allclose(u.node_values()[u.dofmap.free_nodes], expect, atol=1e-13)


def _curl_field(x1, x2):
    # curl of psi = x1^2 (1-x1)^2 x2^2 (1-x2)^2; vanishes on the boundary
    a, b = x1**2 * (1 - x1) ** 2, x2**2 * (1 - x2) ** 2
    da, db = 2 * x1 * (1 - x1) * (1 - 2 * x1), 2 * x2 * (1 - x2) * (1 - 2 * x2)
    return np.stack([a * db, -da * b])


def test_projection_preserves_divergence_free_fields():
    mesh = _mesh(6)
    u = project_cr(mesh, _curl_field)
    g = u.gradients()
    np.testing.assert_allclose(g[:, 0, 0] + g[:, 1, 1], 0.0, atol=1e-12)


def test_projection_preserves_elementwise_divergence_mean():
    mesh = _mesh(5)
    def v(x1, x2):
        return np.stack([np.sin(np.pi * x1) * x2 * (1 - x2), x1 * (1 - x1) * x2**2 * (1 - x2)])
    u = project_cr(mesh, v, n_gauss=8)
    g = u.gradients()
    div_h = g[:, 0, 0] + g[:, 1, 1]
    bary, w = _duffy_rule(12)
    X = np.einsum("qi,tic->tqc", bary, mesh.vertices[mesh.triangles])
    x1, x2 = X[..., 0], X[..., 1]
    div = np.pi * np.cos(np.pi * x1) * x2 * (1 - x2) + x1 * (1 - x1) * (2 * x2 - 3 * x2**2)
    np.testing.assert_allclose(div_h, div @ w, atol=1e-12)


def test_projection_requires_cr_map():
    mesh = _mesh()
    with pytest.raises(ValueError):
        project_cr(mesh, _curl_field, dofmap=DofMap.build(mesh, "p1"))


def test_norms_of_zero_function():
    dm = DofMap.build(_mesh(), "cr")
    out = broken_norms(FeFunction.zeros(dm), sample=constant_sample())
    assert out == {"l2": 0.0, "h1": 0.0, "energy": 0.0}


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), space=st.sampled_from(["cr", "p1"]))
def test_broken_poincare_and_divergence_bound(seed, space):
    mesh = _mesh(4)
    u = _random_function(DofMap.build(mesh, space), seed)
    n = broken_norms(u, sample=constant_sample(1.0, 1.0, 0.0))
    assert n["l2"] <= n["h1"]
    # energy^2 = |grad|^2 + |div|^2 and |div|^2 <= 2 |grad|^2
    assert n["h1"] <= n["energy"] <= np.sqrt(3) * n["h1"] * (1 + 1e-12)


def test_projection_error_rates():
    exact = VectorField(
        lambda x1, x2: np.stack([np.sin(np.pi * x1) * np.sin(np.pi * x2),
                                 x1 * (1 - x1) * np.sin(2 * np.pi * x2)]),
        lambda x1, x2: np.array([
            [np.pi * np.cos(np.pi * x1) * np.sin(np.pi * x2),
             np.pi * np.sin(np.pi * x1) * np.cos(np.pi * x2)],
            [(1 - 2 * x1) * np.sin(2 * np.pi * x2),
             2 * np.pi * x1 * (1 - x1) * np.cos(2 * np.pi * x2)]]))
    fam = refine_family(make_structured_mesh(n=4, perturb=0.1, seed=2), 4)
    errs = [broken_norms(project_cr(m, exact.value), exact) for m in fam]
    l2 = [e["l2"] for e in errs]
    h1 = [e["h1"] for e in errs]
    assert np.log2(l2[-2] / l2[-1]) >= 1.9
    assert 0.95 <= np.log2(h1[-2] / h1[-1]) <= 1.05


def test_cr_functions_are_continuous_at_midpoints_only():
    u = _random_function(DofMap.build(_mesh(), "cr"), 9)
    assert midpoint_jumps(u) < 1e-13
    assert midpoint_jumps(u, at="endpoints") > 1e-3


def test_p1_functions_are_continuous():
    u = _random_function(DofMap.build(_mesh(), "p1"), 9)
    assert midpoint_jumps(u) == 0.0
    assert midpoint_jumps(u, at="endpoints") == 0.0


def test_jump_checker_sees_broken_function():
    mesh = _mesh()
    dm = DofMap.build(mesh, "cr")
    u = _random_function(dm, 1)

    class Broken(FeFunction):
        def vertex_values(self):
            v = super().vertex_values().copy()
            v[0, 0, 0] += 1.0
            return v

    assert midpoint_jumps(Broken(dm, u.coeffs)) >= 0.5 - 1e-12


def test_vertex_values_reproduce_linear_function():
    mesh = refine_uniform(_mesh(3))
    u = project_cr(mesh, lambda x1, x2: np.stack([x1 + 2 * x2, 3 - x1]))
    V = u.vertex_values()
    P = mesh.vertices[mesh.triangles]
    interior = ~mesh.edge_is_boundary[mesh.triangle_edges].any(axis=1)
    np.testing.assert_allclose(V[interior, :, 0], (P[..., 0] + 2 * P[..., 1])[interior],
                               atol=1e-12)


def test_exports(tmp_path):
    mesh = make_structured_mesh(n=3)
    sys = assemble(mesh, constant_sample(), "cr")
    export_matrix(sys, tmp_path / "A.txt")
    lines = (tmp_path / "A.txt").read_text().splitlines()
    n, m, nnz = map(int, lines[0].split())
    assert n == m == sys.dofmap.n_dofs and nnz == len(lines) - 1 == sys.matrix.nnz
    r, c, v = lines[1].split()
    assert float(v) == sys.matrix[int(r), int(c)]
    u = _random_function(sys.dofmap, 0)
    export_function(u, tmp_path / "u.csv")
    rows = (tmp_path / "u.csv").read_text().splitlines()
    assert rows[0] == "node,x1,x2,u1,u2" and len(rows) == mesh.n_edges + 1


def test_functional_of_unit_second_component_is_area():
    mesh = make_structured_mesh(((0.0, 2.0), (0.0, 1.5)), n=3, perturb=0.2, seed=4)
    every = np.arange(mesh.n_edges)
    dm = DofMap(mesh, "cr", mesh.triangle_edges, every, every)     # no constrained nodes
    c = np.zeros(dm.n_dofs)
    c[1::2] = 1.0
    assert functional_average_u2(FeFunction(dm, c)) == pytest.approx(3.0, rel=1e-14)

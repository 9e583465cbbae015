"""Piecewise-linear vector elements for the symmetric elasticity form.

Two spaces share one assembly path:

* ``"cr"``: Crouzeix-Raviart, one node per edge midpoint, boundary midpoints
  constrained to zero;
* ``"p1"``: conforming Lagrange, one node per vertex, boundary vertices
  constrained to zero.

Both carry two displacement components per node; global scalar dof
``2 * free_node + component``.

The assembled form is

    B(u, v) = sum_K int_K  mu grad u : grad v + (mu + lam) div u div v
                         + grad mu . (K[u1] v2 + K[v1] u2),

with ``K[g] = (-dg/dx2, dg/dx1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh
from .quadrature import gauss_legendre_01, triangle_rule

__all__ = ["SPACES", "DofMap", "FemSystem", "FeFunction", "VectorField", "AssemblyError",
           "barycentric_gradients", "assemble", "assemble_load", "functional_average_u2",
           "project_cr", "broken_norms", "midpoint_jumps", "form_value",
           "bhat_density", "b_density", "export_matrix", "export_function"]

SPACES = ("cr", "p1")


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class VectorField:
    """Closed-form vector field: ``value(x1, x2) -> (2, ...)``, ``grad -> (2, 2, ...)``.

    ``grad[i][j]`` is the derivative of component ``i`` with respect to ``x_j``.
    """

    value: callable
    grad: callable | None = None


# --- dof bookkeeping -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: TriMesh
    kind: str
    node_of_local: np.ndarray   # (n_t, 3) global node (edge or vertex) id per local node
    free_index: np.ndarray      # (n_nodes,) free node number or -1
    free_nodes: np.ndarray      # (n_free,) node ids

    @classmethod
    def build(cls, mesh: TriMesh, kind: str) -> "DofMap":
        if kind == "cr":
            local = mesh.triangle_edges
            constrained = mesh.edge_is_boundary
        elif kind == "p1":
            local = mesh.triangles
            constrained = mesh.boundary_vertices()
        else:
            raise ValueError(f"unknown space {kind!r}; expected one of {SPACES}")
        free_nodes = np.flatnonzero(~constrained)
        free_index = -np.ones(len(constrained), dtype=np.int64)
        free_index[free_nodes] = np.arange(len(free_nodes))
        return cls(mesh, kind, local, free_index, free_nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.free_index)

    @property
    def n_free(self) -> int:
        return len(self.free_nodes)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_free

    def local_dofs(self) -> np.ndarray:
        """(n_t, 6) global scalar dofs in local order ``2*a + c``; -1 where constrained."""
        f = self.free_index[self.node_of_local]                      # (n_t, 3)
        d = np.stack([2 * f, 2 * f + 1], axis=-1)
        d[f < 0] = -1
        return d.reshape(len(f), 6)

    def basis_values(self, bary: np.ndarray) -> np.ndarray:
        """Local basis at barycentric points, shape (n_q, 3)."""
        return 1.0 - 2.0 * bary if self.kind == "cr" else bary.copy()

    def basis_gradients(self) -> np.ndarray:
        """(n_t, 3, 2) constant gradients of the local basis."""
        g = barycentric_gradients(self.mesh)
        return -2.0 * g if self.kind == "cr" else g


def barycentric_gradients(mesh: TriMesh) -> np.ndarray:
    """(n_t, 3, 2) gradients of the barycentric coordinates."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2.0 * mesh.signed_areas()
    g = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        g[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    return g / area2[:, None, None]


def _quad_points(mesh: TriMesh, bary: np.ndarray) -> np.ndarray:
    """Physical quadrature points, (n_t, n_q, 2)."""
    return np.einsum("qi,tic->tqc", bary, mesh.vertices[mesh.triangles])


# --- functions -------------------------------------------------------------------------

@dataclass(eq=False)
class FeFunction:
    dofmap: DofMap
    coeffs: np.ndarray

    @classmethod
    def zeros(cls, dofmap: DofMap) -> "FeFunction":
        return cls(dofmap, np.zeros(dofmap.n_dofs))

    def node_values(self) -> np.ndarray:
        """(n_nodes, 2) values at every node, constrained ones zero."""
        out = np.zeros((self.dofmap.n_nodes, 2))
        out[self.dofmap.free_nodes] = self.coeffs.reshape(-1, 2)
        return out

    def local_values(self) -> np.ndarray:
        """(n_t, 3, 2) nodal values per triangle."""
        return self.node_values()[self.dofmap.node_of_local]

    def vertex_values(self) -> np.ndarray:
        """(n_t, 3, 2) values at the triangle's own vertices (discontinuous for CR)."""
        U = self.local_values()
        if self.dofmap.kind == "p1":
            return U
        return U.sum(axis=1, keepdims=True) - 2.0 * U

    def gradients(self) -> np.ndarray:
        """(n_t, 2, 2) per-triangle gradient, ``[t, i, j] = d u_i / d x_j``."""
        return np.einsum("tac,taj->tcj", self.local_values(), self.dofmap.basis_gradients())

    def values_at(self, bary: np.ndarray) -> np.ndarray:
        """(n_t, n_q, 2) values at barycentric points."""
        return np.einsum("qa,tac->tqc", self.dofmap.basis_values(bary), self.local_values())


# --- assembly --------------------------------------------------------------------------

@dataclass(eq=False)
class FemSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    quad_degree: int
    sample_id: str = ""
    meta: dict = field(default_factory=dict)


def _coefficients(sample, X):
    vals = sample.evaluate(X[..., 0], X[..., 1])
    mu, lam, g1, g2 = (np.broadcast_to(np.asarray(v, dtype=float), X.shape[:-1]) for v in vals)
    for name, v in (("mu", mu), ("lambda", lam), ("grad mu", g1), ("grad mu", g2)):
        if not np.all(np.isfinite(v)):
            raise AssemblyError(f"non-finite {name} at quadrature points")
    return mu, lam, g1, g2


def _local_blocks(dofmap: DofMap, sample, quad_degree: int) -> np.ndarray:
    mesh = dofmap.mesh
    bary, w = triangle_rule(quad_degree)
    X = _quad_points(mesh, bary)
    mu, lam, g1, g2 = _coefficients(sample, X)
    wA = w[None, :] * mesh.signed_areas()[:, None]                 # (n_t, n_q)
    phi = dofmap.basis_values(bary)                                 # (n_q, 3)
    G = dofmap.basis_gradients()                                    # (n_t, 3, 2)

    i_mu = np.sum(wA * mu, axis=1)
    i_ml = np.sum(wA * (mu + lam), axis=1)
    # grad mu . K[g] = t . grad g with t = (dmu/dx2, -dmu/dx1)
    T = np.einsum("tq,qb,tqc->tbc", wA, phi, np.stack([g2, -g1], axis=-1))
    X_ab = np.einsum("tac,tbc->tab", G, T)                          # int (t . grad phi_a) phi_b
    GG = np.einsum("tac,tbc->tab", G, G)

    A = np.zeros((mesh.n_triangles, 3, 2, 3, 2))
    for c in range(2):
        A[:, :, c, :, c] += i_mu[:, None, None] * GG
    A += i_ml[:, None, None, None, None] * np.einsum("tac,tbd->tacbd", G, G)
    # test v = phi_a e_c, trial u = phi_b e_d: term (t.grad u1) v2 + (t.grad v1) u2
    A[:, :, 1, :, 0] += np.swapaxes(X_ab, 1, 2)
    A[:, :, 0, :, 1] += X_ab
    A = A.reshape(-1, 6, 6)
    return 0.5 * (A + np.swapaxes(A, 1, 2))


def _scatter(dofmap: DofMap, blocks: np.ndarray) -> sp.csr_matrix:
    dofs = dofmap.local_dofs()
    rows = np.broadcast_to(dofs[:, :, None], blocks.shape)
    cols = np.broadcast_to(dofs[:, None, :], blocks.shape)
    keep = (rows >= 0) & (cols >= 0)
    n = dofmap.n_dofs
    full = sp.coo_matrix((blocks[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    full.sum_duplicates()
    upper = sp.triu(full, format="csr")
    return (upper + sp.triu(full, k=1, format="csr").T).tocsr()


def assemble(mesh: TriMesh, sample, space: str = "cr", f=None, quad_degree: int = 4,
             sample_id: str = "", dofmap: DofMap | None = None) -> FemSystem:
    """Assemble matrix and (optionally) load vector on the free dofs of ``space``.

    The matrix is exactly symmetric: it is rebuilt from its upper triangle.
    """
    if quad_degree < 2:
        raise AssemblyError(f"quadrature degree {quad_degree} below the minimum 2")
    dm = dofmap if dofmap is not None else DofMap.build(mesh, space)
    A = _scatter(dm, _local_blocks(dm, sample, quad_degree))
    rhs = assemble_load(mesh, f, dm, quad_degree) if f is not None else np.zeros(dm.n_dofs)
    return FemSystem(A, rhs, dm, quad_degree, sample_id)


def assemble_load(mesh: TriMesh, f, dofmap: DofMap, quad_degree: int = 4) -> np.ndarray:
    """Load vector ``int f . phi_i`` for a closed-form ``f(x1, x2) -> (f1, f2)``."""
    bary, w = triangle_rule(quad_degree)
    X = _quad_points(mesh, bary)
    fx = np.stack([np.broadcast_to(np.asarray(c, dtype=float), X.shape[:-1])
                   for c in f(X[..., 0], X[..., 1])], axis=-1)        # (n_t, n_q, 2)
    wA = w[None, :] * mesh.signed_areas()[:, None]
    local = np.einsum("tq,qa,tqc->tac", wA, dofmap.basis_values(bary), fx).reshape(-1, 6)
    dofs = dofmap.local_dofs()
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=local[keep], minlength=dofmap.n_dofs)


# --- post-processing ------------------------------------------------------------------

def functional_average_u2(u: FeFunction) -> float:
    """Exact integral of the second displacement component."""
    areas = u.dofmap.mesh.signed_areas()
    # each local basis function integrates to |K|/3 for both spaces
    return float(np.sum(areas / 3.0 * u.local_values()[:, :, 1].sum(axis=1)))


def project_cr(mesh: TriMesh, v, n_gauss: int = 4, dofmap: DofMap | None = None) -> FeFunction:
    """Edge-average projection onto the CR space (boundary midpoints set to zero)."""
    dm = dofmap if dofmap is not None else DofMap.build(mesh, "cr")
    if dm.kind != "cr":
        raise ValueError("project_cr needs a CR dof map")
    s, w = gauss_legendre_01(n_gauss)
    e = mesh.edges[dm.free_nodes]
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    P = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]       # (n_free, n_g, 2)
    vals = np.asarray(v(P[..., 0], P[..., 1]), dtype=float)         # (2, n_free, n_g)
    avg = np.einsum("cng,g->nc", vals, w)
    return FeFunction(dm, avg.reshape(-1))


def broken_norms(u: FeFunction | None, exact: VectorField | None = None, sample=None,
                 quad_degree: int = 6, mesh: TriMesh | None = None) -> dict:
    """Elementwise L2, broken H1 seminorm and coefficient energy norm.

    With ``exact`` the norms are those of ``exact - u`` evaluated at quadrature
    points; the energy norm is only computed when ``sample`` is given.
    """
    if u is None and exact is None:
        raise ValueError("need a discrete function, a closed form or both")
    mesh = u.dofmap.mesh if u is not None else mesh
    bary, w = triangle_rule(quad_degree)
    X = _quad_points(mesh, bary)
    wA = w[None, :] * mesh.signed_areas()[:, None]
    val = np.zeros(X.shape)
    grad = np.zeros(X.shape[:2] + (2, 2))
    if exact is not None:
        val += np.moveaxis(np.asarray(exact.value(X[..., 0], X[..., 1]), dtype=float), 0, -1)
        if exact.grad is not None:
            g = np.asarray(exact.grad(X[..., 0], X[..., 1]), dtype=float)
            grad += np.moveaxis(g, (0, 1), (-2, -1))
    if u is not None:
        val -= u.values_at(bary)
        grad -= u.gradients()[:, None]
    if exact is not None and exact.grad is None:
        grad[:] = np.nan
    l2 = np.sqrt(np.sum(wA * np.sum(val**2, axis=-1)))
    gg = np.sum(grad**2, axis=(-1, -2))
    h1 = np.sqrt(np.sum(wA * gg))
    out = {"l2": float(l2), "h1": float(h1)}
    if sample is not None:
        mu, lam, _, _ = _coefficients(sample, X)
        div = grad[..., 0, 0] + grad[..., 1, 1]
        out["energy"] = float(np.sqrt(np.sum(wA * (mu * gg + (mu + lam) * div**2))))
    return out


def midpoint_jumps(u: FeFunction, at: str = "midpoint") -> float:
    """Largest jump across interior edges and largest trace on boundary edges.

    ``at="midpoint"`` checks edge midpoints (the CR constraint); ``"endpoints"``
    checks both edge ends, which vanishes only for conforming functions.
    """
    mesh = u.dofmap.mesh
    V = u.vertex_values()                                        # (n_t, 3, 2)
    for side in (0, 1):
        t = mesh.edge_to_triangles[:, side]
        ok = t >= 0
        e_idx = np.flatnonzero(ok)
        loc = np.argmax(mesh.triangle_edges[t[ok]] == e_idx[:, None], axis=1)
        ends = np.stack([V[t[ok], (loc + 1) % 3], V[t[ok], (loc + 2) % 3]], axis=1)
        # order endpoint values by global vertex id so both sides line up
        vid = np.stack([mesh.triangles[t[ok], (loc + 1) % 3],
                        mesh.triangles[t[ok], (loc + 2) % 3]], axis=1)
        swap = vid[:, 0] > vid[:, 1]
        ends[swap] = ends[swap][:, ::-1]
        if side == 0:
            first = np.zeros((mesh.n_edges, 2, 2))
            first[e_idx] = ends
        else:
            second = np.zeros((mesh.n_edges, 2, 2))
            second[e_idx] = ends
    diff = first - second                           # boundary edges: second side is zero
    if at == "midpoint":
        jump = 0.5 * (diff[:, 0] + diff[:, 1])
    elif at == "endpoints":
        jump = diff.reshape(mesh.n_edges, -1)
    else:
        raise ValueError("at must be 'midpoint' or 'endpoints'")
    return float(np.abs(jump).max()) if mesh.n_edges else 0.0


# --- pointwise densities (oracles) ------------------------------------------------------

def bhat_density(du, dv, u, v, mu, lam, dmu1, dmu2):
    """Integrand of the symmetric form; ``du[i][j] = d u_i / d x_j``."""
    ddot = sum(du[i][j] * dv[i][j] for i in range(2) for j in range(2))
    divu = du[0][0] + du[1][1]
    divv = dv[0][0] + dv[1][1]
    # grad mu . K[g] = dmu1 * (-g_x2) + dmu2 * g_x1
    ku1 = -dmu1 * du[0][1] + dmu2 * du[0][0]
    kv1 = -dmu1 * dv[0][1] + dmu2 * dv[0][0]
    return mu * ddot + (mu + lam) * divu * divv + ku1 * v[1] + kv1 * u[1]


def b_density(du, dv, mu, lam):
    """Integrand ``2 mu eps(u):eps(v) + lam div u div v``."""
    eu = [[0.5 * (du[i][j] + du[j][i]) for j in range(2)] for i in range(2)]
    ev = [[0.5 * (dv[i][j] + dv[j][i]) for j in range(2)] for i in range(2)]
    eps = sum(eu[i][j] * ev[i][j] for i in range(2) for j in range(2))
    return 2 * mu * eps + lam * (du[0][0] + du[1][1]) * (dv[0][0] + dv[1][1])


def form_value(u: FeFunction, v: FeFunction, sample, quad_degree: int = 4) -> float:
    """Evaluate the symmetric form on two discrete functions by pointwise quadrature."""
    mesh = u.dofmap.mesh
    bary, w = triangle_rule(quad_degree)
    X = _quad_points(mesh, bary)
    mu, lam, g1, g2 = _coefficients(sample, X)
    wA = w[None, :] * mesh.signed_areas()[:, None]
    du = np.moveaxis(u.gradients(), 0, -1)[..., None]    # (2, 2, n_t, 1)
    dv = np.moveaxis(v.gradients(), 0, -1)[..., None]
    uv = np.moveaxis(u.values_at(bary), -1, 0)
    vv = np.moveaxis(v.values_at(bary), -1, 0)
    return float(np.sum(wA * bhat_density(du, dv, uv, vv, mu, lam, g1, g2)))


# --- export ------------------------------------------------------------------------------

def export_matrix(system: FemSystem, path) -> None:
    """Write ``row col value`` lines (0-based) for the stored entries."""
    A = system.matrix.tocoo()
    order = np.lexsort((A.col, A.row))
    lines = [f"{r} {c} {v:.17g}" for r, c, v in zip(A.row[order], A.col[order], A.data[order])]
    Path(path).write_text(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n" + "\n".join(lines) + "\n")


def export_function(u: FeFunction, path) -> None:
    """Per-node table: ``node x1 x2 u1 u2`` (node = edge for CR, vertex for P1)."""
    mesh = u.dofmap.mesh
    coords = mesh.edge_midpoints if u.dofmap.kind == "cr" else mesh.vertices
    vals = u.node_values()
    rows = ["node,x1,x2,u1,u2"]
    rows += [f"{i},{x:.17g},{y:.17g},{a:.17g},{b:.17g}"
             for i, ((x, y), (a, b)) in enumerate(zip(coords, vals))]
    Path(path).write_text("\n".join(rows) + "\n")

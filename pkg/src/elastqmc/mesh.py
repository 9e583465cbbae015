"""Triangulations of rectangles with the edge topology needed by CR elements."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["TriMesh", "MeshError", "make_structured_mesh", "refine_uniform",
           "refine_family", "edge_topology", "save_mesh", "load_mesh"]


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh.

    Edges are sorted vertex pairs in lexicographic order.  Local edge ``i`` of
    a triangle is the edge opposite its local vertex ``i``.
    ``edge_to_triangles`` holds -1 in the second slot for boundary edges.
    """

    vertices: np.ndarray          # (n_v, 2)
    triangles: np.ndarray         # (n_t, 3), positively oriented
    edges: np.ndarray             # (n_e, 2)
    edge_midpoints: np.ndarray    # (n_e, 2)
    edge_is_boundary: np.ndarray  # (n_e,) bool
    edge_to_triangles: np.ndarray  # (n_e, 2)
    triangle_edges: np.ndarray    # (n_t, 3)
    h: float

    @classmethod
    def from_triangles(cls, vertices, triangles) -> "TriMesh":
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        local = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]],
                          triangles[:, [0, 1]]], axis=1)          # (n_t, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(-1, 3)
        n_e = len(edges)
        counts = np.bincount(inverse, minlength=n_e)
        if counts.max() > 2:
            raise MeshError("edge shared by more than two triangles")
        e2t = -np.ones((n_e, 2), dtype=np.int64)
        tri_of = np.repeat(np.arange(len(triangles)), 3)
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        e2t[inverse[order][first], 0] = tri_of[order][first]
        e2t[inverse[order][~first], 1] = tri_of[order][~first]
        mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
        lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
        h = float(lengths[tri_edges].max())
        return cls(vertices, triangles, edges, mid, counts == 1, e2t, tri_edges, h)

    # sizes ---------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    # geometry ------------------------------------------------------------
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def element_diameters(self) -> np.ndarray:
        lengths = np.linalg.norm(self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]],
                                 axis=1)
        return lengths[self.triangle_edges].max(axis=1)

    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.edge_is_boundary].ravel()] = True
        return mask

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()[:16]

    def check(self) -> None:
        """Raise MeshError unless orientation, Euler and edge-sharing invariants hold."""
        if np.any(self.signed_areas() <= 0):
            raise MeshError("non-positively oriented triangle")
        counts = (self.edge_to_triangles >= 0).sum(axis=1)
        if np.any(counts[self.edge_is_boundary] != 1) or np.any(counts[~self.edge_is_boundary] != 2):
            raise MeshError("edge/triangle incidence mismatch")
        if self.n_vertices - self.n_edges + self.n_triangles != 1:
            raise MeshError("Euler characteristic is not 1")


def make_structured_mesh(domain=((0.0, 1.0), (0.0, 1.0)), n: int = 1,
                         perturb: float = 0.0, seed: int = 0,
                         n_crossed: int = 0) -> TriMesh:
    """Triangulate a rectangle with an ``n`` x ``n`` grid of cells.

    Each cell is split along its SW-NE diagonal, except ``n_crossed`` cells
    (chosen by a seeded permutation) which are split into four triangles
    around an added centre vertex.  Interior vertices are jittered by up to
    ``perturb`` times the local cell size in each coordinate.
    """
    (x0, x1), (y0, y1) = domain
    if not (x1 - x0 > 0 and y1 - y0 > 0):
        raise MeshError(f"degenerate rectangle {domain}")
    if n < 1:
        raise MeshError("n must be >= 1")
    if not 0 <= perturb < 0.3:
        raise MeshError("perturb must lie in [0, 0.3)")
    if not 0 <= n_crossed <= n * n:
        raise MeshError("n_crossed out of range")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = [np.column_stack([X.ravel(), Y.ravel()])]

    def vid(i, j):
        return i * (n + 1) + j

    rng = np.random.default_rng(seed)
    crossed = np.zeros(n * n, dtype=bool)
    if n_crossed:
        crossed[rng.permutation(n * n)[:n_crossed]] = True
    tris = []
    centres = []
    next_id = (n + 1) ** 2
    for i in range(n):
        for j in range(n):
            sw, se, nw, ne = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if crossed[i * n + j]:
                c = next_id
                next_id += 1
                centres.append([0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])])
                tris += [(sw, se, c), (se, ne, c), (ne, nw, c), (nw, sw, c)]
            else:
                tris += [(sw, se, ne), (sw, ne, nw)]
    if centres:
        verts.append(np.array(centres))
    V = np.vstack(verts)
    if perturb > 0:
        dx, dy = (x1 - x0) / n, (y1 - y0) / n
        interior = ((V[:, 0] > x0 + 1e-12 * dx) & (V[:, 0] < x1 - 1e-12 * dx)
                    & (V[:, 1] > y0 + 1e-12 * dy) & (V[:, 1] < y1 - 1e-12 * dy))
        scale = np.where(np.arange(len(V)) >= (n + 1) ** 2, 0.5, 1.0)[:, None] * [dx, dy]
        jitter = rng.uniform(-perturb, perturb, size=V.shape) * scale
        V = V + np.where(interior[:, None], jitter, 0.0)
    mesh = TriMesh.from_triangles(V, np.array(tris, dtype=np.int64))
    mesh.check()
    return mesh


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Red refinement: every triangle split into four through its edge midpoints."""
    nv = mesh.n_vertices
    V = np.vstack([mesh.vertices, mesh.edge_midpoints])
    t = mesh.triangles
    m = mesh.triangle_edges + nv      # m[:, i] is the midpoint opposite vertex i
    children = np.concatenate([
        np.column_stack([t[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([t[:, 1], m[:, 0], m[:, 2]]),
        np.column_stack([t[:, 2], m[:, 1], m[:, 0]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    return TriMesh.from_triangles(V, children)


def refine_family(mesh: TriMesh, levels: int) -> list[TriMesh]:
    """``[mesh, refine(mesh), ...]`` with ``levels`` meshes in total."""
    family = [mesh]
    for _ in range(levels - 1):
        family.append(refine_uniform(family[-1]))
    return family


def edge_topology(mesh: TriMesh):
    """Split edges into interior (E) and boundary (F) sets.

    Returns ``(interior_ids, interior_midpoints, boundary_ids, boundary_midpoints)``.
    """
    inner = np.flatnonzero(~mesh.edge_is_boundary)
    bnd = np.flatnonzero(mesh.edge_is_boundary)
    return inner, mesh.edge_midpoints[inner], bnd, mesh.edge_midpoints[bnd]


def save_mesh(mesh: TriMesh, path) -> None:
    lines = [f"{mesh.n_triangles} {mesh.n_vertices} {mesh.n_edges}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    lines += [f"{a} {b} {int(f)}" for (a, b), f in zip(mesh.edges, mesh.edge_is_boundary)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    rows = Path(path).read_text().split("\n")
    try:
        nt, nv, ne = map(int, rows[0].split())
        V = np.array([list(map(float, r.split())) for r in rows[1:1 + nv]])
        T = np.array([list(map(int, r.split())) for r in rows[1 + nv:1 + nv + nt]])
        E = np.array([list(map(int, r.split())) for r in rows[1 + nv + nt:1 + nv + nt + ne]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: malformed mesh file") from exc
    mesh = TriMesh.from_triangles(V, T)
    if (mesh.n_edges != ne or not np.array_equal(mesh.edges, E[:, :2])
            or not np.array_equal(mesh.edge_is_boundary, E[:, 2].astype(bool))):
        raise MeshError(f"{path}: edge table inconsistent with triangles")
    return mesh

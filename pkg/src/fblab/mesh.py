"""Triangle meshes with boundary: topology, FEM operators and discrete curvature.

Meshes are immutable snapshots.  Everything here is a pure function of the
vertex array and the (oriented) triangle list, so results can be cached on
the instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateTriangle,
    InconsistentOrientation,
    InsufficientNeighborhood,
    NonManifold,
)

DEGENERACY_FACTOR = 1e-14


class SurfaceMesh:
    """Oriented triangle mesh of a compact surface, possibly with boundary.

    Use :func:`build_mesh` to construct one; it validates the input.  The
    derived topology (boundary loops, genus, number of boundary components)
    is computed once at construction.
    """

    def __init__(self, vertices, triangles, _topology=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.vertices.flags.writeable = False
        self.triangles.flags.writeable = False
        if _topology is None:
            _topology = _derive_topology(self.triangles, len(self.vertices))
        self._topo = _topology

    # -- topology -----------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def edges(self):
        return self._topo["edges"]

    @property
    def boundary_loops(self):
        return self._topo["loops"]

    @property
    def boundary_edges(self):
        """Directed boundary edges ``(a, b)`` following the mesh orientation."""
        return self._topo["boundary_edges"]

    @property
    def is_boundary(self):
        return self._topo["is_boundary"]

    @property
    def boundary_vertices(self):
        return np.flatnonzero(self.is_boundary)

    @property
    def interior_vertices(self):
        return np.flatnonzero(~self.is_boundary)

    @property
    def euler_characteristic(self):
        return self.n_vertices - len(self.edges) + len(self.triangles)

    @property
    def n_components(self):
        return self._topo["n_components"]

    @property
    def r(self):
        return len(self.boundary_loops)

    @property
    def genus(self):
        return (2 * self.n_components - self.euler_characteristic - self.r) // 2

    g = genus

    @property
    def vertex_roles(self):
        return np.where(self.is_boundary, "boundary", "interior")

    def with_vertices(self, vertices) -> "SurfaceMesh":
        """Same connectivity, new positions (topology is reused, not re-derived)."""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise ValueError("vertex array shape mismatch")
        return SurfaceMesh(vertices, self.triangles, _topology=self._topo)

    def scaled(self, c) -> "SurfaceMesh":
        return self.with_vertices(self.vertices * c)

    # -- cached geometry ------------------------------------------------------
    @cached_property
    def _face_cross(self):
        p = self.vertices[self.triangles]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def triangle_areas(self):
        return 0.5 * np.linalg.norm(self._face_cross, axis=1)

    @cached_property
    def face_normals(self):
        return self._face_cross / (2.0 * self.triangle_areas[:, None])

    @cached_property
    def vertex_normals(self):
        """Area-weighted vertex normals (unit length)."""
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.triangles[:, k], self._face_cross)
        return acc / np.linalg.norm(acc, axis=1)[:, None]

    @cached_property
    def corner_angles(self):
        """Interior angle at each triangle corner, shape (F, 3)."""
        p = self.vertices[self.triangles]
        out = np.empty(self.triangles.shape)
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            w = p[:, (k + 2) % 3] - p[:, k]
            out[:, k] = np.arctan2(np.linalg.norm(np.cross(u, w), axis=1),
                                   np.einsum("ij,ij->i", u, w))
        return out

    @cached_property
    def angle_sums(self):
        return np.bincount(self.triangles.ravel(), self.corner_angles.ravel(),
                           minlength=self.n_vertices)

    @cached_property
    def vertex_areas(self):
        """Barycentric vertex areas (one third of each incident triangle)."""
        a = np.repeat(self.triangle_areas / 3.0, 3)
        return np.bincount(self.triangles.ravel(), a, minlength=self.n_vertices)

    @cached_property
    def boundary_edge_lengths(self):
        be = self.boundary_edges
        if len(be) == 0:
            return np.zeros(0)
        return np.linalg.norm(self.vertices[be[:, 1]] - self.vertices[be[:, 0]], axis=1)

    @cached_property
    def boundary_vertex_lengths(self):
        """Half the total length of the boundary edges at each vertex."""
        be = self.boundary_edges
        half = 0.5 * self.boundary_edge_lengths
        out = np.zeros(self.n_vertices)
        np.add.at(out, be[:, 0], half)
        np.add.at(out, be[:, 1], half)
        return out

    @cached_property
    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    @cached_property
    def adjacency(self):
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        A = sparse.coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                              shape=(n, n)).tocsr()
        A.data[:] = 1.0
        return A


def _derive_topology(tri, n_vertices):
    if tri.ndim != 2 or tri.shape[1] != 3 or len(tri) == 0:
        raise ValueError("triangles must be a nonempty (F, 3) index array")
    if tri.min() < 0 or tri.max() >= n_vertices:
        raise ValueError("triangle index out of range")
    if np.any(tri[:, 0] == tri[:, 1]) or np.any(tri[:, 1] == tri[:, 2]) or np.any(tri[:, 0] == tri[:, 2]):
        raise DegenerateTriangle("triangle with repeated vertex index")
    used = np.zeros(n_vertices, bool)
    used[tri.ravel()] = True
    if not used.all():
        raise ValueError(f"{int((~used).sum())} vertices are not referenced by any triangle")

    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    _, dcount = np.unique(directed, axis=0, return_counts=True)
    undirected = np.sort(directed, axis=1)
    edges, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise NonManifold(f"{int((counts > 2).sum())} edges shared by more than two triangles")
    if np.any(dcount > 1):
        raise InconsistentOrientation("an interior edge is traversed twice in the same direction")

    bmask = counts[inverse] == 1
    bedges = directed[bmask]
    is_boundary = np.zeros(n_vertices, bool)
    is_boundary[bedges.ravel()] = True

    nxt = {}
    for a, b in bedges:
        if a in nxt:
            raise NonManifold(f"boundary vertex {a} is pinched (two outgoing boundary edges)")
        nxt[int(a)] = int(b)
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            if v in seen or v not in nxt:
                raise NonManifold("boundary edges do not form disjoint simple cycles")
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loops.append(np.array(loop, dtype=np.int64))
    # orient the directed boundary edge list to follow the loops
    if loops:
        bedges = np.concatenate([np.c_[lp, np.roll(lp, -1)] for lp in loops])

    n = n_vertices
    A = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    ncomp, _ = connected_components(A, directed=False)
    chi = n - len(edges) + len(tri)
    g2 = 2 * ncomp - chi - len(loops)
    if g2 < 0 or g2 % 2:
        raise NonManifold(f"inconsistent topology: chi={chi}, r={len(loops)}, components={ncomp}")
    return {
        "edges": edges,
        "loops": loops,
        "boundary_edges": bedges.reshape(-1, 2),
        "is_boundary": is_boundary,
        "n_components": ncomp,
    }


def build_mesh(vertices, triangles) -> SurfaceMesh:
    """Validate input and build a :class:`SurfaceMesh` with derived topology.

    Raises NonManifold, InconsistentOrientation or DegenerateTriangle.
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
        raise ValueError("vertices must be an (n, 3) array")
    if vertices.shape[1] == 2:
        vertices = np.c_[vertices, np.zeros(len(vertices))]
    mesh = SurfaceMesh(vertices, np.asarray(triangles))
    check_degeneracy(mesh)
    return mesh


def check_degeneracy(mesh, factor=DEGENERACY_FACTOR):
    threshold = factor * mesh.bbox_diagonal ** 2
    bad = np.flatnonzero(mesh.triangle_areas <= threshold)
    if len(bad):
        raise DegenerateTriangle(f"{len(bad)} triangles with area <= {threshold:.3g} (first: {bad[0]})")


# -- measures ---------------------------------------------------------------

def area(mesh) -> float:
    return float(mesh.triangle_areas.sum())


def boundary_length(mesh) -> float:
    return float(mesh.boundary_edge_lengths.sum())


def mesh_scale(mesh) -> float:
    """Radius of the disk with the same area; the natural length unit of a surface."""
    return float(np.sqrt(area(mesh) / np.pi))


# -- FEM operators ----------------------------------------------------------

def _cotangents(mesh):
    p = mesh.vertices[mesh.triangles]
    cots = np.empty(mesh.triangles.shape)
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        w = p[:, (k + 2) % 3] - p[:, k]
        cots[:, k] = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
    return cots


def cotan_stiffness(mesh):
    """P1 stiffness matrix ``S`` with ``f @ S @ f = ∫|∇f|²`` (sparse, symmetric)."""
    t = mesh.triangles
    cots = _cotangents(mesh)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        w = 0.5 * cots[:, k]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    n = mesh.n_vertices
    S = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
    S.sum_duplicates()
    return S


def lumped_mass(mesh):
    return sparse.diags(mesh.vertex_areas, format="csr")


def boundary_mass(mesh, weights=None, lumped=True):
    """Boundary mass matrix, discretizing ``∮ w f² ds``.

    The lumped (default) version is diagonal with half the adjacent boundary
    edge lengths.  ``lumped=False`` gives the consistent P1 matrix, which
    integrates piecewise-linear fields along the boundary polygon exactly.
    Per-vertex ``weights`` are averaged onto each boundary edge.
    """
    n = mesh.n_vertices
    be = mesh.boundary_edges
    ell = mesh.boundary_edge_lengths
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        ell = ell * 0.5 * (weights[be[:, 0]] + weights[be[:, 1]])
    a, b = be[:, 0], be[:, 1]
    if lumped:
        d = np.zeros(n)
        np.add.at(d, a, 0.5 * ell)
        np.add.at(d, b, 0.5 * ell)
        return sparse.diags(d, format="csr")
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([ell / 3, ell / 3, ell / 6, ell / 6])
    B = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    B.sum_duplicates()
    return B


def dirichlet_energy(mesh, field, stiffness=None) -> float:
    f = np.asarray(field, dtype=float)
    if f.shape != (mesh.n_vertices,):
        raise ValueError("field must have one value per vertex")
    S = cotan_stiffness(mesh) if stiffness is None else stiffness
    return float(f @ (S @ f))


def area_gradient(mesh):
    """Gradient of total area w.r.t. vertex positions, shape (n, 3)."""
    p = mesh.vertices[mesh.triangles]
    nrm = mesh.face_normals
    g = np.zeros_like(mesh.vertices)
    for k in range(3):
        opp = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        np.add.at(g, mesh.triangles[:, k], 0.5 * np.cross(nrm, opp))
    return g


# -- curvature ----------------------------------------------------------------

def gauss_bonnet_residual(mesh) -> float:
    """``|Σ interior defects + Σ boundary turning angles − 2πχ|`` (exact identity)."""
    s = mesh.angle_sums
    b = mesh.is_boundary
    total = math.fsum(np.r_[2 * np.pi - s[~b], np.pi - s[b]])
    return float(abs(total - 2 * np.pi * mesh.euler_characteristic))


def boundary_turning_angles(mesh):
    """Geodesic turning angle ``π − Σ corner angles`` at each boundary vertex."""
    bv = mesh.boundary_vertices
    return bv, np.pi - mesh.angle_sums[bv]


def boundary_geodesic_curvature(mesh):
    """Per-boundary-vertex geodesic curvature κ (turning angle per unit length).

    Positive where the boundary bends toward the surface, so a flat unit disk
    has κ ≈ +1.  Returns ``(vertex_ids, kappa)``.
    """
    bv, turn = boundary_turning_angles(mesh)
    return bv, turn / mesh.boundary_vertex_lengths[bv]


def boundary_turning_check(mesh) -> float:
    return gauss_bonnet_residual(mesh)


@dataclass
class ShapeData:
    normals: np.ndarray
    frames: np.ndarray  # (n, 2, 3) orthonormal tangent frame
    shape_operator: np.ndarray  # (n, 2, 2), symmetric
    H: np.ndarray
    A2: np.ndarray
    K: np.ndarray
    K_from_shape: np.ndarray = field(repr=False, default=None)

    @property
    def principal_curvatures(self):
        return np.linalg.eigvalsh(self.shape_operator)


def _tangent_frames(normals):
    helper = np.where(np.abs(normals[:, [0]]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    e1 = np.cross(normals, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(normals, e1)
    return e1, e2


def neighborhoods(mesh, rings=2, min_size=5):
    """Padded k-ring neighbor lists (excluding the vertex itself).

    Vertices whose ``rings``-ring has fewer than ``min_size`` members are grown
    by one more ring; if that is still too small, InsufficientNeighborhood.
    """
    A = mesh.adjacency
    R = A.copy()
    for _ in range(rings - 1):
        R = R + R @ A
    R = R.tolil()
    R.setdiag(0)
    R = R.tocsr()
    R.eliminate_zeros()
    sizes = np.diff(R.indptr)
    small = np.flatnonzero(sizes < min_size)
    if len(small):
        R3 = (R + R @ A).tolil()
        R3.setdiag(0)
        R3 = R3.tocsr()
        R3.eliminate_zeros()
        R = R.tolil()
        for v in small:
            R.rows[v] = list(R3[v].indices)
            R.data[v] = [1.0] * len(R.rows[v])
        R = R.tocsr()
        sizes = np.diff(R.indptr)
        if np.any(sizes < min_size):
            v = int(np.flatnonzero(sizes < min_size)[0])
            raise InsufficientNeighborhood(f"vertex {v} has only {sizes[v]} neighbours for the quadric fit")
    kmax = sizes.max()
    idx = np.zeros((mesh.n_vertices, kmax), dtype=np.int64)
    mask = np.zeros((mesh.n_vertices, kmax), dtype=bool)
    for v in range(mesh.n_vertices):
        nb = R.indices[R.indptr[v]:R.indptr[v + 1]]
        idx[v, :len(nb)] = nb
        mask[v, :len(nb)] = True
    return idx, mask


def _fit_quadrics(x, normals, idx, mask):
    e1, e2 = _tangent_frames(normals)
    d = x[idx] - x[:, None, :]
    u = np.einsum("vkj,vj->vk", d, e1)
    w = np.einsum("vkj,vj->vk", d, e2)
    h = np.einsum("vkj,vj->vk", d, normals)
    rho = np.sqrt(np.where(mask, u * u + w * w, 0).max(axis=1))[:, None]
    u, w, h = u / rho, w / rho, h / rho
    X = np.stack([u * u, u * w, w * w, u, w], axis=-1) * mask[..., None]
    XtX = np.einsum("vki,vkj->vij", X, X)
    Xth = np.einsum("vki,vk->vi", X, h * mask)
    coef = np.linalg.solve(XtX, Xth[..., None])[..., 0]
    a, b, c, gu, gw = coef.T
    rho = rho[:, 0]
    hess = np.stack([np.stack([2 * a, b], -1), np.stack([b, 2 * c], -1)], -2) / rho[:, None, None]
    return e1, e2, np.stack([gu, gw], -1), hess


def discrete_curvatures(mesh, neighborhood=None) -> ShapeData:
    """Per-vertex normal, shape operator, H, |A|² and K.

    The shape operator comes from a least-squares quadric height fit over the
    2-ring, done twice: the second pass uses the normal of the first fit so
    the frame is aligned with the fitted tangent plane.  K is the angle defect
    over the barycentric area at interior vertices; at boundary vertices (where
    the defect measures boundary turning instead) K falls back to det(shape).
    Sign convention: A(Y, Z) = <D_Y N, Z>, so a sphere with outward normals has
    H = +2/R.
    """
    if neighborhood is None:
        neighborhood = neighborhoods(mesh)
    idx, mask = neighborhood
    x = mesh.vertices
    n0 = mesh.vertex_normals
    e1, e2, grad, _ = _fit_quadrics(x, n0, idx, mask)
    n1 = n0 - grad[:, [0]] * e1 - grad[:, [1]] * e2
    n1 /= np.linalg.norm(n1, axis=1)[:, None]
    e1, e2, grad, hess = _fit_quadrics(x, n1, idx, mask)
    W = np.sqrt(1.0 + np.sum(grad ** 2, axis=1))
    shape = -hess / W[:, None, None]
    H = shape[:, 0, 0] + shape[:, 1, 1]
    A2 = np.einsum("vij,vij->v", shape, shape)
    Kshape = np.linalg.det(shape)
    K = np.where(mesh.is_boundary, Kshape, (2 * np.pi - mesh.angle_sums) / mesh.vertex_areas)
    return ShapeData(normals=n1, frames=np.stack([e1, e2], 1), shape_operator=shape,
                     H=H, A2=A2, K=K, K_from_shape=Kshape)


def second_form_along(shape_data, vertex_ids, directions):
    """Evaluate A(T, T) for unit 3-vectors ``directions`` at the given vertices."""
    fr = shape_data.frames[vertex_ids]
    t = np.einsum("vij,vj->vi", fr, directions)
    t /= np.linalg.norm(t, axis=1)[:, None]
    return np.einsum("vi,vij,vj->v", t, shape_data.shape_operator[vertex_ids], t)


def boundary_tangents(mesh):
    """Unit tangent at each boundary vertex (central difference along its loop).

    Returns ``(vertex_ids, tangents)`` ordered loop by loop.
    """
    ids, tans = [], []
    x = mesh.vertices
    for lp in mesh.boundary_loops:
        t = x[np.roll(lp, -1)] - x[np.roll(lp, 1)]
        tans.append(t / np.linalg.norm(t, axis=1)[:, None])
        ids.append(lp)
    return np.concatenate(ids), np.concatenate(tans)


def boundary_conormals(mesh):
    """Outward in-surface conormal ν at each boundary vertex.

    Each boundary edge gets the unit vector in its triangle's plane that is
    orthogonal to the edge and points away from the triangle; a vertex takes
    the normalized length-weighted average of its two edges.
    """
    be = mesh.boundary_edges
    x = mesh.vertices
    # find the triangle owning each directed boundary edge
    t = mesh.triangles
    lookup = {}
    for k in range(3):
        for f, (a, b) in enumerate(zip(t[:, k], t[:, (k + 1) % 3])):
            lookup[(int(a), int(b))] = f
    faces = np.array([lookup[(int(a), int(b))] for a, b in be], dtype=np.int64)
    edge = x[be[:, 1]] - x[be[:, 0]]
    # for counter-clockwise triangles, edge × normal points out of the triangle
    nu_e = np.cross(edge, mesh.face_normals[faces])
    nu_e /= np.linalg.norm(nu_e, axis=1)[:, None]
    ell = mesh.boundary_edge_lengths
    acc = np.zeros_like(x)
    np.add.at(acc, be[:, 0], ell[:, None] * nu_e)
    np.add.at(acc, be[:, 1], ell[:, None] * nu_e)
    bv = mesh.boundary_vertices
    nu = acc[bv]
    return bv, nu / np.linalg.norm(nu, axis=1)[:, None], (faces, nu_e)

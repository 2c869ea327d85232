"""Free boundary minimal and CMC surfaces by constrained relaxation.

Boundary vertices are kept on ∂Ω by re-projection after every step.  The
update is a damped Newton step in normal-graph variables whose Hessian is the
assembled index form: index-one surfaces are saddle points of area, so plain
descent would slide off them, while Newton converges to them locally.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from . import body as bodymod
from .errors import ConvergenceFailure, MaxIterationsExceeded, MeshDegenerated
from .mesh import area, area_gradient, boundary_conormals, mesh_scale
from .spectral import normal_directions


@dataclass
class SolverConfig:
    max_iter: int = 60
    grad_tol: float = 1e-9
    projection_tol: float = 1e-12
    # Levenberg shift in units of 1/scale²; regularizes the near-null rotation
    # modes of the Newton matrix without changing the fixed point
    shift: float = 1e-6
    backtrack: float = 0.5
    max_backtracks: int = 30
    volume_target: float | None = None
    min_area_ratio: float = 1e-3  # degeneration threshold vs. initial smallest triangle
    seed: int = 42

    def __post_init__(self):
        if self.grad_tol <= 0 or self.projection_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveResult:
    mesh: object
    iterations: int
    area_history: list
    residuals: dict
    log: list = field(default_factory=list, repr=False)
    multiplier: float = 0.0
    volume: float | None = None

    def log_lines(self):
        return "\n".join(json.dumps(rec, sort_keys=True) for rec in self.log) + "\n"


# -- first variation ----------------------------------------------------------

def first_variation(mesh, variation):
    """Directional derivative of area along a per-vertex vector field."""
    return float(np.sum(area_gradient(mesh) * np.asarray(variation, float)))


def first_variation_terms(mesh, variation):
    """Split the first variation into the ∮⟨ξ, ν⟩ part and the interior remainder.

    The boundary flux integrates the linear interpolant of ξ against each
    boundary edge's in-triangle conormal; the remainder is the discrete ∫Hφ.
    """
    xi = np.asarray(variation, float)
    total = first_variation(mesh, xi)
    be = mesh.boundary_edges
    _, _, (_, nu_e) = boundary_conormals(mesh)
    mid = 0.5 * (xi[be[:, 0]] + xi[be[:, 1]])
    flux = float(np.sum(mesh.boundary_edge_lengths * np.sum(mid * nu_e, 1)))
    return {"total": total, "boundary": flux, "interior": total - flux}


# -- enclosed volume (ball bodies) -------------------------------------------

def _solid_angle_and_grad(a, b, c):
    """Signed solid angle of (a, b, c) seen from the origin, and d/db, d/dc."""
    la_, lb, lc = (np.linalg.norm(v, axis=1) for v in (a, b, c))
    N = np.einsum("ij,ij->i", a, np.cross(b, c))
    ab, ac, bc = (np.einsum("ij,ij->i", u, v) for u, v in ((a, b), (a, c), (b, c)))
    D = la_ * lb * lc + ab * lc + ac * lb + bc * la_
    omega = 2 * np.arctan2(N, D)
    bh, ch = b / lb[:, None], c / lc[:, None]
    dN_db, dN_dc = np.cross(c, a), np.cross(a, b)
    dD_db = (la_ * lc + ac)[:, None] * bh + lc[:, None] * a + la_[:, None] * c
    dD_dc = (la_ * lb + ab)[:, None] * ch + lb[:, None] * a + la_[:, None] * b
    den = (N * N + D * D)[:, None]
    g_b = 2 * (D[:, None] * dN_db - N[:, None] * dD_db) / den
    g_c = 2 * (D[:, None] * dN_dc - N[:, None] * dD_dc) / den
    return omega, g_b, g_c


class EnclosedVolume:
    """Volume between the surface and the part of a ball's sphere it cuts off.

    Cone volume of the triangles from the ball centre, plus the spherical
    sector over the boundary loops (R³/3 times their solid angle, measured by
    a fan from a fixed reference direction).  Defined up to multiples of the
    ball volume, which does not affect gradients or constraints.
    """

    def __init__(self, mesh, body):
        if body.kind != "ball":
            raise ValueError("enclosed volume is implemented for ball bodies only")
        self.center = np.asarray(body.center, float)
        self.R = float(body.params[0])
        x = mesh.vertices - self.center
        self.refs = []
        for lp in mesh.boundary_loops:
            p = x[lp]
            q = np.sum(np.cross(p, np.roll(p, -1, axis=0)), 0)
            if np.linalg.norm(q) < 1e-12:
                q = p.mean(0)
            self.refs.append(self.R * q / np.linalg.norm(q))

    def value_and_gradient(self, mesh):
        x = mesh.vertices - self.center
        t = mesh.triangles
        a, b, c = x[t[:, 0]], x[t[:, 1]], x[t[:, 2]]
        vol = np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6
        grad = np.zeros_like(x)
        np.add.at(grad, t[:, 0], np.cross(b, c) / 6)
        np.add.at(grad, t[:, 1], np.cross(c, a) / 6)
        np.add.at(grad, t[:, 2], np.cross(a, b) / 6)
        k = self.R ** 3 / 3
        for lp, q in zip(mesh.boundary_loops, self.refs):
            p = x[lp]
            nxt = np.roll(lp, -1)
            qq = np.broadcast_to(q, p.shape)
            om, g_next, g_cur = _solid_angle_and_grad(qq, x[nxt], p)
            vol += k * om.sum()
            np.add.at(grad, nxt, k * g_next)
            np.add.at(grad, lp, k * g_cur)
        return float(vol), grad

    def __call__(self, mesh):
        return self.value_and_gradient(mesh)[0]


# -- residuals ---------------------------------------------------------------

def free_boundary_angles(mesh, body):
    """Angle (radians) between the surface conormal ν and the body normal X."""
    bv, nu, _ = boundary_conormals(mesh)
    X = bodymod.outward_normal(body, mesh.vertices[bv])
    return bv, np.arctan2(np.linalg.norm(np.cross(nu, X), axis=1), np.sum(nu * X, 1))


def _volume_gradient_normal(mesh):
    """(1/3) Σ area-weighted face normals: the volume gradient at interior vertices."""
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], mesh._face_cross)
    return acc / 6.0


def stationarity(mesh, body, lam=0.0, volume=None):
    """Normal components of the (Lagrangian) area gradient and derived residuals.

    Returns a dict with ``r`` (per-vertex ⟨∇A − λ∇V, d⟩), ``s`` (⟨∇V, d⟩),
    the directions ``d`` and the discrete mean curvature ``H = ⟨∇A, d⟩/⟨∇V, d⟩``
    at interior vertices.
    """
    d = normal_directions(mesh, body)
    g = area_gradient(mesh)
    if volume is not None:
        V, gV = volume.value_and_gradient(mesh)
    else:
        V, gV = None, _volume_gradient_normal(mesh)
    rA = np.sum(g * d, 1)
    s = np.sum(gV * d, 1)
    r = rA - lam * s
    interior = mesh.interior_vertices
    bv = mesh.boundary_vertices
    H = rA[interior] / s[interior]
    return {"r": r, "rA": rA, "s": s, "d": d, "V": V, "H": H,
            "interior": interior, "boundary": bv,
            "h_res": float(np.max(np.abs(r[interior] / s[interior]))) if len(interior) else 0.0,
            "b_res": float(np.max(np.abs(r[bv]) / mesh.boundary_vertex_lengths[bv])) if len(bv) else 0.0}


def residuals(mesh, body, lam=0.0, volume=None, state=None):
    st = stationarity(mesh, body, lam, volume) if state is None else state
    scale = mesh_scale(mesh)
    H = st["H"]
    bv, ang = free_boundary_angles(mesh, body)
    mass = mesh.vertex_areas[st["interior"]]
    Hbar = float(np.sum(H * mass) / np.sum(mass)) if len(H) else 0.0
    out = {
        "mean_curvature_residual": float(np.max(np.abs(H)) * scale) if len(H) else 0.0,
        "constant_h_residual": float(np.max(np.abs(H - Hbar))) if len(H) else 0.0,
        "mean_h": Hbar,
        "free_boundary_angle_residual": float(np.max(ang)) if len(ang) else 0.0,
        "boundary_stationarity_residual": st["b_res"],
        "boundary_containment_residual": float(np.max(np.abs(body.psi(mesh.vertices[bv])))) if len(bv) else 0.0,
    }
    return out


# -- relaxation --------------------------------------------------------------

def _merit(st, mesh, volume_gap=0.0):
    w = mesh.vertex_areas
    return float(np.sqrt(np.sum(st["r"] ** 2 / w))) + abs(volume_gap) / mesh_scale(mesh)


def tangential_smooth(mesh, body, fraction=0.1):
    """One step of tangential Laplacian smoothing on interior vertices.

    Displacements are projected onto the tangent plane and capped at
    ``fraction`` times the shortest edge.
    """
    x = mesh.vertices
    A = mesh.adjacency
    deg = np.asarray(A.sum(1)).ravel()
    avg = (A @ x) / deg[:, None]
    n = mesh.vertex_normals
    delta = avg - x
    delta -= np.sum(delta * n, 1)[:, None] * n
    e = mesh.edges
    hmin = np.min(np.linalg.norm(x[e[:, 0]] - x[e[:, 1]], axis=1))
    norm = np.linalg.norm(delta, axis=1)
    cap = np.minimum(1.0, fraction * hmin / np.maximum(norm, 1e-300))
    delta *= cap[:, None]
    delta[mesh.boundary_vertices] = 0
    return mesh.with_vertices(x + delta)


def distance2_coloring(mesh):
    """Greedy colouring in which vertices sharing a neighbour get distinct colours."""
    A = (mesh.adjacency + sparse.identity(mesh.n_vertices, format="csr")).tocsr()
    A2 = (A @ A).tocsr()
    colors = np.full(mesh.n_vertices, -1)
    for v in range(mesh.n_vertices):
        used = set(colors[A2.indices[A2.indptr[v]:A2.indptr[v + 1]]])
        c = 0
        while c in used:
            c += 1
        colors[v] = c
    return colors


class _Residual:
    """Lagrangian gradient along the normal directions, as a function of displacements φ.

    Displacements act along the directions ``d`` of the base mesh; the residual
    is measured along the directions of the displaced mesh, exactly as the
    convergence test measures it.
    """

    def __init__(self, mesh, body, d, volume, projection_tol):
        self.mesh, self.body, self.d = mesh, body, d
        self.volume = volume
        self.tol = projection_tol
        self.bv = mesh.boundary_vertices

    def positions(self, phi):
        y = self.mesh.vertices + phi[:, None] * self.d
        if len(self.bv):
            y[self.bv] = bodymod.project_to_boundary(self.body, y[self.bv], tol=self.tol)
        return y

    def __call__(self, phi, lam):
        trial = self.mesh.with_vertices(self.positions(phi))
        d = normal_directions(trial, self.body)
        g = area_gradient(trial)
        if self.volume is not None:
            g = g - lam * self.volume.value_and_gradient(trial)[1]
        return np.sum(g * d, 1)


def residual_jacobian(res, lam, colors, step):
    """Sparse Jacobian of ``res`` by central differences over a distance-2 colouring."""
    mesh = res.mesh
    A = (mesh.adjacency + sparse.identity(mesh.n_vertices, format="csr")).tocsc()
    rows, cols, vals = [], [], []
    n = mesh.n_vertices
    for c in range(colors.max() + 1):
        members = np.flatnonzero(colors == c)
        e = np.zeros(n)
        e[members] = step
        diff = (res(e, lam) - res(-e, lam)) / (2 * step)
        for w in members:
            nb = A.indices[A.indptr[w]:A.indptr[w + 1]]
            rows.append(nb)
            cols.append(np.full(len(nb), w))
            vals.append(diff[nb])
    return sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))


def _relax(mesh, body, config, cmc):
    x = np.array(mesh.vertices)
    bv = mesh.boundary_vertices
    x[bv] = bodymod.project_to_boundary(body, x[bv], tol=config.projection_tol)
    mesh = mesh.with_vertices(x)
    scale = mesh_scale(mesh)
    min_area0 = float(mesh.triangle_areas.min())
    colors = distance2_coloring(mesh)
    fd_step = 1e-6 * scale
    volume = EnclosedVolume(mesh, body) if cmc else None
    V0 = None
    lam = 0.0
    if cmc:
        V0 = volume(mesh) if config.volume_target is None else config.volume_target
        st0 = stationarity(mesh, body, 0.0, volume)
        it = st0["interior"]
        lam = float(st0["rA"][it] @ st0["s"][it] / (st0["s"][it] @ st0["s"][it]))

    history, log = [area(mesh)], []
    smoothed = False
    iterations = 0
    for k in range(config.max_iter + 1):
        st = stationarity(mesh, body, lam, volume)
        gap = (st["V"] - V0) if cmc else 0.0
        merit = _merit(st, mesh, gap)
        fb = residuals(mesh, body, lam, volume, st)["free_boundary_angle_residual"]
        log.append({"iter": k, "area": history[-1], "grad_norm": merit, "fb_residual": fb})
        converged = (st["h_res"] * scale <= config.grad_tol and st["b_res"] <= config.grad_tol
                     and abs(gap) <= config.grad_tol * scale ** 3)
        if converged:
            break
        if k == config.max_iter:
            raise MaxIterationsExceeded(f"not converged after {config.max_iter} iterations "
                                        f"(H residual {st['h_res'] * scale:.3g}, boundary {st['b_res']:.3g})")
        d = st["d"]
        res = _Residual(mesh, body, d, volume, config.projection_tol)
        J = residual_jacobian(res, lam, colors, fd_step)
        if config.shift:
            J = J + (config.shift / scale ** 2) * sparse.diags(mesh.vertex_areas)
        try:
            if cmc:
                s = sparse.csc_matrix(st["s"][:, None])
                Kb = sparse.bmat([[J, -s], [-s.T, None]], format="csc")
                sol = sla.splu(Kb).solve(np.r_[-st["r"], gap])
                phi, dlam = sol[:-1], sol[-1]
            else:
                phi, dlam = sla.splu(J.tocsc()).solve(-st["r"]), 0.0
        except RuntimeError as exc:
            raise ConvergenceFailure(f"singular Newton system at iteration {k}") from exc
        t = 1.0
        for _ in range(config.max_backtracks):
            trial = mesh.with_vertices(res.positions(t * phi))
            if trial.triangle_areas.min() > config.min_area_ratio * min_area0:
                lam_t = lam + t * dlam
                st_t = stationarity(trial, body, lam_t, volume)
                gap_t = (st_t["V"] - V0) if cmc else 0.0
                if _merit(st_t, trial, gap_t) < merit:
                    break
            t *= config.backtrack
        else:
            degenerate = trial.triangle_areas.min() <= config.min_area_ratio * min_area0
            if degenerate and not smoothed:
                mesh = tangential_smooth(mesh, body)
                smoothed = True
                continue
            if degenerate:
                raise MeshDegenerated("triangle quality collapsed during relaxation")
            raise ConvergenceFailure(f"line search failed at iteration {k} (merit {merit:.3g})")
        mesh, lam = trial, lam_t
        iterations += 1
        history.append(area(mesh))

    res = residuals(mesh, body, lam, volume)
    return SolveResult(mesh=mesh, iterations=iterations, area_history=history, residuals=res,
                       log=log, multiplier=lam, volume=(volume(mesh) if cmc else None))


def relax_minimal(initial_mesh, body, config=None) -> SolveResult:
    """Relax a properly embedded surface to a free boundary minimal surface."""
    return _relax(initial_mesh, body, config or SolverConfig(), cmc=False)


def relax_cmc(initial_mesh, body, config=None) -> SolveResult:
    """Relax to a free boundary CMC surface at fixed enclosed volume.

    The volume target defaults to the initial mesh's enclosed volume.  The
    converged Lagrange multiplier equals the (constant) mean curvature.
    """
    return _relax(initial_mesh, body, config or SolverConfig(), cmc=True)

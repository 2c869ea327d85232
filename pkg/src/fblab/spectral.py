"""Index form, Robin eigenproblem, Morse index, Steklov spectrum, CMC stability.

The index form of a surface in a flat ambient body is

    I(f, f) = ∫|∇f|² − ∫|A|² f² − ∮ II(N, N) f²

and is assembled as the sparse pair (Q, M) with M the lumped area mass.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy import sparse
from scipy.sparse import linalg as sla

from . import body as bodymod
from .errors import AmbiguousIndex, ConvergenceFailure
from .mesh import (
    boundary_mass,
    cotan_stiffness,
    discrete_curvatures,
    lumped_mass,
    mesh_scale,
)

DENSE_LIMIT = 3000


@dataclass
class QuadraticFormPair:
    Q: sparse.csr_matrix
    M: sparse.csr_matrix
    normals: np.ndarray = field(default=None, repr=False)
    scale: float = 1.0

    @property
    def n(self):
        return self.Q.shape[0]

    def form(self, f, g=None):
        g = f if g is None else g
        return float(np.asarray(f) @ (self.Q @ np.asarray(g)))

    def rayleigh(self, f):
        f = np.asarray(f, float)
        return self.form(f) / float(f @ (self.M @ f))


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    negative_count: int
    near_zero_count: int
    zero_tolerance: float
    residuals: np.ndarray

    @property
    def eigenfunctions(self):
        return [self.eigenvectors[:, k] for k in range(self.eigenvectors.shape[1])]

    def to_dict(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "negative_count": int(self.negative_count),
            "near_zero_count": int(self.near_zero_count),
            "zero_tolerance": float(self.zero_tolerance),
            "residuals": [float(v) for v in self.residuals],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def normal_directions(mesh, body, normals=None):
    """Per-vertex variation directions: surface normal, made tangent to ∂Ω at the boundary."""
    d = np.array(mesh.vertex_normals if normals is None else normals, float)
    bv = mesh.boundary_vertices
    if len(bv):
        X = bodymod.outward_normal(body, mesh.vertices[bv])
        t = d[bv] - np.sum(d[bv] * X, 1)[:, None] * X
        d[bv] = t / np.linalg.norm(t, axis=1)[:, None]
    return d


def assemble_index_form(mesh, body, shape_data=None, normals=None, robin_scale=1.0,
                        potential=None, lumped_boundary=False) -> QuadraticFormPair:
    """Assemble Q = S − diag(|A|²)·M − II(N,N)·B and the lumped mass M.

    ``II(N, N)`` is evaluated from the body's analytic Hessian at boundary
    vertices.  ``B`` is the consistent P1 boundary mass unless
    ``lumped_boundary``; ``robin_scale`` multiplies the boundary term (0 gives
    the Neumann problem).  Ric(N, N) vanishes identically in flat space and
    therefore has no term here.
    """
    if potential is None:
        if shape_data is None:
            shape_data = discrete_curvatures(mesh)
        potential = shape_data.A2
    d = normal_directions(mesh, body, normals)
    S = cotan_stiffness(mesh)
    M = lumped_mass(mesh)
    Q = S - sparse.diags(np.asarray(potential) * mesh.vertex_areas)
    if robin_scale != 0 and mesh.r > 0:
        w = np.zeros(mesh.n_vertices)
        bv = mesh.boundary_vertices
        w[bv] = bodymod.second_form_along(body, mesh.vertices[bv], d[bv])
        Q = Q - robin_scale * boundary_mass(mesh, weights=w, lumped=lumped_boundary)
    Q = ((Q + Q.T) * 0.5).tocsr()
    return QuadraticFormPair(Q=Q, M=M, normals=d, scale=mesh_scale(mesh))


# -- linear algebra helpers --------------------------------------------------

def inertia_below(A):
    """Number of negative eigenvalues of the symmetric sparse matrix ``A``.

    Sylvester's law of inertia on an LDLᵀ factorization (SuperLU in symmetric
    mode with diagonal pivoting).  Returns None if the factorization fell
    back to off-diagonal pivots.
    """
    A = sparse.csc_matrix(A)
    try:
        lu = sla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                      options=dict(SymmetricMode=True))
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    return int(np.sum(lu.U.diagonal() < 0))


def _count_below(pair, shift):
    n = inertia_below(pair.Q - shift * pair.M)
    if n is None:
        raise ConvergenceFailure("inertia count failed (non-symmetric pivoting)")
    return n


def solve_spectrum(pair: QuadraticFormPair, count=12, zero_tolerance=None) -> Spectrum:
    """Lowest ``count`` eigenpairs of ``Q v = λ M v``.

    Dense below DENSE_LIMIT unknowns; otherwise shift-invert Lanczos with the
    shift placed below the spectrum (located with inertia counts), followed by
    an inertia check that no eigenvalue inside the window was missed.
    """
    n = pair.n
    count = min(count, n)
    if n <= DENSE_LIMIT:
        w, V = la.eigh(pair.Q.toarray(), pair.M.toarray(), subset_by_index=[0, count - 1])
    else:
        w, V = _sparse_lowest(pair, count)
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    # fix eigenvector signs deterministically
    for k in range(V.shape[1]):
        j = np.argmax(np.abs(V[:, k]))
        if V[j, k] < 0:
            V[:, k] = -V[:, k]
    qnorm = float(abs(pair.Q).sum(axis=1).max())
    res = np.linalg.norm(pair.Q @ V - (pair.M @ V) * w, axis=0) / qnorm
    if zero_tolerance is None:
        zero_tolerance = 1e-4 * float(np.max(np.abs(w)))
    return Spectrum(
        eigenvalues=w,
        eigenvectors=V,
        negative_count=int(np.sum(w < -zero_tolerance)),
        near_zero_count=int(np.sum(np.abs(w) <= zero_tolerance)),
        zero_tolerance=float(zero_tolerance),
        residuals=res,
    )


def _sparse_lowest(pair, count):
    s = 1.0 / pair.scale ** 2
    lower = -s
    for _ in range(60):
        if _count_below(pair, lower) == 0:
            break
        lower *= 4
    else:
        raise ConvergenceFailure("could not bracket the lowest eigenvalue")
    v0 = np.ones(pair.n)
    try:
        w, V = sla.eigsh(pair.Q.tocsc(), k=count, M=pair.M.tocsc(), sigma=lower,
                         which="LM", v0=v0, tol=0)
    except sla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    gap = 1e-6 * max(1.0, abs(w[-1])) * s
    if _count_below(pair, w[-1] + gap) < count:
        raise ConvergenceFailure("eigensolver skipped an eigenvalue inside the window")
    return w, V


def rayleigh_minimum_check(pair, spectrum, trials=100, seed=0):
    """Rayleigh quotients of random fields; all must be ≥ λ₁."""
    rng = np.random.default_rng(seed)
    q = [pair.rayleigh(rng.normal(size=pair.n)) for _ in range(trials)]
    return np.array(q)


# -- Morse index --------------------------------------------------------------

def jacobi_candidates(mesh, body, normals):
    """Normal components of the rigid motions preserving the body."""
    x = mesh.vertices
    return [np.sum(f(x) * normals, 1) for f in body.symmetry_fields()]


def _span_residual(u, C, M):
    """M-norm of the part of ``u`` outside span(C) (u assumed M-normalized)."""
    if not C:
        return 1.0
    Cm = np.column_stack(C)
    G = Cm.T @ (M @ Cm)
    coef = np.linalg.lstsq(G, Cm.T @ (M @ u), rcond=None)[0]
    r = u - Cm @ coef
    return float(np.sqrt(max(r @ (M @ r), 0.0)))


def index_analysis(mesh, body, shape_data=None, count=12, pair=None, match_tol=0.1):
    """Morse index with explicit handling of near-zero eigenvalues.

    Eigenvalues within twice the zero tolerance are matched against the normal
    components of rigid motions that preserve the body.  Matched ones are
    nullity; an unmatched one raises AmbiguousIndex.
    """
    if pair is None:
        pair = assemble_index_form(mesh, body, shape_data)
    spec = solve_spectrum(pair, count)
    tol = spec.zero_tolerance
    w = spec.eigenvalues
    cands = jacobi_candidates(mesh, body, pair.normals)
    band = np.flatnonzero(np.abs(w) <= 2 * tol)
    matched, unmatched = [], []
    for k in band:
        r = _span_residual(spec.eigenvectors[:, k], cands, pair.M)
        (matched if r <= match_tol else unmatched).append((int(k), float(w[k]), r))
    if unmatched:
        raise AmbiguousIndex(f"eigenvalues {[u[1] for u in unmatched]} are within 2x tolerance of 0 "
                             f"and not explained by symmetry Jacobi fields", w)
    index = int(np.sum(w < -2 * tol))
    if index == count:
        raise ConvergenceFailure("spectral window too small to contain the whole index")
    return {
        "index": index,
        "nullity": len(matched),
        "matched": matched,
        "spectrum": spec,
        "pair": pair,
    }


def morse_index(mesh, body, shape_data=None, count=12) -> int:
    return index_analysis(mesh, body, shape_data, count)["index"]


# -- Steklov ------------------------------------------------------------------

def steklov_spectrum(mesh, count=6, return_vectors=False):
    """Eigenvalues of the Dirichlet-to-Neumann map, σ₀ = 0 ≤ σ₁ ≤ ….

    The DtN form is the Schur complement of the stiffness onto the boundary
    vertices, paired with the (lumped) boundary mass.
    """
    if mesh.r == 0:
        raise ValueError("Steklov spectrum needs a boundary")
    S = cotan_stiffness(mesh).tocsc()
    b = mesh.boundary_vertices
    i = mesh.interior_vertices
    Sbb = S[b][:, b].toarray()
    if len(i):
        Sib = S[i][:, b]
        lu = sla.splu(S[i][:, i].tocsc())
        X = lu.solve(Sib.toarray())
        D = Sbb - (Sib.T @ X)
    else:
        D = Sbb
    D = 0.5 * (D + D.T)
    Bd = mesh.boundary_vertex_lengths[b]
    k = min(count, len(b))
    w, V = la.eigh(D, np.diag(Bd), subset_by_index=[0, k - 1])
    return (w, V, b) if return_vectors else w


# -- CMC stability -----------------------------------------------------------

def constrained_minimum(pair, constraint, count=1):
    """Lowest eigenvalues of the pair restricted to {v : constraintᵀ v = 0}."""
    c = np.asarray(constraint, float)
    n = pair.n
    if n <= DENSE_LIMIT:
        Z = la.null_space(c[None, :])
        Qz = Z.T @ (pair.Q @ Z)
        Mz = Z.T @ (pair.M @ Z)
        w, Vz = la.eigh(0.5 * (Qz + Qz.T), 0.5 * (Mz + Mz.T), subset_by_index=[0, count - 1])
        return w, Z @ Vz
    return _constrained_sparse(pair, c, count)


def _constrained_sparse(pair, c, count):
    s = 1.0 / pair.scale ** 2
    col = sparse.csc_matrix(c[:, None])

    def bordered(shift):
        return sparse.bmat([[pair.Q - shift * pair.M, col], [col.T, None]], format="csc")

    def count_below(shift):
        k = inertia_below(bordered(shift))
        if k is None:
            raise ConvergenceFailure("inertia count failed on bordered system")
        return k - 1  # the border contributes one negative eigenvalue

    lower = -s
    for _ in range(60):
        if count_below(lower) == 0:
            break
        lower *= 4
    else:
        raise ConvergenceFailure("could not bracket constrained spectrum")
    lu = sla.splu(bordered(lower))
    n = pair.n
    M = pair.M

    def opinv(x):
        return lu.solve(np.r_[x, 0.0])[:n]

    OP = sla.LinearOperator((n, n), matvec=opinv, dtype=float)
    # start vector inside the constraint space
    v0 = np.ones(n)
    v0 -= c * (c @ v0) / (c @ c)
    v0 += np.linspace(0, 1, n) - np.linspace(0, 1, n) @ c / (c @ c) * c
    w, V = sla.eigsh(pair.Q.tocsc(), k=count + 1, M=M.tocsc(), sigma=lower, OPinv=OP,
                     which="LM", v0=v0, tol=0)
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    keep = np.abs(c @ V) <= 1e-6 * np.linalg.norm(c) * np.linalg.norm(V, axis=0)
    return w[keep][:count], V[:, keep][:, :count]


def cmc_stability_check(mesh, body, shape_data=None, tol=1e-6, pair=None, count=6,
                        match_tol=0.1):
    """Minimum of the index form over mean-zero fields; stable iff ≥ −tol.

    Near-zero constrained eigenvalues (within twice ``1e-4·max|λ|``) whose
    eigenvectors lie in the span of mean-zero symmetry Jacobi fields are
    discretizations of exact null directions.  They are reported as nullity
    with eigenvalue 0; their raw discrete values are kept under
    ``raw_eigenvalues`` and ``null_modes``.
    """
    if pair is None:
        pair = assemble_index_form(mesh, body, shape_data)
    M = pair.M
    ones = np.ones(pair.n)
    constraint = M @ ones
    w, V = constrained_minimum(pair, constraint, count=min(count, pair.n - 1))
    zero_tol = 1e-4 * float(np.max(np.abs(w)))
    mass = float(ones @ constraint)
    cands = [c - (c @ constraint) / mass for c in jacobi_candidates(mesh, body, pair.normals)]
    cands = [c for c in cands if np.sqrt(c @ (M @ c)) > 1e-8 * np.sqrt(mass)]
    null_modes, regular = [], []
    for k in range(len(w)):
        v = V[:, k] / np.sqrt(V[:, k] @ (M @ V[:, k]))
        if abs(w[k]) <= 2 * zero_tol and _span_residual(v, cands, M) <= match_tol:
            null_modes.append(float(w[k]))
        else:
            regular.append(k)
    lam = min([float(w[k]) for k in regular] + ([0.0] if null_modes else []))
    first = regular[0] if regular else 0
    return {"min_constrained_eigenvalue": lam, "stable": bool(lam >= -tol),
            "tolerance": tol, "raw_eigenvalues": [float(x) for x in w],
            "null_modes": null_modes, "zero_tolerance": zero_tol,
            "eigenvector": V[:, first]}

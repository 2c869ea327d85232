"""Proper maps to the closed unit disk, their energy and degree, and Möbius balancing."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import linalg as sla

from .errors import MassConcentrated, NonProper, NoConvergence, WrongTopology, ZeroOnBoundary
from .mesh import cotan_stiffness, lumped_mass

BOUNDARY_TOL = 1e-12


def mobius(a, z):
    """Disk automorphism m_a(z) = (z − a)/(1 − ā z)."""
    a = complex(a)
    if abs(a) >= 1:
        raise ValueError("Möbius parameter must satisfy |a| < 1")
    z = np.asarray(z, complex)
    return (z - a) / (1 - np.conj(a) * z)


@dataclass(frozen=True)
class MobiusPoint:
    a: complex

    def __post_init__(self):
        if not abs(self.a) < 1:
            raise ValueError("|a| must be < 1")

    def __call__(self, z):
        return mobius(self.a, z)


def winding_number(z):
    """Winding number of the closed polygon ``z`` (complex samples) about 0."""
    z = np.asarray(z, complex)
    if np.min(np.abs(z)) < 1e-9:
        raise ZeroOnBoundary("boundary image passes within 1e-9 of the origin")
    turn = np.angle(np.roll(z, -1) / z)
    return int(np.rint(turn.sum() / (2 * np.pi)))


@dataclass
class DiskMap:
    """Per-vertex values F = f₁ + i f₂ of a map from a disk-type mesh to the closed disk."""

    mesh: object
    values: np.ndarray
    a0: complex | None = None

    @property
    def f1(self):
        return self.values.real

    @property
    def f2(self):
        return self.values.imag

    @property
    def degree(self):
        return degree(self)

    @property
    def energy(self):
        """E = ½ Σᵢ ∫|∇fᵢ|² of the piecewise-linear interpolant."""
        S = cotan_stiffness(self.mesh)
        return 0.5 * float(self.f1 @ (S @ self.f1) + self.f2 @ (S @ self.f2))

    @property
    def properness_residual(self):
        """(max interior overshoot (|F|−1)⁺, min boundary |F|)."""
        r = np.abs(self.values)
        inner = r[self.mesh.interior_vertices]
        over = float(max(0.0, inner.max() - 1)) if len(inner) else 0.0
        bmin = float(r[self.mesh.boundary_vertices].min())
        return over, bmin

    def to_dict(self):
        return {
            "f": [[float(v.real), float(v.imag)] for v in self.values],
            "degree": self.degree,
            "energy": self.energy,
            "a0": None if self.a0 is None else [float(self.a0.real), float(self.a0.imag)],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def harmonic_disk_map(mesh) -> DiskMap:
    """Discrete harmonic map with the boundary sent to the unit circle by arclength."""
    if mesh.genus != 0 or mesh.r != 1:
        raise WrongTopology(f"disk maps need g = 0 and r = 1 (got g = {mesh.genus}, r = {mesh.r})")
    loop = mesh.boundary_loops[0]
    p = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    s = np.r_[0.0, np.cumsum(seg)[:-1]] / seg.sum()
    F = np.zeros(mesh.n_vertices, complex)
    F[loop] = np.exp(2j * np.pi * s)
    inner = mesh.interior_vertices
    if len(inner):
        S = cotan_stiffness(mesh).tocsr()
        Sii = S[inner][:, inner].tocsc()
        rhs = -(S[inner][:, loop] @ F[loop])
        lu = sla.splu(Sii)
        F[inner] = lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))
        worst = float(np.abs(F[inner]).max())
        if worst > 1 - BOUNDARY_TOL:
            raise NonProper(f"interior vertex mapped to |F| = {worst:.6g}")
    return DiskMap(mesh, F)


def degree(diskmap) -> int:
    """Total boundary winding number of F about the origin."""
    return sum(winding_number(diskmap.values[lp]) for lp in diskmap.mesh.boundary_loops)


def image_areas(diskmap):
    """Signed area of each triangle's image under the piecewise-linear map."""
    z = diskmap.values[diskmap.mesh.triangles]
    u, v = z[:, 1] - z[:, 0], z[:, 2] - z[:, 0]
    return 0.5 * (u.real * v.imag - u.imag * v.real)


def triangle_energies(diskmap):
    """Per-triangle conformal energy ½∫|dF|²."""
    m = diskmap.mesh
    t = m.triangles
    cot = m.corner_angles
    with np.errstate(divide="ignore"):
        c = 1.0 / np.tan(cot)
    z = diskmap.values
    e = np.zeros(len(t))
    for k in range(3):
        i, j = t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        e += 0.25 * c[:, k] * np.abs(z[i] - z[j]) ** 2
    return e


def conformal_energy_bound(diskmap):
    """Energy versus π·deg and versus the image area counted with multiplicity.

    Per triangle, energy ≥ |signed image area| holds exactly for P1 maps, with
    equality iff the triangle map is conformal.  ``defect`` = E − image area is
    the measured conformality defect; ``residual`` = E − π·deg also contains
    the polygonal-image error of the boundary circle.
    """
    E = diskmap.energy
    deg = diskmap.degree
    img = float(np.sum(image_areas(diskmap)))
    per_tri = triangle_energies(diskmap) - np.abs(image_areas(diskmap))
    return {
        "E": E,
        "pi_degree": np.pi * deg,
        "two_pi_degree": 2 * np.pi * deg,
        "image_area": img,
        "defect": E - img,
        "residual": E - np.pi * deg,
        "min_triangle_gap": float(per_tri.min()),
    }


def mobius_apply(diskmap, a) -> DiskMap:
    return DiskMap(diskmap.mesh, mobius(a, diskmap.values), a0=complex(a))


# -- balancing -----------------------------------------------------------------

def balance_residual(z, w, a):
    """f(a) = Σ w_v m_a(z_v) for normalized weights ``w``."""
    return complex(np.sum(w * mobius(a, z)))


def seed_grid():
    """Deterministic 25-point seed grid: the origin and three rings of eight."""
    pts = [0j]
    for k, rad in enumerate((0.3, 0.6, 0.9)):
        ang = 2 * np.pi * (np.arange(8) + 0.5 * (k % 2)) / 8
        pts.extend(rad * np.exp(1j * ang))
    return np.array(pts)


def _newton(fun, a, tol, max_iter=60, h=1e-7):
    """Damped Newton on the planar map ``fun``; Jacobian by central differences."""
    fa = fun(a)
    for _ in range(max_iter):
        if abs(fa) <= 1e-3 * tol:
            return a, fa, True
        J = np.empty((2, 2))
        for k, e in enumerate((h, 1j * h)):
            d = (fun(a + e) - fun(a - e)) / (2 * h)
            J[:, k] = d.real, d.imag
        try:
            step = np.linalg.solve(J, [-fa.real, -fa.imag])
        except np.linalg.LinAlgError:
            return a, fa, abs(fa) <= tol
        step = complex(step[0], step[1])
        t = 1.0
        while t > 1e-10:
            trial = a + t * step
            if abs(trial) < 1 - 1e-12:
                ft = fun(trial)
                if abs(ft) < abs(fa):
                    break
            t *= 0.5
        else:
            return a, fa, abs(fa) <= tol
        a, fa = trial, ft
    return a, fa, abs(fa) <= tol


def _continuation(z, w, tol, a_start=0j):
    """Track the zero of a ↦ Σ w m_a(t z) from t = 0 (zero at 0) to t = 1."""
    t, dt, a = 0.0, 0.25, a_start
    while t < 1:
        t_next = min(1.0, t + dt)
        a_new, fa, ok = _newton(lambda b: balance_residual(t_next * z, w, b), a, tol)
        if ok:
            t, a = t_next, a_new
            dt = min(2 * dt, 0.25)
        else:
            dt *= 0.5
            if dt < 1e-6:
                return a, fa, False
    return a, balance_residual(z, w, a), True


def _check_concentration(z, w):
    j = int(np.argmax(w))
    near = np.abs(z - z[j]) <= 1e-9
    if np.sum(w[near]) >= 1 - 1e-9 and abs(z[j]) >= 1 - 1e-9:
        raise MassConcentrated("all weight sits at one point of the unit circle")


def balance_points(z, weights, tol=1e-10):
    """Find a₀ with Σ w_v m_{a₀}(z_v) = 0 for points in the closed disk.

    Newton is started from every point of the seed grid; the zero with the
    smallest residual is returned together with all distinct zeros found.
    If every seed stalls, a continuation in the point positions is used.
    """
    z = np.asarray(z, complex)
    w = np.asarray(weights, float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive total")
    w = w / w.sum()
    _check_concentration(z, w)
    fun = lambda a: balance_residual(z, w, a)  # noqa: E731
    zeros, best = [], (None, np.inf)
    for seed in seed_grid():
        a, fa, ok = _newton(fun, seed, tol)
        if abs(fa) < best[1]:
            best = (a, abs(fa))
        if ok and not any(abs(a - b) <= 1e-6 for b in zeros):
            zeros.append(a)
    if not zeros:
        a, fa, ok = _continuation(z, w, tol)
        if abs(fa) < best[1]:
            best = (a, abs(fa))
        if not ok or abs(fa) > tol:
            raise NoConvergence("balancing did not reach tolerance", best[1], best[0])
        zeros.append(a)
    a0 = min(zeros, key=lambda b: (abs(fun(b)), abs(b)))
    return {"a0": complex(a0), "residual": abs(fun(a0)), "zeros": [complex(b) for b in zeros]}


def balance(diskmap, weights, tol=1e-10):
    """Balance F against ``weights`` (pointwise φ₁ values) integrated with the lumped mass."""
    mass = lumped_mass(diskmap.mesh).diagonal()
    out = balance_points(diskmap.values, np.asarray(weights, float) * mass, tol)
    out["map"] = mobius_apply(diskmap, out["a0"])
    return out


def prepare_weight(phi):
    """Flip φ₁ to have nonnegative mass and clamp small negative undershoots."""
    phi = np.asarray(phi, float)
    if phi.sum() < 0:
        phi = -phi
    clamp = float(max(0.0, -phi.min())) / float(np.abs(phi).max())
    return np.maximum(phi, 0.0), clamp


def balanced_test_functions(mesh, phi1, diskmap=None, tol=1e-10):
    """Coordinates of the balanced disk map, M-orthogonal to φ₁."""
    if diskmap is None:
        diskmap = harmonic_disk_map(mesh)
    weight, clamp = prepare_weight(phi1)
    out = balance(diskmap, weight, tol)
    F = out["map"]
    mass = lumped_mass(mesh).diagonal()
    total = float(np.sum(weight * mass))
    ortho = [abs(float(np.sum(f * weight * mass))) / total for f in (F.f1, F.f2)]
    return {
        "f1": F.f1.copy(),
        "f2": F.f2.copy(),
        "a0": out["a0"],
        "zeros": out["zeros"],
        "balance_residual": out["residual"],
        "clamp": clamp,
        "orthogonality": ortho,
        "weight": weight,
        "map": F,
    }

"""Strictly convex bodies given by an implicit function, and their constants.

A body is ``{psi < 0}`` with analytic gradient and Hessian.  Boundary points
are reached by Newton iteration along the gradient, principal curvatures come
from the Hessian restricted to the tangent plane, and the circumradius R(Ω)
is the radius of the minimal enclosing ball of a dense boundary sample.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolation, HypothesisFails, NotStrictlyConvex, ProjectionDiverged


# Fixed harmonic polynomials for the perturbed-ball family, keyed by degree.
def _harmonic(l):
    if l == 2:
        f = lambda x, y, z: x * x - y * y + x * z
        g = lambda x, y, z: np.stack([2 * x + z, -2 * y, x], -1)
        h = lambda x, y, z: np.broadcast_to(np.array([[2.0, 0, 1], [0, -2, 0], [1, 0, 0]]),
                                            x.shape + (3, 3)).copy()
    elif l == 3:
        f = lambda x, y, z: x ** 3 - 3 * x * y * y + y * z * z - y ** 3 / 3
        g = lambda x, y, z: np.stack([3 * x * x - 3 * y * y,
                                      -6 * x * y + z * z - y * y,
                                      2 * y * z], -1)

        def h(x, y, z):
            H = np.zeros(x.shape + (3, 3))
            H[..., 0, 0] = 6 * x
            H[..., 0, 1] = H[..., 1, 0] = -6 * y
            H[..., 1, 1] = -6 * x - 2 * y
            H[..., 1, 2] = H[..., 2, 1] = 2 * z
            H[..., 2, 2] = 2 * y
            return H
    elif l == 4:
        f = lambda x, y, z: x ** 4 - 6 * x * x * y * y + y ** 4 + x * z ** 3 - x ** 3 * z
        g = lambda x, y, z: np.stack([4 * x ** 3 - 12 * x * y * y + z ** 3 - 3 * x * x * z,
                                      -12 * x * x * y + 4 * y ** 3,
                                      3 * x * z * z - x ** 3], -1)

        def h(x, y, z):
            H = np.zeros(x.shape + (3, 3))
            H[..., 0, 0] = 12 * x * x - 12 * y * y - 6 * x * z
            H[..., 0, 1] = H[..., 1, 0] = -24 * x * y
            H[..., 0, 2] = H[..., 2, 0] = 3 * z * z - 3 * x * x
            H[..., 1, 1] = -12 * x * x + 12 * y * y
            H[..., 2, 2] = 6 * x * z
            return H
    else:
        raise ValueError(f"unsupported harmonic index {l} (use 2, 3 or 4)")
    return f, g, h


@dataclass(frozen=True)
class ConvexBody:
    """Implicit body ``psi(x) < 0``.

    ``kind`` is one of ``ball`` (params: radius), ``ellipsoid`` (semi-axes
    a, b, c) or ``perturbed`` (radius, eps, harmonic index l), the latter being
    ``|x|² − radius² + eps·Y_l(x)`` for a fixed harmonic polynomial ``Y_l``.
    """

    kind: str
    params: tuple
    center: tuple = (0.0, 0.0, 0.0)

    # -- evaluators ---------------------------------------------------------
    def psi(self, x):
        y = np.asarray(x, float) - self.center
        if self.kind == "ball":
            return np.sum(y * y, -1) - self.params[0] ** 2
        if self.kind == "ellipsoid":
            a = np.asarray(self.params, float)
            return np.sum((y / a) ** 2, -1) - 1.0
        r, eps, l = self.params
        f, _, _ = _harmonic(int(l))
        return np.sum(y * y, -1) - r * r + eps * f(y[..., 0], y[..., 1], y[..., 2])

    def gradient(self, x):
        y = np.asarray(x, float) - self.center
        if self.kind == "ball":
            return 2 * y
        if self.kind == "ellipsoid":
            a = np.asarray(self.params, float)
            return 2 * y / a ** 2
        r, eps, l = self.params
        _, g, _ = _harmonic(int(l))
        return 2 * y + eps * g(y[..., 0], y[..., 1], y[..., 2])

    def hessian(self, x):
        y = np.asarray(x, float) - self.center
        shape = y.shape[:-1] + (3, 3)
        if self.kind == "ball":
            return np.broadcast_to(2 * np.eye(3), shape).copy()
        if self.kind == "ellipsoid":
            a = np.asarray(self.params, float)
            return np.broadcast_to(np.diag(2 / a ** 2), shape).copy()
        r, eps, l = self.params
        _, _, h = _harmonic(int(l))
        return 2 * np.eye(3) + eps * h(y[..., 0], y[..., 1], y[..., 2])

    @property
    def bounding_radius(self):
        """Radius of a ball around ``center`` that contains the body."""
        if self.kind == "ball":
            return float(self.params[0])
        if self.kind == "ellipsoid":
            return float(max(self.params))
        r, eps, _ = self.params
        # |Y_l| <= 3 r^l on |x| <= r for the polynomials above; generous margin
        return float(r * (1 + 4 * abs(eps) * max(r, 1.0) ** 4) + 1e-9)

    @property
    def is_round(self):
        return self.kind == "ball"

    def symmetry_fields(self):
        """Infinitesimal rigid motions preserving the body, as callables x -> ξ(x)."""
        c = np.asarray(self.center, float)
        axes = []
        if self.kind == "ball":
            axes = list(np.eye(3))
        elif self.kind == "ellipsoid":
            a = self.params
            for i in range(3):
                j, k = [m for m in range(3) if m != i]
                if abs(a[j] - a[k]) < 1e-14:
                    axes.append(np.eye(3)[i])
        return [lambda x, w=w: np.cross(w, np.asarray(x) - c) for w in axes]

    def describe(self):
        return {"kind": self.kind, "params": [float(p) for p in self.params],
                "center": [float(c) for c in self.center]}


def ball(radius=1.0, center=(0.0, 0.0, 0.0)):
    return ConvexBody("ball", (float(radius),), tuple(map(float, center)))


def ellipsoid(a, b, c):
    return ConvexBody("ellipsoid", (float(a), float(b), float(c)))


def perturbed_ball(radius=1.0, eps=0.02, l=2):
    return ConvexBody("perturbed", (float(radius), float(eps), int(l)))


def parse_body(spec: str) -> ConvexBody:
    """Parse ``ball:1``, ``ellipsoid:2,1,1`` or ``perturbed:0.9,0.02,3``."""
    kind, _, rest = spec.partition(":")
    vals = [float(v) for v in rest.split(",")] if rest else []
    if kind == "ball":
        return ball(*(vals or [1.0]))
    if kind == "ellipsoid" and len(vals) == 3:
        return ellipsoid(*vals)
    if kind == "perturbed" and len(vals) == 3:
        return perturbed_ball(vals[0], vals[1], int(vals[2]))
    raise ValueError(f"cannot parse body spec {spec!r}")


# -- boundary geometry ------------------------------------------------------

def project_to_boundary(body, points, tol=1e-12, max_iter=60):
    """Newton iteration along the gradient until ``|psi| <= tol``."""
    p = np.array(points, float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    for _ in range(max_iter):
        val = body.psi(p)
        if np.all(np.abs(val) <= tol):
            break
        g = body.gradient(p)
        gg = np.sum(g * g, -1)
        if np.any(gg < 1e-300):
            raise ProjectionDiverged("vanishing gradient during boundary projection")
        step = (val / gg)[:, None] * g
        p = p - step
        if not np.all(np.isfinite(p)):
            raise ProjectionDiverged("non-finite iterate in boundary projection")
    else:
        bad = float(np.max(np.abs(body.psi(p))))
        raise ProjectionDiverged(f"boundary projection did not converge (max |psi| = {bad:.3g})")
    return p[0] if single else p


def outward_normal(body, points):
    g = body.gradient(points)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def tangent_basis(normals):
    n = np.atleast_2d(normals)
    helper = np.where(np.abs(n[:, [0]]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    return e1, np.cross(n, e1)


def boundary_second_form(body, points):
    """Shape operator of ∂Ω (w.r.t. the outward normal) in a tangent frame.

    Returns ``(forms, k)`` with forms of shape (m, 2, 2) and principal
    curvatures ``k`` of shape (m, 2) sorted ascending.
    """
    p = np.atleast_2d(points)
    g = body.gradient(p)
    gn = np.linalg.norm(g, axis=1)
    e1, e2 = tangent_basis(g / gn[:, None])
    E = np.stack([e1, e2], 1)
    forms = np.einsum("vai,vij,vbj->vab", E, body.hessian(p), E) / gn[:, None, None]
    return forms, np.linalg.eigvalsh(forms)


def second_form_along(body, points, directions):
    """II(V, V) for directions projected to the tangent plane and normalized."""
    p = np.atleast_2d(points)
    g = body.gradient(p)
    gn = np.linalg.norm(g, axis=1)
    n = g / gn[:, None]
    v = np.atleast_2d(directions)
    v = v - np.sum(v * n, 1)[:, None] * n
    v /= np.linalg.norm(v, axis=1)[:, None]
    return np.einsum("vi,vij,vj->v", v, body.hessian(p), v) / gn


def fibonacci_directions(n):
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + np.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    return np.c_[s * np.cos(phi), s * np.sin(phi), z]


def sample_boundary(body, n=10_000):
    """Quasi-uniform boundary sample: Fibonacci rays from the centre, intersected with ∂Ω."""
    u = fibonacci_directions(n)
    c = np.asarray(body.center, float)
    lo = np.zeros(n)
    hi = np.full(n, 2 * body.bounding_radius)
    if np.any(body.psi(c + hi[:, None] * u) <= 0):
        raise ProjectionDiverged("bounding radius does not enclose the body")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = body.psi(c + mid[:, None] * u) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return project_to_boundary(body, c + (0.5 * (lo + hi))[:, None] * u)


def check_convexity(body, sample_count=10_000):
    """Minimum principal curvature of ∂Ω over a boundary sample."""
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")
    pts = sample_boundary(body, sample_count)
    _, k = boundary_second_form(body, pts)
    c = float(k[:, 0].min())
    if c <= 0:
        raise NotStrictlyConvex(f"principal curvature {c:.3g} <= 0 on the boundary sample")
    return c


def require_convexity_at_least(body, lower=1.0, sample_count=10_000, slack=1e-6):
    """Certify II >= lower on the sample, else raise HypothesisFails."""
    c = check_convexity(body, sample_count)
    if c < lower - slack:
        raise HypothesisFails(f"NotStrictlyConvex-for-c={lower:g}: min principal curvature {c:.6g} "
                              f"over {sample_count} samples")
    return c


# -- minimal enclosing ball ---------------------------------------------------

@dataclass
class EnclosingBall:
    center: np.ndarray
    radius: float
    support: np.ndarray = field(default=None, repr=False)

    def contains(self, points, tol=1e-12):
        d = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        return d <= self.radius + tol * max(1.0, self.radius)


def circumball(points):
    """Smallest ball having all of ``points`` (≤ 4, affinely independent) on its sphere."""
    p = np.atleast_2d(np.asarray(points, float))
    p0 = p[0]
    if len(p) == 1:
        return p0.copy(), 0.0
    V = p[1:] - p0
    G = V @ V.T
    rhs = 0.5 * np.sum(V * V, 1)
    lam = np.linalg.lstsq(G, rhs, rcond=None)[0]
    c = p0 + lam @ V
    return c, float(np.max(np.linalg.norm(p - c, axis=1)))


def enclosing_ball(points, seed=0, tol=1e-12) -> EnclosingBall:
    """Minimal enclosing ball by Welzl's algorithm with the move-to-front heuristic.

    The input order is shuffled with a seeded generator first, so results are
    reproducible.  Recursion depth is bounded by the support size (≤ 4).
    """
    pts = np.asarray(points, float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("need at least one point")
    order = np.random.default_rng(seed).permutation(len(pts))
    P = pts[order]
    idx = np.arange(len(P))

    def outside(c, r, cand):
        d2 = np.sum((P[cand] - c) ** 2, 1)
        return d2 > (r * (1 + tol) + tol) ** 2

    def mtf(end, support):
        c, r = circumball(P[support]) if support else (P[idx[0]].copy(), 0.0)
        if len(support) == 4:
            return c, r
        start = 0 if support else 1
        i = start
        while i < end:
            bad = np.flatnonzero(outside(c, r, idx[i:end]))
            if len(bad) == 0:
                break
            i += bad[0]
            j = idx[i]
            c, r = mtf(i, support + [j])
            idx[1:i + 1] = idx[0:i].copy()
            idx[0] = j
            i += 1
        return c, r

    c, r = mtf(len(P), [])
    # support: points on the sphere (up to roundoff)
    d = np.linalg.norm(pts - c, axis=1)
    support = np.flatnonzero(d >= r - 1e-9 * max(r, 1.0))
    return EnclosingBall(center=np.asarray(c), radius=float(r), support=support)


def diameter(points, chunk=2048):
    p = np.asarray(points, float)
    best = 0.0
    for s in range(0, len(p), chunk):
        blk = p[s:s + chunk]
        d2 = np.sum(blk ** 2, 1)[:, None] + np.sum(p ** 2, 1)[None, :] - 2 * blk @ p.T
        best = max(best, float(d2.max()))
    return float(np.sqrt(max(best, 0.0)))


def geometric_constants(body, n_samples=10_000, seed=0, convexity=None):
    """R(Ω) from the enclosing ball of a boundary sample, plus a diameter estimate.

    Raises BoundViolation if ``diam/2 <= R <= diam`` fails on the sample, or
    if ``convexity >= 1`` is supplied and ``R < π`` fails.
    """
    pts = sample_boundary(body, n_samples)
    eb = enclosing_ball(pts, seed=seed)
    diam = diameter(pts)
    R = eb.radius
    eps = 1e-12 * max(1.0, diam)
    if not (diam / 2 - eps <= R <= diam + eps):
        raise BoundViolation(f"sandwich diam/2 <= R <= diam fails: R={R}, diam={diam}")
    if convexity is not None and convexity >= 1 - 1e-6 and not R < np.pi:
        raise BoundViolation(f"R = {R} >= pi although II >= 1")
    return {"R": R, "center": eb.center, "diam": diam, "n_samples": n_samples,
            "support_size": int(len(eb.support))}

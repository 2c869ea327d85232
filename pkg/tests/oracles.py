"""Independent reference computations used by the tests.

Nothing here calls into the package; each oracle is a closed form, a series or
an exhaustive search.
"""
from itertools import combinations
from math import factorial

import numpy as np


def circumsphere(p):
    """Sphere through 1-4 affinely independent points (closed forms per size)."""
    p = np.asarray(p, float)
    if len(p) == 1:
        return p[0], 0.0
    if len(p) == 2:
        c = 0.5 * (p[0] + p[1])
        return c, np.linalg.norm(p[0] - c)
    if len(p) == 3:
        a, b = p[0] - p[2], p[1] - p[2]
        axb = np.cross(a, b)
        den = 2 * axb @ axb
        if den < 1e-24:
            return None
        c = p[2] + np.cross(a @ a * b - b @ b * a, axb) / den
        return c, np.linalg.norm(p[0] - c)
    A = 2 * (p[1:] - p[0])
    if abs(np.linalg.det(A)) < 1e-14:
        return None
    c = np.linalg.solve(A, np.sum(p[1:] ** 2, 1) - p[0] @ p[0])
    return c, np.linalg.norm(p[0] - c)


def brute_force_enclosing_ball(points, tol=1e-10):
    """Smallest sphere through a support set of size <= 4 that contains every point."""
    pts = np.asarray(points, float)
    best = None
    for k in range(1, 5):
        for sub in combinations(range(len(pts)), k):
            s = circumsphere(pts[list(sub)])
            if s is None:
                continue
            c, r = s
            if np.all(np.linalg.norm(pts - c, axis=1) <= r + tol) and (best is None or r < best[1]):
                best = (c, r)
    return best


def bessel_i(nu, x, terms=60):
    """Modified Bessel function I_nu(x) for integer nu by its power series."""
    return sum((x / 2) ** (2 * k + nu) / (factorial(k) * factorial(k + nu)) for k in range(terms))


def disk_index_root(lo=1.6, hi=1.7, tol=1e-14):
    """Root x0 of x I1(x) = I0(x) by bisection.

    The first eigenvalue of the Jacobi operator of the flat unit disk with the
    Robin condition du/dn = u is -x0².
    """
    f = lambda x: x * bessel_i(1, x) - bessel_i(0, x)
    a, b = lo, hi
    assert f(a) < 0 < f(b)
    while b - a > tol:
        m = 0.5 * (a + b)
        a, b = (m, b) if f(m) < 0 else (a, m)
    return 0.5 * (a + b)


def orthogonal_cap(rho, ball_radius=1.0):
    """Spherical cap of radius rho meeting the sphere of radius B at right angles.

    Centre at distance d = sqrt(B² + rho²); the boundary circle has radius
    b = rho B / d and the cap has mean curvature 2/rho.
    """
    B = ball_radius
    d = np.hypot(B, rho)
    b = rho * B / d
    h = rho - rho ** 2 / d
    return {"boundary_radius": b, "length": 2 * np.pi * b, "area": 2 * np.pi * rho * h,
            "H": 2.0 / rho}


def ellipsoid_principal_curvatures_on_axis(axes, i):
    """Principal curvatures of x²/a²+y²/b²+z²/c²=1 at the tip of axis i: a_i / a_j²."""
    a = np.asarray(axes, float)
    return sorted(a[i] / a[j] ** 2 for j in range(3) if j != i)

"""Structured test surfaces: disks, caps, cylinders and small hand meshes."""
from __future__ import annotations

import numpy as np

from .mesh import build_mesh


def _ring_strip(inner, outer):
    """Triangulate between two concentric index rings, both starting at angle 0.

    Uses integer angle comparisons so the result is exactly symmetric under
    any rotation that maps both rings to themselves.
    """
    m, n = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < m or j < n:
        # advance whichever ring has the smaller next angle (j+1)/n vs (i+1)/m
        if i == m or (j < n and (j + 1) * m <= (i + 1) * n):
            tris.append((inner[i % m], outer[j % n], outer[(j + 1) % n]))
            j += 1
        else:
            tris.append((inner[i % m], outer[j % n], inner[(i + 1) % m]))
            i += 1
    return tris


def disk_rings(n_rings):
    """Unit disk in the plane z=0: centre plus rings of 6k points, k = 1..n_rings.

    Returns ``(vertices, triangles)``; vertex count is ``1 + 3 n (n + 1)``.
    """
    pts = [(0.0, 0.0)]
    rings = [np.array([0])]
    for k in range(1, n_rings + 1):
        m = 6 * k
        th = 2 * np.pi * np.arange(m) / m
        start = len(pts)
        r = k / n_rings
        pts.extend(zip(r * np.cos(th), r * np.sin(th)))
        rings.append(np.arange(start, start + m))
    tris = []
    for k in range(1, n_rings + 1):
        inner, outer = rings[k - 1], rings[k]
        if k == 1:
            tris += [(0, outer[j], outer[(j + 1) % 6]) for j in range(6)]
        else:
            tris += _ring_strip(inner, outer)
    v = np.c_[np.array(pts), np.zeros(len(pts))]
    return v, np.array(tris, dtype=np.int64)


def rings_for_vertices(target):
    """Ring count whose disk mesh has roughly ``target`` vertices."""
    return max(2, int(round((-3 + np.sqrt(9 + 12 * (target - 1))) / 6)))


def disk_mesh(n_rings=20, radius=1.0):
    v, t = disk_rings(n_rings)
    return build_mesh(radius * v, t)


def rotation_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def tilted_disk_mesh(n_rings, angle, radius=1.0):
    v, t = disk_rings(n_rings)
    return build_mesh(radius * v @ rotation_x(angle).T, t)


def polar_cap(n_rings, center, sphere_radius, polar_angle):
    """Cap of the sphere |x - center| = R around its lowest point, geodesic-polar.

    Ring k of the disk mesh is placed at polar angle ``(k / n) * polar_angle``
    measured from the direction -z; orientation gives normals pointing toward
    the sphere centre.
    """
    v, t = disk_rings(n_rings)
    s = np.hypot(v[:, 0], v[:, 1])
    th = np.arctan2(v[:, 1], v[:, 0])
    phi = s * polar_angle
    R = sphere_radius
    x = np.c_[R * np.sin(phi) * np.cos(th), R * np.sin(phi) * np.sin(th), -R * np.cos(phi)]
    return build_mesh(x + np.asarray(center, float), t)


def orthogonal_cap_geometry(rho, ball_radius=1.0):
    """Sphere of radius ``rho`` meeting the ball of radius ``ball_radius`` orthogonally.

    Returns a dict with the sphere centre height ``d``, the cap polar angle,
    the boundary circle radius ``b``, the cap area and the mean curvature 2/rho.
    """
    B = ball_radius
    d = np.hypot(B, rho)
    beta = np.arccos(rho / d)
    b = rho * B / d
    height = rho - rho ** 2 / d
    return {
        "center_height": d,
        "polar_angle": beta,
        "boundary_radius": b,
        "boundary_length": 2 * np.pi * b,
        "area": 2 * np.pi * rho * height,
        "mean_curvature": 2.0 / rho,
        "plane_height": B * B / d,
    }


def spherical_cap_mesh(n_rings, rho, ball_radius=1.0):
    """Spherical cap meeting the sphere of radius ``ball_radius`` at right angles."""
    geo = orthogonal_cap_geometry(rho, ball_radius)
    return polar_cap(n_rings, (0, 0, geo["center_height"]), rho, geo["polar_angle"])


def unit_sphere_cap(n_rings, polar_angle=np.pi / 4):
    return polar_cap(n_rings, (0, 0, 0), 1.0, polar_angle)


def cylinder_patch(n_theta=40, n_z=20, radius=1.0, angle=np.pi / 2, height=1.0):
    th = np.linspace(-angle / 2, angle / 2, n_theta + 1)
    z = np.linspace(-height / 2, height / 2, n_z + 1)
    T, Z = np.meshgrid(th, z, indexing="ij")
    v = np.c_[radius * np.cos(T.ravel()), radius * np.sin(T.ravel()), Z.ravel()]
    tris = []
    idx = lambda i, j: i * (n_z + 1) + j
    for i in range(n_theta):
        for j in range(n_z):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if (i + j) % 2:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return build_mesh(v, tris)


def square_mesh(n=1, side=1.0):
    """Flat square [0, side]² with 2 n² triangles."""
    g = np.linspace(0, side, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    v = np.c_[X.ravel(), Y.ravel(), np.zeros(X.size)]
    tris = []
    idx = lambda i, j: i * (n + 1) + j
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris += [(a, b, c), (a, c, d)]
    return build_mesh(v, tris)


def ngon_fan(n, radius=1.0):
    th = 2 * np.pi * np.arange(n) / n
    v = np.r_[[[0.0, 0.0, 0.0]], np.c_[radius * np.cos(th), radius * np.sin(th), np.zeros(n)]]
    tris = [(0, 1 + j, 1 + (j + 1) % n) for j in range(n)]
    return build_mesh(v, tris)


def octahedron():
    v = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    t = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
         (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    return build_mesh(v, t)


def square_annulus():
    """Square with a square hole: 8 vertices, 8 triangles."""
    outer = [(-2, -2), (2, -2), (2, 2), (-2, 2)]
    inner = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    v = np.array(outer + inner, float)
    t = []
    for k in range(4):
        o0, o1 = k, (k + 1) % 4
        i0, i1 = 4 + k, 4 + (k + 1) % 4
        t += [(o0, o1, i1), (o0, i1, i0)]
    return build_mesh(v, t)


def single_triangle():
    return build_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [(0, 1, 2)])

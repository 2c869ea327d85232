import numpy as np
import pytest
from hypothesis import given, strategies as st

from meshes import random_surface
from fblab.errors import DegenerateTriangle, InconsistentOrientation, NonManifold
from fblab.generate import (
    cylinder_patch, disk_mesh, ngon_fan, octahedron, single_triangle, square_annulus,
    square_mesh, unit_sphere_cap,
)
from fblab.mesh import (
    area, boundary_geodesic_curvature, boundary_length, boundary_mass, boundary_turning_check,
    build_mesh, cotan_stiffness, dirichlet_energy, discrete_curvatures, lumped_mass,
    area_gradient,
)
from fblab.offio import read_off, write_off


# -- topology ----------------------------------------------------------------

@pytest.mark.parametrize("make, g, r, chi", [
    (single_triangle, 0, 1, 1),
    (octahedron, 0, 0, 2),
    (square_annulus, 0, 2, 0),
])
def test_topology_examples(make, g, r, chi):
    m = make()
    assert (m.genus, m.r, m.euler_characteristic) == (g, r, chi)


def test_annulus_counts():
    m = square_annulus()
    assert (m.n_vertices, len(m.triangles)) == (8, 8)
    assert len(m.edges) == 16


def test_rejects_bad_input():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]]
    with pytest.raises(NonManifold):
        build_mesh(v, [(0, 1, 2), (1, 0, 3), (0, 1, 4)])
    with pytest.raises(InconsistentOrientation):
        build_mesh(v[:4], [(0, 1, 2), (0, 1, 3)])
    with pytest.raises(DegenerateTriangle):
        build_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [(0, 1, 2)])
    with pytest.raises(ValueError):
        build_mesh(v, [(0, 1, 7)])


def test_off_roundtrip(tmp_path):
    m = disk_mesh(4)
    write_off(tmp_path / "d.off", m)
    back = read_off(tmp_path / "d.off")
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)


# -- area and length ---------------------------------------------------------

def test_square_area_length():
    m = square_mesh(1)
    assert area(m) == pytest.approx(1.0, abs=1e-15)
    assert boundary_length(m) == pytest.approx(4.0, abs=1e-15)


def test_ngon_closed_forms():
    n = 1024
    m = ngon_fan(n)
    assert area(m) == pytest.approx(n / 2 * np.sin(2 * np.pi / n), rel=1e-12)
    assert boundary_length(m) == pytest.approx(2 * n * np.sin(np.pi / n), rel=1e-12)
    assert abs(area(m) - np.pi) < 1e-4
    assert abs(boundary_length(m) - 2 * np.pi) < 1e-4


@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_scaling_laws(seed, c):
    m = random_surface(seed)
    s = m.scaled(c)
    assert area(s) == pytest.approx(c * c * area(m), rel=1e-12)
    assert boundary_length(s) == pytest.approx(c * boundary_length(m), rel=1e-12)


# -- operators ---------------------------------------------------------------

@given(st.integers(0, 10_000))
def test_stiffness_properties(seed):
    m = random_surface(seed)
    S = cotan_stiffness(m)
    assert abs(S - S.T).max() < 1e-12
    assert np.abs(S @ np.ones(m.n_vertices)).max() < 1e-10
    x = np.random.default_rng(seed).normal(size=m.n_vertices)
    assert x @ (S @ x) >= -1e-12
    assert lumped_mass(m).diagonal().sum() == pytest.approx(area(m), rel=1e-12)
    assert lumped_mass(m).diagonal().min() > 0
    assert boundary_mass(m).diagonal().sum() == pytest.approx(boundary_length(m), rel=1e-12)


def test_stiffness_kernel_is_constants():
    m = disk_mesh(6)
    w = np.linalg.eigvalsh(cotan_stiffness(m).toarray())
    assert np.sum(np.abs(w) < 1e-10) == 1


def test_boundary_mass_entries():
    m = square_mesh(3)
    b = boundary_mass(m).diagonal()
    assert np.allclose(b[m.boundary_vertices], 1.0 / 3.0)
    assert np.all(b[m.interior_vertices] == 0)


def test_dirichlet_examples():
    sq = square_mesh(4)
    assert dirichlet_energy(sq, sq.vertices[:, 0]) == pytest.approx(1.0, abs=1e-12)
    assert dirichlet_energy(sq, np.ones(sq.n_vertices)) == pytest.approx(0.0, abs=1e-12)
    fan = ngon_fan(1024)
    assert abs(dirichlet_energy(fan, fan.vertices[:, 0]) - np.pi) < 1e-3


def test_area_gradient_matches_finite_differences():
    m = random_surface(7)
    g = area_gradient(m)
    rng = np.random.default_rng(0)
    xi = rng.normal(size=m.vertices.shape)
    h = 1e-6
    fd = (area(m.with_vertices(m.vertices + h * xi)) - area(m.with_vertices(m.vertices - h * xi))) / (2 * h)
    assert np.sum(g * xi) == pytest.approx(fd, rel=1e-6)


# -- Gauss-Bonnet and boundary curvature ---------------------------------------

@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_gauss_bonnet_exact(seed, height):
    assert boundary_turning_check(random_surface(seed, height=height)) <= 1e-10


@pytest.mark.parametrize("make", [octahedron, square_annulus, single_triangle,
                                  lambda: unit_sphere_cap(8), lambda: cylinder_patch(10, 5)])
def test_gauss_bonnet_examples(make):
    assert boundary_turning_check(make()) <= 1e-10


def test_disk_boundary_curvature():
    m = disk_mesh(40)
    bv, kappa = boundary_geodesic_curvature(m)
    total = np.sum(kappa * m.boundary_vertex_lengths[bv])
    assert abs(total - 2 * np.pi) < 1e-3
    assert np.allclose(kappa, 1.0, atol=1e-3)


def test_square_turning_total():
    m = square_mesh(3)
    bv, kappa = boundary_geodesic_curvature(m)
    assert np.sum(kappa * m.boundary_vertex_lengths[bv]) == pytest.approx(2 * np.pi, abs=1e-12)


# -- curvature -------------------------------------------------------------------

def test_flat_disk_curvature():
    m = disk_mesh(12)
    sd = discrete_curvatures(m)
    iv = m.interior_vertices
    for q in (sd.H, sd.A2, sd.K):
        assert np.abs(q[iv]).max() < 1e-6


def test_sphere_cap_curvature():
    m = unit_sphere_cap(57)
    assert 9000 < m.n_vertices < 11000
    sd = discrete_curvatures(m)
    iv = m.interior_vertices
    # sign of H depends on orientation; magnitude is 2
    assert np.median(np.abs(np.abs(sd.H[iv]) - 2.0)) < 0.04
    assert np.median(np.abs(sd.K[iv] - 1.0)) < 0.02
    w = m.vertex_areas[iv]
    assert abs(np.sum(w * sd.K[iv]) / w.sum() - 1.0) < 0.02
    assert np.abs(sd.K_from_shape[iv] - 1.0).max() < 0.02


def test_cylinder_curvature():
    m = cylinder_patch(80, 40)
    sd = discrete_curvatures(m)
    iv = m.interior_vertices
    assert np.median(np.abs(sd.K[iv])) < 1e-2
    assert np.abs(sd.A2[iv] - 1.0).max() < 0.02
    assert np.abs(sd.K_from_shape[iv]).max() < 0.02


def test_curvature_convergence_on_sphere():
    errs = []
    for n in (8, 16, 32):
        m = unit_sphere_cap(n)
        sd = discrete_curvatures(m)
        iv = m.interior_vertices
        errs.append(np.abs(np.abs(sd.H[iv]) - 2.0).max())
    assert errs[2] < errs[1] < errs[0]


@given(st.integers(0, 10_000))
def test_shape_data_invariants(seed):
    m = random_surface(seed, n=60)
    sd = discrete_curvatures(m)
    tr = np.trace(sd.shape_operator, axis1=1, axis2=2)
    assert np.allclose(sd.H, tr, atol=1e-9)
    assert np.all(sd.A2 >= sd.H ** 2 / 2 - 1e-9)
    assert np.allclose(sd.shape_operator, np.swapaxes(sd.shape_operator, 1, 2))


def test_flat_gauss_equation_consistency():
    errs = []
    for n in (6, 12, 24):
        m = disk_mesh(n)
        sd = discrete_curvatures(m)
        iv = m.interior_vertices
        errs.append(np.abs(sd.K_from_shape[iv] - sd.K[iv]).max())
    assert max(errs) < 1e-8

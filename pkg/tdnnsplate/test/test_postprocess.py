import numpy as np
import pytest

from tdnnsplate.assembly import BCSpec, LoadSpec, assemble, build_plate_spaces
from tdnnsplate.fespace import SpaceKind, build_space
from tdnnsplate.material import MaterialParams, derive_tensors
from tdnnsplate.mesh import refine_uniform, unit_square_mesh
from tdnnsplate.postprocess import (VTK_TRI, ClampedSquareSolution, SolutionFields, convergence_rate,
                                    export_vtk, l2_difference, l2_error, read_vtk)
from tdnnsplate.solver import solve


@pytest.fixture(scope="module")
def solved():
    mesh = unit_square_mesh(2)
    t = 0.1
    tensors = derive_tensors(MaterialParams(E=12.0, nu=0.0, k_s=5.0 / 6.0, t=t))
    bc = BCSpec().clamp(1)
    spaces = build_plate_spaces(mesh, 1, bc, hybrid=True)
    system = assemble(mesh, spaces, tensors, LoadSpec(ClampedSquareSolution(t).g), bc, hybrid=True)
    return mesh, solve(system)


class TestClampedSquareSolution:

    @pytest.mark.parametrize('t', (1e-1, 1e-3, 1e-5))
    def test_centre_values(self, t):
        exact = ClampedSquareSolution(t)
        assert exact.theta(0.5, 0.5)[0] == 0.0
        assert exact.theta(0.5, 0.5)[1] == 0.0
        expected = 8.138020833333333e-05 + 7.8125e-4 * t ** 2
        assert exact.w(0.5, 0.5) == pytest.approx(expected, rel=1e-12)

    def test_rotation_is_gradient_of_kirchhoff_deflection(self):
        exact = ClampedSquareSolution(0.0)
        x, y = np.array([0.2, 0.7, 0.45]), np.array([0.3, 0.1, 0.8])
        step = 1e-6
        gx = (exact.w(x + step, y) - exact.w(x - step, y)) / (2 * step)
        gy = (exact.w(x, y + step) - exact.w(x, y - step)) / (2 * step)
        assert exact.theta(x, y) == pytest.approx(np.stack((gx, gy), axis=-1), rel=1e-6, abs=1e-12)

    def test_vanishes_on_the_boundary(self):
        exact = ClampedSquareSolution(1e-2)
        s = np.linspace(0.0, 1.0, 7)
        for x, y in ((s, 0 * s), (s, 0 * s + 1), (0 * s, s), (0 * s + 1, s)):
            assert exact.w(x, y) == pytest.approx(0.0, abs=1e-15)
            assert exact.theta(x, y) == pytest.approx(0.0, abs=1e-15)

    def test_load_at_centre(self):
        assert ClampedSquareSolution(1e-3).g(0.5, 0.5) == pytest.approx(0.28125, rel=1e-14)


def test_l2_error_of_interpolant_vanishes():
    mesh = unit_square_mesh(2)
    space = build_space(mesh, SpaceKind.deflection(1))

    def quadratic(x, y):
        return x * y - y ** 2

    assert l2_error(space, space.interpolate(quadratic), quadratic) < 1e-13
    assert l2_error(space, np.zeros(space.ndof), lambda x, y: np.ones_like(x)) == pytest.approx(1.0)


def test_l2_difference_on_nested_meshes():
    coarse_mesh = unit_square_mesh(2)
    fine_mesh = refine_uniform(refine_uniform(coarse_mesh))
    coarse = build_space(coarse_mesh, SpaceKind.rotation(1))
    fine = build_space(fine_mesh, SpaceKind.rotation(1))

    def linear(x, y):
        return np.stack((x - y, 2.0 * y), axis=-1)

    assert l2_difference(coarse, coarse.interpolate(linear), fine, fine.interpolate(linear), 2) < 1e-13

    def smooth(x, y):
        return np.stack((np.sin(3 * x), np.cos(2 * y)), axis=-1)

    difference = l2_difference(coarse, coarse.interpolate(smooth), fine, fine.interpolate(smooth), 2)
    assert difference == pytest.approx(l2_error(coarse, coarse.interpolate(smooth), smooth), rel=0.3)
    with pytest.raises(ValueError):
        l2_difference(coarse, coarse.interpolate(linear), fine, fine.interpolate(linear), 1)


class TestConvergenceRate:

    def test_rates(self):
        rates = convergence_rate([(0.5, 1.0), (0.25, 0.125), (0.125, 0.015625)])
        assert rates == pytest.approx([3.0, 3.0])

    def test_rates_against_dofs(self):
        rates = convergence_rate([(0.5, 1.0), (0.25, 0.25)], ndofs=[100, 400])
        assert rates == pytest.approx([2.0])

    def test_zero_error_gives_nan(self):
        rates = convergence_rate([(0.5, 1.0), (0.25, 0.0)])
        assert np.isnan(rates[0])

    @pytest.mark.parametrize('errors', ([(0.5, 1.0)], [(0.25, 1.0), (0.5, 0.5)],
                                        [(0.5, 1.0), (0.5, 0.5)]))
    def test_invalid_levels(self, errors):
        with pytest.raises(ValueError):
            convergence_rate(errors)


def test_export_and_read_vtk(solved):
    mesh, fields = solved
    document = export_vtk(mesh, fields, title="clamped square")
    assert document == export_vtk(mesh, fields, title="clamped square")
    data = read_vtk(document)
    assert data["title"] == "clamped square"
    assert data["points"].shape == (mesh.nvertices, 3)
    assert np.array_equal(data["cells"], mesh.triangles)
    assert np.all(data["cell_types"] == VTK_TRI)
    assert np.array_equal(data["point_data"]["w"], fields.deflection[:mesh.nvertices])
    assert sorted(data["cell_data"]) == ["M_xx", "M_xy", "M_yy", "gamma", "theta"]
    assert data["cell_data"]["theta"].shape == (mesh.ntriangles, 3)
    centre = fields.evaluate("moment", 3, mesh.centroids[3][None, :])[0]
    assert data["cell_data"]["M_xy"][3] == centre[2]


def test_solution_fields_check_lengths(solved):
    _, fields = solved
    with pytest.raises(ValueError):
        SolutionFields(fields.spaces, fields.tensors, fields.moment[:-1], fields.rotation,
                       fields.deflection, fields.shear)
    assert fields.ndof == sum(space.ndof for space in fields.spaces.values())


def test_export_vanishes_on_clamped_boundary(solved):
    mesh, fields = solved
    data = read_vtk(export_vtk(mesh, fields))
    boundary = np.unique(mesh.edges[mesh.boundary_edges])
    w = data["point_data"]["w"]
    assert np.all(w[boundary] == 0.0)
    interior = np.setdiff1d(np.arange(mesh.nvertices), boundary)
    assert np.all(w[interior] != 0.0)

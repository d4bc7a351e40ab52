import numpy as np
import pytest

from tdnnsplate.cases import (BaseCase, ClampedSquareCase, CustomMeshCase, PlateWithHoleCase,
                              RunConfig, get_case)
from tdnnsplate.cli import solve_case
from tdnnsplate.mesh import save_mesh, unit_square_mesh


def test_default_params():
    config = RunConfig()
    assert config["case"] == "clamped-square"
    assert config["order"] == 1
    assert config["solver"] == "direct"
    assert config["hybrid"] is True
    assert config["thickness"] is None


def test_custom_params_override_defaults():
    config = RunConfig({"order": 3, "thickness": 1e-2, "solver": "cg"})
    assert config["order"] == 3
    assert config["thickness"] == 1e-2
    assert config["levels"] == RunConfig.get_default_params()["levels"]


@pytest.mark.parametrize('custom_params', (
        {"order": 9}, {"order": 0}, {"thickness": 0.0}, {"levels": 0}, {"solver": "lu"},
        {"tol": -1.0}, {"threads": 0}, {"n0": 0}, {"case": "custom"}, {"colour": "red"}))
def test_invalid_config(custom_params):
    with pytest.raises(ValueError):
        RunConfig(custom_params)


def test_case_discovery():
    names = {cls.name for cls in BaseCase.get_subclasses(BaseCase)}
    assert names == {"clamped-square", "plate-with-hole", "custom"}
    assert isinstance(get_case(RunConfig({"case": "plate-with-hole"})), PlateWithHoleCase)
    with pytest.raises(ValueError):
        get_case(RunConfig({"case": "cantilever"}))


def test_clamped_square_hierarchy():
    case = ClampedSquareCase(RunConfig({"n0": 2, "levels": 3}))
    meshes = case.meshes()
    assert [mesh.ntriangles for mesh in meshes] == [8, 32, 128]
    assert case.thickness == 1e-3
    assert case.material().E == 12.0
    assert case.exact().t == case.thickness
    assert case.load()(np.array([0.5]), np.array([0.5]))[0] == pytest.approx(0.28125)


def test_plate_with_hole_setup():
    case = PlateWithHoleCase(RunConfig({"case": "plate-with-hole", "segments": 8, "levels": 2}))
    meshes = case.meshes()
    assert meshes[1].ntriangles == 4 * meshes[0].ntriangles
    material = case.material()
    assert (material.E, material.nu, material.t) == (2.1e5, 0.3, 1.0)
    bc = case.bc(meshes[0])
    assert sorted(bc.essential("w")) == [1]
    assert sorted(bc.essential("m_nn")) == [2, 3, 4]
    shear = bc.natural(2, "g0")
    assert shear(np.array([100.0]), np.array([70.0])) == pytest.approx([2.0])


def test_custom_mesh_case(tmp_path):
    mesh = unit_square_mesh(3)
    path = str(tmp_path / "plate.msh")
    save_mesh(mesh, path)
    case = get_case(RunConfig({"case": "custom", "mesh": path, "levels": 2, "load": 2.0}))
    assert isinstance(case, CustomMeshCase)
    assert case.base_mesh() == mesh
    assert sorted(case.bc(mesh).essential("theta_t")) == [1]
    assert case.load()(np.zeros(3), np.zeros(3)) == pytest.approx([2.0, 2.0, 2.0])


@pytest.fixture(scope="module")
def hole_solution():
    config = RunConfig({"case": "plate-with-hole", "segments": 16, "levels": 1})
    case = get_case(config)
    mesh = case.meshes()[-1]
    return mesh, solve_case(case, mesh, config)[1]


def _mirror_pairs(mesh, points):
    """Index of the mirror image about y = 50 of every point."""
    lookup = {tuple(np.round(p, 7)): i for i, p in enumerate(points)}
    return np.array([lookup[tuple(np.round([x, 100.0 - y], 7))] for x, y in points])


def test_plate_with_hole_reflection_symmetry(hole_solution):
    mesh, fields = hole_solution
    w = fields.deflection[:mesh.nvertices]
    assert np.abs(w).max() > 0
    mirror = _mirror_pairs(mesh, mesh.vertices)
    assert w[mirror] == pytest.approx(-w, abs=1e-8 * np.abs(w).max())

    mirror = _mirror_pairs(mesh, mesh.centroids)
    moments = np.array([fields.evaluate("moment", t, mesh.centroids[t][None, :])[0]
                        for t in range(mesh.ntriangles)])
    scale = np.abs(moments).max()
    # the load is odd about y = 50: M_xx and M_yy are odd, M_xy is even
    assert moments[mirror, 0] == pytest.approx(-moments[:, 0], abs=1e-8 * scale)
    assert moments[mirror, 1] == pytest.approx(-moments[:, 1], abs=1e-8 * scale)
    assert moments[mirror, 2] == pytest.approx(moments[:, 2], abs=1e-8 * scale)


def test_plate_with_hole_zero_traction():
    config = RunConfig({"case": "plate-with-hole", "segments": 8, "levels": 1, "traction": 0.0})
    case = get_case(config)
    mesh = case.meshes()[-1]
    _, fields = solve_case(case, mesh, config)
    assert np.abs(fields.deflection).max() == 0.0
    assert np.abs(fields.moment).max() == 0.0

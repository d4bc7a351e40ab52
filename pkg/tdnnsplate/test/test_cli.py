import os

import numpy as np
import pandas as pd
import pytest

from tdnnsplate.cli import CSV_COLUMNS, build_parser, config_from_args, main
from tdnnsplate.mesh import load_mesh, save_mesh, unit_square_mesh
from tdnnsplate.postprocess import ClampedSquareSolution, read_vtk


@pytest.fixture
def log_dir(tmp_path):
    folder = tmp_path / "logs"
    return str(folder)


def test_mesh_square(tmp_path, log_dir):
    path = str(tmp_path / "square.msh")
    assert main(["mesh", "square", "--n", "4", "--output", path, "--log-dir", log_dir]) == 0
    assert load_mesh(path).ntriangles == 32
    assert os.path.exists(os.path.join(log_dir, "tdnnsplate.log"))


def test_mesh_hole(tmp_path, log_dir):
    path = str(tmp_path / "out" / "hole.msh")
    assert main(["mesh", "hole", "--segments", "32", "--output", path, "--log-dir", log_dir]) == 0
    mesh = load_mesh(path)
    assert mesh.markers.tolist() == [1, 2, 3, 4]


def test_mesh_without_output_is_usage_error(log_dir):
    assert main(["mesh", "square", "--log-dir", log_dir]) == 2


def test_mesh_with_bad_segments_fails(tmp_path, log_dir):
    path = str(tmp_path / "hole.msh")
    assert main(["mesh", "hole", "--segments", "7", "--output", path, "--log-dir", log_dir]) == 1
    assert not os.path.exists(path)
    with open(os.path.join(log_dir, "tdnnsplate.log")) as handle:
        assert "at least 8" in handle.read()


def test_mesh_hole_with_twelve_segments(tmp_path, log_dir):
    path = str(tmp_path / "hole.msh")
    assert main(["mesh", "hole", "--segments", "12", "--output", path, "--log-dir", log_dir]) == 0
    mesh = load_mesh(path)
    assert len(mesh.edges_with_marker(4)) == 12
    assert mesh.markers.tolist() == [1, 2, 3, 4]


def test_invalid_order_is_usage_error(tmp_path, log_dir):
    path = str(tmp_path / "table.csv")
    assert main(["convergence", "--order", "9", "--csv", path, "--log-dir", log_dir]) == 2
    assert not os.path.exists(path)


def test_config_from_args_picks_custom_case():
    args = build_parser().parse_args(["solve", "--mesh", "plate.msh", "--monolithic"])
    config = config_from_args(args)
    assert config["case"] == "custom"
    assert config["hybrid"] is False


def test_solve_writes_export(tmp_path, log_dir, capsys):
    path = str(tmp_path / "solution.vtk")
    assert main(["solve", "--n", "4", "--thickness", "0.1", "--export", path,
                 "--log-dir", log_dir]) == 0
    summary = capsys.readouterr().out
    assert "ndof=" in summary and "max_w=" in summary
    with open(path) as handle:
        data = read_vtk(handle.read())
    assert len(data["point_data"]["w"]) == 25
    assert len(data["cell_data"]["M_xy"]) == 32


def test_clamped_square_peak_deflection(tmp_path, log_dir):
    path = str(tmp_path / "solution.vtk")
    assert main(["solve", "--n", "16", "--thickness", "1e-3", "--export", path,
                 "--log-dir", log_dir]) == 0
    with open(path) as handle:
        data = read_vtk(handle.read())
    points = data["points"]
    exact = ClampedSquareSolution(1e-3).w(points[:, 0], points[:, 1])
    computed = data["point_data"]["w"]
    assert np.abs(computed).max() == pytest.approx(np.abs(exact).max(), rel=0.05)


def test_solve_with_broken_mesh_file(tmp_path, log_dir, capsys):
    path = str(tmp_path / "broken.msh")
    with open(path, "w") as handle:
        handle.write("tdnnsmesh 1\nvertices 2\n0 0\n")
    assert main(["solve", "--mesh", path, "--log-dir", log_dir]) == 1
    assert "line" in capsys.readouterr().err


def test_convergence_csv(tmp_path, log_dir):
    path = str(tmp_path / "table.csv")
    args = ["convergence", "--levels", "2", "--n0", "2", "--thickness", "0.1", "--csv", path,
            "--log-dir", log_dir]
    assert main(args) == 0
    table = pd.read_csv(path)
    assert list(table.columns) == CSV_COLUMNS
    assert table["level"].tolist() == [0, 1]
    assert np.isnan(table["rate_w"][0])
    assert table["err_w_l2"][1] < table["err_w_l2"][0]
    assert table["ndof_condensed"][0] == 41
    with open(path) as handle:
        first = handle.read()
    assert main(args) == 0
    with open(path) as handle:
        assert handle.read() == first


def test_convergence_to_stdout(log_dir, capsys):
    assert main(["convergence", "--levels", "2", "--n0", "1", "--thickness", "0.1",
                 "--log-dir", log_dir]) == 0
    assert capsys.readouterr().out.startswith(",".join(CSV_COLUMNS))


def test_custom_mesh_convergence(tmp_path, log_dir):
    mesh_path = str(tmp_path / "square.msh")
    save_mesh(unit_square_mesh(2), mesh_path)
    path = str(tmp_path / "table.csv")
    assert main(["convergence", "--mesh", mesh_path, "--levels", "3", "--thickness", "0.1",
                 "--csv", path, "--log-dir", log_dir]) == 0
    table = pd.read_csv(path)
    assert len(table) == 3
    assert np.isnan(table["err_w_l2"][2])
    assert table["err_w_l2"][1] < table["err_w_l2"][0]
    assert np.isfinite(table["rate_w"][1])

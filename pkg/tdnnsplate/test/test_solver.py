import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from tdnnsplate.assembly import BCSpec, LoadSpec, assemble, build_plate_spaces, shear_residual
from tdnnsplate.material import MaterialParams, derive_tensors
from tdnnsplate.mesh import unit_square_mesh
from tdnnsplate.postprocess import ClampedSquareSolution
from tdnnsplate.solver import SolverError, condense, is_symmetric, solve, solve_monolithic, solve_spd


def clamped_square(n, order, t=0.1, hybrid=True, load=None):
    mesh = unit_square_mesh(n)
    tensors = derive_tensors(MaterialParams(E=12.0, nu=0.0, k_s=5.0 / 6.0, t=t))
    bc = BCSpec().clamp(1)
    spaces = build_plate_spaces(mesh, order, bc, hybrid=hybrid)
    if load is None:
        load = LoadSpec(ClampedSquareSolution(t).g)
    return assemble(mesh, spaces, tensors, load, bc, hybrid=hybrid)


def _relative(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_condensed_dimension_and_definiteness():
    condensed = condense(clamped_square(2, 1, t=1e-3))
    assert condensed.dimension == 41
    dense = condensed.matrix.toarray()
    assert np.abs(dense - dense.T).max() <= 1e-12 * np.abs(dense).max()
    assert la.eigvalsh(dense).min() > 0


def test_condense_needs_hybrid_system():
    with pytest.raises(ValueError):
        condense(clamped_square(2, 1, hybrid=False))


@pytest.mark.parametrize('order', (1, 2))
@pytest.mark.parametrize('n', (2, 4))
def test_hybrid_matches_monolithic(n, order):
    hybrid = solve(clamped_square(n, order, hybrid=True))
    monolithic = solve(clamped_square(n, order, hybrid=False))
    assert _relative(hybrid.deflection, monolithic.deflection) <= 1e-8
    assert _relative(hybrid.rotation, monolithic.rotation) <= 1e-8


@pytest.mark.parametrize('order', (1, 2))
def test_condensed_solution_solves_full_system(order):
    system = clamped_square(4, order, t=1e-2)
    fields = solve(system)
    coeffs = {"moment": fields.moment, "rotation": fields.rotation,
              "deflection": fields.deflection, "multiplier": fields.multiplier}
    assert system.residual(coeffs) <= 1e-8
    assert fields.stats["method"] == "direct"
    assert fields.stats["min_pivot"] > 0


def test_dense_path_on_hybrid_system():
    system = clamped_square(2, 1)
    dense = solve_monolithic(system)
    condensed = solve(system)
    assert _relative(condensed.deflection, dense.deflection) <= 1e-8
    assert dense.multiplier is not None


@pytest.mark.parametrize('t', (1e-1, 1e-3, 1e-5))
def test_shear_identity(t):
    system = clamped_square(4, 1, t=t)
    fields = solve(system)
    residual, scale = shear_residual(system.spaces, system.tensors, fields.rotation,
                                     fields.deflection, fields.shear)
    assert scale > 0
    assert np.abs(residual).max() <= 1e-12 * scale


def test_zero_load_gives_zero_solution():
    fields = solve(clamped_square(2, 2, load=LoadSpec()))
    assert not np.any(fields.deflection)
    assert not np.any(fields.moment)
    assert fields.stats["residual"] == 0.0


def test_cg_matches_direct():
    system = clamped_square(4, 1)
    condensed = condense(system)
    direct = solve_spd(condensed.matrix, condensed.rhs)
    iterative, info = solve_spd(condensed.matrix, condensed.rhs, method="cg", tol=1e-12,
                                return_info=True)
    assert info["iterations"] > 0
    assert info["residual"] <= 1e-12
    assert _relative(iterative, direct) <= 1e-8


def test_threaded_condensation_matches_serial():
    system = clamped_square(4, 2)
    serial = condense(system)
    threaded = condense(system, n_jobs=2)
    assert abs(serial.matrix - threaded.matrix).max() <= 1e-12 * abs(serial.matrix).max()
    assert threaded.rhs == pytest.approx(serial.rhs)


class TestSolveSPD:

    def test_spd_system(self):
        rng = np.random.default_rng(3)
        factor = rng.standard_normal((20, 20))
        matrix = sp.csr_matrix(factor @ factor.T + 20 * np.eye(20))
        rhs = rng.standard_normal(20)
        for method in ("direct", "cg"):
            x = solve_spd(matrix, rhs, method=method)
            assert np.linalg.norm(matrix @ x - rhs) <= 1e-10 * np.linalg.norm(rhs)

    @pytest.mark.parametrize('method', ("direct", "cg"))
    def test_indefinite_matrix_rejected(self, method):
        matrix = sp.csr_matrix(np.array([[2.0, 1.0, 0.0], [1.0, -3.0, 1.0], [0.0, 1.0, 2.0]]))
        with pytest.raises(SolverError):
            solve_spd(matrix, np.ones(3), method=method)

    def test_cg_rejects_non_positive_diagonal(self):
        matrix = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        with pytest.raises(SolverError):
            solve_spd(matrix, np.ones(2), method="cg")

    def test_non_symmetric_matrix(self):
        matrix = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
        assert not is_symmetric(matrix)
        with pytest.raises(ValueError):
            solve_spd(matrix, np.ones(2))

    def test_zero_rhs(self):
        x, info = solve_spd(sp.identity(4, format="csr"), np.zeros(4), return_info=True)
        assert not np.any(x)
        assert info["iterations"] == 0

    @pytest.mark.parametrize('kwargs', ({'method': 'lu'}, {'tol': 0.0}))
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValueError):
            solve_spd(sp.identity(2, format="csr"), np.ones(2), **kwargs)

    def test_solver_error_carries_element(self):
        err = SolverError("singular", element=3)
        assert isinstance(err, RuntimeError)
        assert err.element == 3

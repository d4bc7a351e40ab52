import logging

import numpy as np

from tdnnsplate.fespace import VOIGT_WEIGHTS
from tdnnsplate.quadrature import triangle_rule

logger = logging.getLogger(__name__)

VTK_TRI = 5  # VTK cell type of a linear triangle
FLOAT_FORMAT = "%.17g"


class SolutionFields(object):
    """
    Coefficient vectors of a solved plate problem.

    Attributes
    ----------
    spaces : dict
        FESpace per field ('moment', 'rotation', 'deflection', optionally 'multiplier')
    tensors : BendingTensors
        Material tensors of the solve (thickness included)
    moment, rotation, deflection, shear : np.ndarray
        Coefficients of M_h, theta_h, w_h and gamma_h; the shear lives in the rotation space
    multiplier : np.ndarray or None
        Edge multipliers of the hybrid method
    stats : dict
        Solver statistics (method, iterations or factor fill, residual)
    """

    def __init__(self, spaces, tensors, moment, rotation, deflection, shear, multiplier=None,
                 stats=None):
        self.spaces = spaces
        self.tensors = tensors
        self.moment = moment
        self.rotation = rotation
        self.deflection = deflection
        self.shear = shear
        self.multiplier = multiplier
        self.stats = stats if stats is not None else {}
        for name, coeffs in (("moment", moment), ("rotation", rotation),
                             ("deflection", deflection), ("rotation", shear)):
            if len(coeffs) != spaces[name].ndof:
                raise ValueError("{} coefficients have length {} instead of {}".format(
                    name, len(coeffs), spaces[name].ndof))

    @property
    def ndof(self):
        return sum(space.ndof for space in self.spaces.values())

    def evaluate(self, name, t, points):
        """Values (npts, ncomp) of field ``name`` on triangle ``t``."""
        space = self.spaces["rotation" if name == "shear" else name]
        coeffs = getattr(self, name)
        values = space.evaluate(t, points)[0]
        local = coeffs[space.element_dofs[t]] * space.element_signs[t]
        return np.einsum("i,ipc->pc", local, values)

    def __repr__(self):
        return "SolutionFields(ndof={}, t={})".format(self.ndof, self.tensors.t)


class ExactSolution(object):
    """Reference solution given by closures of (x, y) arrays."""

    def w(self, x, y):
        raise NotImplementedError

    def theta(self, x, y):
        raise NotImplementedError

    def g(self, x, y):
        raise NotImplementedError


class ClampedSquareSolution(ExactSolution):
    """
    Clamped unit square with a polynomial Kirchhoff potential.

    With X = x(x-1), Y = y(y-1) and phi = X^3 Y^3 / 3 the rotation is grad(phi), the
    load is D laplace^2(phi) with D = E / (12 (1 - nu^2)) and the deflection
    w = phi - t^2 / (6 k_s (1 - nu)) laplace(phi). The defaults E = 12, nu = 0,
    k_s = 5/6 give the classical benchmark.
    """

    def __init__(self, t, E=12.0, nu=0.0, k_s=5.0 / 6.0):
        self.t = t
        self.E = E
        self.nu = nu
        self.k_s = k_s

    @staticmethod
    def _factors(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        X, Y = x * (x - 1.0), y * (y - 1.0)
        P, Q = 5.0 * x ** 2 - 5.0 * x + 1.0, 5.0 * y ** 2 - 5.0 * y + 1.0
        return x, y, X, Y, P, Q

    def w(self, x, y):
        x, y, X, Y, P, Q = self._factors(x, y)
        laplace = 2.0 * (X * P * Y ** 3 + Y * Q * X ** 3)
        return X ** 3 * Y ** 3 / 3.0 - self.t ** 2 / (6.0 * self.k_s * (1.0 - self.nu)) * laplace

    def theta(self, x, y):
        x, y, X, Y, _, _ = self._factors(x, y)
        return np.stack((Y ** 3 * X ** 2 * (2.0 * x - 1.0),
                         X ** 3 * Y ** 2 * (2.0 * y - 1.0)), axis=-1)

    def g(self, x, y):
        _, _, X, Y, P, Q = self._factors(x, y)
        return self.E / (1.0 - self.nu ** 2) * (Y * P * (2.0 * Y ** 2 + X * Q) +
                                                 X * Q * (2.0 * X ** 2 + Y * P))

    def moment(self, x, y):
        """Voigt moments C eps(theta)."""
        x, y, X, Y, P, Q = self._factors(x, y)
        strain = np.stack((2.0 * X * P * Y ** 3, 2.0 * Y * Q * X ** 3,
                           6.0 * X ** 2 * Y ** 2 * (2.0 * x - 1.0) * (2.0 * y - 1.0)), axis=-1)
        D = self.E / (12.0 * (1.0 - self.nu ** 2))
        C = D * np.array([[1.0, self.nu, 0.0], [self.nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - self.nu)]])
        return strain @ C.T


def _error_rule(space, degree):
    if degree is None:
        degree = min(2 * space.kind.degree + 4, 12)
    return triangle_rule(degree)


def l2_error(space, coeffs, exact, degree=None):
    """
    L2 norm of the difference between a discrete field and a closure.

    Parameters
    ----------
    space : FESpace
    coeffs : np.ndarray
        Coefficients in ``space``
    exact : callable
        exact(x, y) returning (n,) or (n, ncomp) values
    degree : int, optional (default=None)
        Quadrature exactness, 2 * degree + 4 of the space (at most 12) if None

    Returns
    -------
    error : float
    """
    rule = _error_rule(space, degree)
    mesh = space.mesh
    coeffs = np.asarray(coeffs, dtype=float)
    ncomp = space.kind.ncomp
    weights = VOIGT_WEIGHTS if space.kind.family == "moment" else np.ones(ncomp)
    tables = [space.shapes(t, rule) for t in range(mesh.ntriangles)]
    points = np.vstack([table.points for table in tables])
    reference = np.asarray(exact(points[:, 0], points[:, 1]), dtype=float).reshape(-1, ncomp)
    total = 0.0
    nq = len(rule)
    for t, table in enumerate(tables):
        local = coeffs[space.element_dofs[t]] * space.element_signs[t]
        diff = np.einsum("i,iqc->qc", local, table.values) - reference[t * nq:(t + 1) * nq]
        total += table.weights @ ((diff ** 2) @ weights)
    return float(np.sqrt(total))


def l2_difference(coarse_space, coarse_coeffs, fine_space, fine_coeffs, generations, degree=None):
    """
    L2 norm of the difference of two discrete fields on nested meshes.

    The fine mesh must come from ``generations`` uniform refinements of the coarse one,
    so the parent of fine triangle f is f // 4**generations.
    """
    rule = _error_rule(fine_space, degree)
    mesh = fine_space.mesh
    if mesh.ntriangles != coarse_space.mesh.ntriangles * 4 ** generations:
        raise ValueError("Fine mesh is not {} uniform refinements of the coarse mesh".format(
            generations))
    weights = VOIGT_WEIGHTS if fine_space.kind.family == "moment" else np.ones(fine_space.kind.ncomp)
    total = 0.0
    for f in range(mesh.ntriangles):
        table = fine_space.shapes(f, rule)
        parent = f // 4 ** generations
        fine = np.einsum("i,iqc->qc", fine_coeffs[fine_space.element_dofs[f]] *
                         fine_space.element_signs[f], table.values)
        coarse_values = coarse_space.evaluate(parent, table.points)[0]
        coarse = np.einsum("i,iqc->qc", coarse_coeffs[coarse_space.element_dofs[parent]] *
                           coarse_space.element_signs[parent], coarse_values)
        total += table.weights @ (((fine - coarse) ** 2) @ weights)
    return float(np.sqrt(total))


def convergence_rate(errors, ndofs=None):
    """
    Observed convergence rates between consecutive levels.

    Parameters
    ----------
    errors : list of (float, float)
        (h, error) per level with strictly decreasing h
    ndofs : list of int, optional (default=None)
        When given, rates are measured against the dof count,
        -2 log(e_i / e_i+1) / log(N_i / N_i+1)

    Returns
    -------
    rates : list of float
        log(e_i / e_i+1) / log(h_i / h_i+1); nan where an error is zero
    """
    if len(errors) < 2:
        raise ValueError("At least two levels are needed for a rate, got {}".format(len(errors)))
    hs = np.array([h for h, _ in errors], dtype=float)
    es = np.array([e for _, e in errors], dtype=float)
    if np.any(np.diff(hs) >= 0):
        raise ValueError("Mesh sizes must decrease strictly: {}".format(hs.tolist()))
    rates = []
    for i in range(len(es) - 1):
        if es[i] <= 0 or es[i + 1] <= 0:
            logger.warning("Zero error between levels {} and {}: rate undefined".format(i, i + 1))
            rates.append(float("nan"))
        elif ndofs is not None:
            rates.append(float(-2.0 * np.log(es[i] / es[i + 1]) / np.log(ndofs[i] / ndofs[i + 1])))
        else:
            rates.append(float(np.log(es[i] / es[i + 1]) / np.log(hs[i] / hs[i + 1])))
    return rates


def _format(value):
    return FLOAT_FORMAT % value


def export_vtk(mesh, fields, title="tdnnsplate solution"):
    """
    Legacy ASCII unstructured grid with the deflection at the vertices and rotation,
    moments and shear at the triangle centroids.

    Returns
    -------
    document : str
    """
    nv, nt = mesh.nvertices, mesh.ntriangles
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             "POINTS {} double".format(nv)]
    lines += ["{} {} 0".format(_format(x), _format(y)) for x, y in mesh.vertices]
    lines.append("CELLS {} {}".format(nt, 4 * nt))
    lines += ["3 {} {} {}".format(*tri) for tri in mesh.triangles.tolist()]
    lines.append("CELL_TYPES {}".format(nt))
    lines += [str(VTK_TRI)] * nt

    # deflection vertex dofs come first and are nodal values
    lines += ["POINT_DATA {}".format(nv), "SCALARS w double 1", "LOOKUP_TABLE default"]
    lines += [_format(v) for v in fields.deflection[:nv]]

    theta, moment, gamma = (np.zeros((nt, 2)), np.zeros((nt, 3)), np.zeros((nt, 2)))
    for t in range(nt):
        centre = mesh.centroids[t][None, :]
        theta[t] = fields.evaluate("rotation", t, centre)[0]
        moment[t] = fields.evaluate("moment", t, centre)[0]
        gamma[t] = fields.evaluate("shear", t, centre)[0]
    lines.append("CELL_DATA {}".format(nt))
    lines.append("VECTORS theta double")
    lines += ["{} {} 0".format(_format(a), _format(b)) for a, b in theta]
    for c, name in enumerate(("M_xx", "M_yy", "M_xy")):
        lines += ["SCALARS {} double 1".format(name), "LOOKUP_TABLE default"]
        lines += [_format(v) for v in moment[:, c]]
    lines.append("VECTORS gamma double")
    lines += ["{} {} 0".format(_format(a), _format(b)) for a, b in gamma]
    return "\n".join(lines) + "\n"


def read_vtk(text):
    """
    Parses a document written by :func:`export_vtk`.

    Returns
    -------
    data : dict
        'points' (n, 3), 'cells' (m, 3), 'cell_types' (m,), 'point_data' and
        'cell_data' dictionaries of arrays keyed by field name
    """
    tokens = text.split("\n")
    lines = [line.split() for line in tokens[4:] if line.strip()]
    data = {"title": tokens[1], "point_data": {}, "cell_data": {}}
    i = 0
    target = None
    while i < len(lines):
        head = lines[i]
        if head[0] == "POINTS":
            n = int(head[1])
            data["points"] = np.array(lines[i + 1:i + 1 + n], dtype=float)
            i += n + 1
        elif head[0] == "CELLS":
            n = int(head[1])
            data["cells"] = np.array(lines[i + 1:i + 1 + n], dtype=np.int64)[:, 1:]
            i += n + 1
        elif head[0] == "CELL_TYPES":
            n = int(head[1])
            data["cell_types"] = np.array([row[0] for row in lines[i + 1:i + 1 + n]], dtype=np.int64)
            i += n + 1
        elif head[0] in ("POINT_DATA", "CELL_DATA"):
            target = data["point_data" if head[0] == "POINT_DATA" else "cell_data"]
            n = int(head[1])
            i += 1
        elif head[0] == "SCALARS":
            target[head[1]] = np.array([row[0] for row in lines[i + 2:i + 2 + n]], dtype=float)
            i += n + 2
        elif head[0] == "VECTORS":
            target[head[1]] = np.array(lines[i + 1:i + 1 + n], dtype=float)
            i += n + 1
        else:
            raise ValueError("Unexpected VTK section '{}'".format(" ".join(head)))
    return data

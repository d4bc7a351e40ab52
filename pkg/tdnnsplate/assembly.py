import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from joblib import Parallel, delayed

from tdnnsplate.fespace import VOIGT_WEIGHTS, SpaceKind, build_space, gradient_matrix
from tdnnsplate.quadrature import segment_rule, triangle_rule

logger = logging.getLogger(__name__)

# essential trace -> natural datum of the same row
BC_ROWS = {"w": "g0", "theta_t": "g1", "m_nn": "g2"}
BLOCK_ORDER = ("moment", "rotation", "deflection", "multiplier")


class BCSpec(object):
    """
    Boundary conditions per boundary marker.

    Each marker may constrain the traces w, theta_t and m_nn essentially or carry the
    natural datum of the same row: g0 (edge shear load), g1 (edge moment, a 2-vector
    whose tangential part is used) and g2 (prescribed normal rotation). Rows left
    untouched are homogeneous natural conditions.

    Closures take coordinate arrays ``(x, y)``. Essential values return (n,) for w,
    (n, 2) rotation vectors for theta_t and (n, 3) Voigt moments for m_nn; a value of
    None means zero.
    """

    def __init__(self):
        self._essential = {}
        self._natural = {}

    def set_essential(self, marker, trace, value=None):
        if trace not in BC_ROWS:
            raise ValueError("Unknown essential trace '{}'".format(trace))
        if BC_ROWS[trace] in self._natural.get(marker, {}):
            raise ValueError("Marker {} already carries natural data {} for trace {}".format(
                marker, BC_ROWS[trace], trace))
        self._essential.setdefault(marker, {})[trace] = value
        return self

    def set_natural(self, marker, name, func):
        traces = {v: k for k, v in BC_ROWS.items()}
        if name not in traces:
            raise ValueError("Unknown natural datum '{}'".format(name))
        if traces[name] in self._essential.get(marker, {}):
            raise ValueError("Marker {} already constrains {} essentially".format(
                marker, traces[name]))
        self._natural.setdefault(marker, {})[name] = func
        return self

    def clamp(self, marker):
        """w = 0 and theta_t = 0."""
        return self.set_essential(marker, "w").set_essential(marker, "theta_t")

    def simply_support(self, marker):
        """w = 0 and m_nn = 0."""
        return self.set_essential(marker, "w").set_essential(marker, "m_nn")

    def free(self, marker, shear=None):
        """m_nn = 0, optionally loaded by the edge shear ``shear``."""
        self.set_essential(marker, "m_nn")
        if shear is not None:
            self.set_natural(marker, "g0", shear)
        return self

    def essential(self, trace):
        """Markers constraining ``trace`` with their value closures."""
        return {marker: traces[trace] for marker, traces in self._essential.items()
                if trace in traces}

    def natural(self, marker, name):
        return self._natural.get(marker, {}).get(name)

    def has_natural(self):
        return any(self._natural.values())

    def __repr__(self):
        return "BCSpec(essential={}, natural={})".format(
            {m: sorted(v) for m, v in self._essential.items()},
            {m: sorted(v) for m, v in self._natural.items()})


class LoadSpec(object):
    """
    Transverse load g of the shear equation; the physical volume load is (0, 0, t^2 g).

    Attributes
    ----------
    g : callable or None
        g(x, y) returning (n,) values; None for the unloaded plate
    """

    def __init__(self, g=None):
        self.g = g

    @classmethod
    def constant(cls, value):
        return cls(lambda x, y: np.full(np.shape(x), float(value)))

    def __call__(self, x, y):
        if self.g is None:
            return np.zeros(np.shape(x))
        return np.asarray(self.g(x, y), dtype=float).reshape(np.shape(x))


class BlockSystem(object):
    """
    Assembled mixed system for moments M, rotations theta, deflections w and, in hybrid
    mode, multipliers lambda.

    The (theta, w) rows hold B^T M - S u = -F_u, with the shear block negative on the
    diagonal and the load negated, so the full matrix is symmetric
    (``sign_normalized``)::

        [ A    B   0   C ] [M     ]   [ F_M  ]
        [ B^T  -S      0 ] [theta ] = [ -F_u ]
        [          ...   ] [w     ]   [      ]
        [ C^T  0   0   0 ] [lambda]   [ 0    ]

    with A the compliance block, B the duality product, S the positive semidefinite
    shear block on (theta, w) and C the multiplier coupling. Essential dofs are
    eliminated by :meth:`matrix` and :meth:`rhs`.

    Attributes
    ----------
    spaces : dict
        FESpace per block name
    tensors : BendingTensors
    hybrid : bool
    A, B, C, S : scipy.sparse.csr_matrix
        Global blocks, C is None in monolithic mode
    F_M, F_u : np.ndarray
        Load vectors of the moment rows and of the (theta, w) rows
    fixed_values : dict
        Full-length coefficient vectors holding the essential values of each space
    elements : list
        Element blocks kept for static condensation in hybrid mode
    """

    sign_normalized = True

    def __init__(self, spaces, tensors, hybrid, A, B, C, S, F_M, F_u, fixed_values,
                 elements=None):
        self.spaces = spaces
        self.tensors = tensors
        self.hybrid = hybrid
        self.A, self.B, self.C, self.S = A, B, C, S
        self.F_M = F_M
        self.F_u = F_u
        self.fixed_values = fixed_values
        self.elements = elements
        self.names = [name for name in BLOCK_ORDER if name in spaces]
        sizes = [spaces[name].ndof for name in self.names]
        self.offsets = dict(zip(self.names, np.cumsum([0] + sizes[:-1])))
        self.ndof_total = int(sum(sizes))
        self.fixed_mask = np.concatenate([spaces[name].essential_mask for name in self.names])
        self.free = np.flatnonzero(~self.fixed_mask)

    @property
    def ndof_free(self):
        return len(self.free)

    def full_matrix(self):
        """Symmetric matrix over all dofs, essential ones included."""
        ntheta = self.spaces["rotation"].ndof
        S = self.S
        rows = [[self.A, self.B, None], [self.B.T, -S[:ntheta, :ntheta], -S[:ntheta, ntheta:]],
                [None, -S[ntheta:, :ntheta], -S[ntheta:, ntheta:]]]
        if self.hybrid:
            rows[0].append(self.C)
            rows[1].append(None)
            rows[2].append(None)
            rows.append([self.C.T, None, None, None])
        return sp.bmat(rows, format="csr")

    def full_rhs(self):
        parts = [self.F_M, -self.F_u]
        if self.hybrid:
            parts.append(np.zeros(self.spaces["multiplier"].ndof))
        return np.concatenate(parts)

    def fixed_vector(self):
        return np.concatenate([self.fixed_values[name] for name in self.names])

    def matrix(self):
        """Symmetric indefinite matrix on the free dofs."""
        full = self.full_matrix()
        return full[self.free][:, self.free].tocsr()

    def rhs(self):
        full = self.full_matrix()
        lifted = full[self.free] @ self.fixed_vector()
        return self.full_rhs()[self.free] - lifted

    def expand(self, x_free):
        """Coefficient vectors per space from the free-dof solution."""
        x = self.fixed_vector()
        x[self.free] = x_free
        return self.split(x)

    def split(self, x):
        return {name: x[self.offsets[name]:self.offsets[name] + self.spaces[name].ndof].copy()
                for name in self.names}

    def join(self, coeffs):
        return np.concatenate([np.asarray(coeffs[name], dtype=float) for name in self.names])

    def residual(self, coeffs):
        """Relative residual of the free rows for coefficient vectors per space."""
        x = self.join(coeffs)
        r = (self.full_matrix() @ x - self.full_rhs())[self.free]
        scale = np.linalg.norm(self.rhs())
        return np.linalg.norm(r) / scale if scale > 0 else np.linalg.norm(r)

    def __repr__(self):
        return "BlockSystem(hybrid={}, ndof_total={}, ndof_free={})".format(
            self.hybrid, self.ndof_total, self.ndof_free)


class ElementBlock(object):
    """Local matrices and load vectors of one triangle."""

    __slots__ = ("t", "key", "A", "B", "C", "S", "f_M", "f_u")

    def __init__(self, t, key, A, B, C, S, f_M, f_u):
        self.t, self.key = t, key
        self.A, self.B, self.C, self.S = A, B, C, S
        self.f_M, self.f_u = f_M, f_u


def build_plate_spaces(mesh, order, bc, hybrid=False):
    """
    Moment, rotation and deflection spaces (plus multipliers in hybrid mode) with the
    essential conditions of ``bc``.
    """
    spaces = {
        "moment": build_space(mesh, SpaceKind.moment(order, broken=hybrid),
                              [(m, "m_nn") for m in bc.essential("m_nn")]),
        "rotation": build_space(mesh, SpaceKind.rotation(order),
                                [(m, "theta_t") for m in bc.essential("theta_t")]),
        "deflection": build_space(mesh, SpaceKind.deflection(order),
                                  [(m, "w") for m in bc.essential("w")]),
    }
    if hybrid:
        spaces["multiplier"] = build_space(mesh, SpaceKind.multiplier(order))
    return spaces


def duality_product_element(tau, eta):
    """
    Element matrix of -int_T tau:eps(eta) + int_dT tau_nn eta_n.

    Parameters
    ----------
    tau : ShapeTable
        Moment shapes
    eta : ShapeTable
        Rotation shapes on the same rules

    Returns
    -------
    matrix : np.ndarray
        (n_tau, n_eta) element matrix
    """
    matrix = -np.einsum("q,iqc,jqc->ij", tau.weights, tau.values * VOIGT_WEIGHTS, eta.sym_grad)
    for tau_e, eta_e in zip(tau.edges, eta.edges):
        matrix += np.einsum("q,iq,jq->ij", tau_e.weights, tau_e.nn, eta_e.normal_component)
    return matrix


def divergence_product_element(tau, eta):
    """Element matrix of int_T div(tau).eta - int_dT tau_nt eta_t."""
    matrix = np.einsum("q,iqc,jqc->ij", tau.weights, tau.div, eta.values)
    for tau_e, eta_e in zip(tau.edges, eta.edges):
        matrix -= np.einsum("q,iq,jq->ij", tau_e.weights, tau_e.nt, eta_e.tangential_component)
    return matrix


def _rules(order):
    return triangle_rule(2 * (order + 1)), segment_rule(2 * order + 2)


def _local_matrices(spaces, tensors, t, rules):
    rule, edge_rule = rules
    tau = spaces["moment"].shapes(t, rule, edge_rule)
    eta = spaces["rotation"].shapes(t, rule, edge_rule)
    phi = spaces["deflection"].shapes(t, rule, edge_rule)
    A = np.einsum("q,iqa,ab,jqb->ij", tau.weights, tau.values, tensors.A, tau.values)
    B = duality_product_element(tau, eta)
    G = np.concatenate((-eta.values, phi.grad), axis=0)
    S = tensors.shear_factor * np.einsum("q,iqc,jqc->ij", tau.weights, G, G)
    C = None
    if "multiplier" in spaces:
        lam = spaces["multiplier"].shapes(t, rule, edge_rule)
        C = sum(np.einsum("q,iq,jq->ij", tau_e.weights, tau_e.nn, lam_e.trace)
                for tau_e, lam_e in zip(tau.edges, lam.edges))
    return A, B, C, S


def _local_loads(spaces, load, bc, t, rules):
    rule, edge_rule = rules
    mesh = spaces["moment"].mesh
    eta = spaces["rotation"].shapes(t, rule, edge_rule)
    phi = spaces["deflection"].shapes(t, rule, edge_rule)
    f_M = np.zeros(spaces["moment"].kind.ndof_local)
    f_theta = np.zeros(spaces["rotation"].kind.ndof_local)
    values = load(phi.points[:, 0], phi.points[:, 1])
    f_w = np.einsum("q,q,iq->i", phi.weights, values, phi.values[:, :, 0])
    if bc is not None and bc.has_natural():
        tau = spaces["moment"].shapes(t, rule, edge_rule)
        for i in range(3):
            marker = mesh.edge_markers[mesh.tri_edges[t, i]]
            if marker < 0:
                continue
            phi_e, eta_e, tau_e = phi.edges[i], eta.edges[i], tau.edges[i]
            x, y = phi_e.points[:, 0], phi_e.points[:, 1]
            g0 = bc.natural(marker, "g0")
            if g0 is not None:
                data = np.asarray(g0(x, y), dtype=float).reshape(-1)
                f_w += np.einsum("q,q,iq->i", phi_e.weights, data, phi_e.trace)
            g1 = bc.natural(marker, "g1")
            if g1 is not None:
                data = np.asarray(g1(x, y), dtype=float).reshape(-1, 2) @ eta_e.tangent
                f_theta += np.einsum("q,q,iq->i", eta_e.weights, data, eta_e.tangential_component)
            g2 = bc.natural(marker, "g2")
            if g2 is not None:
                data = np.asarray(g2(x, y), dtype=float).reshape(-1)
                f_M += np.einsum("q,q,iq->i", tau_e.weights, data, tau_e.nn)
    return f_M, np.concatenate((f_theta, f_w))


def _element_chunk(spaces, tensors, load, bc, rules, elements):
    mesh = spaces["moment"].mesh
    cache = {}
    blocks = []
    for t in elements:
        key = mesh.element_key(t)
        local = cache.get(key)
        if local is None:
            local = _local_matrices(spaces, tensors, t, rules)
            cache[key] = local
        f_M, f_u = _local_loads(spaces, load, bc, t, rules)
        blocks.append(ElementBlock(int(t), key, *local, f_M, f_u))
    return blocks


def _scatter(pairs, shape):
    """CSR matrix from (rows, cols, local matrix) triplets in element order."""
    rows = np.concatenate([np.repeat(r, len(c)) for r, c, _ in pairs])
    cols = np.concatenate([np.tile(c, len(r)) for r, c, _ in pairs])
    vals = np.concatenate([m.ravel() for _, _, m in pairs])
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    matrix.sort_indices()
    return matrix


def _essential_values(space, bc, trace):
    values = np.zeros(space.ndof)
    mesh = space.mesh
    for marker, func in sorted(bc.essential(trace).items()):
        if func is None:
            continue
        edges = mesh.edges_with_marker(marker)
        owners = mesh.edge_to_tri[edges, 0]
        interpolated = space.interpolate(func, elements=np.unique(owners))
        dofs = space.boundary_dofs(marker)
        values[dofs] = interpolated[dofs]
    return values


def assemble(mesh, spaces, tensors, load=None, bc=None, hybrid=False, n_jobs=1):
    """
    Assembles the mixed plate system.

    Parameters
    ----------
    mesh : TriMesh
    spaces : dict
        'moment', 'rotation', 'deflection' and, in hybrid mode, 'multiplier' spaces,
        see :func:`build_plate_spaces`
    tensors : BendingTensors
        Material tensors; the thickness must be positive
    load : LoadSpec, optional (default=None)
        Transverse load, none if None
    bc : BCSpec, optional (default=None)
        Natural data and essential values (the essential dofs themselves are fixed
        when the spaces are built)
    hybrid : bool, optional (default=False)
        Broken moments with edge multipliers
    n_jobs : int, optional (default=1)
        Worker threads of the element loop

    Returns
    -------
    system : BlockSystem
    """
    if tensors.t <= 0:
        raise ValueError("The mixed formulation needs a positive thickness, got t={}".format(
            tensors.t))
    orders = {space.kind.order for space in spaces.values()}
    if len(orders) != 1:
        raise ValueError("Incompatible space orders {}".format(sorted(orders)))
    if any(space.mesh is not mesh for space in spaces.values()):
        raise ValueError("All spaces must be built on the assembled mesh")
    if hybrid != spaces["moment"].kind.broken or hybrid != ("multiplier" in spaces):
        raise ValueError("Hybrid assembly needs a broken moment space and multipliers "
                         "(and monolithic assembly neither)")
    load = load if load is not None else LoadSpec()
    bc = bc if bc is not None else BCSpec()
    order = orders.pop()
    rules = _rules(order)

    chunks = [chunk for chunk in np.array_split(np.arange(mesh.ntriangles), max(1, 4 * n_jobs))
              if len(chunk)]
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_element_chunk)(spaces, tensors, load, bc, rules, chunk) for chunk in chunks)
    elements = [block for chunk in results for block in chunk]

    Ms, Rs, Ws = spaces["moment"], spaces["rotation"], spaces["deflection"]
    nu_dofs = Rs.ndof + Ws.ndof
    u_dofs = np.hstack((Rs.element_dofs, Rs.ndof + Ws.element_dofs))
    A = _scatter([(Ms.element_dofs[b.t], Ms.element_dofs[b.t], b.A) for b in elements],
                 (Ms.ndof, Ms.ndof))
    B = _scatter([(Ms.element_dofs[b.t], Rs.element_dofs[b.t], b.B) for b in elements],
                 (Ms.ndof, Rs.ndof))
    S = _scatter([(u_dofs[b.t], u_dofs[b.t], b.S) for b in elements], (nu_dofs, nu_dofs))
    C = None
    if hybrid:
        Ls = spaces["multiplier"]
        C = _scatter([(Ms.element_dofs[b.t], Ls.element_dofs[b.t], b.C * Ls.element_signs[b.t])
                      for b in elements], (Ms.ndof, Ls.ndof))
    F_M = np.bincount(np.concatenate([Ms.element_dofs[b.t] for b in elements]),
                      weights=np.concatenate([b.f_M for b in elements]), minlength=Ms.ndof)
    F_u = np.bincount(np.concatenate([u_dofs[b.t] for b in elements]),
                      weights=np.concatenate([b.f_u for b in elements]), minlength=nu_dofs)

    fixed_values = {
        "moment": _essential_values(Ms, bc, "m_nn"),
        "rotation": _essential_values(Rs, bc, "theta_t"),
        "deflection": _essential_values(Ws, bc, "w"),
    }
    if hybrid:
        fixed_values["multiplier"] = np.zeros(spaces["multiplier"].ndof)
    system = BlockSystem(spaces, tensors, hybrid, A, B, C, S, F_M, F_u, fixed_values,
                         elements if hybrid else None)
    logger.info("Assembled {} system: {} dofs, {} free".format(
        "hybrid" if hybrid else "monolithic", system.ndof_total, system.ndof_free))
    return system


def assemble_duality(moment_space, rotation_space, divergence_form=False):
    """Global duality product matrix (moment rows, rotation columns)."""
    order = moment_space.kind.order
    rule, edge_rule = _rules(order)
    element = divergence_product_element if divergence_form else duality_product_element
    pairs = []
    for t in range(moment_space.mesh.ntriangles):
        local = element(moment_space.shapes(t, rule, edge_rule),
                        rotation_space.shapes(t, rule, edge_rule))
        pairs.append((moment_space.element_dofs[t], rotation_space.element_dofs[t], local))
    return _scatter(pairs, (moment_space.ndof, rotation_space.ndof))


def mass_matrix(space):
    """L2 Gram matrix of a volume space (tensors with the full double contraction)."""
    rule = triangle_rule(min(2 * space.kind.degree, 12))
    weights = VOIGT_WEIGHTS if space.kind.family == "moment" else np.ones(space.kind.ncomp)
    pairs = []
    for t in range(space.mesh.ntriangles):
        shapes = space.shapes(t, rule)
        local = np.einsum("q,iqc,jqc->ij", shapes.weights, shapes.values * weights, shapes.values)
        pairs.append((space.element_dofs[t], space.element_dofs[t], local))
    return _scatter(pairs, (space.ndof, space.ndof))


def stiffness_matrix(space):
    """Gram matrix of the gradients of a deflection space."""
    rule = triangle_rule(2 * space.kind.degree - 2)
    pairs = []
    for t in range(space.mesh.ntriangles):
        shapes = space.shapes(t, rule)
        local = np.einsum("q,iqc,jqc->ij", shapes.weights, shapes.grad, shapes.grad)
        pairs.append((space.element_dofs[t], space.element_dofs[t], local))
    return _scatter(pairs, (space.ndof, space.ndof))


def recover_shear(spaces, tensors, theta_coeffs, w_coeffs):
    """
    Shear gamma_h = mu t^-2 (grad w_h - theta_h) as rotation-space coefficients.

    The gradient of w_h belongs to the rotation space, so the difference is represented
    exactly.
    """
    grad = gradient_matrix(spaces["deflection"], spaces["rotation"]) @ np.asarray(w_coeffs)
    return tensors.shear_factor * (grad - np.asarray(theta_coeffs))


def shear_residual(spaces, tensors, theta_coeffs, w_coeffs, gamma_coeffs):
    """
    Residual of int (grad w_h - theta_h).delta - mu^-1 t^2 int gamma_h.delta for every
    rotation test function delta.

    Returns
    -------
    residual : np.ndarray
        One entry per rotation dof
    scale : float
        Magnitude of the first term, for relative checks
    """
    mass = mass_matrix(spaces["rotation"])
    grad = gradient_matrix(spaces["deflection"], spaces["rotation"]) @ np.asarray(w_coeffs)
    strain = mass @ (grad - np.asarray(theta_coeffs))
    residual = strain - mass @ np.asarray(gamma_coeffs) / tensors.shear_factor
    return residual, float(np.abs(strain).max())


def discrete_moment_norm(space, mesh, coeffs, deflection_space):
    """
    Mesh dependent norm of a discrete moment field.

    Sums the squared L2 norm, the edge term sum_F h_F ||m_nn||_F^2 (averaged over the
    two sides of interior edges) and the dual norm of the duality product over the
    gradients of ``deflection_space``, sup_v <div M, grad v>^2 / ||grad v||^2, which is
    evaluated by one solve with the gradient Gram matrix.
    """
    if space.mesh is not mesh or deflection_space.mesh is not mesh:
        raise ValueError("Moment and deflection spaces must live on the given mesh")
    coeffs = np.asarray(coeffs, dtype=float)
    volume = coeffs @ (mass_matrix(space) @ coeffs)

    edge_rule = segment_rule(2 * space.kind.order + 2)
    rule = triangle_rule(1)
    edge = 0.0
    for t in range(mesh.ntriangles):
        local = coeffs[space.element_dofs[t]] * space.element_signs[t]
        shapes = space.shapes(t, rule, edge_rule)
        for i, trace in enumerate(shapes.edges):
            e = mesh.tri_edges[t, i]
            sides = 1 if mesh.edge_to_tri[e, 1] < 0 else 2
            mnn = local @ trace.nn
            edge += mesh.edge_lengths[e] * (trace.weights @ mnn ** 2) / sides

    rotation = build_space(mesh, SpaceKind.rotation(space.kind.order))
    coupling = gradient_matrix(deflection_space, rotation).T @ (
        assemble_duality(space, rotation).T @ coeffs)
    stiffness = stiffness_matrix(deflection_space)
    keep = deflection_space.free_dofs
    if len(keep) == deflection_space.ndof:
        # constants carry no gradient
        keep = keep[1:]
    supremum = 0.0
    if len(keep) and np.any(coupling[keep]):
        solution = spla.splu(stiffness[keep][:, keep].tocsc()).solve(coupling[keep])
        supremum = float(coupling[keep] @ solution)
    return float(np.sqrt(max(volume, 0.0) + edge + max(supremum, 0.0)))

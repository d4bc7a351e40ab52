import copy

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from tdnnsplate.quadrature import map_to_segment, map_to_triangle, segment_rule, triangle_rule

MAX_ORDER = 4
FAMILIES = ("deflection", "rotation", "moment", "multiplier")
# essential traces that can be imposed on each family
LEGAL_TRACES = {
    "deflection": ("w",),
    "rotation": ("theta_t",),
    "moment": ("m_nn",),
    "multiplier": (),
}
# tau:eps in Voigt storage (xx, yy, xy)
VOIGT_WEIGHTS = np.array([1.0, 1.0, 2.0])


class SpaceKind(object):
    """
    Family and order of a discrete space.

    For a method of order ``k`` the deflection space holds continuous polynomials of
    degree k + 1, the rotation space Nedelec elements of the second kind of degree k,
    the moment space symmetric tensors of degree k with continuous normal-normal
    component (or fully discontinuous when ``broken``), and the multiplier space
    polynomials of degree k on every edge.

    Attributes
    ----------
    family : str
        One of 'deflection', 'rotation', 'moment', 'multiplier'
    order : int
        Method order k, 1 <= k <= 4
    broken : bool
        Element-wise moment space (hybridized method)
    """

    def __init__(self, family, order, broken=False):
        if family not in FAMILIES:
            raise ValueError("Unknown space family '{}'".format(family))
        if int(order) != order or not 1 <= order <= MAX_ORDER:
            raise ValueError("Order must be an integer in [1, {}], got {}".format(MAX_ORDER, order))
        if broken and family != "moment":
            raise ValueError("Only the moment space can be broken")
        self.family = family
        self.order = int(order)
        self.broken = bool(broken)

    @classmethod
    def deflection(cls, order):
        return cls("deflection", order)

    @classmethod
    def rotation(cls, order):
        return cls("rotation", order)

    @classmethod
    def moment(cls, order, broken=False):
        return cls("moment", order, broken)

    @classmethod
    def multiplier(cls, order):
        return cls("multiplier", order)

    @property
    def degree(self):
        """Polynomial degree of the shape functions."""
        return self.order + 1 if self.family == "deflection" else self.order

    @property
    def ncomp(self):
        return {"deflection": 1, "rotation": 2, "moment": 3, "multiplier": 1}[self.family]

    @property
    def entity_dofs(self):
        """Dofs per vertex, per edge and per triangle interior."""
        k = self.order
        if self.family == "deflection":
            return 1, k, k * (k - 1) // 2
        if self.family == "rotation":
            return 0, k + 1, (k - 1) * (k + 1)
        if self.family == "moment":
            return 0, k + 1, 3 * k * (k + 1) // 2
        return 0, k + 1, 0

    @property
    def ndof_local(self):
        nv, ne, ni = self.entity_dofs
        return 3 * nv + 3 * ne + ni

    def local_vertex_dofs(self, i):
        nv = self.entity_dofs[0]
        return np.arange(i * nv, (i + 1) * nv)

    def local_edge_dofs(self, i):
        nv, ne, _ = self.entity_dofs
        return 3 * nv + i * ne + np.arange(ne)

    def local_interior_dofs(self):
        nv, ne, ni = self.entity_dofs
        return 3 * nv + 3 * ne + np.arange(ni)

    def __eq__(self, other):
        return (isinstance(other, SpaceKind) and
                (self.family, self.order, self.broken) == (other.family, other.order, other.broken))

    def __hash__(self):
        return hash((self.family, self.order, self.broken))

    def __repr__(self):
        if self.broken:
            return "SpaceKind('{}', {}, broken=True)".format(self.family, self.order)
        return "SpaceKind('{}', {})".format(self.family, self.order)


class EdgeTrace(object):
    """
    Shape function values on one edge of a triangle.

    Points are ordered along the global orientation of the edge, so two triangles
    sharing the edge evaluate at the same physical points in the same order.

    Attributes
    ----------
    points : np.ndarray
        (nq, 2) physical points
    weights : np.ndarray
        (nq,) weights including the edge length
    normal : np.ndarray
        Outward unit normal of the triangle
    tangent : np.ndarray
        Counter-clockwise unit tangent of the triangle, (-n_y, n_x)
    global_sign : int
        +1 when ``normal`` agrees with the global edge normal
    values : np.ndarray
        (nloc, nq, ncomp) shape function values
    """

    def __init__(self, points, weights, normal, tangent, global_sign, values):
        self.points = points
        self.weights = weights
        self.normal = normal
        self.tangent = tangent
        self.global_sign = global_sign
        self.values = values

    @property
    def trace(self):
        return self.values[:, :, 0]

    @property
    def normal_component(self):
        return self.values @ self.normal

    @property
    def tangential_component(self):
        return self.values @ self.tangent

    @property
    def nn(self):
        n = self.normal
        return self.values @ np.array([n[0] ** 2, n[1] ** 2, 2.0 * n[0] * n[1]])

    @property
    def nt(self):
        n, t = self.normal, self.tangent
        return self.values @ np.array([n[0] * t[0], n[1] * t[1], n[0] * t[1] + n[1] * t[0]])


class ShapeTable(object):
    """
    Shape functions of one element at the points of a volume rule and of an edge rule.

    Only the derivative matching the family is filled: ``grad`` for deflections,
    ``sym_grad`` (tensor components xx, yy, xy) for rotations and ``div`` for moments.

    Attributes
    ----------
    kind : SpaceKind
    points : np.ndarray
        (nq, 2) physical volume points
    weights : np.ndarray
        (nq,) weights including the Jacobian
    values : np.ndarray
        (nloc, nq, ncomp) values, None for multipliers
    grad, sym_grad, div : np.ndarray
        (nloc, nq, 2), (nloc, nq, 3) and (nloc, nq, 2) derivatives or None
    edges : list of EdgeTrace
        Traces on the local edges 0, 1, 2
    """

    def __init__(self, kind, points, weights, values, grad=None, sym_grad=None, div=None,
                 edges=()):
        self.kind = kind
        self.points = points
        self.weights = weights
        self.values = values
        self.grad = grad
        self.sym_grad = sym_grad
        self.div = div
        self.edges = list(edges)

    def moved(self, offset):
        """Shallow copy with all points translated by ``offset``."""
        table = copy.copy(self)
        table.points = self.points + offset
        table.edges = []
        for edge in self.edges:
            moved = copy.copy(edge)
            moved.points = edge.points + offset
            table.edges.append(moved)
        return table


class FESpace(object):
    """
    Discrete space on a triangular mesh with its global dof map.

    Global dofs are numbered vertex dofs first, then edge dofs, then interior dofs
    (or element by element for the broken moment space). Edge dofs are attached to the
    global edge orientation, so shared edges reference the same dofs from both sides.

    Attributes
    ----------
    mesh : TriMesh
    kind : SpaceKind
    ndof : int
        Number of global dofs
    element_dofs : np.ndarray
        (T, nloc) global dof of every local dof
    element_signs : np.ndarray
        (T, nloc) orientation sign of every local dof (-1 only for multipliers on edges
        whose global normal points into the triangle)
    essential : frozenset
        (marker, trace) pairs constrained by essential conditions
    essential_mask : np.ndarray
        (ndof,) True for constrained dofs
    """

    def __init__(self, mesh, kind, essential=()):
        self.mesh = mesh
        self.kind = kind
        self.essential = frozenset(essential)
        for marker, trace in self.essential:
            if trace not in LEGAL_TRACES[kind.family]:
                raise ValueError("Trace '{}' cannot be imposed on the {} space".format(
                    trace, kind.family))
        self._cmats = {}
        self._tables = {}
        self._functionals = {}
        self.element_dofs, self.element_signs, self.ndof = self._number_dofs()
        self.element_dofs.setflags(write=False)
        self.element_signs.setflags(write=False)
        self.essential_mask = self._essential_mask()
        self.essential_mask.setflags(write=False)

    def _number_dofs(self):
        mesh, kind = self.mesh, self.kind
        ntri, nloc = mesh.ntriangles, kind.ndof_local
        nv, ne, ni = kind.entity_dofs
        if kind.broken:
            dofs = np.arange(ntri * nloc).reshape(ntri, nloc)
            return dofs, np.ones((ntri, nloc), dtype=np.int64), ntri * nloc
        blocks = []
        offset = 0
        if nv:
            blocks.append((mesh.triangles[:, :, None] * nv + np.arange(nv)).reshape(ntri, -1))
            offset += mesh.nvertices * nv
        if ne:
            blocks.append(offset + (mesh.tri_edges[:, :, None] * ne + np.arange(ne)).reshape(ntri, -1))
            offset += mesh.nedges * ne
        if ni:
            blocks.append(offset + np.arange(ntri)[:, None] * ni + np.arange(ni))
            offset += ntri * ni
        signs = np.ones((ntri, nloc), dtype=np.int64)
        if kind.family == "multiplier":
            signs = np.repeat(mesh.tri_edge_signs, ne, axis=1)
        return np.hstack(blocks), signs, offset

    def _essential_mask(self):
        mask = np.zeros(self.ndof, dtype=bool)
        for marker, _ in self.essential:
            mask[self.boundary_dofs(marker)] = True
        if self.kind.family == "multiplier":
            mask[self.dofs_on_edges(self.mesh.boundary_edges)] = True
        return mask

    @property
    def free_dofs(self):
        return np.flatnonzero(~self.essential_mask)

    @property
    def nfree(self):
        return int(np.count_nonzero(~self.essential_mask))

    def dofs_on_edges(self, edge_ids):
        """Global dofs whose support touches the given edges (vertex dofs included)."""
        mesh, kind = self.mesh, self.kind
        selected = np.isin(mesh.tri_edges, np.asarray(edge_ids))
        found = []
        for i in range(3):
            owners = np.flatnonzero(selected[:, i])
            if not len(owners):
                continue
            local = [kind.local_edge_dofs(i), kind.local_vertex_dofs((i + 1) % 3),
                     kind.local_vertex_dofs((i + 2) % 3)]
            found.append(self.element_dofs[owners][:, np.concatenate(local)].ravel())
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(found))

    def boundary_dofs(self, marker):
        return self.dofs_on_edges(self.mesh.edges_with_marker(marker))

    def interior_dofs(self):
        """Dofs supported by a single triangle (element bubbles)."""
        if self.kind.broken:
            return np.arange(self.ndof)
        return np.unique(self.element_dofs[:, self.kind.local_interior_dofs()].ravel())

    # element geometry and shape functions

    def _geometry(self, t):
        mesh = self.mesh
        return (mesh.vertices[mesh.triangles[t]], mesh.tri_edge_signs[t],
                mesh.centroids[t], mesh.diameters[t])

    def _cmat(self, t):
        key = self.mesh.element_key(t)
        cmat = self._cmats.get(key)
        if cmat is None:
            points, weights = self._functional_data(t)
            raw = _raw_basis(self.kind, (points - self.mesh.centroids[t]) / self.mesh.diameters[t],
                             self.mesh.diameters[t])[0]
            dual = np.einsum("ipc,bpc->ib", weights, raw)
            cmat = np.linalg.solve(dual, np.eye(len(dual)))
            self._cmats[key] = cmat
        return cmat

    def _functional_data(self, t):
        key = self.mesh.element_key(t)
        data = self._functionals.get(key)
        if data is None:
            verts, signs, centre, h = self._geometry(t)
            points, weights = _element_functionals(self.kind, verts, signs, centre, h)
            data = (points - centre, weights)
            self._functionals[key] = data
        return data[0] + self.mesh.centroids[t], data[1]

    def functionals(self, t):
        """
        Dof functionals of triangle ``t`` as point evaluations.

        Returns
        -------
        points : np.ndarray
            (npts, 2) physical points
        weights : np.ndarray
            (nloc, npts, ncomp) so that dof_i(v) = sum_pc weights[i, p, c] v_c(points[p])
        """
        return self._functional_data(t)

    def evaluate(self, t, points):
        """
        Shape functions of triangle ``t`` at arbitrary points.

        Returns
        -------
        values : np.ndarray
            (nloc, npts, ncomp) values
        derivative : np.ndarray
            (nloc, npts, 2) gradient for deflections, (nloc, npts, 3) symmetric gradient
            for rotations and (nloc, npts, 2) divergence for moments
        """
        if self.kind.family == "multiplier":
            raise ValueError("Multiplier shape functions live on edges only")
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        centre, h = self.mesh.centroids[t], self.mesh.diameters[t]
        values, derivative = _raw_basis(self.kind, (points - centre) / h, h)
        cmat = self._cmat(t)
        return (np.einsum("bpc,bk->kpc", values, cmat),
                np.einsum("bpc,bk->kpc", derivative, cmat))

    def shapes(self, t, rule, edge_rule=None):
        """
        ShapeTable of triangle ``t`` for a volume rule and an edge rule.

        Tables are cached per element geometry key and rule pair; cached tables are
        translated to the requested triangle.
        """
        if edge_rule is None:
            edge_rule = segment_rule(rule.exactness)
        key = (self.mesh.element_key(t), rule.exactness, edge_rule.exactness)
        entry = self._tables.get(key)
        if entry is None:
            entry = (self._build_table(t, rule, edge_rule), self.mesh.centroids[t])
            self._tables[key] = entry
        table, centre = entry
        return table.moved(self.mesh.centroids[t] - centre)

    def _build_table(self, t, rule, edge_rule):
        kind = self.kind
        verts, signs, _, _ = self._geometry(t)
        points, weights = map_to_triangle(rule, verts)
        edges = []
        for i in range(3):
            a, b = verts[(i + 1) % 3], verts[(i + 2) % 3]
            length = np.linalg.norm(b - a)
            tangent = (b - a) / length
            normal = np.array([tangent[1], -tangent[0]])
            start, end = (a, b) if signs[i] > 0 else (b, a)
            epoints, eweights = map_to_segment(edge_rule, start, end)
            if kind.family == "multiplier":
                evalues = np.zeros((kind.ndof_local, len(eweights), 1))
                scaled = _legendre(edge_rule.points, kind.order) * (2 * np.arange(kind.order + 1) + 1)
                evalues[kind.local_edge_dofs(i), :, 0] = scaled.T
            else:
                evalues = self.evaluate(t, epoints)[0]
            edges.append(EdgeTrace(epoints, eweights, normal, tangent, int(signs[i]), evalues))
        if kind.family == "multiplier":
            return ShapeTable(kind, points, weights, None, edges=edges)
        values, derivative = self.evaluate(t, points)
        derivatives = {"deflection": "grad", "rotation": "sym_grad", "moment": "div"}
        return ShapeTable(kind, points, weights, values, edges=edges,
                          **{derivatives[kind.family]: derivative})

    def interpolate(self, func, elements=None):
        """
        Applies the dof functionals to ``func``.

        Parameters
        ----------
        func : callable
            func(x, y) with arrays x, y returning (n,) values for scalar spaces or
            (n, ncomp) values otherwise; moment fields are Voigt (xx, yy, xy)
        elements : array_like, optional (default=None)
            Restrict the interpolation to these triangles (other dofs stay zero)

        Returns
        -------
        coeffs : np.ndarray
            (ndof,) coefficients
        """
        if self.kind.family == "multiplier":
            raise ValueError("Multiplier values are produced by the solve, not interpolated")
        if elements is None:
            elements = np.arange(self.mesh.ntriangles)
        elements = np.asarray(elements, dtype=np.int64)
        coeffs = np.zeros(self.ndof)
        if len(elements) == 0:
            return coeffs
        data = [self.functionals(t) for t in elements]
        points = np.vstack([d[0] for d in data])
        values = np.asarray(func(points[:, 0], points[:, 1]), dtype=float)
        values = values.reshape(len(points), self.kind.ncomp)
        start = 0
        for t, (pts, weights) in zip(elements, data):
            local = values[start:start + len(pts)]
            start += len(pts)
            coeffs[self.element_dofs[t]] = self.element_signs[t] * np.einsum("ipc,pc->i", weights,
                                                                              local)
        return coeffs

    def __repr__(self):
        return "FESpace({}, ndof={}, nfree={})".format(self.kind, self.ndof, self.nfree)


def build_space(mesh, kind, essential=()):
    """
    Builds a discrete space with its dof map and essential dofs.

    Parameters
    ----------
    mesh : TriMesh
    kind : SpaceKind
    essential : iterable of (int, str), optional (default=())
        (boundary marker, trace) pairs; legal traces are 'w' for deflections,
        'theta_t' for rotations and 'm_nn' for moments. Multiplier dofs on boundary
        edges are always constrained.

    Returns
    -------
    space : FESpace
    """
    return FESpace(mesh, kind, essential)


def element_shapes(space, triangle, rule, edge_rule=None):
    """ShapeTable of ``triangle``; the edge rule defaults to the segment rule of the same degree."""
    return space.shapes(triangle, rule, edge_rule)


def gradient_matrix(w_space, theta_space):
    """
    Sparse operator mapping deflection coefficients to the rotation coefficients of their
    gradient.

    The gradient of a deflection of degree k + 1 lies in the rotation space of order k,
    so applying the rotation dof functionals to it reproduces it exactly.
    """
    if (w_space.kind.family, theta_space.kind.family) != ("deflection", "rotation") or \
            w_space.kind.order != theta_space.kind.order:
        raise ValueError("Incompatible spaces {} and {} for the gradient".format(
            w_space.kind, theta_space.kind))
    mesh = w_space.mesh
    assigned = np.zeros(theta_space.ndof, dtype=bool)
    cache = {}
    rows, cols, vals = [], [], []
    for t in range(mesh.ntriangles):
        tdofs = theta_space.element_dofs[t]
        fresh = ~assigned[tdofs]
        if not fresh.any():
            continue
        key = mesh.element_key(t)
        local = cache.get(key)
        if local is None:
            points, weights = theta_space.functionals(t)
            grads = w_space.evaluate(t, points)[1]
            local = np.einsum("ipc,jpc->ij", weights, grads)
            cache[key] = local
        wdofs = w_space.element_dofs[t]
        block = local[fresh]
        rows.append(np.repeat(tdofs[fresh], len(wdofs)))
        cols.append(np.tile(wdofs, int(fresh.sum())))
        vals.append(block.ravel())
        assigned[tdofs] = True
    matrix = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(theta_space.ndof, w_space.ndof)).tocsr()
    matrix.sum_duplicates()
    return matrix


def interpolate_gradient(w_space, theta_space, w_coeffs):
    """Rotation coefficients representing the gradient of the deflection ``w_coeffs``."""
    return gradient_matrix(w_space, theta_space) @ np.asarray(w_coeffs, dtype=float)


def double_dot(tau, eps):
    """tau:eps for (..., 3) tensor components stored as (xx, yy, xy)."""
    return np.einsum("...c,...c->...", np.asarray(tau) * VOIGT_WEIGHTS, eps)


def monomial_exponents(degree):
    """Exponents (a, b) of x^a y^b for total degree <= ``degree``, grouped by degree."""
    return [(a, d - a) for d in range(degree + 1) for a in range(d, -1, -1)]


def _monomials(degree, xi):
    x, y = xi[:, 0], xi[:, 1]
    xp = np.ones((degree + 1, len(x)))
    yp = np.ones((degree + 1, len(x)))
    for i in range(1, degree + 1):
        xp[i] = xp[i - 1] * x
        yp[i] = yp[i - 1] * y
    exps = monomial_exponents(degree)
    zero = np.zeros(len(x))
    vals = np.array([xp[a] * yp[b] for a, b in exps])
    dx = np.array([a * xp[a - 1] * yp[b] if a else zero for a, b in exps])
    dy = np.array([b * xp[a] * yp[b - 1] if b else zero for a, b in exps])
    return vals, dx, dy


def _raw_basis(kind, xi, h):
    """Monomial basis in scaled coordinates and its physical derivative."""
    vals, dx, dy = _monomials(kind.degree, xi)
    dx, dy = dx / h, dy / h
    nm, npts = vals.shape
    if kind.family == "deflection":
        return vals[:, :, None], np.stack((dx, dy), axis=-1)
    if kind.family == "rotation":
        values = np.zeros((2 * nm, npts, 2))
        values[:nm, :, 0] = vals
        values[nm:, :, 1] = vals
        sym_grad = np.zeros((2 * nm, npts, 3))
        sym_grad[:nm, :, 0] = dx
        sym_grad[:nm, :, 2] = 0.5 * dy
        sym_grad[nm:, :, 1] = dy
        sym_grad[nm:, :, 2] = 0.5 * dx
        return values, sym_grad
    if kind.family == "moment":
        values = np.zeros((3 * nm, npts, 3))
        div = np.zeros((3 * nm, npts, 2))
        for c in range(3):
            values[c * nm:(c + 1) * nm, :, c] = vals
        div[:nm, :, 0] = dx
        div[nm:2 * nm, :, 1] = dy
        div[2 * nm:, :, 0] = dy
        div[2 * nm:, :, 1] = dx
        return values, div
    raise ValueError("No volume basis for the {} family".format(kind.family))


def _legendre(s, order):
    """Legendre polynomials P_0..P_order of 2s - 1, shape (len(s), order + 1)."""
    return legendre.legvander(2.0 * np.asarray(s) - 1.0, order)


def _rt_basis(degree, xi):
    """Raviart-Thomas polynomials of the given degree at scaled points, (n, npts, 2)."""
    vals = _monomials(degree, xi)[0]
    nm = len(vals)
    hom = vals[nm - degree - 1:]
    out = np.zeros((2 * nm + len(hom), len(xi), 2))
    out[:nm, :, 0] = vals
    out[nm:2 * nm, :, 1] = vals
    out[2 * nm:, :, 0] = xi[:, 0] * hom
    out[2 * nm:, :, 1] = xi[:, 1] * hom
    return out


def _element_functionals(kind, verts, signs, centre, h):
    """Dof functionals of one element in local dof order as weighted point evaluations."""
    k = kind.order
    blocks = []
    if kind.family == "deflection":
        p = kind.degree
        blocks.append((verts, np.eye(3)[:, :, None]))
    edge_rule = segment_rule(2 * k + 2)
    for i in range(3):
        a, b = verts[(i + 1) % 3], verts[(i + 2) % 3]
        start, end = (a, b) if signs[i] > 0 else (b, a)
        if kind.family == "deflection":
            s = np.arange(1, p) / p
            blocks.append((start + np.outer(s, end - start), np.eye(k)[:, :, None]))
            continue
        points, _ = map_to_segment(edge_rule, start, end)
        tangent = (end - start) / np.linalg.norm(end - start)
        normal = np.array([tangent[1], -tangent[0]])
        moments = (edge_rule.weights[:, None] * _legendre(edge_rule.points, k)).T
        if kind.family == "rotation":
            direction = tangent
        elif kind.family == "moment":
            direction = np.array([normal[0] ** 2, normal[1] ** 2, 2.0 * normal[0] * normal[1]])
        else:
            direction = np.ones(1)
        blocks.append((points, moments[:, :, None] * direction))
    ninterior = kind.entity_dofs[2]
    if ninterior and kind.family == "deflection":
        lattice = [(i, j, p - i - j) for i in range(1, p) for j in range(1, p - i)]
        points = np.array([(i * verts[0] + j * verts[1] + l * verts[2]) / p for i, j, l in lattice])
        blocks.append((points, np.eye(ninterior)[:, :, None]))
    elif ninterior:
        rule = triangle_rule(2 * k)
        points, _ = map_to_triangle(rule, verts)
        xi = (points - centre) / h
        average = 2.0 * rule.weights
        if kind.family == "rotation":
            tests = _rt_basis(k - 2, xi)
        else:
            vals = _monomials(k - 1, xi)[0]
            nm = len(vals)
            tests = np.zeros((3 * nm, len(xi), 3))
            for c in range(3):
                tests[c * nm:(c + 1) * nm, :, c] = vals * VOIGT_WEIGHTS[c]
        blocks.append((points, average[None, :, None] * tests))

    points = np.vstack([pts for pts, _ in blocks])
    weights = np.zeros((kind.ndof_local, len(points), kind.ncomp))
    row, col = 0, 0
    for pts, w in blocks:
        weights[row:row + w.shape[0], col:col + len(pts)] = w
        row += w.shape[0]
        col += len(pts)
    return points, weights

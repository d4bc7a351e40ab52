import logging
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)

MESH_HEADER = "tdnnsmesh 1"
INTERIOR = -1


class MeshFormatError(ValueError):
    """
    Error raised while parsing an ASCII mesh document.

    Attributes
    ----------
    lineno : int
        Line number (1-based) of the offending line, None if not line specific
    """

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = "line {}: {}".format(lineno, message)
        super().__init__(message)
        self.lineno = lineno


class TriMesh(object):
    """
    Conforming triangular mesh with globally oriented edges and boundary markers.

    Local edge ``i`` of a triangle is the edge opposite to its local vertex ``i``,
    i.e. the pair (v[i+1], v[i+2]). Every global edge is stored from its lower to its
    higher vertex index, which fixes the direction of its tangent and normal.

    Attributes
    ----------
    vertices : np.ndarray
        (V, 2) vertex coordinates
    triangles : np.ndarray
        (T, 3) counter-clockwise vertex indices
    edges : np.ndarray
        (E, 2) vertex indices, lower index first
    tri_edges : np.ndarray
        (T, 3) global edge of each local edge
    tri_edge_signs : np.ndarray
        (T, 3) +1 when the counter-clockwise direction of the local edge agrees with
        the global edge orientation, -1 otherwise
    edge_to_tri : np.ndarray
        (E, 2) adjacent triangles, second entry -1 on the boundary
    edge_markers : np.ndarray
        (E,) boundary marker of each edge, -1 for interior edges
    boundary_edges : np.ndarray
        Indices of the boundary edges
    """

    def __init__(self, vertices, triangles, boundary=None, markers=None, validate=True):
        """
        Creates object TriMesh.

        Parameters
        ----------
        vertices : array_like
            (V, 2) coordinates
        triangles : array_like
            (T, 3) counter-clockwise vertex indices
        boundary : array_like, optional (default=None)
            (K, 2) vertex pairs of marked boundary edges
        markers : array_like, optional (default=None)
            (K,) integer markers of ``boundary``; boundary edges not listed get marker 0
        validate : bool, optional (default=True)
            run :meth:`validate` after construction
        """
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        self._build_edges()
        self._mark_boundary(boundary, markers)
        for array_ in (self.vertices, self.triangles, self.edges, self.tri_edges,
                       self.tri_edge_signs, self.edge_to_tri, self.edge_markers,
                       self.boundary_edges):
            array_.setflags(write=False)
        if validate:
            self.validate()

    def _build_edges(self):
        tri = self.triangles
        ntri = len(tri)
        first = np.concatenate([tri[:, (i + 1) % 3] for i in range(3)])
        second = np.concatenate([tri[:, (i + 2) % 3] for i in range(3)])
        local = np.column_stack((first, second))
        # unique sorted pairs, edge i of triangle t sits at row i * ntri + t
        self.edges, inverse = np.unique(np.sort(local, axis=1), axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        self.tri_edges = inverse.reshape(3, ntri).T.copy()
        self.tri_edge_signs = np.where(first < second, 1, -1).reshape(3, ntri).T.copy()

        flat = self.tri_edges.ravel()
        owners = np.repeat(np.arange(ntri), 3)
        order = np.argsort(flat, kind="stable")
        sorted_edges = flat[order]
        is_first = np.r_[True, sorted_edges[1:] != sorted_edges[:-1]]
        self.edge_to_tri = -np.ones((len(self.edges), 2), dtype=np.int64)
        self.edge_to_tri[sorted_edges[is_first], 0] = owners[order][is_first]
        self.edge_to_tri[sorted_edges[~is_first], 1] = owners[order][~is_first]
        self._edge_counts = np.bincount(flat, minlength=len(self.edges))

    def _mark_boundary(self, boundary, markers):
        self.boundary_edges = np.flatnonzero(self._edge_counts == 1)
        self.edge_markers = np.full(len(self.edges), INTERIOR, dtype=np.int64)
        self.edge_markers[self.boundary_edges] = 0
        if boundary is None:
            return
        boundary = np.array(boundary, dtype=np.int64).reshape(-1, 2)
        markers = np.array(markers, dtype=np.int64).reshape(-1)
        if len(markers) != len(boundary):
            raise ValueError("Got {} boundary edges but {} markers".format(
                len(boundary), len(markers)))
        lookup = {tuple(edge): e for e, edge in enumerate(self.edges.tolist())}
        for (a, b), marker in zip(boundary.tolist(), markers.tolist()):
            e = lookup.get((min(a, b), max(a, b)))
            if e is None or self._edge_counts[e] != 1:
                raise ValueError("Pair ({}, {}) is not a boundary edge of the mesh".format(a, b))
            self.edge_markers[e] = marker

    @property
    def nvertices(self):
        return len(self.vertices)

    @property
    def ntriangles(self):
        return len(self.triangles)

    @property
    def nedges(self):
        return len(self.edges)

    @cached_property
    def areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edge_lengths(self):
        return np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]],
                              axis=1)

    @cached_property
    def diameters(self):
        """Longest edge of every triangle."""
        return self.edge_lengths[self.tri_edges].max(axis=1)

    @property
    def h(self):
        """Mesh size (largest triangle diameter)."""
        return float(self.diameters.max())

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def boundary_markers(self):
        return self.edge_markers[self.boundary_edges]

    @property
    def markers(self):
        """Sorted distinct boundary markers."""
        return np.unique(self.boundary_markers)

    def edges_with_marker(self, marker):
        return np.flatnonzero(self.edge_markers == marker)

    def element_key(self, t):
        """
        Geometry key of triangle ``t`` that is invariant under translation.

        Two triangles with the same key have the same shape, size, local vertex order
        and edge orientation flags, so element computations can be shared between them.
        """
        return self._element_keys[t]

    @cached_property
    def _element_keys(self):
        p = self.vertices[self.triangles]
        rel = (p - self.centroids[:, None, :]) / self.diameters[:, None, None]
        rel = np.round(rel, 10) + 0.0
        keys = []
        for t in range(self.ntriangles):
            keys.append((rel[t].tobytes(), self.tri_edge_signs[t].tobytes(),
                         "{:.10e}".format(self.diameters[t])))
        return keys

    def boundary_loops(self):
        """Number of connected components of the boundary edge graph."""
        if len(self.boundary_edges) == 0:
            return 0
        parent = {}

        def find(v):
            while parent.setdefault(v, v) != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for a, b in self.edges[self.boundary_edges].tolist():
            parent[find(a)] = find(b)
        return len({find(v) for v in list(parent)})

    def validate(self):
        """
        Checks the mesh invariants and raises ValueError naming the first violation.

        Checked: positive triangle areas, every edge shared by one or two triangles,
        edges stored lower to higher index, opposite traversal of interior edges by
        their two triangles, no unused vertices and the Euler relation
        V - E + T = 2 - (number of boundary loops).
        """
        if self.ntriangles == 0:
            raise ValueError("Mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= self.nvertices:
            raise ValueError("Triangle vertex index out of range")
        bad = np.flatnonzero(self.areas <= 0)
        if len(bad):
            raise ValueError("Triangle {} has non-positive area {}".format(bad[0], self.areas[bad[0]]))
        if np.any(self._edge_counts > 2):
            raise ValueError("Edge {} is shared by more than two triangles".format(
                np.flatnonzero(self._edge_counts > 2)[0]))
        if np.any(self.edges[:, 0] >= self.edges[:, 1]):
            raise ValueError("Edges must be stored from lower to higher vertex index")
        interior = np.flatnonzero(self.edge_to_tri[:, 1] >= 0)
        t1, t2 = self.edge_to_tri[interior, 0], self.edge_to_tri[interior, 1]
        s1 = self.tri_edge_signs[t1][self.tri_edges[t1] == interior[:, None]]
        s2 = self.tri_edge_signs[t2][self.tri_edges[t2] == interior[:, None]]
        if np.any(s1 == s2):
            raise ValueError("Edge {} is traversed in the same direction by both triangles".format(
                interior[np.flatnonzero(s1 == s2)[0]]))
        if len(np.unique(self.triangles)) != self.nvertices:
            raise ValueError("Mesh has vertices not used by any triangle")
        euler = self.nvertices - self.nedges + self.ntriangles
        if euler != 2 - self.boundary_loops():
            raise ValueError("Euler relation violated: V - E + T = {} with {} boundary loops".format(
                euler, self.boundary_loops()))
        return True

    def __eq__(self, other):
        return (isinstance(other, TriMesh) and
                np.array_equal(self.vertices, other.vertices) and
                np.array_equal(self.triangles, other.triangles) and
                np.array_equal(self.edge_markers, other.edge_markers))

    def __repr__(self):
        return "TriMesh(nvertices={}, ntriangles={}, nedges={})".format(
            self.nvertices, self.ntriangles, self.nedges)


def unit_square_mesh(n):
    """
    Structured mesh of (0, 1)^2 with 2 n^2 right triangles.

    Every cell is cut along its lower-left to upper-right diagonal. Vertex (i, j) has
    index j (n + 1) + i and all boundary edges carry marker 1.

    Parameters
    ----------
    n : int
        Subdivisions per side, n >= 1

    Returns
    -------
    mesh : TriMesh
    """
    if int(n) != n or n < 1:
        raise ValueError("Number of subdivisions must be a positive integer, got {}".format(n))
    n = int(n)
    coords = np.arange(n + 1) / n
    x, y = np.meshgrid(coords, coords)
    vertices = np.column_stack((x.ravel(), y.ravel()))
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    ll = (j * (n + 1) + i).ravel()
    lr, ul = ll + 1, ll + n + 1
    ur = ul + 1
    triangles = np.column_stack((ll, lr, ur, ll, ur, ul)).reshape(-1, 3)
    side = np.arange(n)
    bottom = np.column_stack((side, side + 1))
    right = np.column_stack((side * (n + 1) + n, (side + 1) * (n + 1) + n))
    top = bottom + n * (n + 1)
    left = right - n
    boundary = np.vstack((bottom, right, top, left))
    return TriMesh(vertices, triangles, boundary, np.ones(len(boundary), dtype=np.int64))


def refine_uniform(mesh):
    """
    Splits every triangle into four by its edge midpoints.

    The children of triangle ``t`` are stored at indices 4t .. 4t+3 (three corner
    triangles followed by the middle one), boundary edges are halved and keep their
    markers.
    """
    nv = mesh.nvertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack((mesh.vertices, midpoints))
    a, b, c = mesh.triangles.T
    m0, m1, m2 = (nv + mesh.tri_edges).T
    children = np.stack([np.column_stack((a, m2, m1)),
                         np.column_stack((b, m0, m2)),
                         np.column_stack((c, m1, m0)),
                         np.column_stack((m0, m1, m2))], axis=1)
    bedges = mesh.boundary_edges
    mids = nv + bedges
    boundary = np.vstack((np.column_stack((mesh.edges[bedges, 0], mids)),
                          np.column_stack((mids, mesh.edges[bedges, 1]))))
    markers = np.concatenate((mesh.edge_markers[bedges], mesh.edge_markers[bedges]))
    return TriMesh(vertices, children.reshape(-1, 3), boundary, markers)


def plate_with_hole_mesh(side=100.0, hole_diameter=30.0, segments=32, graded_levels=0,
                         rings=None):
    """
    Square plate with a centred circular hole, meshed by rings of quadrilaterals.

    Every ring cell is split into triangles through its vertex mean, which keeps the
    mesh mirror symmetric about the horizontal centre line. A plate corner lying
    between two rim directions becomes an extra vertex of the outermost cell.

    Parameters
    ----------
    side : float, optional (default=100.0)
        Side length of the plate
    hole_diameter : float, optional (default=30.0)
        Diameter of the hole, 0 < hole_diameter < side
    segments : int, optional (default=32)
        Number of polygon segments of the hole, at least 8
    graded_levels : int, optional (default=0)
        Extra rings added with ratio 0.5 towards the hole and towards the outer boundary
    rings : int, optional (default=None)
        Number of uniform rings, max(2, segments // 8) if None

    Returns
    -------
    mesh : TriMesh
        Markers: 1 left edge, 2 right edge, 3 top and bottom edges, 4 hole
    """
    if not 0 < hole_diameter < side:
        raise ValueError("Hole diameter {} must lie strictly between 0 and the side {}".format(
            hole_diameter, side))
    if segments < 8:
        raise ValueError("segments must be at least 8, got {}".format(segments))
    if graded_levels < 0:
        raise ValueError("graded_levels must be non negative, got {}".format(graded_levels))
    if rings is None:
        rings = max(2, segments // 8)

    centre = np.array([0.5 * side, 0.5 * side])
    # exact mirror images below the horizontal centre line
    index = np.arange(segments)
    angles = 2.0 * np.pi * np.minimum(index, segments - index) / segments
    direction = np.column_stack((np.cos(angles), np.sign(segments - 2 * index) * np.sin(angles)))
    inner = centre + 0.5 * hole_diameter * direction
    reach = 0.5 * side / np.abs(direction).max(axis=1)
    outer = centre + reach[:, None] * direction
    for value in (0.0, side):
        outer[np.abs(outer - value) < 1e-9 * side] = value

    radial = np.linspace(0.0, 1.0, rings + 1)
    first, last = radial[1], radial[-2]
    graded = [first * 0.5 ** level for level in range(1, graded_levels + 1)]
    graded += [1.0 - (1.0 - last) * 0.5 ** level for level in range(1, graded_levels + 1)]
    radial = np.unique(np.concatenate((radial, graded)))

    ring_points = [inner + s * (outer - inner) for s in radial]
    ring_points[-1] = outer
    vertices = np.vstack(ring_points)
    nring = len(radial)

    # plate corners that fall strictly between two rim directions, keyed by the
    # direction index j whose cell (j, j + 1) contains them
    corners = {}
    for quarter, (cx, cy) in enumerate(((side, side), (0.0, side), (0.0, 0.0), (side, 0.0))):
        position = segments * (2 * quarter + 1)
        if position % 8:
            corners[position // 8] = len(vertices) + len(corners)
            vertices = np.vstack((vertices, [[cx, cy]]))

    polygons = []
    for r in range(nring - 1):
        for j in range(segments):
            jn = (j + 1) % segments
            cell = [r * segments + j, (r + 1) * segments + j]
            if r == nring - 2 and j in corners:
                cell.append(corners[j])
            cell += [(r + 1) * segments + jn, r * segments + jn]
            polygons.append(cell)
    centres = np.array([vertices[cell].mean(axis=0) for cell in polygons])
    cidx = len(vertices) + np.arange(len(polygons))
    vertices = np.vstack((vertices, centres))
    triangles = np.array([(cell[q], cell[(q + 1) % len(cell)], c)
                          for cell, c in zip(polygons, cidx) for q in range(len(cell))])
    triangles = _counter_clockwise(vertices, triangles)

    j = np.arange(segments)
    jn = (j + 1) % segments
    hole = np.column_stack((j, jn))
    rim = []
    offset = (nring - 1) * segments
    for a, b in zip(j, jn):
        chain = [offset + a, corners[a], offset + b] if a in corners else [offset + a, offset + b]
        rim.extend(zip(chain[:-1], chain[1:]))
    rim = np.array(rim)
    mid = 0.5 * (vertices[rim[:, 0]] + vertices[rim[:, 1]])
    tol = 1e-9 * side
    rim_markers = np.where(np.abs(mid[:, 0]) < tol, 1,
                           np.where(np.abs(mid[:, 0] - side) < tol, 2, 3))
    boundary = np.vstack((rim, hole))
    markers = np.concatenate((rim_markers, np.full(segments, 4)))
    mesh = TriMesh(vertices, triangles, boundary, markers)
    logger.info("Plate with hole mesh: {} vertices, {} triangles".format(
        mesh.nvertices, mesh.ntriangles))
    return mesh


def _counter_clockwise(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def write_mesh(mesh):
    """
    Serializes a mesh to the ASCII ``tdnnsmesh`` format.

    Coordinates are written with ``repr`` so that reading the document back gives
    bitwise identical values.
    """
    lines = [MESH_HEADER, "vertices {}".format(mesh.nvertices)]
    lines += ["{} {}".format(repr(float(x)), repr(float(y))) for x, y in mesh.vertices]
    lines.append("triangles {}".format(mesh.ntriangles))
    lines += ["{} {} {}".format(*tri) for tri in mesh.triangles.tolist()]
    bedges = mesh.boundary_edges
    lines.append("boundary {}".format(len(bedges)))
    lines += ["{} {} {}".format(a, b, m) for (a, b), m in
              zip(mesh.edges[bedges].tolist(), mesh.edge_markers[bedges].tolist())]
    return "\n".join(lines) + "\n"


def read_mesh(text):
    """
    Parses an ASCII ``tdnnsmesh`` document.

    Clockwise triangles are reordered to counter-clockwise and reported with a warning.

    Parameters
    ----------
    text : str
        Document contents

    Returns
    -------
    mesh : TriMesh

    Raises
    ------
    MeshFormatError
        Malformed header or section, index out of range, degenerate triangle or a
        boundary pair that is not a boundary edge; the message names the line.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if content:
            lines.append((lineno, content.split()))
    if not lines or " ".join(lines[0][1]) != MESH_HEADER:
        raise MeshFormatError("expected header '{}'".format(MESH_HEADER),
                              lines[0][0] if lines else 1)
    cursor = [1]

    def section(name, width, cast):
        if cursor[0] >= len(lines):
            raise MeshFormatError("missing section '{}'".format(name), lines[-1][0])
        lineno, tokens = lines[cursor[0]]
        if len(tokens) != 2 or tokens[0] != name:
            raise MeshFormatError("expected '{} <count>'".format(name), lineno)
        try:
            count = int(tokens[1])
        except ValueError:
            raise MeshFormatError("invalid count '{}'".format(tokens[1]), lineno)
        if count < 0:
            raise MeshFormatError("negative count in section '{}'".format(name), lineno)
        rows = lines[cursor[0] + 1:cursor[0] + 1 + count]
        if len(rows) != count:
            raise MeshFormatError("section '{}' announces {} rows".format(name, count), lineno)
        cursor[0] += count + 1
        values = []
        for row_lineno, row in rows:
            if len(row) != width:
                raise MeshFormatError("expected {} values".format(width), row_lineno)
            try:
                values.append([cast(token) for token in row])
            except ValueError:
                raise MeshFormatError("invalid number in '{}'".format(" ".join(row)), row_lineno)
        return [lineno for lineno, _ in rows], values

    _, vertices = section("vertices", 2, float)
    tri_lines, triangles = section("triangles", 3, int)
    bnd_lines, boundary = section("boundary", 3, int)
    if cursor[0] < len(lines):
        raise MeshFormatError("unexpected content", lines[cursor[0]][0])

    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    nv = len(vertices)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    for lineno, tri in zip(tri_lines, triangles):
        if tri.min() < 0 or tri.max() >= nv:
            raise MeshFormatError("vertex index out of range in triangle {}".format(
                " ".join(map(str, tri))), lineno)
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    for lineno, area in zip(tri_lines, signed):
        if area == 0:
            raise MeshFormatError("triangle has zero area", lineno)
        if area < 0:
            logger.warning("line {}: clockwise triangle reordered to counter-clockwise".format(
                lineno))
    triangles[signed < 0] = triangles[signed < 0][:, [0, 2, 1]]

    boundary = np.array(boundary, dtype=np.int64).reshape(-1, 3)
    counts = {}
    for tri in triangles.tolist():
        for i in range(3):
            a, b = tri[(i + 1) % 3], tri[(i + 2) % 3]
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    for lineno, (a, b, _) in zip(bnd_lines, boundary.tolist()):
        if counts.get((min(a, b), max(a, b))) != 1:
            raise MeshFormatError("pair ({}, {}) is not a boundary edge".format(a, b), lineno)
    try:
        return TriMesh(vertices, triangles, boundary[:, :2], boundary[:, 2])
    except ValueError as err:
        raise MeshFormatError(str(err)) from err


def load_mesh(path):
    with open(path) as handle:
        return read_mesh(handle.read())


def save_mesh(mesh, path):
    with open(path, "w") as handle:
        handle.write(write_mesh(mesh))
    return path

"""Meshes for 1D intervals and structured 2D rectangle triangulations.

Piecewise-linear (P1) elements only.  A mesh carries the domain, its
boundary facets with outward normals, and cached Gauss quadrature data
for interior and boundary integrals.  In 1D the boundary "integral" is
the counting measure on the two endpoints, so each boundary facet is a
single node with weight 1.
"""

import numpy as np

MAX_QUAD_ORDER = 10

_REF_TRI_AREA = 0.5


class MeshError(ValueError):
    """Invalid mesh construction parameters or mesh/field mismatch."""


def _segment_rule(order):
    """Gauss-Legendre rule on [0,1], exact for polynomials of degree <= order."""
    if order < 1 or order > MAX_QUAD_ORDER:
        raise MeshError(f"unsupported quadrature order {order} (allowed 1..{MAX_QUAD_ORDER})")
    npts = (order + 2) // 2
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _triangle_rule(order):
    """Quadrature on the reference triangle (0,0)-(1,0)-(0,1).

    Duffy (collapsed square) rule: exact for bivariate polynomials of
    degree <= order, all weights positive.  Weights sum to 1/2.
    """
    if order < 1 or order > MAX_QUAD_ORDER:
        raise MeshError(f"unsupported quadrature order {order} (allowed 1..{MAX_QUAD_ORDER})")
    # the collapsed map raises the degree by one in the second variable:
    # x^i y^j pulls back to u^i (1-v)^(i+1) v^j, so Gauss needs 2m-1 >= order+1
    npts = (order + 3) // 2
    g, gw = np.polynomial.legendre.leggauss(npts)
    g = 0.5 * (g + 1.0)
    gw = 0.5 * gw
    u, v = np.meshgrid(g, g, indexing="ij")
    x = (u * (1.0 - v)).ravel()
    y = v.ravel()
    # (1 - v) is the Jacobian of (u,v) -> (u(1-v), v)
    w = (gw[:, None] * gw[None, :] * (1.0 - v)).ravel()
    return np.column_stack([x, y]), w


class Mesh:
    """Immutable P1 mesh of an interval or a triangulated rectangle.

    Attributes
    ----------
    dimension : 1 or 2
    nodes : (n,) or (n,2) float array of node coordinates
    elements : (m,2) or (m,3) int array of node indices
    boundary_facets : (k,1) or (k,2) int array (endpoint nodes / edges)
    facet_normals : (k,dimension) outward unit normals
    quadrature_order : default order used by assembly routines
    """

    def __init__(self, dimension, nodes, elements, boundary_facets,
                 facet_normals, quadrature_order=4):
        self.dimension = int(dimension)
        self.nodes = np.asarray(nodes, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        self.boundary_facets = np.asarray(boundary_facets, dtype=np.int64)
        self.facet_normals = np.asarray(facet_normals, dtype=float)
        self.quadrature_order = int(quadrature_order)
        if self.quadrature_order < 1 or self.quadrature_order > MAX_QUAD_ORDER:
            raise MeshError(f"quadrature_order must be in 1..{MAX_QUAD_ORDER}")
        self._build_geometry()
        self._interior_cache = {}
        self._facet_cache = {}
        for a in (self.nodes, self.elements, self.boundary_facets,
                  self.facet_normals, self.volumes, self.facet_measures):
            a.flags.writeable = False

    # -- geometry -----------------------------------------------------------

    def _build_geometry(self):
        if self.dimension == 1:
            x = self.nodes
            h = x[self.elements[:, 1]] - x[self.elements[:, 0]]
            if np.any(h <= 0):
                raise MeshError("non-positive element length")
            self.volumes = h
            # gradient of the two local hats on each element
            self.grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
            self.facet_measures = np.ones(len(self.boundary_facets))
        elif self.dimension == 2:
            p = self.nodes[self.elements]          # (m, 3, 2)
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
            if np.any(det <= 0):
                raise MeshError("degenerate or negatively oriented triangle")
            self.volumes = 0.5 * det
            # grad of reference hats mapped by inverse-transpose Jacobian
            inv = np.empty((len(det), 2, 2))
            inv[:, 0, 0] = d2[:, 1] / det
            inv[:, 0, 1] = -d2[:, 0] / det
            inv[:, 1, 0] = -d1[:, 1] / det
            inv[:, 1, 1] = d1[:, 0] / det
            ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
            self.grads = np.einsum("rj,eji->eri", ref, inv)
            ep = self.nodes[self.boundary_facets]  # (k, 2, 2)
            self.facet_measures = np.linalg.norm(ep[:, 1] - ep[:, 0], axis=1)
        else:
            raise MeshError("dimension must be 1 or 2")
        norms = np.linalg.norm(self.facet_normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise MeshError("facet normals must have unit length")

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_elements(self):
        return len(self.elements)

    @property
    def domain_volume(self):
        return float(self.volumes.sum())

    @property
    def boundary_measure(self):
        return float(self.facet_measures.sum())

    # -- quadrature ---------------------------------------------------------

    def interior_quadrature(self, order=None):
        """Quadrature data over all elements.

        Returns (points, weights, basis) with points (m,Q,dim), weights
        (m,Q) summing per element to the element volume, and basis (Q,nloc)
        values of the local P1 hats at the reference points.
        """
        order = self.quadrature_order if order is None else int(order)
        if order in self._interior_cache:
            return self._interior_cache[order]
        if self.dimension == 1:
            t, w = _segment_rule(order)
            x0 = self.nodes[self.elements[:, 0]]
            points = (x0[:, None] + self.volumes[:, None] * t[None, :])[:, :, None]
            weights = self.volumes[:, None] * w[None, :]
            basis = np.column_stack([1.0 - t, t])
        else:
            ref, w = _triangle_rule(order)
            p0 = self.nodes[self.elements[:, 0]]
            d1 = self.nodes[self.elements[:, 1]] - p0
            d2 = self.nodes[self.elements[:, 2]] - p0
            points = (p0[:, None, :]
                      + ref[None, :, 0, None] * d1[:, None, :]
                      + ref[None, :, 1, None] * d2[:, None, :])
            weights = (self.volumes / _REF_TRI_AREA)[:, None] * w[None, :]
            basis = np.column_stack([1.0 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])
        out = (points, weights, basis)
        self._interior_cache[order] = out
        return out

    def facet_quadrature(self, order=None):
        """Quadrature data over all boundary facets.

        Returns (points, weights, basis) with weights summing per facet to
        the facet measure.  1D facets are endpoint atoms of weight 1.
        """
        order = self.quadrature_order if order is None else int(order)
        if order in self._facet_cache:
            return self._facet_cache[order]
        if self.dimension == 1:
            points = self.nodes[self.boundary_facets[:, 0]][:, None, None]
            weights = np.ones((len(self.boundary_facets), 1))
            basis = np.array([[1.0]])
        else:
            t, w = _segment_rule(order)
            ep = self.nodes[self.boundary_facets]
            points = ep[:, None, 0, :] + t[None, :, None] * (ep[:, 1, :] - ep[:, 0, :])[:, None, :]
            weights = self.facet_measures[:, None] * w[None, :]
            basis = np.column_stack([1.0 - t, t])
        out = (points, weights, basis)
        self._facet_cache[order] = out
        return out


def element_rule(mesh, index, order=None):
    """Mapped quadrature rule for one element: list of (point, weight)."""
    points, weights, _ = mesh.interior_quadrature(order)
    return list(zip(points[index], weights[index]))


def facet_rule(mesh, index, order=None):
    """Mapped quadrature rule for one boundary facet: list of (point, weight)."""
    points, weights, _ = mesh.facet_quadrature(order)
    return list(zip(points[index], weights[index]))


def build_interval_mesh(a, b, n, quadrature_order=4):
    """Uniform mesh of (a,b) with n elements and n+1 nodes.

    Boundary facets are the two endpoints with outward normals -1 and +1;
    the boundary measure is the counting measure on {a, b}.
    """
    a, b = float(a), float(b)
    n = int(n)
    if not a < b:
        raise MeshError(f"need a < b, got a={a}, b={b}")
    if n < 2:
        raise MeshError(f"need at least 2 elements, got n={n}")
    # i/n then scaling keeps refined meshes exactly nested
    nodes = a + (b - a) * (np.arange(n + 1) / n)
    nodes[-1] = b
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    facets = np.array([[0], [n]])
    normals = np.array([[-1.0], [1.0]])
    return Mesh(1, nodes, elements, facets, normals, quadrature_order)


def build_rect_mesh(lx, ly, nx, ny, quadrature_order=4):
    """Structured triangulation of (0,lx) x (0,ly), two triangles per cell."""
    lx, ly = float(lx), float(ly)
    nx, ny = int(nx), int(ny)
    if lx <= 0 or ly <= 0:
        raise MeshError("rectangle dimensions must be positive")
    if nx < 2 or ny < 2:
        raise MeshError("need at least 2 cells per direction")
    xs = lx * (np.arange(nx + 1) / nx)
    ys = ly * (np.arange(ny + 1) / ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(ix, iy):
        return iy * (nx + 1) + ix

    elements = []
    for iy in range(ny):
        for ix in range(nx):
            ll, lr = nid(ix, iy), nid(ix + 1, iy)
            ul, ur = nid(ix, iy + 1), nid(ix + 1, iy + 1)
            elements.append([ll, lr, ur])
            elements.append([ll, ur, ul])
    facets, normals = [], []
    for ix in range(nx):
        facets.append([nid(ix, 0), nid(ix + 1, 0)]);     normals.append([0.0, -1.0])
        facets.append([nid(ix, ny), nid(ix + 1, ny)]);   normals.append([0.0, 1.0])
    for iy in range(ny):
        facets.append([nid(0, iy), nid(0, iy + 1)]);     normals.append([-1.0, 0.0])
        facets.append([nid(nx, iy), nid(nx, iy + 1)]);   normals.append([1.0, 0.0])
    return Mesh(2, nodes, np.array(elements), np.array(facets),
                np.array(normals), quadrature_order)


def write_vtk(mesh, path, point_data=None):
    """Dump a 2D mesh (and optional nodal scalar fields) as legacy ASCII VTK."""
    if mesh.dimension != 2:
        raise MeshError("VTK export is only supported for 2D meshes")
    lines = ["# vtk DataFile Version 2.0", "robin-plap mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.num_nodes} double"]
    for x, y in mesh.nodes:
        lines.append(f"{x!r} {y!r} 0.0")
    m = mesh.num_elements
    lines.append(f"CELLS {m} {4 * m}")
    for tri in mesh.elements:
        lines.append("3 " + " ".join(str(int(i)) for i in tri))
    lines.append(f"CELL_TYPES {m}")
    lines.extend(["5"] * m)
    if point_data:
        lines.append(f"POINT_DATA {mesh.num_nodes}")
        for name in sorted(point_data):
            values = np.asarray(point_data[name], dtype=float)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

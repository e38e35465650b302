"""Discrete Robin p-Laplacian operator on P1 fields.

The weak operator pairs a field u with test hats via

    <A(u), psi_j> = int_D |grad u|^(p-2) grad u . grad psi_j dx
                    + beta int_bd |u|^(p-2) u psi_j ds

and its energy is E(u) = <A(u), u> = int |grad u|^p + beta int_bd |u|^p.
With P1 elements grad u is constant per element, so the interior terms
are integrated exactly; boundary (and reaction) terms use the mesh
quadrature.  Dual vectors are plain numpy arrays indexed by nodes.
"""

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh


class FieldMismatchError(ValueError):
    """Field and operator/mesh shapes do not agree."""


class FeField:
    """Piecewise-linear function given by one coefficient per mesh node."""

    def __init__(self, mesh, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (mesh.num_nodes,):
            raise FieldMismatchError(
                f"expected {mesh.num_nodes} coefficients, got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise FieldMismatchError("field coefficients must be finite")
        self.mesh = mesh
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.num_nodes))

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(mesh.num_nodes, float(value)))

    @classmethod
    def interpolate(cls, mesh, fn):
        """Nodal interpolation of a callable of the coordinates."""
        return cls(mesh, np.asarray(fn(mesh.nodes), dtype=float).reshape(-1))

    def copy(self):
        return FeField(self.mesh, self.coeffs.copy())

    def __repr__(self):
        return f"FeField({self.mesh.num_nodes} nodes, |u|_inf={np.abs(self.coeffs).max():.3g})"


class RobinOperatorSpec:
    """Exponent p, Robin coefficient beta, and the mesh they act on.

    grad_regularization smooths only the Jacobian integrand,
    (|grad u|^2 + eps)^((p-2)/2); residual and energy stay exact.
    """

    def __init__(self, p, beta, mesh, grad_regularization=None):
        self.p = float(p)
        self.beta = float(beta)
        self.mesh = mesh
        if self.p <= 1.0:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if self.beta <= 0.0:
            raise ValueError(f"Robin coefficient must be positive, got {self.beta}")
        if grad_regularization is None:
            grad_regularization = 0.0 if self.p == 2.0 else 1e-10
        self.grad_regularization = float(grad_regularization)
        if self.grad_regularization < 0.0:
            raise ValueError("grad_regularization must be nonnegative")
        if self.grad_regularization == 0.0 and self.p != 2.0:
            raise ValueError("grad_regularization = 0 is only allowed for p = 2")

    def check_field(self, u):
        if u.mesh is not self.mesh:
            raise FieldMismatchError("field lives on a different mesh")


def signed_power(s, expo):
    """sign(s)|s|^expo with the convention 0^expo := 0 (also for expo <= 0)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    nz = s != 0.0
    out[nz] = np.sign(s[nz]) * np.abs(s[nz]) ** expo
    return out


def _element_values(mesh, coeffs, order=None):
    """Field values at interior quadrature points, shape (m, Q)."""
    _, _, basis = mesh.interior_quadrature(order)
    return coeffs[mesh.elements] @ basis.T


def _facet_values(mesh, coeffs, order=None):
    """Field values at boundary quadrature points, shape (k, Qb)."""
    _, _, basis = mesh.facet_quadrature(order)
    return coeffs[mesh.boundary_facets] @ basis.T


def element_gradients(u):
    """Constant gradient of a P1 field per element, shape (m, dim)."""
    mesh = u.mesh
    return np.einsum("erd,er->ed", mesh.grads, u.coeffs[mesh.elements])


def energy(spec, u):
    """E(u) = int |grad u|^p dx + beta int_bd |u|^p ds  (>= 0, 0 iff u = 0)."""
    spec.check_field(u)
    p, mesh = spec.p, spec.mesh
    g = element_gradients(u)
    gnorm = np.linalg.norm(g, axis=1)
    interior = float(np.dot(gnorm ** p, mesh.volumes))
    _, w, _ = mesh.facet_quadrature()
    uq = _facet_values(mesh, u.coeffs)
    boundary = float(np.sum(w * np.abs(uq) ** p))
    return interior + spec.beta * boundary


def apply_interior(spec, u):
    """Dual vector of the gradient part, int |grad u|^(p-2) grad u . grad psi_j."""
    spec.check_field(u)
    mesh = spec.mesh
    g = element_gradients(u)
    gnorm = np.linalg.norm(g, axis=1)
    coef = signed_power(gnorm, spec.p - 2.0)            # |g|^(p-2), 0 at g = 0
    flux = coef[:, None] * g                            # (m, dim)
    local = np.einsum("erd,ed,e->er", mesh.grads, flux, mesh.volumes)
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, mesh.elements, local)
    return out


def apply_boundary(spec, u):
    """Dual vector of the Robin part, beta int_bd |u|^(p-2) u psi_j."""
    spec.check_field(u)
    mesh = spec.mesh
    _, w, basis = mesh.facet_quadrature()
    uq = _facet_values(mesh, u.coeffs)
    sval = signed_power(uq, spec.p - 1.0)               # |u|^(p-2) u
    local = spec.beta * np.einsum("kq,kq,qr->kr", w, sval, basis)
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, mesh.boundary_facets, local)
    return out


def apply_operator(spec, u):
    """Full dual vector <A(u), psi_j>; satisfies dot(A(u), u) = energy(u)."""
    return apply_interior(spec, u) + apply_boundary(spec, u)


def residual(spec, u, rhs):
    """A(u) - rhs, the gradient of u -> E(u)/p - <rhs, u>."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (spec.mesh.num_nodes,):
        raise FieldMismatchError(f"rhs shape {rhs.shape} does not match mesh")
    return apply_operator(spec, u) - rhs


def jacobian(spec, u):
    """Sparse symmetric linearization of A at u.

    For p = 2 this is exactly K + beta*M_bd, independent of u.  Otherwise
    the integrand |grad u|^(p-2) is replaced by
    (|grad u|^2 + eps)^((p-2)/2) with eps = spec.grad_regularization.
    """
    spec.check_field(u)
    p, beta, mesh = spec.p, spec.beta, spec.mesh
    eps = spec.grad_regularization
    n = mesh.num_nodes
    G = mesh.grads                                       # (m, nloc, dim)

    if p == 2.0:
        local = np.einsum("erd,esd,e->ers", G, G, mesh.volumes)
    else:
        if eps <= 0.0:
            raise ValueError("regularized Jacobian needs grad_regularization > 0 for p != 2")
        g = element_gradients(u)
        g2 = np.einsum("ed,ed->e", g, g)
        m0 = (g2 + eps) ** ((p - 2.0) / 2.0)
        m1 = (p - 2.0) * (g2 + eps) ** ((p - 4.0) / 2.0)
        Gg = np.einsum("erd,ed->er", G, g)
        local = (m0[:, None, None] * np.einsum("erd,esd->ers", G, G)
                 + m1[:, None, None] * Gg[:, :, None] * Gg[:, None, :])
        local *= mesh.volumes[:, None, None]

    nloc = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, nloc, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nloc)).ravel()
    J = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n))

    _, w, basis = mesh.facet_quadrature()
    if p == 2.0:
        coef = beta * w
    else:
        uq = _facet_values(mesh, u.coeffs)
        s2 = uq * uq
        coef = beta * w * (s2 + eps) ** ((p - 4.0) / 2.0) * ((p - 1.0) * s2 + eps)
    blocal = np.einsum("kq,qr,qs->krs", coef, basis, basis)
    nf = mesh.boundary_facets.shape[1]
    brows = np.repeat(mesh.boundary_facets, nf, axis=1).ravel()
    bcols = np.tile(mesh.boundary_facets, (1, nf)).ravel()
    J = J + sp.coo_matrix((blocal.ravel(), (brows, bcols)), shape=(n, n))
    return J.tocsr()


def load(spec, g, order=None):
    """Dual vector int_D g(x) psi_j dx for a callable g of the coordinates.

    In 1D g receives an array of x values; in 2D an (..., 2) array of points.
    """
    mesh = spec.mesh if isinstance(spec, RobinOperatorSpec) else spec
    points, w, basis = mesh.interior_quadrature(order)
    if mesh.dimension == 1:
        vals = np.asarray(g(points[:, :, 0]), dtype=float)
    else:
        vals = np.asarray(g(points), dtype=float)
    vals = np.broadcast_to(vals, w.shape)
    local = np.einsum("eq,eq,qr->er", w, vals, basis)
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, mesh.elements, local)
    return out


def signed_power_load(spec, u, order=None):
    """Dual vector int_D |u|^(p-2) u psi_j dx (the L^p duality pairing of u)."""
    spec.check_field(u)
    mesh = spec.mesh
    _, w, basis = mesh.interior_quadrature(order)
    uq = _element_values(mesh, u.coeffs, order)
    sval = signed_power(uq, spec.p - 1.0)
    local = np.einsum("eq,eq,qr->er", w, sval, basis)
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, mesh.elements, local)
    return out


def lp_norm(u, p, order=None):
    """Quadrature L^p norm of a P1 field over the domain."""
    mesh = u.mesh
    _, w, _ = mesh.interior_quadrature(order)
    uq = _element_values(mesh, u.coeffs, order)
    return float(np.sum(w * np.abs(uq) ** p)) ** (1.0 / p)


def w1p_norm(u, p, order=None):
    """Quadrature W^{1,p} norm (|u|_p^p + |grad u|_p^p)^(1/p)."""
    mesh = u.mesh
    g = element_gradients(u)
    gterm = float(np.dot(np.linalg.norm(g, axis=1) ** p, mesh.volumes))
    return (lp_norm(u, p, order) ** p + gterm) ** (1.0 / p)


def stiffness_matrix(mesh):
    """P1 stiffness matrix K (exact)."""
    n = mesh.num_nodes
    local = np.einsum("erd,esd,e->ers", mesh.grads, mesh.grads, mesh.volumes)
    nloc = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, nloc, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nloc)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(mesh):
    """Consistent P1 mass matrix M (exact)."""
    n = mesh.num_nodes
    if mesh.dimension == 1:
        ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    else:
        ref = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = mesh.volumes[:, None, None] * ref[None, :, :]
    nloc = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, nloc, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nloc)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def weighted_mass_matrix(mesh, weight_q, order=None):
    """Interior mass matrix with a per-quadrature-point weight (m, Q) array."""
    n = mesh.num_nodes
    _, w, basis = mesh.interior_quadrature(order)
    local = np.einsum("eq,eq,qr,qs->ers", w, weight_q, basis, basis)
    nloc = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, nloc, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nloc)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def boundary_mass_matrix(mesh):
    """Boundary mass matrix M_bd; in 1D the two endpoint atoms of weight 1."""
    n = mesh.num_nodes
    if mesh.dimension == 1:
        idx = mesh.boundary_facets[:, 0]
        return sp.coo_matrix((np.ones(len(idx)), (idx, idx)), shape=(n, n)).tocsr()
    ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = mesh.facet_measures[:, None, None] * ref[None, :, :]
    rows = np.repeat(mesh.boundary_facets, 2, axis=1).ravel()
    cols = np.tile(mesh.boundary_facets, (1, 2)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

"""First (and, in 1D, second) eigenpair of the Robin p-Laplacian.

The first eigenvalue is the minimum of the Rayleigh quotient
E(u) / |u|_p^p over nonzero fields.  At p = 2 it is computed by inverse
iteration on the generalized problem (K + beta*M_bd) v = lam * M v; for
other p by projected gradient descent on the quotient (renormalizing
each step, Armijo line search, gradient preconditioned by the p = 2
operator), warm-started through continuation in p with steps of 0.25.

The second eigenvalue is available in 1D only, via shooting with node
counting: eigenvalues are the roots of the Robin mismatch at the right
endpoint, and the second root's eigenfunction changes sign exactly once.
"""

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .assembly import (FeField, RobinOperatorSpec, apply_operator,
                       boundary_mass_matrix, element_gradients, energy, jacobian,
                       lp_norm, mass_matrix, signed_power, signed_power_load,
                       stiffness_matrix, weighted_mass_matrix, _element_values)


@dataclass
class EigenOptions:
    tol_residual: float = 1e-9
    max_iters: int = 2000
    p_step: float = 0.25
    ls_shrink: float = 0.5
    ls_sufficient: float = 1e-4
    max_backtracks: int = 50


@dataclass
class EigenPair:
    lam: float
    phi: FeField


def rayleigh_quotient(spec, u):
    """E(u) / |u|_p^p; scale invariant, defined for u != 0."""
    spec.check_field(u)
    if not np.any(u.coeffs):
        raise ValueError("Rayleigh quotient undefined at the zero field")
    return energy(spec, u) / lp_norm(u, spec.p) ** spec.p


def _normalized(spec, coeffs):
    u = FeField(spec.mesh, coeffs)
    nrm = lp_norm(u, spec.p)
    if nrm == 0:
        raise ValueError("cannot normalize the zero field")
    return FeField(spec.mesh, coeffs / nrm)


def _inverse_iteration(spec, max_iters=200, tol=1e-14):
    """Smallest eigenpair of (K + beta*M_bd) v = lam M v by inverse iteration."""
    mesh = spec.mesh
    A = (stiffness_matrix(mesh) + spec.beta * boundary_mass_matrix(mesh)).tocsc()
    M = mass_matrix(mesh).tocsr()
    lu = spla.splu(A)
    v = np.ones(mesh.num_nodes)
    lam_old = np.inf
    for _ in range(max_iters):
        v = lu.solve(M @ v)
        v /= np.linalg.norm(v)
        lam = float(v @ (A @ v)) / float(v @ (M @ v))
        if abs(lam - lam_old) <= tol * max(1.0, lam):
            break
        lam_old = lam
    return lam, v


def _descend_quotient(spec, u, opts):
    """Preconditioned projected gradient descent at fixed p."""
    mesh = spec.mesh
    precond = spla.splu(
        (stiffness_matrix(mesh) + spec.beta * boundary_mass_matrix(mesh)).tocsc())
    u = _normalized(spec, u.coeffs)
    q = energy(spec, u)  # equals the quotient on normalized fields
    for _ in range(opts.max_iters):
        grad = apply_operator(spec, u) - q * signed_power_load(spec, u)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= opts.tol_residual:
            break
        d = -precond.solve(grad)
        slope = float(np.dot(grad, d))
        t = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = u.coeffs + t * d
            if np.any(trial):
                trial_u = _normalized(spec, trial)
                q_trial = energy(spec, trial_u)
                if q_trial <= q + opts.ls_sufficient * t * slope:
                    u, q = trial_u, q_trial
                    accepted = True
                    break
            t *= opts.ls_shrink
        if not accepted:
            break
    return u, q, gnorm


def _polish_eigenpair(spec, phi, lam, iters=8):
    """Newton on the bordered system A(u) - lam*S(u) = 0, |u|_p^p = 1.

    S(u) is the signed power load; descent leaves a ~sqrt(machine-eps)
    gradient floor, and this quadratic polish removes it.
    """
    mesh = spec.mesh
    p = spec.p
    u = phi.coeffs.copy()
    for _ in range(iters):
        fld = FeField(mesh, u)
        spl = signed_power_load(spec, fld)
        res = apply_operator(spec, fld) - lam * spl
        cons = lp_norm(fld, p) ** p - 1.0
        if max(np.linalg.norm(res), abs(cons)) < 1e-13:
            break
        uq = np.abs(_element_values(mesh, u))
        wq = (p - 1.0) * uq ** (p - 2.0)
        J = jacobian(spec, fld) - lam * weighted_mass_matrix(mesh, wq)
        top = sparse.hstack([J, sparse.csr_matrix(-spl[:, None])])
        bottom = sparse.hstack([sparse.csr_matrix(p * spl[None, :]),
                                sparse.csr_matrix((1, 1))])
        full = sparse.vstack([top, bottom]).tocsc()
        rhs = -np.concatenate([res, [cons]])
        try:
            delta = spla.spsolve(full, rhs)
        except RuntimeError:
            break
        if not np.all(np.isfinite(delta)):
            break
        u = u + delta[:-1]
        lam = lam + delta[-1]
    return FeField(mesh, u), float(lam)


def first_eigenpair(spec, opts=None):
    """Minimizer of the Rayleigh quotient, normalized |phi|_p = 1, phi > 0."""
    opts = opts or EigenOptions()
    p_target = spec.p
    lam, v = _inverse_iteration(RobinOperatorSpec(2.0, spec.beta, spec.mesh))
    if v.mean() < 0:
        v = -v
    phi = _normalized(RobinOperatorSpec(2.0, spec.beta, spec.mesh), v)
    if p_target != 2.0:
        # continuation in p so every descent starts near its minimizer
        steps = int(np.ceil(abs(p_target - 2.0) / opts.p_step))
        p_values = 2.0 + (p_target - 2.0) * (np.arange(1, steps + 1) / steps)
        for p in p_values:
            step_spec = RobinOperatorSpec(float(p), spec.beta, spec.mesh)
            phi, lam, _ = _descend_quotient(step_spec, phi, opts)
    phi, lam = _polish_eigenpair(spec, phi, lam)
    if phi.coeffs.mean() < 0:
        phi = FeField(spec.mesh, -phi.coeffs)
    if phi.coeffs.min() <= 0.0:
        raise RuntimeError("first eigenfunction is not strictly positive")
    phi = _normalized(spec, phi.coeffs)
    resid = apply_operator(spec, phi) - lam * signed_power_load(spec, phi)
    if np.linalg.norm(resid) > opts.tol_residual:
        raise RuntimeError(
            f"eigen solver did not converge: residual {np.linalg.norm(resid):.3e}")
    return EigenPair(float(lam), phi)


# -- 1D shooting ---------------------------------------------------------------

def _shoot(spec, lam, samples=2001):
    """Integrate the eigen-ODE from the left Robin condition.

    Returns the right-end Robin mismatch and the interior sign-change count.
    """
    p, beta = spec.p, spec.beta
    a = float(spec.mesh.nodes[0])
    b = float(spec.mesh.nodes[-1])
    dual = 1.0 / (p - 1.0)

    def spow(s, e):
        return 0.0 if s == 0.0 else np.copysign(np.abs(s) ** e, s)

    def rhs(x, y):
        u, w = y
        return [spow(w, dual), -lam * spow(u, p - 1.0)]

    sol = scipy.integrate.solve_ivp(
        rhs, (a, b), [1.0, beta], method="RK45", rtol=1e-10, atol=1e-12,
        dense_output=True)
    if not sol.success:
        raise RuntimeError(f"shooting integration failed at lam={lam}")
    ub, wb = sol.y[0, -1], sol.y[1, -1]
    mismatch = wb + beta * spow(ub, p - 1.0)
    xs = np.linspace(a, b, samples)
    uvals = sol.sol(xs)[0]
    signs = np.sign(uvals)
    signs = signs[signs != 0]
    nodes = int(np.sum(signs[:-1] * signs[1:] < 0))
    return mismatch, nodes


def shooting_eigenvalues(spec, count=2, lam_max=None):
    """First `count` eigenvalues in 1D as roots of the shooting mismatch."""
    if spec.mesh.dimension != 1:
        raise ValueError("shooting is only available on 1D meshes")
    width = float(spec.mesh.nodes[-1] - spec.mesh.nodes[0])
    # Dirichlet-type gap sets the sweep scale; Robin eigenvalues sit below it
    scale = (np.pi / width) ** spec.p
    lam_max = lam_max or 20.0 * scale * max(1.0, count) ** spec.p
    found = []
    lam = 1e-6
    step = 0.05 * scale
    mism_prev, _ = _shoot(spec, lam)
    while lam < lam_max and len(found) < count:
        lam_next = lam + step
        mism, _ = _shoot(spec, lam_next)
        if mism_prev * mism < 0:
            root = scipy.optimize.brentq(
                lambda L: _shoot(spec, L)[0], lam, lam_next, xtol=1e-12, rtol=1e-14)
            found.append(root)
        lam, mism_prev = lam_next, mism
    if len(found) < count:
        raise RuntimeError(
            f"found only {len(found)} eigenvalues below lam={lam_max}")
    return found


def second_eigenvalue_1d(spec, opts=None):
    """Second Robin eigenvalue on an interval; its eigenfunction has one node."""
    if spec.mesh.dimension != 1:
        raise ValueError("second_eigenvalue_1d requires a 1D mesh")
    lam1, lam2 = shooting_eigenvalues(spec, count=2)
    _, nodes = _shoot(spec, lam2)
    if nodes != 1:
        raise RuntimeError(
            f"second shooting root has {nodes} interior nodes, expected 1")
    return float(lam2)


# -- Picone inequality ----------------------------------------------------------

def picone_check(spec, phi, u, eps):
    """Quadrature value of |grad phi|_p^p - int |grad u|^(p-2) grad u . grad(phi^p/(u+eps)^(p-1)).

    Nonnegative (up to roundoff) for nodally nonnegative phi, u and eps > 0,
    since the pointwise inequality holds at every quadrature point.
    """
    spec.check_field(phi)
    spec.check_field(u)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if phi.coeffs.min() < 0 or u.coeffs.min() < 0:
        raise ValueError("picone_check requires nonnegative nodal values")
    p, mesh = spec.p, spec.mesh
    _, w, basis = mesh.interior_quadrature()
    phi_q = phi.coeffs[mesh.elements] @ basis.T
    u_q = u.coeffs[mesh.elements] @ basis.T + eps
    gphi = element_gradients(phi)                       # (m, dim)
    gu = element_gradients(u)
    gu_norm = np.linalg.norm(gu, axis=1)
    flux = signed_power(gu_norm, p - 2.0)[:, None] * gu  # |grad u|^(p-2) grad u
    dot_fp = np.einsum("ed,ed->e", flux, gphi)
    dot_fu = np.einsum("ed,ed->e", flux, gu)
    ratio = phi_q / u_q
    integrand = (np.linalg.norm(gphi, axis=1)[:, None] ** p
                 - p * ratio ** (p - 1.0) * dot_fp[:, None]
                 + (p - 1.0) * ratio ** p * dot_fu[:, None])
    return float(np.sum(w * integrand))

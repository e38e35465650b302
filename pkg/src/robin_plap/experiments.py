"""Spectral-edge experiments: resonance non-solvability and anti-maximum.

Both study the scalar problem A(u) = mu*|u|^(p-2)u + h with h >= 0,
h not identically 0.  Exactly at mu = lambda_1 the problem has no weak
solution; the experiment detects this at p = 2 as inconsistency of the
exactly singular discrete system (least-squares residual bounded away
from zero), and for other p as uniform failure of a Newton battery.
Just above lambda_1 every solution is strictly negative (anti-maximum),
while below lambda_1 the usual maximum principle gives a positive one.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (FeField, apply_operator, boundary_mass_matrix, jacobian,
                       load, mass_matrix, signed_power_load, stiffness_matrix,
                       weighted_mass_matrix, _element_values)
from .eigen import first_eigenpair
from .nonlinear import newton_root

STALL_RESIDUAL = 1e-3
DIVERGENCE_NORM = 1e6


def _validate_forcing(spec, h):
    """h must be nonnegative and not identically zero on the quadrature set."""
    mesh = spec.mesh
    points, _, _ = mesh.interior_quadrature()
    x = points[:, :, 0] if mesh.dimension == 1 else points
    vals = np.asarray(h(x), dtype=float)
    vals = np.broadcast_to(vals, points.shape[:2])
    if vals.min() < 0:
        raise ValueError("forcing h must be nonnegative")
    if vals.max() <= 0:
        raise ValueError("forcing h must not vanish identically")
    return load(spec, h)


def _spectral_residual_system(spec, mu, b):
    """Residual and Jacobian closures for A(u) - mu|u|^(p-2)u - b = 0."""
    mesh = spec.mesh
    p = spec.p

    def res(z):
        u = FeField(mesh, z)
        return apply_operator(spec, u) - mu * signed_power_load(spec, u) - b

    def jac(z):
        u = FeField(mesh, z)
        uq = np.abs(_element_values(mesh, z))
        wq = (p - 1.0) * uq ** (p - 2.0)
        return jacobian(spec, u) - mu * weighted_mass_matrix(mesh, wq)

    return res, jac


def _newton_battery(spec, mu, b, phi, tol=1e-10, max_iters=60):
    """Deterministic battery of Newton starts for the spectral problem."""
    mesh = spec.mesh
    starts = [("zero", np.zeros(mesh.num_nodes))]
    for c in (1.0, 3.0):
        starts.append((f"phi_-{c:g}", -c * phi.coeffs))
        starts.append((f"phi_+{c:g}", c * phi.coeffs))
    starts.append(("const_-1", -np.ones(mesh.num_nodes)))
    starts.append(("const_+1", np.ones(mesh.num_nodes)))
    res, jac = _spectral_residual_system(spec, mu, b)
    outcomes = []
    for label, z0 in starts:
        z, ok, iters, rnorm = newton_root(res, jac, z0, tol=tol,
                                          max_iters=max_iters,
                                          divergence_norm=DIVERGENCE_NORM)
        diverged = (not np.all(np.isfinite(z))) or np.max(np.abs(z)) > DIVERGENCE_NORM
        outcomes.append({"start": label, "converged": ok,
                         "residual": rnorm, "diverged": bool(diverged),
                         "solution": FeField(mesh, z) if ok else None})
    return outcomes


@dataclass
class ResonanceReport:
    p: float
    eigenvalue: float
    non_solvable: bool
    mode: str
    lstsq_residual: float = None
    battery: list = field(default_factory=list)
    off_resonance_solvable: bool = None
    off_resonance_positive: bool = None


def resonance_experiment(spec, h, off_gap=0.1, tol_inconsistent=1e-6):
    """Probe solvability of A(u) = lambda_1|u|^(p-2)u + h at exact resonance.

    At p = 2 the discrete operator is exactly singular at the discrete
    eigenvalue; the report declares non-solvability when the least-squares
    residual stays above tol_inconsistent.  For p != 2 a battery of Newton
    runs must uniformly diverge or stall.  A control solve below the
    eigenvalue demonstrates off-resonance solvability.
    """
    b = _validate_forcing(spec, h)
    mesh = spec.mesh
    pair = first_eigenpair(spec)
    lam = pair.lam
    if spec.p == 2.0:
        A = (stiffness_matrix(mesh) + spec.beta * boundary_mass_matrix(mesh))
        M = mass_matrix(mesh)
        S = (A - lam * M).toarray()
        x, _, _, _ = np.linalg.lstsq(S, b, rcond=1e-8)
        lstsq_res = float(np.linalg.norm(S @ x - b))
        non_solvable = lstsq_res > tol_inconsistent
        report = ResonanceReport(spec.p, lam, non_solvable, "singular-linear",
                                 lstsq_residual=lstsq_res)
        off = spla.spsolve((A - (lam - off_gap) * M).tocsc(), b)
        off_res = float(np.linalg.norm((A - (lam - off_gap) * M) @ off - b))
        report.off_resonance_solvable = off_res <= 1e-8 * max(1.0, np.linalg.norm(b))
        report.off_resonance_positive = bool(off.min() > 0)
    else:
        battery = _newton_battery(spec, lam, b, pair.phi)
        uniform_failure = all(
            (o["diverged"] or (not o["converged"] and o["residual"] > STALL_RESIDUAL))
            for o in battery)
        report = ResonanceReport(spec.p, lam, uniform_failure, "newton-battery",
                                 battery=battery)
        res, jac = _spectral_residual_system(spec, lam - off_gap, b)
        z, ok, _, _ = newton_root(res, jac, np.zeros(mesh.num_nodes), tol=1e-10)
        report.off_resonance_solvable = ok
        report.off_resonance_positive = bool(ok and z.min() > 0)
    return report


@dataclass
class AntimaxSweepEntry:
    delta: float
    mu: float
    solutions_found: int
    all_negative: bool
    max_nodal_value: float


@dataclass
class AntimaxReport:
    p: float
    eigenvalue: float
    entries: list
    monotone_onset: bool
    threshold: float            # largest delta from which onward all smaller are negative
    below_window_positive: bool
    below_window_mu: float


def antimax_experiment(spec, h, delta_grid=(0.5, 0.1, 0.01, 0.001),
                       below_gap=0.5, tol=1e-10):
    """Sweep mu = lambda_1 + delta/2 over decreasing delta.

    For every delta all found solutions are tested for strict negativity
    at each node; the report records the onset threshold and a control
    solve at mu < lambda_1 where the solution is positive instead.
    """
    deltas = sorted(set(float(d) for d in delta_grid), reverse=True)
    if not deltas or deltas[-1] <= 0:
        raise ValueError("delta grid must be positive")
    b = _validate_forcing(spec, h)
    mesh = spec.mesh
    pair = first_eigenpair(spec)
    lam = pair.lam
    entries = []
    prev = None
    prev_delta = None
    for delta in deltas:
        mu = lam + 0.5 * delta
        if spec.p == 2.0:
            A = (stiffness_matrix(mesh) + spec.beta * boundary_mass_matrix(mesh)
                 - mu * mass_matrix(mesh))
            u = spla.spsolve(A.tocsc(), b)
            solutions = [u]
        else:
            solutions = []
            amp = (float(np.dot(b, pair.phi.coeffs)) / (0.5 * delta)) ** (1.0 / (spec.p - 1.0))
            res, jac = _spectral_residual_system(spec, mu, b)
            seeds = [-amp * pair.phi.coeffs, -0.5 * amp * pair.phi.coeffs,
                     -2.0 * amp * pair.phi.coeffs, np.ones(mesh.num_nodes),
                     np.zeros(mesh.num_nodes)]
            if prev is not None:
                # blow-up law |u| ~ delta^(-1/(p-1)) turns the previous
                # solution into an excellent warm start for the next delta
                factor = (prev_delta / delta) ** (1.0 / (spec.p - 1.0))
                seeds.insert(0, factor * prev)
            for z0 in seeds:
                z, ok, _, _ = newton_root(res, jac, z0, tol=tol, max_iters=80)
                if ok and all(np.max(np.abs(z - s)) > 1e-8 for s in solutions):
                    solutions.append(z)
            if solutions:
                prev = min(solutions, key=lambda s: float(np.max(s)))
                prev_delta = delta
        if solutions:
            max_val = max(float(np.max(s)) for s in solutions)
            entries.append(AntimaxSweepEntry(delta, mu, len(solutions),
                                             max_val < 0.0, max_val))
        else:
            entries.append(AntimaxSweepEntry(delta, mu, 0, False, np.inf))

    # onset: once negative at some delta, negative for all smaller deltas
    seen_negative = False
    monotone = True
    threshold = None
    for e in entries:          # deltas decreasing
        if e.all_negative:
            if threshold is None:
                threshold = e.delta
            seen_negative = True
        elif seen_negative:
            monotone = False
            threshold = None
            seen_negative = False

    mu_below = lam - below_gap
    if spec.p == 2.0:
        A = (stiffness_matrix(mesh) + spec.beta * boundary_mass_matrix(mesh)
             - mu_below * mass_matrix(mesh))
        u = spla.spsolve(A.tocsc(), b)
        below_positive = bool(u.min() > 0)
    else:
        res, jac = _spectral_residual_system(spec, mu_below, b)
        # positive-branch amplitude guess; p < 2 cannot linearize at 0
        amp = (max(float(np.dot(b, pair.phi.coeffs)), 1e-12)
               / below_gap) ** (1.0 / (spec.p - 1.0))
        below_positive = False
        for z0 in (amp * pair.phi.coeffs, np.ones(mesh.num_nodes)):
            z, ok, _, _ = newton_root(res, jac, z0, tol=tol, max_iters=80)
            if ok:
                below_positive = bool(z.min() > 0)
                break
    return AntimaxReport(spec.p, lam, entries, monotone,
                         threshold if threshold is not None else 0.0,
                         below_positive, mu_below)

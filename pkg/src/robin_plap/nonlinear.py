"""Inverting the discrete Robin p-Laplacian.

solve_operator finds the unique u with A(u) = f by damped Newton on the
strictly convex, coercive functional J(u) = E(u)/p - <f, u>, whose
gradient is exactly the residual A(u) - f.  Every accepted step
decreases J; a gradient step is taken whenever regularization error
spoils the Newton direction.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import FeField, energy, jacobian, residual


@dataclass
class SolverOptions:
    tol_residual: float = 1e-10
    max_iters: int = 200
    ls_shrink: float = 0.5
    ls_sufficient: float = 1e-4
    max_backtracks: int = 60
    initial_guess: FeField = None

    def __post_init__(self):
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual_norm: float
    energy_value: float
    message: str = ""
    energy_trace: list = field(default_factory=list)


def _objective(spec, u, f):
    return energy(spec, u) / spec.p - float(np.dot(f, u.coeffs))


def solve_operator(spec, f, opts=None):
    """Solve A(u) = f; returns (FeField, SolveReport).

    Non-convergence is reported, not raised; the best iterate is returned.
    A singular Jacobian (which regularization should preclude) raises.
    """
    opts = opts or SolverOptions()
    f = np.asarray(f, dtype=float)
    if opts.initial_guess is not None:
        spec.check_field(opts.initial_guess)
        u = opts.initial_guess.copy()
    else:
        u = FeField.zeros(spec.mesh)

    r = residual(spec, u, f)
    rnorm = float(np.linalg.norm(r))
    jval = _objective(spec, u, f)
    trace = [jval]
    iters = 0
    message = ""
    while rnorm > opts.tol_residual and iters < opts.max_iters:
        H = jacobian(spec, u)
        try:
            d = spla.spsolve(H.tocsc(), -r)
        except RuntimeError as exc:  # pragma: no cover - defensive
            raise RuntimeError(f"singular Jacobian in Newton step {iters}: {exc}")
        if not np.all(np.isfinite(d)):
            raise RuntimeError(f"singular Jacobian in Newton step {iters}")
        slope = float(np.dot(r, d))
        if slope >= 0.0:
            d = -r
            slope = -rnorm ** 2
        # once the predicted decrease drops below the rounding floor of J,
        # energy comparisons are noise (and would accept micro-steps on
        # accidental equality); switch to residual-norm acceptance there
        floor = 64.0 * np.finfo(float).eps * max(1.0, abs(jval))
        energy_ls = abs(opts.ls_sufficient * slope) >= floor
        t = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = FeField(spec.mesh, u.coeffs + t * d)
            if energy_ls:
                jtrial = _objective(spec, trial, f)
                ok = jtrial <= jval + opts.ls_sufficient * t * slope
            else:
                ok = np.linalg.norm(residual(spec, trial, f)) < rnorm
            if ok:
                u = trial
                jval = jtrial if energy_ls else _objective(spec, trial, f)
                accepted = True
                break
            t *= opts.ls_shrink
        if not accepted:
            message = f"line search stalled at iteration {iters}"
            break
        trace.append(jval)
        r = residual(spec, u, f)
        rnorm = float(np.linalg.norm(r))
        iters += 1
    converged = rnorm <= opts.tol_residual
    if not converged and not message:
        message = f"no convergence in {opts.max_iters} iterations"
    return u, SolveReport(converged, iters, rnorm, jval, message, trace)


def newton_root(residual_fn, jacobian_fn, x0, tol=1e-10, max_iters=60,
                divergence_norm=1e6, ls_shrink=0.5, max_backtracks=40):
    """Damped Newton for a general (non-variational) residual system.

    Backtracks on the residual norm; iterates whose values blow up or go
    non-finite count as divergence.  Returns (x, converged, iters, norm).
    """
    x = np.asarray(x0, dtype=float).copy()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        r = residual_fn(x)
        rnorm = float(np.linalg.norm(r)) if np.all(np.isfinite(r)) else np.inf
        for it in range(max_iters):
            if rnorm <= tol:
                return x, True, it, rnorm
            if not np.isfinite(rnorm) or np.max(np.abs(x)) > divergence_norm:
                return x, False, it, rnorm
            J = jacobian_fn(x)
            try:
                d = spla.spsolve(J.tocsc(), -r)
            except RuntimeError:
                d = None
            if d is None or not np.all(np.isfinite(d)):
                # singular linearization (e.g. on a resonance manifold):
                # retry once with a small diagonal shift before giving up
                import scipy.sparse as _sp
                diag = np.abs(J.diagonal())
                sigma = 1e-8 * max(float(diag.max()) if diag.size else 1.0, 1.0)
                try:
                    d = spla.spsolve((J + sigma * _sp.eye(J.shape[0])).tocsc(), -r)
                except RuntimeError:
                    return x, False, it, rnorm
                if not np.all(np.isfinite(d)):
                    return x, False, it, rnorm
            t = 1.0
            accepted = False
            for _ in range(max_backtracks):
                xn = x + t * d
                rn = residual_fn(xn)
                rn_norm = (float(np.linalg.norm(rn))
                           if np.all(np.isfinite(rn)) else np.inf)
                if rn_norm <= (1.0 - 1e-4 * t) * rnorm:
                    x, r, rnorm = xn, rn, rn_norm
                    accepted = True
                    break
                t *= ls_shrink
            if not accepted:
                return x, False, it, rnorm
        return x, rnorm <= tol, max_iters, rnorm


@dataclass
class ContinuityReport:
    rhs_gaps: list = field(default_factory=list)
    solution_gaps: list = field(default_factory=list)
    monotone_decay: bool = False
    final_gap: float = np.inf


def continuity_check(spec, f_sequence, f_limit=None, opts=None):
    """Solve along a sequence of right-hand sides converging to f_limit.

    Records ||u_n - u|| (Euclidean on coefficients) against ||f_n - f||
    and whether the solution gaps decay monotonically.  If f_limit is
    omitted the last sequence entry is used.
    """
    f_sequence = [np.asarray(f, dtype=float) for f in f_sequence]
    if f_limit is None:
        f_limit = f_sequence[-1]
    f_limit = np.asarray(f_limit, dtype=float)
    u_limit, rep = solve_operator(spec, f_limit, opts)
    if not rep.converged:
        raise RuntimeError("limit problem did not converge")
    report = ContinuityReport()
    warm = SolverOptions(initial_guess=u_limit) if opts is None else opts
    for fn in f_sequence:
        un, rep_n = solve_operator(spec, fn, warm)
        report.rhs_gaps.append(float(np.linalg.norm(fn - f_limit)))
        report.solution_gaps.append(float(np.linalg.norm(un.coeffs - u_limit.coeffs)))
    gaps = report.solution_gaps
    report.monotone_decay = all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))
    report.final_gap = gaps[-1] if gaps else np.inf
    return report

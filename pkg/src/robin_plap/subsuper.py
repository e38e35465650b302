"""Trapping regions and the solution trapped inside them.

A trapping region is an ordered pair of field pairs
(lower1, lower2) <= (upper1, upper2).  For the positive region the
upper bounds are the constants k_{i,+} and the lower bounds are small
multiples of the first eigenfunctions; verify_region checks the
defining weak inequalities against every nonnegative nodal hat and a
battery of probe fields inside the region.  solve_in_region then runs
a Gauss-Seidel Picard iteration on the truncated system, with damping
retries, and confirms a posteriori that the limit is trapped and that
the truncation is inactive there.
"""

from dataclasses import dataclass, field

import numpy as np

from .assembly import FeField, apply_operator, lp_norm, residual
from .nonlinear import SolverOptions, solve_operator
from .reactions import check_zero_growth, reaction_load, truncate


@dataclass
class SystemSpec:
    """Two Robin operators on a shared mesh plus the coupled reactions."""
    op1: object
    op2: object
    reactions: object

    def __post_init__(self):
        if self.op1.mesh is not self.op2.mesh:
            raise ValueError("both operators must share one mesh")
        if (self.op1.p, self.op2.p) != tuple(self.reactions.exponents):
            raise ValueError("reaction exponents disagree with the operators")

    @property
    def mesh(self):
        return self.op1.mesh

    def ops(self):
        return (self.op1, self.op2)


@dataclass
class TrappingRegion:
    lower: tuple   # (FeField, FeField)
    upper: tuple   # (FeField, FeField)

    def __post_init__(self):
        for lo, up in zip(self.lower, self.upper):
            if np.any(lo.coeffs > up.coeffs):
                raise ValueError("trapping region is not ordered")

    def bounds(self):
        return (self.lower, self.upper)

    def contains(self, u1, u2, tol=1e-8):
        return (np.all(u1.coeffs >= self.lower[0].coeffs - tol)
                and np.all(u1.coeffs <= self.upper[0].coeffs + tol)
                and np.all(u2.coeffs >= self.lower[1].coeffs - tol)
                and np.all(u2.coeffs <= self.upper[1].coeffs + tol))


@dataclass
class RegionReport:
    passed: bool
    worst_violation: float
    by_inequality: dict = field(default_factory=dict)
    monotone_detected: tuple = (False, False)
    epsilon: float = None
    halvings: int = None


def _other_variable_monotone(reactions, i, lo, hi, own_samples, tol=1e-10):
    """True when f_i is monotone in the other variable on the sampled box."""
    grid = np.linspace(lo, hi, 17)
    for s_own in own_samples:
        if i == 0:
            vals = reactions.f1(np.zeros(1), np.full_like(grid, s_own), grid)
        else:
            vals = reactions.f2(np.zeros(1), grid, np.full_like(grid, s_own))
        d = np.diff(vals)
        if not (np.all(d >= -tol) or np.all(d <= tol)):
            return False
    return True


def verify_region(sys, region, probe_count=64, rng=None, tol=1e-8):
    """Check the four weak sub/supersolution inequalities on a region.

    Every nodal hat is a nonnegative test function; the free field of the
    opposite component ranges over the region corners plus probe_count
    random interior fields.
    """
    rng = rng or np.random.default_rng(0)
    mesh = sys.mesh
    (lo1, lo2), (up1, up2) = region.bounds()

    def probes(lo, up):
        fields = [lo, up]
        span = up.coeffs - lo.coeffs
        for _ in range(probe_count):
            t = rng.uniform(0.0, 1.0, mesh.num_nodes)
            fields.append(FeField(mesh, lo.coeffs + t * span))
        return fields

    probes2 = probes(lo2, up2)
    probes1 = probes(lo1, up1)
    worst = -np.inf
    by = {}
    cases = (
        ("sub1", sys.op1, lo1, 0, probes2, +1),
        ("sub2", sys.op2, lo2, 1, probes1, +1),
        ("super1", sys.op1, up1, 0, probes2, -1),
        ("super2", sys.op2, up2, 1, probes1, -1),
    )
    for name, op, bound_field, i, vs, sign in cases:
        lhs = apply_operator(op, bound_field)
        v_worst = -np.inf
        for v in vs:
            if i == 0:
                rhs = reaction_load(sys.reactions, 0, bound_field, v)
            else:
                rhs = reaction_load(sys.reactions, 1, v, bound_field)
            gap = sign * (lhs - rhs)          # <= 0 required
            v_worst = max(v_worst, float(gap.max()))
        by[name] = v_worst
        worst = max(worst, v_worst)

    mono = (
        _other_variable_monotone(sys.reactions, 0, lo2.coeffs.min(),
                                 up2.coeffs.max(),
                                 (lo1.coeffs.min(), up1.coeffs.max())),
        _other_variable_monotone(sys.reactions, 1, lo1.coeffs.min(),
                                 up1.coeffs.max(),
                                 (lo2.coeffs.min(), up2.coeffs.max())),
    )
    return RegionReport(worst <= tol, worst, by, mono)


def _eigenfunction_region(sys, eig1, eig2, sign, delta, max_halvings,
                          probe_count, rng, tol):
    """Shared construction: constants at the k-corner, eps*phi at the other."""
    mesh = sys.mesh
    rx = sys.reactions
    phis = (eig1.phi, eig2.phi)
    phi_max = max(np.max(np.abs(p.coeffs)) for p in phis)
    if sign > 0:
        corners = rx.k_plus
    else:
        corners = rx.k_minus
    eps = min(delta / phi_max,
              0.5 * min(abs(c) / np.max(np.abs(p.coeffs))
                        for c, p in zip(corners, phis)))
    last_report = None
    for halving in range(max_halvings):
        scaled = tuple(FeField(mesh, sign * eps * p.coeffs) for p in phis)
        consts = tuple(FeField.constant(mesh, c) for c in corners)
        if sign > 0:
            region = TrappingRegion(lower=scaled, upper=consts)
        else:
            region = TrappingRegion(lower=consts, upper=scaled)
        report = verify_region(sys, region, probe_count, rng, tol)
        report.epsilon = eps
        report.halvings = halving
        if report.passed:
            return region, report
        last_report = report
        eps *= 0.5
    detail = ", ".join(f"{k}: {v:+.3e}" for k, v in last_report.by_inequality.items())
    raise RuntimeError(
        f"no admissible eigenfunction scaling after {max_halvings} halvings "
        f"(worst inequality margins: {detail})")


def construct_positive_region(sys, eig1, eig2, delta=None, max_halvings=50,
                              probe_count=16, rng=None, tol=1e-8):
    """Positive trapping region: lower = eps*phi_i, upper = k_{i,+}.

    delta is the admissible smallness range of the near-zero growth
    condition; when omitted it is extracted from the zero-growth check.
    """
    sys.reactions.require_above_eigenvalues((eig1.lam, eig2.lam))
    if delta is None:
        rep = check_zero_growth(sys.reactions, sys.mesh)
        if not rep.passed:
            raise RuntimeError("zero-growth check fails; no subsolution scaling exists")
        delta = min(rep.extras["delta_pos"])
    return _eigenfunction_region(sys, eig1, eig2, +1, delta, max_halvings,
                                 probe_count, rng or np.random.default_rng(0), tol)


def construct_negative_region(sys, eig1, eig2, delta=None, max_halvings=50,
                              probe_count=16, rng=None, tol=1e-8):
    """Mirror construction: lower = k_{i,-}, upper = -eps*phi_i."""
    sys.reactions.require_above_eigenvalues((eig1.lam, eig2.lam))
    if delta is None:
        rep = check_zero_growth(sys.reactions, sys.mesh)
        if not rep.passed:
            raise RuntimeError("zero-growth check fails; no supersolution scaling exists")
        delta = min(rep.extras["delta_neg"])
    return _eigenfunction_region(sys, eig1, eig2, -1, delta, max_halvings,
                                 probe_count, rng or np.random.default_rng(0), tol)


@dataclass
class CoupledReport:
    converged: bool
    outer_iterations: int
    residual_norm: float
    damping: float
    trapped: bool = False
    trap_violation: float = np.inf
    truncation_inactive: bool = False
    message: str = ""


def coupled_residual_norm(sys, u1, u2):
    """Sum of the two untruncated component residual norms."""
    r1 = residual(sys.op1, u1, reaction_load(sys.reactions, 0, u1, u2))
    r2 = residual(sys.op2, u2, reaction_load(sys.reactions, 1, u1, u2))
    return float(np.linalg.norm(r1)) + float(np.linalg.norm(r2))


def solve_in_region(sys, region, tol=1e-8, max_outer=500,
                    dampings=(1.0, 0.5, 0.25), tol_sign=1e-8):
    """Gauss-Seidel Picard iteration on the truncated system from the lower pair.

    Each half-step solves one scalar operator equation with the other
    component frozen; the reaction sees nodally clamped inputs.  On
    failure the loop restarts with stronger damping.
    """
    bounds = region.bounds()
    inner = SolverOptions(tol_residual=min(1e-11, tol / 10.0))
    best = None
    for omega in dampings:
        u1 = region.lower[0].copy()
        u2 = region.lower[1].copy()
        rnorm = np.inf
        best_seen = np.inf
        strikes = 0
        for k in range(max_outer):
            f1 = reaction_load(sys.reactions, 0, u1, u2, bounds=bounds)
            v1, rep1 = solve_operator(sys.op1, f1,
                                      SolverOptions(tol_residual=inner.tol_residual,
                                                    initial_guess=u1))
            u1_new = FeField(sys.mesh, (1 - omega) * u1.coeffs + omega * v1.coeffs)
            f2 = reaction_load(sys.reactions, 1, u1_new, u2, bounds=bounds)
            v2, rep2 = solve_operator(sys.op2, f2,
                                      SolverOptions(tol_residual=inner.tol_residual,
                                                    initial_guess=u2))
            u2_new = FeField(sys.mesh, (1 - omega) * u2.coeffs + omega * v2.coeffs)
            step = max(np.max(np.abs(u1_new.coeffs - u1.coeffs)),
                       np.max(np.abs(u2_new.coeffs - u2.coeffs)))
            u1, u2 = u1_new, u2_new
            if not (rep1.converged and rep2.converged):
                break
            if step < 0.1 * tol or k % 5 == 4:
                rnorm = coupled_residual_norm(sys, u1, u2)
                if rnorm <= tol:
                    break
                if rnorm > 0.99 * best_seen:   # oscillation or stagnation
                    strikes += 1
                    if strikes >= 6:
                        break
                else:
                    strikes = 0
                best_seen = min(best_seen, rnorm)
        rnorm = coupled_residual_norm(sys, u1, u2)
        report = CoupledReport(rnorm <= tol, k + 1, rnorm, omega)
        if report.converged:
            _finalize_region_solution(sys, region, u1, u2, report, tol_sign)
            return (u1, u2), report
        if best is None or rnorm < best[2].residual_norm:
            best = (u1, u2, report)
        report.message = f"Picard stalled at residual {rnorm:.3e} with damping {omega}"
    u1, u2, report = best
    report.message = (f"no damping in {dampings} converged; "
                      f"best residual {report.residual_norm:.3e}")
    return (u1, u2), report


def _finalize_region_solution(sys, region, u1, u2, report, tol_sign):
    (lo1, lo2), (up1, up2) = region.bounds()
    viol = max(
        float(np.max(lo1.coeffs - u1.coeffs)), float(np.max(u1.coeffs - up1.coeffs)),
        float(np.max(lo2.coeffs - u2.coeffs)), float(np.max(u2.coeffs - up2.coeffs)))
    report.trap_violation = viol
    report.trapped = viol <= tol_sign
    t1 = truncate(u1, lo1, up1)
    t2 = truncate(u2, lo2, up2)
    report.truncation_inactive = (
        np.max(np.abs(t1.coeffs - u1.coeffs)) <= tol_sign
        and np.max(np.abs(t2.coeffs - u2.coeffs)) <= tol_sign)

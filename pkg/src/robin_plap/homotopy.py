"""Homotopy families, continuation, and the search for extra solutions.

Two one-parameter deformations of the coupled system are provided.  At
t = 1 both reproduce the original reactions; at t = 0 the "forced"
family becomes 1 + xi_i (s_i^+)^(p_i-1) (which has no solution when
xi_i sits just above the first eigenvalue, by the anti-maximum
principle), while the "unforced" family becomes xi_i (s_i^+)^(p_i-1)
(whose only solution is trivial when xi_i lies strictly between the
first two eigenvalues).  Continuation walks solutions along t with warm
starts; find_third_solution runs damped Newton on the untruncated
coupled system from a deterministic battery of starts and tags each
converged candidate against the hull spanned by the two constant-sign
solutions.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from .assembly import (FeField, apply_operator, jacobian, lp_norm,
                       weighted_mass_matrix)
from .nonlinear import newton_root

FORCED = "forced"       # reference problem carries the +1 forcing term
UNFORCED = "unforced"   # reference problem is the pure positive-part power

_FD_STEP = 1e-6


def worker_count(n_tasks):
    """Worker cap for start batteries: ROBIN_PLAP_THREADS bounds it."""
    cap = os.environ.get("ROBIN_PLAP_THREADS")
    try:
        cap = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(n_tasks, cap))


def _run_battery(fn, items):
    workers = worker_count(len(items))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class HomotopyFamily:
    kind: str
    sys: object
    xi: tuple
    t: float

    def __post_init__(self):
        if self.kind not in (FORCED, UNFORCED):
            raise ValueError(f"unknown homotopy kind {self.kind!r}")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("homotopy parameter t must lie in [0, 1]")
        if min(self.xi) <= 0:
            raise ValueError("spectral shifts xi must be positive")

    def validate_xi(self, lam, upper):
        """xi_i must lie in (lam_i, upper_i): lam + delta window (forced)
        or the second eigenvalue (unforced)."""
        for i in (0, 1):
            if not lam[i] < self.xi[i] < upper[i]:
                raise ValueError(
                    f"xi[{i}]={self.xi[i]:.6g} outside ({lam[i]:.6g}, {upper[i]:.6g})")


def family_reaction_value(fam, i, x, s1, s2):
    """t*f_i + (1-t)*(forcing + xi_i*(s_i^+)^(p_i-1)), vectorized."""
    own = np.asarray(s1 if i == 0 else s2, dtype=float)
    p = fam.sys.reactions.exponents[i]
    ref = fam.xi[i] * np.maximum(own, 0.0) ** (p - 1.0)
    if fam.kind == FORCED:
        ref = 1.0 + ref
    base = fam.sys.reactions.f(i, x, s1, s2)
    return fam.t * base + (1.0 - fam.t) * ref


@dataclass
class BallSpec:
    """Radius in the product norm |u1|_p1 + |u2|_p2."""
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def contains(self, sys, u1, u2):
        return pair_norm(sys, u1, u2) < self.radius


def pair_norm(sys, u1, u2):
    return lp_norm(u1, sys.op1.p) + lp_norm(u2, sys.op2.p)


# -- coupled Newton on the untruncated system -----------------------------------

def _quadrature_states(sys, z):
    mesh = sys.mesh
    n = mesh.num_nodes
    points, w, basis = mesh.interior_quadrature()
    s1 = z[:n][mesh.elements] @ basis.T
    s2 = z[n:][mesh.elements] @ basis.T
    x = points[:, :, 0] if mesh.dimension == 1 else points
    return x, s1, s2, w, basis


def _coupled_residual(sys, rx_value, z):
    mesh = sys.mesh
    n = mesh.num_nodes
    x, s1, s2, w, basis = _quadrature_states(sys, z)
    u1 = FeField(mesh, z[:n])
    u2 = FeField(mesh, z[n:])
    out = np.empty(2 * n)
    for i, (op, seg) in enumerate(((sys.op1, slice(0, n)), (sys.op2, slice(n, None)))):
        vals = np.broadcast_to(np.asarray(rx_value(i, x, s1, s2), dtype=float), w.shape)
        local = np.einsum("eq,eq,qr->er", w, vals, basis)
        load = np.zeros(n)
        np.add.at(load, mesh.elements, local)
        out[seg] = apply_operator(op, u1 if i == 0 else u2) - load
    return out


def _coupled_jacobian(sys, rx_value, z):
    mesh = sys.mesh
    n = mesh.num_nodes
    x, s1, s2, w, basis = _quadrature_states(sys, z)
    u1 = FeField(mesh, z[:n])
    u2 = FeField(mesh, z[n:])
    blocks = [[None, None], [None, None]]
    h = _FD_STEP
    for i in (0, 1):
        # reaction sensitivities by central differences at quadrature points
        d_own = (np.asarray(rx_value(i, x, s1 + h, s2) if i == 0
                            else rx_value(i, x, s1, s2 + h), dtype=float)
                 - np.asarray(rx_value(i, x, s1 - h, s2) if i == 0
                              else rx_value(i, x, s1, s2 - h), dtype=float)) / (2 * h)
        d_other = (np.asarray(rx_value(i, x, s1, s2 + h) if i == 0
                              else rx_value(i, x, s1 + h, s2), dtype=float)
                   - np.asarray(rx_value(i, x, s1, s2 - h) if i == 0
                                else rx_value(i, x, s1 - h, s2), dtype=float)) / (2 * h)
        d_own = np.broadcast_to(d_own, w.shape)
        d_other = np.broadcast_to(d_other, w.shape)
        op = sys.op1 if i == 0 else sys.op2
        J_op = jacobian(op, u1 if i == 0 else u2)
        blocks[i][i] = J_op - weighted_mass_matrix(mesh, d_own)
        blocks[i][1 - i] = -weighted_mass_matrix(mesh, d_other)
    return sparse.bmat(blocks, format="csc")


def solve_coupled(sys, rx_value, start, tol=1e-10, max_iters=60,
                  divergence_norm=1e6):
    """Damped Newton for the coupled system with reactions rx_value(i, x, s1, s2).

    Returns ((u1, u2), converged, iterations, residual_norm).
    """
    u1_0, u2_0 = start
    z0 = np.concatenate([u1_0.coeffs, u2_0.coeffs])
    z, ok, iters, rnorm = newton_root(
        lambda z: _coupled_residual(sys, rx_value, z),
        lambda z: _coupled_jacobian(sys, rx_value, z),
        z0, tol=tol, max_iters=max_iters, divergence_norm=divergence_norm)
    n = sys.mesh.num_nodes
    if not np.all(np.isfinite(z)):
        z = z0
    return ((FeField(sys.mesh, z[:n]), FeField(sys.mesh, z[n:])), ok, iters, rnorm)


@dataclass
class FamilySolveReport:
    converged: bool
    iterations: int
    final_residual_norm: float


def solve_family_at(fam, start, tol=1e-10, max_iters=60):
    """Solve the deformed system at the family's fixed t from one start."""
    rx = lambda i, x, s1, s2: family_reaction_value(fam, i, x, s1, s2)
    fields, ok, iters, rnorm = solve_coupled(fam.sys, rx, start,
                                             tol=tol, max_iters=max_iters)
    return fields, FamilySolveReport(ok, iters, rnorm)


# -- continuation ----------------------------------------------------------------

@dataclass
class BranchPoint:
    t: float
    u1: FeField
    u2: FeField
    norm: float


@dataclass
class Branch:
    points: list = field(default_factory=list)
    reached_end: bool = False

    @property
    def max_norm(self):
        return max((pt.norm for pt in self.points), default=0.0)


def continuation(kind, sys, xi, t_grid, starts, tol=1e-10, max_bisections=5):
    """Warm-started solves along increasing t; one branch per start.

    A failed step is bisected up to max_bisections times; if the gap
    still cannot be crossed the branch ends there.
    """
    t_grid = list(t_grid)
    branches = []
    for start in starts:
        branch = Branch()
        if not t_grid:
            branches.append(branch)
            continue
        current = start
        t_prev = None
        alive = True
        for t in t_grid:
            if not alive:
                break
            fam = HomotopyFamily(kind, sys, xi, t)
            fields, rep = solve_family_at(fam, current, tol=tol)
            if not rep.converged and t_prev is not None:
                fields, rep = _bisect_step(kind, sys, xi, t_prev, t, current,
                                           tol, max_bisections)
            if not rep.converged:
                alive = False
                break
            current = fields
            branch.points.append(BranchPoint(t, fields[0], fields[1],
                                             pair_norm(sys, fields[0], fields[1])))
            t_prev = t
        branch.reached_end = alive and bool(branch.points) \
            and branch.points[-1].t == t_grid[-1]
        branches.append(branch)
    return branches


def _bisect_step(kind, sys, xi, t_lo, t_hi, start, tol, max_bisections):
    current = start
    t = t_lo
    for _ in range(max_bisections):
        t_mid = 0.5 * (t + t_hi)
        fam = HomotopyFamily(kind, sys, xi, t_mid)
        fields, rep = solve_family_at(fam, current, tol=tol)
        if rep.converged:
            current, t = fields, t_mid
        if t_hi - t < 1e-12:
            break
    fam = HomotopyFamily(kind, sys, xi, t_hi)
    return solve_family_at(fam, current, tol=tol)


# -- multi-start search ------------------------------------------------------------

@dataclass
class Candidate:
    u1: FeField
    u2: FeField
    residual_norm: float
    start_label: str
    norm: float
    inside_hull: bool = None
    hull_violation: float = None


@dataclass
class SearchResult:
    candidates: list
    inner_ball: BallSpec      # hull fits inside; branch norms compared to it
    outer_ball: BallSpec
    starts_tried: int
    starts_converged: int


def _hull_tags(candidate, hull_lower, hull_upper, margin_tol):
    v = max(
        float(np.max(hull_lower[0].coeffs - candidate.u1.coeffs)),
        float(np.max(candidate.u1.coeffs - hull_upper[0].coeffs)),
        float(np.max(hull_lower[1].coeffs - candidate.u2.coeffs)),
        float(np.max(candidate.u2.coeffs - hull_upper[1].coeffs)))
    candidate.hull_violation = v
    candidate.inside_hull = v <= margin_tol


def find_third_solution(sys, pos_region, neg_region, eig1, eig2,
                        pos_solution=None, neg_solution=None, xi=None,
                        tol=1e-10, max_iters=60, scales=(2.0, 5.0, 10.0),
                        dedup_tol=1e-6, hull_tol=1e-8, t_points=21):
    """Multi-start Newton on the untruncated system, hull-tagged.

    The battery: the unforced continuation endpoint from (0, 0), large
    constant pairs at every sign combination, scaled eigenfunction pairs,
    and the two known constant-sign solutions.  Converged results are
    deduplicated by nodal distance and tagged against the hull spanned by
    the constant-sign solutions.
    """
    from .subsuper import solve_in_region

    mesh = sys.mesh
    rx = sys.reactions
    if pos_solution is None:
        pos_solution, rep = solve_in_region(sys, pos_region)
        if not rep.converged:
            raise RuntimeError("positive trapped solve failed")
    if neg_solution is None:
        neg_solution, rep = solve_in_region(sys, neg_region)
        if not rep.converged:
            raise RuntimeError("negative trapped solve failed")
    hull_lower = neg_solution
    hull_upper = pos_solution

    # hull must sit inside the inner ball; radii are reporting devices
    env1 = FeField(mesh, np.maximum(np.abs(hull_lower[0].coeffs),
                                    np.abs(hull_upper[0].coeffs)))
    env2 = FeField(mesh, np.maximum(np.abs(hull_lower[1].coeffs),
                                    np.abs(hull_upper[1].coeffs)))
    r_hat = max(2.0 * pair_norm(sys, env1, env2), 1e-6)  # degenerate hull floor
    inner_ball = BallSpec(r_hat)
    outer_ball = BallSpec(10.0 * r_hat)

    starts = []
    if xi is not None:
        t_grid = np.linspace(0.0, 1.0, t_points)
        zero = (FeField.zeros(mesh), FeField.zeros(mesh))
        branches = continuation(UNFORCED, sys, xi, t_grid, [zero], tol=tol)
        if branches[0].reached_end:
            last = branches[0].points[-1]
            starts.append(("continuation_end", (last.u1, last.u2)))
    sign_combos = ((1, 1), (-1, -1), (1, -1), (-1, 1))
    for c in scales:
        for s1, s2 in sign_combos:
            starts.append((f"const_{c:g}_{s1:+d}{s2:+d}",
                           (FeField.constant(mesh, s1 * c * rx.k_plus[0]),
                            FeField.constant(mesh, s2 * c * rx.k_plus[1]))))
    for c in scales:
        for s1, s2 in sign_combos:
            starts.append((f"eig_{c:g}_{s1:+d}{s2:+d}",
                           (FeField(mesh, s1 * c * eig1.phi.coeffs),
                            FeField(mesh, s2 * c * eig2.phi.coeffs))))
    starts.append(("positive_solution", pos_solution))
    starts.append(("negative_solution", neg_solution))

    rx_value = lambda i, x, s1, s2: rx.f(i, x, s1, s2)

    # a degenerate Jacobian at 0 (p > 2) leaves near-zero iterates fuzzy at
    # the sqrt of the residual tolerance; when 0 genuinely solves the system,
    # snap such iterates onto it so deduplication sees one candidate
    zero_pair = (FeField.zeros(mesh), FeField.zeros(mesh))
    zero_resid = float(np.linalg.norm(_coupled_residual(
        sys, rx_value, np.zeros(2 * mesh.num_nodes))))
    zero_is_solution = zero_resid <= tol
    snap_tol = 100.0 * np.sqrt(tol)

    def attempt(item):
        label, start = item
        fields, ok, iters, rnorm = solve_coupled(sys, rx_value, start,
                                                 tol=tol, max_iters=max_iters)
        return label, fields, ok, rnorm

    outcomes = _run_battery(attempt, starts)
    candidates = []
    converged = 0
    for label, fields, ok, rnorm in outcomes:
        if not ok:
            continue
        converged += 1
        if (zero_is_solution
                and max(np.max(np.abs(fields[0].coeffs)),
                        np.max(np.abs(fields[1].coeffs))) <= snap_tol):
            fields, rnorm = zero_pair, zero_resid
        cand = Candidate(fields[0], fields[1], rnorm, label,
                         pair_norm(sys, fields[0], fields[1]))
        duplicate = False
        for known in candidates:
            dist = max(np.max(np.abs(known.u1.coeffs - cand.u1.coeffs)),
                       np.max(np.abs(known.u2.coeffs - cand.u2.coeffs)))
            if dist < dedup_tol:
                duplicate = True
                break
        if not duplicate:
            _hull_tags(cand, hull_lower, hull_upper, hull_tol)
            candidates.append(cand)
    return SearchResult(candidates, inner_ball, outer_ball,
                        len(starts), converged)

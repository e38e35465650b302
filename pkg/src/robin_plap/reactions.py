"""Reaction pairs (f1, f2), their growth hypotheses, and truncation.

A ReactionSpec bundles two vectorized callables f_i(x, s1, s2) with the
constants that the solvability theory needs: box corners k_{i,-} < 0 <
k_{i,+} where the reactions have the right signs, a near-zero growth
rate eta_i exceeding the first eigenvalue, and an asymptotic growth
rate theta_i (ratio f_i / |s|^(p-2)s tending to theta_i at +inf and to
0 at -inf).

The four checkers sample grids; they verify necessary conditions on the
sampled points, not the true liminf/limits, and their reports say so.

The built-in "bump" reaction is univariate in its own variable:
eta-growth near zero, a smooth dip to a negative value at k_+,
rejoining theta-growth past k_+, with the mirrored negative branch
flattening into a decaying tail.  Bridges are cubic Hermite, so the
whole profile is C^1 away from the origin.  The "coupled_bump" variant
multiplies it by a bounded factor of the other variable, windowed to
vanish both at 0 and at infinity so every check still passes.
"""

from dataclasses import dataclass, field

import numpy as np

from .assembly import FeField, signed_power

SAMPLING_NOTE = ("sampled necessary conditions only; grids cannot distinguish "
                 "liminf/limit behaviour from pointwise values")


@dataclass
class ReactionSpec:
    f1: callable
    f2: callable
    exponents: tuple          # (p1, p2)
    k_plus: tuple             # (k_{1,+}, k_{2,+}), positive
    k_minus: tuple            # (k_{1,-}, k_{2,-}), negative
    eta: tuple
    theta: tuple
    name: str = "custom"

    def __post_init__(self):
        if not (self.k_minus[0] < 0 < self.k_plus[0]
                and self.k_minus[1] < 0 < self.k_plus[1]):
            raise ValueError("need k_minus < 0 < k_plus componentwise")
        if min(self.exponents) <= 1:
            raise ValueError("exponents must exceed 1")

    def f(self, i, x, s1, s2):
        return (self.f1 if i == 0 else self.f2)(x, s1, s2)

    def require_above_eigenvalues(self, lam):
        """eta_i and theta_i must exceed the first eigenvalues lam = (lam1, lam2)."""
        for i in (0, 1):
            if not self.eta[i] > lam[i]:
                raise ValueError(
                    f"eta[{i}]={self.eta[i]} must exceed eigenvalue {lam[i]:.6g}")
            if not self.theta[i] > lam[i]:
                raise ValueError(
                    f"theta[{i}]={self.theta[i]} must exceed eigenvalue {lam[i]:.6g}")


@dataclass
class HypothesisReport:
    name: str
    passed: bool
    worst_violation: float
    worst_point: tuple = ()
    sides: dict = field(default_factory=dict)
    note: str = SAMPLING_NOTE
    extras: dict = field(default_factory=dict)


def _x_samples(mesh, cap=65):
    nodes = mesh.nodes
    if len(nodes) <= cap:
        return nodes
    idx = np.linspace(0, len(nodes) - 1, cap).astype(int)
    return nodes[idx]


def _eval_on_grid(fun, xs, s_own, s_other, own_first):
    """max/min bookkeeping helper: evaluate over xs x s_own x s_other."""
    worst = -np.inf
    worst_pt = ()
    best = np.inf
    best_pt = ()
    for x in xs:
        own, other = np.meshgrid(s_own, s_other, indexing="ij")
        vals = fun(x, own, other) if own_first else fun(x, other, own)
        hi = np.unravel_index(np.argmax(vals), vals.shape)
        lo = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[hi] > worst:
            worst, worst_pt = float(vals[hi]), (x, own[hi], other[hi])
        if vals[lo] < best:
            best, best_pt = float(vals[lo]), (x, own[lo], other[lo])
    return worst, worst_pt, best, best_pt


def check_corner_signs(reactions, mesh, samples=33, tol=1e-9):
    """Sign condition at the box corners k_{i,+/-}.

    f1(x, k1+, s2) and f2(x, s1, k2+) must be <= 0 on the positive box,
    and >= 0 with k_{i,-} on the negative box.
    """
    xs = _x_samples(mesh)
    k1p, k2p = reactions.k_plus
    k1m, k2m = reactions.k_minus
    worst = -np.inf
    worst_pt = ()
    sides = {}
    for label, fun, corner, rng_other, sign in (
            ("pos_f1", reactions.f1, k1p, np.linspace(0, k2p, samples), +1),
            ("pos_f2", reactions.f2, k2p, np.linspace(0, k1p, samples), +1),
            ("neg_f1", reactions.f1, k1m, np.linspace(k2m, 0, samples), -1),
            ("neg_f2", reactions.f2, k2m, np.linspace(k1m, 0, samples), -1)):
        own_first = label.endswith("f1")
        hi, hi_pt, lo, lo_pt = _eval_on_grid(
            fun, xs, np.array([corner]), rng_other, own_first)
        violation = hi if sign > 0 else -lo
        point = hi_pt if sign > 0 else lo_pt
        sides[label] = violation
        if violation > worst:
            worst, worst_pt = violation, point
    return HypothesisReport("corner-signs", worst <= tol, worst, worst_pt, sides)


def _growth_ratio(reactions, i, x, s_own, s_other, p):
    """f_i divided by |s_i|^(p-2) s_i = sign(s_i)|s_i|^(p-1)."""
    if i == 0:
        vals = reactions.f1(x, s_own, s_other)
    else:
        vals = reactions.f2(x, s_other, s_own)
    return vals / signed_power(s_own, p - 1.0)


def check_zero_growth(reactions, mesh, samples=25, tol=1e-6):
    """Near-zero growth: f_i / |s_i|^(p_i-2) s_i >= eta_i as s_i -> 0 (both sides).

    Also records delta_pos/delta_neg: the largest |s_i| (scanned up to the
    box corners) below which the sampled ratio inequality keeps holding;
    sub-supersolution construction uses it as the admissible smallness range.
    """
    xs = _x_samples(mesh)
    worst = -np.inf
    worst_pt = ()
    sides = {}
    delta_pos = []
    delta_neg = []
    for i in (0, 1):
        p = reactions.exponents[i]
        eta = reactions.eta[i]
        kp_other = reactions.k_plus[1 - i]
        km_other = reactions.k_minus[1 - i]
        core = np.logspace(-6, -2, samples)
        for sign, others, dest in ((+1, np.linspace(0, kp_other, 9), delta_pos),
                                   (-1, np.linspace(km_other, 0, 9), delta_neg)):
            label = f"{'pos' if sign > 0 else 'neg'}_f{i + 1}"
            viol = -np.inf
            pt = ()
            for x in xs:
                own, other = np.meshgrid(sign * core, others, indexing="ij")
                ratio = _growth_ratio(reactions, i, x, own, other, p)
                j = np.unravel_index(np.argmin(ratio), ratio.shape)
                v = float(eta - ratio[j])
                if v > viol:
                    viol, pt = v, (x, own[j], other[j])
            sides[label] = viol
            if viol > worst:
                worst, worst_pt = viol, pt
            # extended sweep for the admissible smallness threshold:
            # record the last sample where the ratio inequality still held
            limit = reactions.k_plus[i] if sign > 0 else -reactions.k_minus[i]
            sweep = sign * np.logspace(-6, np.log10(limit), 61)
            good = 1e-6
            for s in sweep:
                own = np.full((1, len(others)), s)
                other = np.broadcast_to(others, own.shape)
                ratio = min(float(np.min(_growth_ratio(reactions, i, x, own, other, p)))
                            for x in xs)
                if ratio < eta - tol:
                    break
                good = abs(s)
            dest.append(good)
    report = HypothesisReport("zero-growth", worst <= tol, worst, worst_pt, sides)
    report.extras["delta_pos"] = tuple(delta_pos)
    report.extras["delta_neg"] = tuple(delta_neg)
    return report


def check_bounded_strip(reactions, mesh, rho, samples=33, other_span=1e3):
    """Boundedness on |s_i| <= rho with the other variable free.

    Returns (report, (mu1, mu2)) with mu_i the sampled sup of |f_i|.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    xs = _x_samples(mesh)
    own = np.linspace(-rho, rho, samples)
    other = np.concatenate([-np.logspace(np.log10(other_span), 0, samples // 2),
                            [0.0], np.logspace(0, np.log10(other_span), samples // 2)])
    mu = []
    for i in (0, 1):
        m = 0.0
        for x in xs:
            o, t = np.meshgrid(own, other, indexing="ij")
            vals = reactions.f(i, x, o, t) if i == 0 else reactions.f(i, x, t, o)
            m = max(m, float(np.max(np.abs(vals))))
        mu.append(m)
    passed = all(np.isfinite(m) for m in mu)
    report = HypothesisReport("strip-bound", passed,
                              0.0 if passed else np.inf,
                              extras={"mu": tuple(mu), "rho": rho})
    return report, tuple(mu)


def check_asymptotic_growth(reactions, mesh, samples=13, tol=1e-3):
    """Asymptotics: ratio -> theta_i at +inf and -> 0 at -inf, in s_i."""
    xs = _x_samples(mesh)
    worst = -np.inf
    worst_pt = ()
    sides = {}
    others = np.array([-1e3, -1.0, 0.0, 1.0, 1e3])
    for i in (0, 1):
        p = reactions.exponents[i]
        theta = reactions.theta[i]
        grid = np.logspace(2, 6, samples)
        # positive side: |ratio - theta| small at the far end and not growing
        viol = -np.inf
        pt = ()
        for x in xs:
            own, other = np.meshgrid(grid, others, indexing="ij")
            diffs = np.abs(_growth_ratio(reactions, i, x, own, other, p) - theta)
            tail = float(np.max(diffs[-1]))
            growing = float(np.max(diffs[-1]) - np.max(diffs[0])) - 1e-12
            v = max(tail - tol, growing)
            if v > viol:
                viol, pt = v, (x, grid[-1])
        sides[f"pos_f{i + 1}"] = viol
        if viol > worst:
            worst, worst_pt = viol, pt
        # negative side: |ratio| small at the far end
        viol = -np.inf
        for x in xs:
            own, other = np.meshgrid(-grid, others, indexing="ij")
            ratios = np.abs(_growth_ratio(reactions, i, x, own, other, p))
            v = float(np.max(ratios[-1])) - tol
            if v > viol:
                viol, pt = v, (x, -grid[-1])
        sides[f"neg_f{i + 1}"] = viol
        if viol > worst:
            worst, worst_pt = viol, pt
    return HypothesisReport("asymptotic-growth", worst <= 0, worst, worst_pt, sides)


def check_all(reactions, mesh, rho=None):
    """Run the four checkers; rho defaults to max k_{i,+}, |k_{i,-}|."""
    if rho is None:
        rho = max(max(reactions.k_plus), max(-k for k in reactions.k_minus))
    strip, mu = check_bounded_strip(reactions, mesh, rho)
    return {
        "corner-signs": check_corner_signs(reactions, mesh),
        "zero-growth": check_zero_growth(reactions, mesh),
        "strip-bound": strip,
        "asymptotic-growth": check_asymptotic_growth(reactions, mesh),
    }


# -- truncation and reaction loads ---------------------------------------------

def truncate(u, lower, upper):
    """Nodal clamp of u into [lower, upper]; idempotent and monotone."""
    if lower.mesh is not u.mesh or upper.mesh is not u.mesh:
        raise ValueError("truncation bounds live on a different mesh")
    if np.any(lower.coeffs > upper.coeffs):
        raise ValueError("lower bound exceeds upper bound at some node")
    return FeField(u.mesh, np.clip(u.coeffs, lower.coeffs, upper.coeffs))


def reaction_load(reactions, i, u1, u2, bounds=None, order=None):
    """Dual vector int f_i(x, T1 u1, T2 u2) psi_j dx.

    bounds, when given, is ((lo1, lo2), (up1, up2)) of FeFields and the
    u's are nodally clamped first, which makes the load invariant under
    pre-truncation of its inputs.
    """
    mesh = u1.mesh
    if u2.mesh is not mesh:
        raise ValueError("fields live on different meshes")
    if bounds is not None:
        (lo1, lo2), (up1, up2) = bounds
        u1 = truncate(u1, lo1, up1)
        u2 = truncate(u2, lo2, up2)
    points, w, basis = mesh.interior_quadrature(order)
    s1 = u1.coeffs[mesh.elements] @ basis.T
    s2 = u2.coeffs[mesh.elements] @ basis.T
    x = points[:, :, 0] if mesh.dimension == 1 else points
    vals = np.asarray(reactions.f(i, x, s1, s2), dtype=float)
    vals = np.broadcast_to(vals, w.shape)
    local = np.einsum("eq,eq,qr->er", w, vals, basis)
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, mesh.elements, local)
    return out


# -- built-in reactions ----------------------------------------------------------

def _hermite(s, x0, x1, v0, v1, d0, d1):
    h = x1 - x0
    t = (s - x0) / h
    t2, t3 = t * t, t * t * t
    return ((2 * t3 - 3 * t2 + 1) * v0 + (t3 - 2 * t2 + t) * h * d0
            + (-2 * t3 + 3 * t2) * v1 + (t3 - t2) * h * d1)


@dataclass
class BumpShape:
    """Knots of one univariate bump component (own-variable profile)."""
    p: float
    eta: float
    theta: float
    k_plus: float
    k_minus: float
    ramp_end: float = None       # eta-growth holds on [0, ramp_end]
    rejoin: float = None         # theta-growth holds from here on
    dip: float = None            # value at k_plus is -dip
    neg_ramp_end: float = None   # eta-growth holds on [neg_ramp_end, 0]
    tail_level: float = None     # value at k_minus, decaying further left

    def __post_init__(self):
        if self.ramp_end is None:
            self.ramp_end = 0.4 * self.k_plus
        if self.rejoin is None:
            self.rejoin = 2.0 * self.k_plus
        if self.dip is None:
            self.dip = 0.2 * self.eta * self.ramp_end ** (self.p - 1.0)
        if self.neg_ramp_end is None:
            self.neg_ramp_end = 0.5 * self.k_minus
        if self.tail_level is None:
            self.tail_level = 0.5 * self.dip
        if not 0 < self.ramp_end < self.k_plus < self.rejoin:
            raise ValueError("need 0 < ramp_end < k_plus < rejoin")
        if not self.k_minus < self.neg_ramp_end < 0:
            raise ValueError("need k_minus < neg_ramp_end < 0")
        if self.dip <= 0 or self.tail_level < 0:
            raise ValueError("dip must be positive, tail_level nonnegative")


def bump_value(shape, s):
    """Evaluate one bump component, vectorized over s."""
    s = np.asarray(s, dtype=float)
    p, eta, theta = shape.p, shape.eta, shape.theta
    a, kp, b = shape.ramp_end, shape.k_plus, shape.rejoin
    m, km, d = shape.neg_ramp_end, shape.k_minus, shape.tail_level
    out = np.empty_like(s)

    sel = s >= b
    out[sel] = theta * s[sel] ** (p - 1.0)
    sel = (s >= kp) & (s < b)
    out[sel] = _hermite(s[sel], kp, b, -shape.dip, theta * b ** (p - 1.0),
                        0.0, theta * (p - 1.0) * b ** (p - 2.0))
    sel = (s >= a) & (s < kp)
    out[sel] = _hermite(s[sel], a, kp, eta * a ** (p - 1.0), -shape.dip,
                        eta * (p - 1.0) * a ** (p - 2.0), 0.0)
    sel = (s >= 0) & (s < a)
    out[sel] = eta * s[sel] ** (p - 1.0)
    sel = (s >= m) & (s < 0)
    out[sel] = eta * signed_power(s[sel], p - 1.0)
    sel = (s >= km) & (s < m)
    out[sel] = _hermite(s[sel], km, m, d, -eta * abs(m) ** (p - 1.0),
                        d, eta * (p - 1.0) * abs(m) ** (p - 2.0))
    sel = s < km
    out[sel] = d * np.exp(s[sel] - km)
    return out


def _coupling_window(s, k):
    """(s/k)^4 exp(-(s/k)^2): vanishes at 0 and at infinity, peaks near |s|=k."""
    t = np.abs(np.asarray(s, dtype=float) / k)
    out = np.zeros_like(t)
    nz = t > 0
    logw = 4.0 * np.log(t[nz]) - t[nz] ** 2
    out[nz] = np.exp(np.maximum(logw, -700.0)) * (logw > -700.0)
    return out


def bump_reactions(exponents, k_plus=(1.0, 1.0), k_minus=(-1.0, -1.0),
                   eta=(3.0, 3.0), theta=(5.0, 5.0), shapes=None, coupling=0.0):
    """Reaction pair with bump components; optionally coupled.

    With coupling = c != 0, component i is multiplied by
    1 + c*tanh(s_j)*window(s_i), which stays within checker tolerances
    because the window vanishes at s_i -> 0 and |s_i| -> inf.
    """
    if shapes is None:
        shapes = tuple(BumpShape(exponents[i], eta[i], theta[i],
                                 k_plus[i], k_minus[i]) for i in (0, 1))

    def make(i):
        shape = shapes[i]

        def f(x, s1, s2):
            own = s1 if i == 0 else s2
            other = s2 if i == 0 else s1
            base = bump_value(shape, own)
            if coupling:
                base = base * (1.0 + coupling * np.tanh(other)
                               * _coupling_window(own, shape.k_plus))
            return np.broadcast_to(base, np.broadcast_shapes(
                np.shape(base), np.shape(other)))
        return f

    return ReactionSpec(make(0), make(1), tuple(exponents), tuple(k_plus),
                        tuple(k_minus), tuple(eta), tuple(theta),
                        name="coupled_bump" if coupling else "bump")


def coupled_bump_reactions(exponents, coupling=0.1, **kwargs):
    return bump_reactions(exponents, coupling=coupling, **kwargs)


# -- expression-based reactions ---------------------------------------------------

_ALLOWED_CALLS = {"exp", "log", "tanh", "abs", "pow", "min", "max"}
_CALL_IMPL = {"exp": np.exp, "log": np.log, "tanh": np.tanh, "abs": np.abs,
              "pow": np.power, "min": np.minimum, "max": np.maximum}
_ALLOWED_NAMES = {"x", "y", "s1", "s2"} | _ALLOWED_CALLS


def parse_reaction_expression(text):
    """Compile an arithmetic expression in x, y, s1, s2 into a callable.

    Operators + - * / ^ and the functions exp, log, tanh, abs, pow(a,b),
    min(a,b), max(a,b).  '^' means power.  Returns f(x, s1, s2) where x
    is the coordinate array (first coordinate in 2D; y is the second).
    """
    import ast

    source = text.replace("^", "**")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse reaction expression {text!r}: {exc}")

    allowed_ops = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
                   ast.USub, ast.UAdd)

    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Load)):
            continue
        if isinstance(node, allowed_ops):
            continue
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (int, float)):
                continue
            raise ValueError(f"non-numeric constant in expression: {node.value!r}")
        if isinstance(node, ast.Name):
            if node.id in _ALLOWED_NAMES:
                continue
            raise ValueError(f"unknown name {node.id!r} in reaction expression")
        if isinstance(node, ast.Call):
            if (isinstance(node.func, ast.Name)
                    and node.func.id in _ALLOWED_CALLS and not node.keywords):
                continue
            raise ValueError("only exp/log/tanh/abs/pow/min/max calls are allowed")
        raise ValueError(f"disallowed syntax in reaction expression: "
                         f"{type(node).__name__}")

    code = compile(tree, "<reaction>", "eval")

    def f(x, s1, s2):
        x = np.asarray(x, dtype=float)
        if x.ndim == np.ndim(s1) + 1:  # 2D points carry a trailing coordinate axis
            xc, yc = x[..., 0], x[..., 1]
        else:
            xc, yc = x, np.zeros_like(x)
        env = dict(_CALL_IMPL)
        env.update({"x": xc, "y": yc, "s1": np.asarray(s1, dtype=float),
                    "s2": np.asarray(s2, dtype=float)})
        return eval(code, {"__builtins__": {}}, env)

    return f


def expression_reactions(exponents, f1_text, f2_text, k_plus, k_minus, eta, theta):
    return ReactionSpec(parse_reaction_expression(f1_text),
                        parse_reaction_expression(f2_text),
                        tuple(exponents), tuple(k_plus), tuple(k_minus),
                        tuple(eta), tuple(theta), name="expression")


REGISTRY = {
    "bump": bump_reactions,
    "coupled_bump": coupled_bump_reactions,
}

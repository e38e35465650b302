import numpy as np
import pytest

from robin_plap.assembly import FeField, RobinOperatorSpec, load
from robin_plap.mesh import build_interval_mesh
from robin_plap.reactions import (BumpShape, HypothesisReport, ReactionSpec,
                                  bump_reactions, bump_value, check_all,
                                  check_asymptotic_growth, check_bounded_strip,
                                  check_corner_signs, check_zero_growth,
                                  coupled_bump_reactions, expression_reactions,
                                  parse_reaction_expression, reaction_load,
                                  truncate)

MESH = build_interval_mesh(0, 1, 16)


def const_reactions(c1=0.0, c2=0.0, **kw):
    kw.setdefault("exponents", (2.0, 2.0))
    kw.setdefault("k_plus", (1.0, 1.0))
    kw.setdefault("k_minus", (-1.0, -1.0))
    kw.setdefault("eta", (3.0, 3.0))
    kw.setdefault("theta", (5.0, 5.0))
    return ReactionSpec(lambda x, s1, s2: np.broadcast_to(c1, np.shape(s1)),
                        lambda x, s1, s2: np.broadcast_to(c2, np.shape(s2)),
                        **kw)


# -- corner signs ---------------------------------------------------------------

def test_corner_signs_zero_reaction_passes():
    rep = check_corner_signs(const_reactions(0.0, 0.0), MESH)
    assert rep.passed
    assert rep.worst_violation <= 1e-9


def test_corner_signs_positive_constant_fails():
    rep = check_corner_signs(const_reactions(1.0, 0.0), MESH)
    assert not rep.passed
    assert abs(rep.worst_violation - 1.0) < 1e-12


def test_corner_signs_bump_dense_grid():
    rx = bump_reactions((2.0, 3.0))
    rep = check_corner_signs(rx, MESH, samples=200)
    assert rep.passed


# -- zero growth -----------------------------------------------------------------

def test_zero_growth_exact_power_passes_with_equality():
    eta = (3.0, 3.0)
    p = (2.0, 3.0)
    rx = ReactionSpec(
        lambda x, s1, s2: eta[0] * np.sign(s1) * np.abs(s1) ** (p[0] - 1),
        lambda x, s1, s2: eta[1] * np.sign(s2) * np.abs(s2) ** (p[1] - 1),
        p, (1.0, 1.0), (-1.0, -1.0), eta, (5.0, 5.0))
    rep = check_zero_growth(rx, MESH)
    assert rep.passed
    assert abs(rep.worst_violation) < 1e-9


def test_zero_growth_higher_order_vanishing_fails():
    # one power higher than the critical growth: the ratio collapses to 0
    p = (2.0, 2.0)
    rx = ReactionSpec(lambda x, s1, s2: np.abs(s1) ** p[0] * np.sign(s1),
                      lambda x, s1, s2: np.abs(s2) ** p[1] * np.sign(s2),
                      p, (1.0, 1.0), (-1.0, -1.0), (3.0, 3.0), (5.0, 5.0))
    rep = check_zero_growth(rx, MESH)
    assert not rep.passed


def test_zero_growth_bump_passes_and_reports_delta():
    rx = bump_reactions((2.0, 3.0))
    rep = check_zero_growth(rx, MESH)
    assert rep.passed
    # eta-growth holds up to the ramp end (0.4 by default)
    for d in rep.extras["delta_pos"] + rep.extras["delta_neg"]:
        assert 0.3 <= d <= 0.41


# -- strip bound -----------------------------------------------------------------

def test_strip_bound_zero_reaction():
    rep, mu = check_bounded_strip(const_reactions(0.0, 0.0), MESH, rho=1.0)
    assert rep.passed
    assert mu == (0.0, 0.0)


def test_strip_bound_sin_product():
    rx = ReactionSpec(lambda x, s1, s2: np.sin(s2) * s1,
                      lambda x, s1, s2: np.broadcast_to(0.0, np.shape(s2)),
                      (2.0, 2.0), (1.0, 1.0), (-1.0, -1.0), (3.0, 3.0), (5.0, 5.0))
    rep, mu = check_bounded_strip(rx, MESH, rho=1.0)
    assert rep.passed
    assert mu[0] <= 1.0 + 1e-12


def test_strip_bound_bump_finite():
    rx = bump_reactions((2.0, 3.0))
    rep, mu = check_bounded_strip(rx, MESH, rho=rx.k_plus[0])
    assert rep.passed
    assert all(np.isfinite(m) and m > 0 for m in mu)


def test_strip_bound_rejects_bad_rho():
    with pytest.raises(ValueError):
        check_bounded_strip(const_reactions(), MESH, rho=0.0)


# -- asymptotic growth -------------------------------------------------------------

def test_asymptotic_exact_positive_part_power():
    theta = (5.0, 5.0)
    p = (2.0, 3.0)
    rx = ReactionSpec(
        lambda x, s1, s2: theta[0] * np.maximum(s1, 0.0) ** (p[0] - 1),
        lambda x, s1, s2: theta[1] * np.maximum(s2, 0.0) ** (p[1] - 1),
        p, (1.0, 1.0), (-1.0, -1.0), (3.0, 3.0), theta)
    rep = check_asymptotic_growth(rx, MESH)
    assert rep.passed


def test_asymptotic_superlinear_fails():
    p = (2.0, 2.0)
    rx = ReactionSpec(lambda x, s1, s2: s1 * np.log1p(np.abs(s1)),
                      lambda x, s1, s2: np.broadcast_to(0.0, np.shape(s2)),
                      p, (1.0, 1.0), (-1.0, -1.0), (3.0, 3.0), (5.0, 5.0))
    rep = check_asymptotic_growth(rx, MESH)
    assert not rep.passed


def test_asymptotic_bump_passes():
    rep = check_asymptotic_growth(bump_reactions((2.0, 3.0)), MESH)
    assert rep.passed


def test_zero_growth_consistency_with_asymptotics():
    # a pure theta*(s+)^(p-1) reaction passes asymptotics always, and its
    # positive-side near-zero ratio clears eta exactly when theta >= eta
    p = (2.0, 2.0)
    for theta, expect in ((5.0, True), (2.0, False)):
        rx = ReactionSpec(
            lambda x, s1, s2, th=theta: th * np.maximum(s1, 0.0) ** (p[0] - 1),
            lambda x, s1, s2, th=theta: th * np.maximum(s2, 0.0) ** (p[1] - 1),
            p, (1.0, 1.0), (-1.0, -1.0), (3.0, 3.0), (theta, theta))
        assert check_asymptotic_growth(rx, MESH).passed
        rep = check_zero_growth(rx, MESH)
        assert (rep.sides["pos_f1"] <= 1e-6) == expect
        assert not rep.passed  # negative side ratio is 0 for this reaction


def test_all_checks_on_builtin_reactions():
    for rx in (bump_reactions((2.0, 3.0)), coupled_bump_reactions((2.0, 3.0))):
        results = check_all(rx, MESH)
        for name, rep in results.items():
            assert rep.passed, (rx.name, name, rep.worst_violation)
            assert isinstance(rep, HypothesisReport)
            assert "sampled" in rep.note


# -- truncation --------------------------------------------------------------------

def test_truncate_identity_inside_bounds():
    u = FeField.interpolate(MESH, lambda x: 0.3 * np.sin(4 * x))
    lo = FeField.constant(MESH, -1.0)
    up = FeField.constant(MESH, 1.0)
    assert np.array_equal(truncate(u, lo, up).coeffs, u.coeffs)


def test_truncate_clamps_to_upper():
    u = FeField.constant(MESH, 1e12)
    lo = FeField.constant(MESH, -1.0)
    up = FeField.constant(MESH, 1.0)
    assert np.array_equal(truncate(u, lo, up).coeffs, up.coeffs)


def test_truncate_matches_scalar_clamp():
    rng = np.random.default_rng(3)
    u = FeField(MESH, rng.uniform(-3, 3, MESH.num_nodes))
    lo = FeField.constant(MESH, -1.0)
    up = FeField.constant(MESH, 1.0)
    out = truncate(u, lo, up)
    expected = np.array([min(max(v, -1.0), 1.0) for v in u.coeffs])
    assert np.array_equal(out.coeffs, expected)


def test_truncate_idempotent_and_monotone():
    rng = np.random.default_rng(4)
    lo = FeField(MESH, rng.uniform(-2, -0.5, MESH.num_nodes))
    up = FeField(MESH, rng.uniform(0.5, 2, MESH.num_nodes))
    u = FeField(MESH, rng.uniform(-3, 3, MESH.num_nodes))
    v = FeField(MESH, u.coeffs + rng.uniform(0, 1, MESH.num_nodes))
    tu = truncate(u, lo, up)
    tv = truncate(v, lo, up)
    assert np.array_equal(truncate(tu, lo, up).coeffs, tu.coeffs)
    assert np.all(tu.coeffs <= tv.coeffs)


def test_truncate_rejects_crossed_bounds():
    lo = FeField.constant(MESH, 1.0)
    up = FeField.constant(MESH, -1.0)
    with pytest.raises(ValueError):
        truncate(FeField.zeros(MESH), lo, up)


# -- reaction loads -----------------------------------------------------------------

def test_reaction_load_constant_is_load_of_constant():
    rx = const_reactions(2.5, -1.0)
    spec = RobinOperatorSpec(2.0, 1.0, MESH)
    u = FeField.zeros(MESH)
    out = reaction_load(rx, 0, u, u)
    expected = load(spec, lambda x: np.full_like(x, 2.5))
    assert np.allclose(out, expected, atol=1e-14)
    out2 = reaction_load(rx, 1, u, u)
    assert np.allclose(out2, -expected / 2.5, atol=1e-14)


def test_reaction_load_truncation_absorbed():
    rx = bump_reactions((2.0, 3.0))
    lo = (FeField.constant(MESH, -0.5), FeField.constant(MESH, -0.5))
    up = (FeField.constant(MESH, 0.5), FeField.constant(MESH, 0.5))
    rng = np.random.default_rng(5)
    u1 = FeField(MESH, rng.uniform(-2, 2, MESH.num_nodes))
    u2 = FeField(MESH, rng.uniform(-2, 2, MESH.num_nodes))
    t1 = truncate(u1, lo[0], up[0])
    t2 = truncate(u2, lo[1], up[1])
    for i in (0, 1):
        a = reaction_load(rx, i, u1, u2, bounds=(lo, up))
        b = reaction_load(rx, i, t1, t2, bounds=(lo, up))
        assert np.array_equal(a, b)


def test_reaction_load_against_refined_quadrature():
    rx = bump_reactions((2.0, 3.0))
    eps_phi = FeField.interpolate(MESH, lambda x: 0.05 * (1 + 0.2 * np.sin(3 * x)))
    for i in (0, 1):
        coarse = reaction_load(rx, i, eps_phi, eps_phi, order=4)
        fine = reaction_load(rx, i, eps_phi, eps_phi, order=10)
        assert np.max(np.abs(coarse - fine)) < 1e-8


def test_reaction_load_bounded_by_strip_bound():
    rx = bump_reactions((2.0, 3.0))
    rep, mu = check_bounded_strip(rx, MESH, rho=5.0)
    spec = RobinOperatorSpec(2.0, 1.0, MESH)
    hat_l1 = load(spec, lambda x: np.ones_like(x))  # psi_j L1 norms
    rng = np.random.default_rng(6)
    for _ in range(10):
        u1 = FeField(MESH, rng.uniform(-5, 5, MESH.num_nodes))
        u2 = FeField(MESH, rng.uniform(-5, 5, MESH.num_nodes))
        for i in (0, 1):
            out = reaction_load(rx, i, u1, u2)
            assert np.all(np.abs(out) <= mu[i] * hat_l1 + 1e-12)


# -- bump profile --------------------------------------------------------------------

def test_bump_is_continuous_at_knots():
    shape = BumpShape(3.0, 3.0, 5.0, 1.0, -1.0)
    for knot in (shape.neg_ramp_end, shape.k_minus, 0.0, shape.ramp_end,
                 shape.k_plus, shape.rejoin):
        left = bump_value(shape, np.array([knot - 1e-10]))[0]
        right = bump_value(shape, np.array([knot + 1e-10]))[0]
        assert abs(left - right) < 1e-7


def test_bump_shape_validation():
    with pytest.raises(ValueError):
        BumpShape(2.0, 3.0, 5.0, 1.0, -1.0, ramp_end=2.0)
    with pytest.raises(ValueError):
        BumpShape(2.0, 3.0, 5.0, 1.0, -1.0, dip=-1.0)


def test_reaction_spec_validation():
    with pytest.raises(ValueError):
        const_reactions(k_plus=(-1.0, 1.0))
    with pytest.raises(ValueError):
        const_reactions(exponents=(1.0, 2.0))


# -- expression reactions --------------------------------------------------------------

def test_expression_basic_arithmetic():
    f = parse_reaction_expression("2*s1 + s2^2 - x")
    out = f(np.array([0.5]), np.array([1.0]), np.array([3.0]))
    assert np.allclose(out, 2.0 + 9.0 - 0.5)


def test_expression_functions():
    f = parse_reaction_expression("max(s1, 0) + tanh(s2) + exp(-abs(s1))")
    out = f(np.array([0.0]), np.array([-2.0]), np.array([0.0]))
    assert np.allclose(out, 0.0 + 0.0 + np.exp(-2.0))


def test_expression_rejects_malicious_and_unknown():
    for bad in ("__import__('os').system('ls')", "s1.real", "lambda: 1",
                "open('x')", "s3 + 1", "'str'"):
        with pytest.raises(ValueError):
            parse_reaction_expression(bad)


def test_expression_reactions_in_loads():
    rx = expression_reactions((2.0, 2.0), "3*s1", "3*s2",
                              (1.0, 1.0), (-1.0, -1.0), (3.0, 3.0), (5.0, 5.0))
    u = FeField.constant(MESH, 0.5)
    out = reaction_load(rx, 0, u, u)
    spec = RobinOperatorSpec(2.0, 1.0, MESH)
    assert np.allclose(out, load(spec, lambda x: np.full_like(x, 1.5)), atol=1e-14)


def test_expression_2d_coordinates():
    f = parse_reaction_expression("x + y + s1")
    pts = np.array([[[0.25, 0.5]]])
    out = f(pts, np.array([[1.0]]), np.array([[0.0]]))
    assert np.allclose(out, 1.75)

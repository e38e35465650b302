import math

import numpy as np
import pytest
import scipy.linalg

from robin_plap.assembly import (FeField, RobinOperatorSpec, apply_operator,
                                 boundary_mass_matrix, mass_matrix,
                                 signed_power_load, stiffness_matrix)
from robin_plap.eigen import (EigenPair, first_eigenpair, picone_check,
                              rayleigh_quotient, second_eigenvalue_1d,
                              shooting_eigenvalues, _shoot)
from robin_plap.mesh import build_interval_mesh, build_rect_mesh

# roots of the transcendental Robin conditions on (0,1) with beta = 1:
# even mode tan(sqrt(l)/2) = 1/sqrt(l), odd mode tan(sqrt(l)/2) = -sqrt(l)
LAMBDA1_EXACT = 1.7070529755509254
LAMBDA2_EXACT = 13.492357146504844


def bisect_root(f, a, b, tol=1e-14):
    fa = f(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        if fa * f(m) <= 0:
            b = m
        else:
            a, fa = m, f(m)
    return 0.5 * (a + b)


def test_frozen_transcendental_roots():
    f1 = lambda lam: math.tan(math.sqrt(lam) / 2) - 1.0 / math.sqrt(lam)
    assert abs(bisect_root(f1, 1e-8, math.pi ** 2 - 1e-8) - LAMBDA1_EXACT) < 1e-12
    f2 = lambda lam: math.tan(math.sqrt(lam) / 2) + math.sqrt(lam)
    assert abs(bisect_root(f2, math.pi ** 2 + 1e-8, 4 * math.pi ** 2 - 1e-8)
               - LAMBDA2_EXACT) < 1e-12


def dense_generalized_eigs(mesh, beta):
    A = (stiffness_matrix(mesh) + beta * boundary_mass_matrix(mesh)).toarray()
    M = mass_matrix(mesh).toarray()
    return scipy.linalg.eigh(A, M, eigvals_only=True)


# -- Rayleigh quotient ---------------------------------------------------------

def test_quotient_scale_invariance():
    rng = np.random.default_rng(0)
    mesh = build_interval_mesh(0, 1, 16)
    for p in (1.5, 2.0, 3.0):
        spec = RobinOperatorSpec(p, 1.0, mesh)
        for _ in range(20):
            u = FeField(mesh, rng.uniform(-1, 1, mesh.num_nodes))
            if not np.any(u.coeffs):
                continue
            q = rayleigh_quotient(spec, u)
            q2 = rayleigh_quotient(spec, FeField(mesh, 2 * u.coeffs))
            assert abs(q - q2) < 1e-12 * max(1.0, q)


def test_quotient_of_constant():
    mesh = build_interval_mesh(0, 1, 8)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    assert abs(rayleigh_quotient(spec, FeField.constant(mesh, 1.0)) - 2.0) < 1e-12


def test_quotient_rejects_zero():
    mesh = build_interval_mesh(0, 1, 8)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    with pytest.raises(ValueError):
        rayleigh_quotient(spec, FeField.zeros(mesh))


# -- first eigenpair -------------------------------------------------------------

def test_first_eigenvalue_against_transcendental_oracle():
    mesh = build_interval_mesh(0, 1, 256)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    pair = first_eigenpair(spec)
    assert abs(pair.lam - LAMBDA1_EXACT) < 1e-3


def test_first_eigenvalue_mesh_convergence_order():
    errors = []
    ns = [32, 64, 128, 256]
    for n in ns:
        spec = RobinOperatorSpec(2.0, 1.0, build_interval_mesh(0, 1, n))
        errors.append(abs(first_eigenpair(spec).lam - LAMBDA1_EXACT))
    slope = np.polyfit(np.log(ns), np.log(errors), 1)[0]
    assert -slope >= 1.8


def test_first_eigenpair_matches_dense_oracle():
    mesh = build_interval_mesh(0, 1, 24)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    pair = first_eigenpair(spec)
    dense = dense_generalized_eigs(mesh, 1.0)
    assert abs(pair.lam - dense[0]) < 1e-10


def test_first_eigenpair_matches_dense_oracle_2d():
    mesh = build_rect_mesh(1, 1, 4, 4)
    spec = RobinOperatorSpec(2.0, 0.7, mesh)
    pair = first_eigenpair(spec)
    dense = dense_generalized_eigs(mesh, 0.7)
    assert abs(pair.lam - dense[0]) < 1e-10


def test_eigenpair_invariants():
    for p, mesh in [(2.0, build_interval_mesh(0, 1, 32)),
                    (3.0, build_interval_mesh(0, 1, 32)),
                    (1.5, build_interval_mesh(0, 1, 32)),
                    (3.0, build_rect_mesh(1, 1, 4, 4))]:
        spec = RobinOperatorSpec(p, 1.0, mesh)
        pair = first_eigenpair(spec)
        from robin_plap.assembly import lp_norm
        assert abs(lp_norm(pair.phi, p) - 1.0) < 1e-10
        assert pair.phi.coeffs.min() > 0.0
        assert pair.phi.coeffs.mean() > 0.0
        # Rayleigh identity and eigen-residual
        assert abs(rayleigh_quotient(spec, pair.phi) - pair.lam) < 1e-9
        res = apply_operator(spec, pair.phi) - pair.lam * signed_power_load(spec, pair.phi)
        assert np.linalg.norm(res) <= 1e-9


def test_minimality_over_random_fields():
    rng = np.random.default_rng(1)
    mesh = build_interval_mesh(0, 1, 24)
    for p in (1.5, 2.0, 3.0):
        spec = RobinOperatorSpec(p, 1.0, mesh)
        lam = first_eigenpair(spec).lam
        for _ in range(200):
            u = FeField(mesh, rng.uniform(-1, 1, mesh.num_nodes))
            if np.any(u.coeffs):
                assert lam <= rayleigh_quotient(spec, u) + 1e-9


# -- second eigenvalue (1D shooting) ---------------------------------------------

def test_second_eigenvalue_p2_matches_oracles():
    mesh = build_interval_mesh(0, 1, 64)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    lam2 = second_eigenvalue_1d(spec)
    # continuum transcendental root
    assert abs(lam2 - LAMBDA2_EXACT) < 1e-8
    # discrete generalized eigenvalue agrees to O(h^2)
    dense = dense_generalized_eigs(mesh, 1.0)
    assert abs(dense[1] - lam2) < 50.0 / 64 ** 2


def test_second_eigenvalue_exceeds_first():
    mesh = build_interval_mesh(0, 1, 8)
    for p in (1.5, 2.0, 3.0):
        for beta in (0.5, 1.0, 2.0):
            spec = RobinOperatorSpec(p, beta, mesh)
            lam1 = shooting_eigenvalues(spec, 1)[0]
            lam2 = second_eigenvalue_1d(spec)
            assert lam2 > lam1


def test_second_eigenfunction_has_one_node():
    mesh = build_interval_mesh(0, 1, 8)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    lam2 = second_eigenvalue_1d(spec)
    _, nodes = _shoot(spec, lam2)
    assert nodes == 1


def test_shooting_first_root_consistent_with_fem():
    mesh = build_interval_mesh(0, 1, 64)
    for p in (1.5, 3.0):
        spec = RobinOperatorSpec(p, 1.0, mesh)
        lam_shoot = shooting_eigenvalues(spec, 1)[0]
        lam_fem = first_eigenpair(spec).lam
        assert abs(lam_shoot - lam_fem) < 30.0 / 64 ** 2


def test_second_eigenvalue_rejects_2d():
    mesh = build_rect_mesh(1, 1, 2, 2)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    with pytest.raises(ValueError):
        second_eigenvalue_1d(spec)


# -- Picone ----------------------------------------------------------------------

def test_picone_equality_at_equal_arguments():
    mesh = build_interval_mesh(0, 1, 32)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    phi = first_eigenpair(spec).phi
    val = picone_check(spec, phi, phi, eps=1e-8)
    assert abs(val) < 1e-6


def test_picone_eigenfunction_vs_constant():
    mesh = build_interval_mesh(0, 1, 32)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    phi = first_eigenpair(spec).phi
    val = picone_check(spec, phi, FeField.constant(mesh, 1.0), eps=1e-6)
    assert val >= -1e-8


def test_picone_random_positive_pairs():
    rng = np.random.default_rng(2)
    mesh = build_interval_mesh(0, 1, 12)
    for p in (2.0, 3.0):
        spec = RobinOperatorSpec(p, 1.0, mesh)
        for _ in range(100):
            phi = FeField(mesh, rng.uniform(0.05, 2.0, mesh.num_nodes))
            u = FeField(mesh, rng.uniform(0.05, 2.0, mesh.num_nodes))
            assert picone_check(spec, phi, u, eps=1e-6) >= -1e-8


def test_picone_rejects_negative_fields():
    mesh = build_interval_mesh(0, 1, 8)
    spec = RobinOperatorSpec(2.0, 1.0, mesh)
    good = FeField.constant(mesh, 1.0)
    bad = FeField.constant(mesh, -1.0)
    with pytest.raises(ValueError):
        picone_check(spec, bad, good, 1e-6)
    with pytest.raises(ValueError):
        picone_check(spec, good, bad, 1e-6)
    with pytest.raises(ValueError):
        picone_check(spec, good, good, 0.0)

"""Tests for jet-space connection data and the universal curvature identities."""

import numpy as np
import pytest

from metriforms.algebra import EndForm, make_weil, skew_part_g, sym_part_g, weil_eval_forms
from metriforms.fields import Grid, random_conformal_metric, random_sym_tensor, random_vector
from metriforms.geometry import curvature_endform, nabla_vector
from metriforms.jets import (
    JetPoint, JetTangent, christoffel_jet, christoffel_jet_differential,
    contact_form, contact_value, contraction_identity_sides,
    equivariant_form_direct, equivariant_form_terms, holonomic_lift,
    horizontal_curvature_form, jet_dim, jet_of_metric, metric_jet_data,
    prolong_vector, random_jet_tangent, scaling_tangent, sym_tensor_jet_data,
    universal_curvature_form, vector_jet_data, vertical_prolongation,
)


def random_jet_point(rng, n, spread=0.4):
    A = rng.standard_normal((n, n)) * spread
    y = np.eye(n) + 0.5 * (A + A.T)
    y = y @ y.T + 0.1 * np.eye(n)  # safely SPD
    y1 = rng.standard_normal((n, n, n)) * spread
    y1 = 0.5 * (y1 + np.swapaxes(y1, 0, 1))
    return JetPoint(rng.uniform(0, 2 * np.pi, n), y, y1)


def flat_jet_point(n):
    return JetPoint(np.zeros(n), np.eye(n), np.zeros((n, n, n)))


# ---------------------------------------------------------------------------
# connection coefficients
# ---------------------------------------------------------------------------

def test_jet_dims():
    assert jet_dim(2) == 11
    assert jet_dim(3) == 27


def test_christoffel_jet_flat():
    assert np.max(np.abs(christoffel_jet(flat_jet_point(2)))) == 0.0


def test_christoffel_jet_point_substitution():
    y1 = np.zeros((2, 2, 2))
    y1[0, 0, 0] = 2.0
    p = JetPoint(np.zeros(2), np.eye(2), y1)
    gam = christoffel_jet(p)
    assert np.isclose(gam[0, 0, 0], 1.0)


def test_christoffel_jet_matches_surface_christoffel():
    from metriforms.geometry import christoffel
    g = random_conformal_metric(np.random.default_rng(0), Grid(2, 32))
    node = (5, 9)
    p = jet_of_metric(g, node)
    assert np.allclose(christoffel_jet(p), christoffel(g)[node], atol=1e-11)


def test_jet_differential_vs_finite_differences():
    rng = np.random.default_rng(1)
    for n in (2, 3):
        p = random_jet_point(rng, n)
        DG = christoffel_jet_differential(p)
        step = 1e-5
        v = random_jet_tangent(rng, n)
        flat = v.flat()
        # analytic directional derivative
        analytic = np.einsum("cijk,c->ijk", DG, flat)
        yp = p.y + step * v.dy
        ym = p.y - step * v.dy
        y1p = p.y1 + step * v.dy1
        y1m = p.y1 - step * v.dy1
        num = (christoffel_jet(JetPoint(p.x, yp, y1p))
               - christoffel_jet(JetPoint(p.x, ym, y1m))) / (2 * step)
        scale = max(1.0, np.max(np.abs(num)))
        assert np.max(np.abs(analytic - num)) < 1e-8 * scale


# ---------------------------------------------------------------------------
# contact form
# ---------------------------------------------------------------------------

def test_contact_form_annihilates_holonomic_lifts():
    g = random_conformal_metric(np.random.default_rng(2), Grid(2, 32))
    node = (3, 17)
    gd = metric_jet_data(g, node)
    p = jet_of_metric(g, node)
    rng = np.random.default_rng(3)
    for _ in range(5):
        u = rng.standard_normal(2)
        v = holonomic_lift(gd, p, u)
        assert np.max(np.abs(contact_value(p, v))) < 1e-10


def test_contact_of_scaling_tangent_is_identity():
    rng = np.random.default_rng(4)
    for n in (2, 3):
        p = random_jet_point(rng, n)
        theta = contact_value(p, scaling_tangent(p))
        assert np.allclose(theta, np.eye(n), atol=1e-12)


def test_contact_of_vertical_tangent_flat_point():
    p = flat_jet_point(2)
    h = np.array([[1.0, 2.0], [2.0, -3.0]])
    v = vertical_prolongation((h, np.zeros((2, 2, 2))), p)
    # at y = identity: theta(v)^j_i = dy_ij = h_ij
    assert np.allclose(contact_value(p, v), h)


def test_contact_of_prolonged_vector_is_minus_twice_symmetric_part():
    # the prolongation of a base vector field satisfies
    # theta(X^(1)) = -2 (nabla X)_S at holonomic points
    g = random_conformal_metric(np.random.default_rng(5), Grid(2, 64), amplitude=0.2)
    X = random_vector(np.random.default_rng(6), g.grid)
    node = (11, 40)
    p = jet_of_metric(g, node)
    Xd = vector_jet_data(X, node)
    v = prolong_vector(Xd, p)
    theta = contact_value(p, v)
    NX = nabla_vector(g, X)[node]
    S = sym_part_g(g.samples[node], NX)
    assert np.max(np.abs(theta + 2.0 * S)) < 1e-9


# ---------------------------------------------------------------------------
# universal curvature
# ---------------------------------------------------------------------------

def test_flat_point_curvature_on_vertical_pairs():
    # at (y = id, y1 = 0) the horizontal part needs a dx leg, so on two
    # vertical tangents the curvature reduces to the contact-square term
    p = flat_jet_point(2)
    rng = np.random.default_rng(7)
    omega = universal_curvature_form(p)
    for _ in range(5):
        v = random_jet_tangent(rng, 2)
        w = random_jet_tangent(rng, 2)
        v = JetTangent(np.zeros(2), v.dy, np.zeros((2, 2, 2)))
        w = JetTangent(np.zeros(2), w.dy, np.zeros((2, 2, 2)))
        got = omega(v.flat(), w.flat())
        tv = contact_value(p, v)
        tw = contact_value(p, w)
        expect = -0.5 * (tv @ tw - tw @ tv)
        assert np.allclose(got, expect, atol=1e-12)


def test_curvature_antisymmetry():
    rng = np.random.default_rng(8)
    p = random_jet_point(rng, 2)
    omega = universal_curvature_form(p)
    v, w = random_jet_tangent(rng, 2), random_jet_tangent(rng, 2)
    assert np.allclose(omega(v.flat(), w.flat()), -omega(w.flat(), v.flat()),
                       atol=1e-12)


def test_curvature_values_are_y_skew():
    rng = np.random.default_rng(9)
    for n in (2, 3):
        p = random_jet_point(rng, n)
        omega = universal_curvature_form(p)
        v, w = random_jet_tangent(rng, n), random_jet_tangent(rng, n)
        B = p.y @ omega(v.flat(), w.flat())
        assert np.max(np.abs(B + B.T)) < 1e-10


def test_universal_pullback_of_curvature():
    # contracting the universal curvature with holonomic lifts reproduces the
    # connection curvature of the underlying metric
    for n, N, seed in ((2, 64, 10), (3, 32, 11)):
        g = random_conformal_metric(np.random.default_rng(seed), Grid(n, N),
                                    amplitude=0.15, max_mode=2)
        omega_g = curvature_endform(g)
        rng = np.random.default_rng(seed + 100)
        for _ in range(3):
            node = tuple(rng.integers(0, N, size=n))
            gd = metric_jet_data(g, node)
            p = jet_of_metric(g, node)
            omega = universal_curvature_form(p)
            u1, u2 = rng.standard_normal((2, n))
            v1 = holonomic_lift(gd, p, u1)
            v2 = holonomic_lift(gd, p, u2)
            got = omega(v1.flat(), v2.flat())
            idx = (slice(None),) + node
            expect = EndForm(2, n, omega_g.coeffs[idx])(u1, u2)
            assert np.max(np.abs(got - expect)) < 1e-8


def test_universal_pullback_of_first_pontryagin():
    # base-degree-4 evaluation: both sides are forced to zero below dim 4,
    # and the identity is certified by the curvature-level pullback above
    p1 = make_weil("p1")
    for n, N, seed in ((2, 32, 12), (3, 32, 13)):
        g = random_conformal_metric(np.random.default_rng(seed), Grid(n, N),
                                    amplitude=0.15, max_mode=2)
        omega_g = curvature_endform(g)
        rng = np.random.default_rng(seed + 200)
        node = tuple(rng.integers(0, N, size=n))
        gd = metric_jet_data(g, node)
        p = jet_of_metric(g, node)
        form = weil_eval_forms(p1, [universal_curvature_form(p)] * 2)
        us = rng.standard_normal((4, n))
        lifts = [holonomic_lift(gd, p, u).flat() for u in us]
        lhs = form(*lifts)
        idx = (slice(None),) + node
        omega_node = EndForm(2, n, omega_g.coeffs[idx])
        if n >= 4:
            rhs = weil_eval_forms(p1, [omega_node] * 2)(*us)
        else:
            rhs = 0.0
        assert abs(lhs - rhs) < 1e-8


def test_jet_pontryagin_nontrivial_on_generic_tangents():
    # at n = 3 the universal 4-form is genuinely nonzero on jet tangents;
    # cross-check the table-based evaluation against the chain route
    from metriforms.algebra import weil_eval_forms_chains
    rng = np.random.default_rng(14)
    p = random_jet_point(rng, 3)
    omega = universal_curvature_form(p)
    p1 = make_weil("p1")
    form = weil_eval_forms(p1, [omega, omega])
    alt = weil_eval_forms_chains(p1, [omega, omega])
    vs = [random_jet_tangent(rng, 3).flat() for _ in range(4)]
    a, b = form(*vs), alt(*vs)
    assert abs(a) > 1e-12  # nontrivial
    assert np.isclose(a, b, rtol=1e-9)


# ---------------------------------------------------------------------------
# the vertical-contraction identity
# ---------------------------------------------------------------------------

def test_contraction_identity_zero_direction():
    g = random_conformal_metric(np.random.default_rng(15), Grid(2, 32))
    h = random_sym_tensor(np.random.default_rng(16), g.grid, amplitude=0.0)
    v = random_jet_tangent(np.random.default_rng(17), 2)
    lhs, rhs = contraction_identity_sides(g, h, (4, 4), v)
    assert np.max(np.abs(lhs)) < 1e-12 and np.max(np.abs(rhs)) < 1e-12


def test_contraction_identity_random_draws():
    for n, N, draws, seed in ((2, 48, 40, 18), (3, 32, 15, 19)):
        g = random_conformal_metric(np.random.default_rng(seed), Grid(n, N),
                                    amplitude=0.2, max_mode=2)
        h = random_sym_tensor(np.random.default_rng(seed + 1), g.grid,
                              amplitude=0.4, max_mode=2)
        rng = np.random.default_rng(seed + 2)
        from metriforms.jets import JetScene
        scene = JetScene(g, h)
        worst = 0.0
        for _ in range(draws):
            node = tuple(rng.integers(0, N, size=n))
            v = random_jet_tangent(rng, n)
            lhs, rhs = scene.contraction_sides(node, v)
            worst = max(worst, np.max(np.abs(lhs - rhs)))
        assert worst < 1e-8


def test_contraction_identity_horizontal_reduces_to_covd():
    # on holonomic (contact-annihilated) tangents the identity's right side
    # is the skew covariant differential alone
    g = random_conformal_metric(np.random.default_rng(20), Grid(2, 64),
                                amplitude=0.2)
    h = random_sym_tensor(np.random.default_rng(21), g.grid, amplitude=0.4)
    node = (7, 31)
    gd = metric_jet_data(g, node)
    p = jet_of_metric(g, node)
    u = np.array([0.3, -1.2])
    v = holonomic_lift(gd, p, u)
    lhs, rhs = contraction_identity_sides(g, h, node, v)
    from metriforms.geometry import covd_endform_sym2
    D = covd_endform_sym2(g, h)
    M = np.stack([D.coeffs[i][node] for i in range(2)])
    expect = skew_part_g(g.samples[node], np.einsum("ijk,i->jk", M, u))
    assert np.max(np.abs(rhs - expect)) < 1e-9
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_off_holonomic_point_rejected():
    g = random_conformal_metric(np.random.default_rng(22), Grid(2, 32))
    node = (1, 2)
    p = jet_of_metric(g, node)
    bad = JetPoint(p.x, p.y + 0.3 * np.eye(2), p.y1)
    from metriforms.jets import is_holonomic
    assert not is_holonomic(bad, metric_jet_data(g, node))


# ---------------------------------------------------------------------------
# equivariant characteristic form
# ---------------------------------------------------------------------------

def test_equivariant_form_t_independence():
    g = random_conformal_metric(np.random.default_rng(23), Grid(2, 32),
                                amplitude=0.2)
    X = random_vector(np.random.default_rng(24), g.grid)
    from metriforms.geometry import curvature_endform_surface
    omega = curvature_endform_surface(g)
    p1 = make_weil("p1")
    node = (9, 14)
    t0 = equivariant_form_terms(p1, g, X, 0.0, node, omega)
    t7 = equivariant_form_terms(p1, g, X, 7.3, node, omega)
    for deg in t0:
        assert np.max(np.abs(t0[deg].coeffs - t7[deg].coeffs)) < 1e-12


def test_equivariant_form_zero_vector_reduces_to_curvature_polynomial():
    g = random_conformal_metric(np.random.default_rng(25), Grid(2, 32),
                                amplitude=0.2)
    zero = random_vector(np.random.default_rng(26), g.grid, amplitude=0.0)
    from metriforms.geometry import curvature_endform_surface
    omega = curvature_endform_surface(g)
    p1 = make_weil("p1")
    node = (2, 20)
    terms = equivariant_form_terms(p1, g, zero, 0.0, node, omega)
    # 0-form and degree-2 pieces vanish; the degree-4 piece cannot exist on
    # a surface and is dropped structurally
    assert np.max(np.abs(terms[0].coeffs)) < 1e-13
    assert np.max(np.abs(terms[2].coeffs)) < 1e-13
    assert 4 not in terms


def test_equivariant_binomial_vs_direct():
    g = random_conformal_metric(np.random.default_rng(27), Grid(2, 32),
                                amplitude=0.2)
    X = random_vector(np.random.default_rng(28), g.grid)
    from metriforms.geometry import curvature_endform_surface
    omega = curvature_endform_surface(g)
    p1 = make_weil("p1")
    node = (21, 3)
    a = equivariant_form_terms(p1, g, X, 1.7, node, omega)
    b = equivariant_form_direct(p1, g, X, 1.7, node, omega)
    for deg in a:
        scale = np.max(np.abs(a[deg].coeffs)) + 1e-30
        assert np.max(np.abs(a[deg].coeffs - b[deg].coeffs)) < 1e-10 * max(1, scale)


def test_equivariant_first_pontryagin_term_by_term():
    # the three graded pieces match the displayed combination
    # -(1/8 pi^2)[tr(O ^ O) - 2 tr(A . O) + tr(A . A)]
    import math
    g = random_conformal_metric(np.random.default_rng(29), Grid(2, 32),
                                amplitude=0.2)
    X = random_vector(np.random.default_rng(30), g.grid)
    from metriforms.geometry import curvature_endform_surface
    omega = curvature_endform_surface(g)
    p1 = make_weil("p1")
    node = (13, 27)
    terms = equivariant_form_terms(p1, g, X, 0.0, node, omega)
    c = -1.0 / (8 * math.pi ** 2)
    idx = (slice(None),) + node
    O = omega.coeffs[idx][0]  # matrix of the only 2-form coefficient
    from metriforms.jets import equivariant_shift
    A = equivariant_shift(g, X, 0.0, node)
    # degree-4 piece vanishes structurally on a surface
    assert 4 not in terms
    # degree-2 piece: -(1/8 pi^2) * (-2 tr(A O))
    expect2 = c * (-2.0) * np.trace(A @ O)
    assert np.isclose(terms[2].coeffs[0], expect2, rtol=1e-10)
    # degree-0 piece: -(1/8 pi^2) tr(A A)
    expect0 = c * np.trace(A @ A)
    assert np.isclose(terms[0].coeffs[0], expect0, rtol=1e-10)

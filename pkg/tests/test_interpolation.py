from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradamage.interpolation import (
    P2_NODES,
    InvertedElementError,
    barycentric_gradients,
    eval_bubble,
    eval_p1,
    eval_p2,
    four_point_rule,
    physical_gradients,
    shape_table,
)


def monomial_exact(a, b, c, d):
    # int over the reference tet of L0^a L1^b L2^c L3^d
    return factorial(a) * factorial(b) * factorial(c) * factorial(d) * factorial(3) / factorial(a + b + c + d + 3) / 6.0


def test_rule_weights_and_points():
    rule = four_point_rule()
    assert rule.points.shape == (4, 4)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)


def test_rule_basic_integrals():
    rule = four_point_rule()
    assert rule.integrate(lambda p: np.ones(len(p))) == pytest.approx(1 / 6, abs=1e-15)
    assert rule.integrate(lambda p: p[:, 0]) == pytest.approx(1 / 24, abs=1e-15)
    assert rule.integrate(lambda p: p[:, 0] * p[:, 1]) == pytest.approx((1 / 6) / 20, abs=1e-15)


@pytest.mark.parametrize(
    "powers",
    [(a, b, c, d) for a in range(3) for b in range(3) for c in range(3) for d in range(3) if a + b + c + d <= 2],
)
def test_rule_degree_two_exact(powers):
    rule = four_point_rule()
    val = rule.integrate(lambda p: np.prod(p ** np.array(powers), axis=1))
    assert val == pytest.approx(monomial_exact(*powers), abs=1e-12)


def test_rule_not_degree_three_exact():
    # documents the rule's order: a cubic monomial is integrated inexactly
    rule = four_point_rule()
    assert abs(rule.integrate(lambda p: p[:, 0] ** 3) - monomial_exact(3, 0, 0, 0)) > 1e-6


def test_bubble_values():
    assert eval_bubble([0.25] * 4)[0] == pytest.approx(1.0)
    assert eval_bubble([1, 0, 0, 0])[0] == 0.0
    assert eval_bubble([0.5, 0.5, 0, 0])[0] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), st.integers(0, 3))
def test_bubble_vanishes_on_faces(xs, zero):
    p = np.array(xs + [0.0])
    if p.sum() == 0:
        p[0] = 1.0
    p /= p.sum()
    p = np.roll(p, zero - 3)
    assert eval_bubble(p)[0] == 0.0


def test_bubble_gradient_matches_fd():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(4))
    _, g = eval_bubble(p)
    h = 1e-7
    for a in range(4):
        dp = np.zeros(4)
        dp[a] = h
        fd = (eval_bubble(p + dp)[0] - eval_bubble(p - dp)[0]) / (2 * h)
        assert g[a] == pytest.approx(fd, rel=1e-6)


def test_p2_kronecker():
    vals, _ = eval_p2(P2_NODES)
    np.testing.assert_allclose(vals, np.eye(10), atol=1e-14)


def test_partition_of_unity_at_gauss_points():
    tab = shape_table()
    np.testing.assert_allclose(tab.p2.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(tab.p1.sum(axis=1), 1.0, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))
def test_p2_gradient_sum_vanishes_in_reference_coords(xs):
    p = np.array(xs) / np.sum(xs)
    _, g = eval_p2(p)
    ref = g[:, 1:] - g[:, :1]
    np.testing.assert_allclose(ref.sum(axis=0), 0.0, atol=1e-12)
    vals, _ = eval_p2(p)
    assert vals.sum() == pytest.approx(1.0, abs=1e-13)


def test_p1_values():
    v, g = eval_p1([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(v, [0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(g, np.eye(4))


REF = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_physical_gradients_identity_map():
    tab = shape_table()
    g, detj = physical_gradients(tab.dp2, REF)
    assert detj == pytest.approx(1.0)
    np.testing.assert_allclose(g, tab.dp2[..., 1:] - tab.dp2[..., :1], atol=1e-14)


def test_physical_gradients_scaling():
    tab = shape_table()
    g1, d1 = physical_gradients(tab.dp2, REF)
    g2, d2 = physical_gradients(tab.dp2, 2 * REF)
    np.testing.assert_allclose(g2, 0.5 * g1, atol=1e-14)
    assert d2 == pytest.approx(8 * d1)


def test_p1_gradient_integral_divergence_oracle():
    rng = np.random.default_rng(3)
    X = REF + 0.2 * rng.uniform(-1, 1, (4, 3))
    tab = shape_table()
    g, detj = physical_gradients(tab.dp1, X)
    vol = detj / 6
    integral = vol * np.einsum("g,gaj->aj", tab.rule.weights, g)
    # int grad L_a = int_{boundary} L_a n dA = sum over faces containing a of (A_f / 3) n_f
    faces = [(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)]
    expect = np.zeros((4, 3))
    for f in faces:
        an = 0.5 * np.cross(X[f[1]] - X[f[0]], X[f[2]] - X[f[0]])
        for a in f:
            expect[a] += an / 3.0
    np.testing.assert_allclose(integral, expect, atol=1e-12)


def test_inverted_element_raises():
    X = REF.copy()
    X[[1, 2]] = X[[2, 1]]
    with pytest.raises(InvertedElementError):
        barycentric_gradients(X)

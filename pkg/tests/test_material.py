import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradamage.material import (
    DamageDomainError,
    InvertedStateError,
    MaterialParams,
    damage_function,
    dissipation,
    neo_hooke,
    point_response,
    yield_value,
)

P = MaterialParams(E=1000.0, nu=0.3, d0=1.0, d1=1.0, c=100.0)


def test_lame_parameters():
    assert P.lam == pytest.approx(1000 * 0.3 / (1.3 * 0.4))
    assert P.mu == pytest.approx(1000 / 2.6)
    q = MaterialParams.from_lame(P.lam, P.mu, d0=1.0)
    assert q.E == pytest.approx(1000.0) and q.nu == pytest.approx(0.3)


@pytest.mark.parametrize(
    "kw", [dict(E=0), dict(nu=0.5), dict(nu=-0.1), dict(d0=-1), dict(d0=0, d1=0), dict(c=-1)]
)
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        MaterialParams(**kw)


def test_reference_state_is_stress_free():
    psi, P0, A0 = neo_hooke(np.eye(3), P)
    assert psi == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(P0, 0.0, atol=1e-12)
    # small-strain limit: A0 = lam d_iJ d_kL + mu (d_ik d_JL + d_iL d_Jk)
    I = np.eye(3)
    C = P.lam * np.einsum("ij,kl->ijkl", I, I) + P.mu * (
        np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I)
    )
    np.testing.assert_allclose(A0, C, atol=1e-10)


def test_inverted_state():
    F = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(InvertedStateError):
        neo_hooke(F, P)


def random_F(seed, n=20):
    rng = np.random.default_rng(seed)
    F = np.eye(3) + 0.3 * rng.uniform(-1, 1, (n, 3, 3))
    return F[np.linalg.det(F) > 0.2]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_stress_and_tangent_fd(seed):
    F = random_F(seed)
    psi, P0, A0 = neo_hooke(F, P)
    h = 1e-6
    for i in range(3):
        for j in range(3):
            dF = np.zeros((3, 3))
            dF[i, j] = h
            pp, Pp, _ = neo_hooke(F + dF, P, tangent=False)
            pm, Pm, _ = neo_hooke(F - dF, P, tangent=False)
            np.testing.assert_allclose(P0[:, i, j], (pp - pm) / (2 * h), rtol=1e-6, atol=1e-6 * np.abs(P0).max())
            np.testing.assert_allclose(
                A0[:, :, :, i, j], (Pp - Pm) / (2 * h), rtol=1e-5, atol=1e-5 * np.abs(A0).max()
            )
    np.testing.assert_allclose(A0, A0.transpose(0, 3, 4, 1, 2), atol=1e-10 * np.abs(A0).max())


def test_energy_nonnegative_and_objective():
    F = random_F(7, 200)
    psi, _, _ = neo_hooke(F, P, tangent=False)
    assert np.all(psi >= -1e-12)
    Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    psi_r, _, _ = neo_hooke(Q @ F, P, tangent=False)
    np.testing.assert_allclose(psi_r, psi, rtol=1e-12, atol=1e-12)


def test_damage_function():
    D, dD, ddD = damage_function(np.array([0.0, 1.0, 30.0]))
    np.testing.assert_allclose(D, [0.0, 1 - np.exp(-1), 1 - np.exp(-30)])
    assert np.all((D >= 0) & (D < 1))
    np.testing.assert_allclose(dD, np.exp(-np.array([0.0, 1.0, 30.0])))
    np.testing.assert_allclose(ddD, -dD)
    with pytest.raises(DamageDomainError):
        damage_function(-0.1)


def test_dissipation():
    phi, dphi, ddphi = dissipation(np.array([0.0, 2.0]), P)
    np.testing.assert_allclose(phi, [0.0, 0.5 * 4 + 2])
    np.testing.assert_allclose(dphi, [1.0, 3.0])
    np.testing.assert_allclose(ddphi, 1.0)
    with pytest.raises(DamageDomainError):
        dissipation(-1.0, P)


def test_point_response_derivatives_fd():
    F = random_F(3, 10)
    a = np.linspace(0.0, 2.0, len(F))
    r = point_response(F, a, P)
    h = 1e-6
    rp = point_response(F, a + h, P, tangent=False)
    rm = point_response(F, a - h, P, tangent=False)
    np.testing.assert_allclose(r.dpsi_da, (rp.psi - rm.psi) / (2 * h), rtol=1e-6)
    np.testing.assert_allclose(r.d2psi_da2, (rp.dpsi_da - rm.dpsi_da) / (2 * h), rtol=1e-6)
    np.testing.assert_allclose(r.d2psi_dFda, (rp.P - rm.P) / (2 * h), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(r.A, r.A.transpose(0, 3, 4, 1, 2), atol=1e-10)
    np.testing.assert_allclose(r.dphi_da, P.d1 * a + P.d0)


def test_yield_value_sign():
    F = np.diag([1.2, 1.0, 1.0])
    assert yield_value(F, 0.0, MaterialParams(d0=0.0, d1=1.0)) > 0
    assert yield_value(F, 0.0, MaterialParams(d0=1e6, d1=1.0)) < 0

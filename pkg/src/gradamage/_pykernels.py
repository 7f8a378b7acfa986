"""Vectorized numpy element kernels (fallback for the compiled ``_ckernels``)."""

import numpy as np

from .material import InvertedStateError, _neo_hooke


def ua_kernel(dNu, Na, dNa, w, ue, ae, a1, a2, c, lam, mu, damage=True, tangent=True):
    """Residual and tangent of the displacement/damage integrand.

    Per Gauss point the integrand is
    ``exp(-alpha) psi0(F) + c/2 |grad alpha|^2 + a2/2 alpha^2 + a1 alpha``
    (``psi0`` alone when ``damage`` is false).

    Parameters
    ----------
    dNu : (ne, g, 10, 3) physical P2 gradients
    Na : (g, na) damage shape values (shared by all elements)
    dNa : (ne, g, na, 3) physical damage shape gradients
    w : (ne, g) integration weights
    ue : (ne, 30) nodal displacements, node-major
    ae : (ne, na) damage coefficients
    a1 : (ne, g) linear local coefficient
    a2, c, lam, mu : float

    Returns
    -------
    R : (ne, 30 + na)
    K : (ne, 30 + na, 30 + na) or None
    alpha_g : (ne, g)
    psi0 : (ne, g)
    """
    ne, ng = w.shape
    na = Na.shape[1] if damage else 0
    u = ue.reshape(ne, 10, 3)
    F = np.eye(3) + np.einsum("eIi,egIJ->egiJ", u, dNu)
    try:
        psi0, P0, A0 = _neo_hooke(F, lam, mu, tangent)
    except InvertedStateError:
        J = np.linalg.det(F)
        bad = int(np.argmin(J.min(axis=1)))
        raise InvertedStateError(f"det F <= 0 in element {bad}") from None

    nd = 30 + na
    R = np.zeros((ne, nd))
    if damage:
        alpha = ae @ Na.T
        galpha = np.einsum("ea,egaj->egj", ae, dNa)
        gd = np.exp(-alpha)
    else:
        alpha = np.zeros((ne, ng))
        gd = np.ones((ne, ng))
    wg = w * gd
    R[:, :30] = np.einsum("eg,egiJ,egIJ->eIi", wg, P0, dNu).reshape(ne, 30)
    if damage:
        s = -gd * psi0 + a2 * alpha + a1
        R[:, 30:] = np.einsum("eg,ga->ea", w * s, Na) + c * np.einsum(
            "eg,egj,egaj->ea", w, galpha, dNa
        )
    if not tangent:
        return R, None, alpha, psi0

    K = np.zeros((ne, nd, nd))
    tmp = np.einsum("egIJ,egiJkL->egIikL", dNu, A0)
    Kuu = np.einsum("eg,egIikL,egKL->eIiKk", wg, tmp, dNu)
    K[:, :30, :30] = Kuu.reshape(ne, 30, 30)
    if damage:
        Kua = -np.einsum("eg,egiJ,egIJ,ga->eIia", wg, P0, dNu, Na).reshape(ne, 30, na)
        K[:, :30, 30:] = Kua
        K[:, 30:, :30] = np.swapaxes(Kua, 1, 2)
        Kaa = np.einsum("eg,ga,gb->eab", w * (gd * psi0 + a2), Na, Na)
        Kaa += c * np.einsum("eg,egaj,egbj->eab", w, dNa, dNa)
        K[:, 30:, 30:] = Kaa
    return R, K, alpha, psi0

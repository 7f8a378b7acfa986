# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels; same contract as ``_pykernels.ua_kernel``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log

from .material import InvertedStateError

cnp.import_array()


def ua_kernel(const double[:, :, :, ::1] dNu, const double[:, ::1] Na, const double[:, :, :, ::1] dNa,
              const double[:, ::1] w, const double[:, ::1] ue, const double[:, ::1] ae,
              const double[:, ::1] a1,
              double a2, double c, double lam, double mu, bint damage=True, bint tangent=True):
    cdef Py_ssize_t ne = w.shape[0], ng = w.shape[1]
    cdef Py_ssize_t na = Na.shape[1] if damage else 0
    cdef Py_ssize_t nd = 30 + na
    R_arr = np.zeros((ne, nd))
    alpha_arr = np.zeros((ne, ng))
    psi_arr = np.zeros((ne, ng))
    cdef double[:, ::1] R = R_arr
    cdef double[:, ::1] alpha_out = alpha_arr
    cdef double[:, ::1] psi_out = psi_arr
    cdef double[:, :, ::1] K
    if tangent:
        K_arr = np.zeros((ne, nd, nd))
        K = K_arr
    else:
        K_arr = None

    cdef double F[3][3]
    cdef double Fi[3][3]
    cdef double b[10][3]
    cdef double q[10][3]
    cdef double G[10][10]
    cdef double galpha[3]
    cdef double J, lnJ, ic, psi0, coef, lamJ2, alpha, gd, wg, wq, s, t, kaa
    cdef Py_ssize_t e, g, I, Kn, i, k, j, a, bb, r0, c0
    cdef Py_ssize_t bad = -1

    for e in range(ne):
        for g in range(ng):
            for i in range(3):
                for j in range(3):
                    F[i][j] = 1.0 if i == j else 0.0
            for I in range(10):
                for i in range(3):
                    t = ue[e, 3 * I + i]
                    for j in range(3):
                        F[i][j] += t * dNu[e, g, I, j]
            J = (F[0][0] * (F[1][1] * F[2][2] - F[1][2] * F[2][1])
                 - F[0][1] * (F[1][0] * F[2][2] - F[1][2] * F[2][0])
                 + F[0][2] * (F[1][0] * F[2][1] - F[1][1] * F[2][0]))
            if J <= 0.0:
                bad = e
                break
            Fi[0][0] = (F[1][1] * F[2][2] - F[1][2] * F[2][1]) / J
            Fi[0][1] = (F[0][2] * F[2][1] - F[0][1] * F[2][2]) / J
            Fi[0][2] = (F[0][1] * F[1][2] - F[0][2] * F[1][1]) / J
            Fi[1][0] = (F[1][2] * F[2][0] - F[1][0] * F[2][2]) / J
            Fi[1][1] = (F[0][0] * F[2][2] - F[0][2] * F[2][0]) / J
            Fi[1][2] = (F[0][2] * F[1][0] - F[0][0] * F[1][2]) / J
            Fi[2][0] = (F[1][0] * F[2][1] - F[1][1] * F[2][0]) / J
            Fi[2][1] = (F[0][1] * F[2][0] - F[0][0] * F[2][1]) / J
            Fi[2][2] = (F[0][0] * F[1][1] - F[0][1] * F[1][0]) / J
            lnJ = log(J)
            ic = 0.0
            for i in range(3):
                for j in range(3):
                    ic += F[i][j] * F[i][j]
            psi0 = 0.5 * mu * (ic - 3.0) + 0.25 * lam * (J * J - 1.0) - (0.5 * lam + mu) * lnJ
            coef = 0.5 * lam * (J * J - 1.0) - mu
            lamJ2 = lam * J * J

            alpha = 0.0
            galpha[0] = 0.0
            galpha[1] = 0.0
            galpha[2] = 0.0
            gd = 1.0
            if damage:
                for a in range(na):
                    alpha += ae[e, a] * Na[g, a]
                    for j in range(3):
                        galpha[j] += ae[e, a] * dNa[e, g, a, j]
                gd = exp(-alpha)
            alpha_out[e, g] = alpha
            psi_out[e, g] = psi0
            wg = w[e, g] * gd

            for I in range(10):
                for i in range(3):
                    b[I][i] = (dNu[e, g, I, 0] * Fi[0][i] + dNu[e, g, I, 1] * Fi[1][i]
                               + dNu[e, g, I, 2] * Fi[2][i])
                    q[I][i] = (F[i][0] * dNu[e, g, I, 0] + F[i][1] * dNu[e, g, I, 1]
                               + F[i][2] * dNu[e, g, I, 2])
                    R[e, 3 * I + i] += wg * (mu * q[I][i] + coef * b[I][i])

            if damage:
                s = -gd * psi0 + a2 * alpha + a1[e, g]
                for a in range(na):
                    t = galpha[0] * dNa[e, g, a, 0] + galpha[1] * dNa[e, g, a, 1] + galpha[2] * dNa[e, g, a, 2]
                    R[e, 30 + a] += w[e, g] * (s * Na[g, a] + c * t)

            if not tangent:
                continue

            for I in range(10):
                for Kn in range(I, 10):
                    t = (dNu[e, g, I, 0] * dNu[e, g, Kn, 0] + dNu[e, g, I, 1] * dNu[e, g, Kn, 1]
                         + dNu[e, g, I, 2] * dNu[e, g, Kn, 2])
                    G[I][Kn] = t
                    G[Kn][I] = t
            for I in range(10):
                for i in range(3):
                    r0 = 3 * I + i
                    for Kn in range(10):
                        for k in range(3):
                            c0 = 3 * Kn + k
                            t = lamJ2 * b[I][i] * b[Kn][k] - coef * b[Kn][i] * b[I][k]
                            if i == k:
                                t += mu * G[I][Kn]
                            K[e, r0, c0] += wg * t
            if damage:
                for I in range(10):
                    for i in range(3):
                        r0 = 3 * I + i
                        t = -wg * (mu * q[I][i] + coef * b[I][i])
                        for a in range(na):
                            K[e, r0, 30 + a] += t * Na[g, a]
                            K[e, 30 + a, r0] += t * Na[g, a]
                kaa = gd * psi0 + a2
                for a in range(na):
                    for bb in range(na):
                        t = (dNa[e, g, a, 0] * dNa[e, g, bb, 0] + dNa[e, g, a, 1] * dNa[e, g, bb, 1]
                             + dNa[e, g, a, 2] * dNa[e, g, bb, 2])
                        K[e, 30 + a, 30 + bb] += w[e, g] * (kaa * Na[g, a] * Na[g, bb] + c * t)
        if bad >= 0:
            break

    if bad >= 0:
        raise InvertedStateError(f"det F <= 0 in element {bad}")
    return R_arr, K_arr, alpha_arr, psi_arr


def condense_gd(const double[:, :, ::1] Ku, const double[:, ::1] Ru, const double[:, ::1] col,
                const double[::1] rlam, const unsigned char[::1] active):
    """Schur complement of the (bubble, multiplier) pair from the 35x35 kernel output.

    ``col`` (ne, 5) is ``int N_alpha dX``; inactive elements use ``d lam = 0``.
    Returns ``(K_ext, R_ext, Kii_inv, K_ie, R_i)`` like ``element_gd.condense``.
    """
    cdef Py_ssize_t ne = Ku.shape[0], e, a, b
    Kc_arr = np.empty((ne, 34, 34))
    Rc_arr = np.empty((ne, 34))
    inv_arr = np.empty((ne, 2, 2))
    Kie_arr = np.zeros((ne, 2, 34))
    Ri_arr = np.empty((ne, 2))
    cdef double[:, :, ::1] Kc = Kc_arr
    cdef double[:, ::1] Rc = Rc_arr
    cdef double[:, :, ::1] inv = inv_arr
    cdef double[:, :, ::1] Kie = Kie_arr
    cdef double[:, ::1] Ri = Ri_arr
    cdef double v0[34]
    cdef double v1[34]
    cdef double x0[34]
    cdef double x1[34]
    cdef double k00, k01, k11, det, scale, i00, i01, i11, r0, r1, s
    cdef Py_ssize_t bad = -1
    for e in range(ne):
        k00 = Ku[e, 34, 34]
        if active[e]:
            k01 = col[e, 4]
            k11 = 0.0
            r1 = rlam[e]
        else:
            k01 = 0.0
            k11 = 1.0
            r1 = 0.0
        r0 = Ru[e, 34]
        det = k00 * k11 - k01 * k01
        scale = max(fabs(k00), max(fabs(k01), fabs(k11)))
        if not (fabs(det) > 1e-13 * scale * scale):
            bad = e
            break
        i00 = k11 / det
        i11 = k00 / det
        i01 = -k01 / det
        for a in range(34):
            v0[a] = Ku[e, a, 34]
            v1[a] = col[e, a - 30] if (active[e] and a >= 30) else 0.0
            x0[a] = v0[a] * i00 + v1[a] * i01
            x1[a] = v0[a] * i01 + v1[a] * i11
            Kie[e, 0, a] = Ku[e, 34, a]
            Kie[e, 1, a] = v1[a]
            Rc[e, a] = Ru[e, a] - (x0[a] * r0 + x1[a] * r1)
        for a in range(34):
            for b in range(a, 34):
                s = 0.5 * ((Ku[e, a, b] - x0[a] * Kie[e, 0, b] - x1[a] * v1[b])
                           + (Ku[e, b, a] - x0[b] * Kie[e, 0, a] - x1[b] * v1[a]))
                Kc[e, a, b] = s
                Kc[e, b, a] = s
        inv[e, 0, 0] = i00
        inv[e, 0, 1] = i01
        inv[e, 1, 0] = i01
        inv[e, 1, 1] = i11
        Ri[e, 0] = r0
        Ri[e, 1] = r1
    return Kc_arr, Rc_arr, inv_arr, Kie_arr, Ri_arr, bad

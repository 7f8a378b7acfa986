"""Mixed P2 (displacement) / P1+bubble (damage) / P0 (multiplier) tetrahedron.

Element unknowns, in this order (36 in total)::

    u      30   P2 nodal displacements, node-major (node I, component i at 3I+i)
    a_v     4   vertex damage values
    a_B     1   bubble amplitude          (internal)
    lam     1   Lagrange multiplier       (internal)

The element Lagrangian evaluated with the four-point rule is

    L_T = sum_g w_g [ exp(-a) psi0(F) + c/2 |grad a|^2 + d1/2 a^2 + d0 a
                      + active * lam * (a - a_bar_g) ]

where ``a_bar_g`` is the Gauss-point history value.  Inactive elements (damage
evolving) carry no constraint term and keep their multiplier frozen.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .interpolation import physical_gradients, shape_table
from .material import MaterialParams, _neo_hooke

__all__ = [
    "N_EXT",
    "N_DOF",
    "ElementGeometry",
    "ElementHistory",
    "CondensedElement",
    "CondensationError",
    "IrreversibilityError",
    "gd_element_system",
    "element_residual_tangent",
    "element_lagrangian",
    "condense",
    "freeze_inactive",
    "recover",
    "update_history",
    "commit_step",
    "GradientDamageFormulation",
]

N_EXT = 34
N_DOF = 36
IB, IL = 34, 35


class CondensationError(np.linalg.LinAlgError):
    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class IrreversibilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class ElementGeometry:
    """Per-element quadrature data shared by all formulations.

    ``dNu`` (ne, g, 10, 3) and ``dNa`` (ne, g, 5, 3) are material gradients of
    the P2 and P1+bubble functions, ``w`` (ne, g) the integration weights
    (volume / 4 for the four-point rule).
    """

    dNu: np.ndarray
    dNa: np.ndarray
    w: np.ndarray
    volume: np.ndarray

    @classmethod
    def from_coords(cls, coords) -> "ElementGeometry":
        tab = shape_table()
        coords = np.asarray(coords, dtype=float).reshape(-1, 4, 3)
        dNu, detj = physical_gradients(tab.dp2, coords)
        dNa, _ = physical_gradients(tab.dalpha, coords)
        vol = detj / 6.0
        w = vol[:, None] * tab.rule.weights[None, :]
        return cls(np.ascontiguousarray(dNu), np.ascontiguousarray(dNa), np.ascontiguousarray(w), vol)

    @classmethod
    def from_mesh(cls, mesh) -> "ElementGeometry":
        return cls.from_coords(mesh.element_coords)

    @property
    def n_elements(self) -> int:
        return self.w.shape[0]

    def take(self, idx) -> "ElementGeometry":
        return ElementGeometry(
            np.ascontiguousarray(self.dNu[idx]),
            np.ascontiguousarray(self.dNa[idx]),
            np.ascontiguousarray(self.w[idx]),
            self.volume[idx],
        )


@dataclass
class ElementHistory:
    """Gauss-point history and per-element constraint state.

    alpha_n : (ne, g) converged damage at the Gauss points (last time step)
    alpha_bar : (ne, g) history value entering the constraint
    active : (ne,) constraint switched on
    lam_frozen : (ne,) multiplier retained while the constraint is off
    """

    alpha_n: np.ndarray
    alpha_bar: np.ndarray
    active: np.ndarray
    lam_frozen: np.ndarray

    @classmethod
    def initial(cls, n_elements: int, n_points: int = 4) -> "ElementHistory":
        return cls(
            np.zeros((n_elements, n_points)),
            np.zeros((n_elements, n_points)),
            np.ones(n_elements, dtype=bool),
            np.zeros(n_elements),
        )

    def copy(self) -> "ElementHistory":
        return ElementHistory(
            self.alpha_n.copy(), self.alpha_bar.copy(), self.active.copy(), self.lam_frozen.copy()
        )


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def _gd_parts(geom, u, a, lam, alpha_bar, active, params: MaterialParams, tangent, kernel):
    """Kernel output for (u, a) plus the multiplier column ``int N_alpha dX`` and row residual."""
    kernel = kernel or kernels.ua_kernel
    tab = shape_table()
    ne = geom.n_elements
    act = np.asarray(active, dtype=bool)
    lam = np.asarray(lam, dtype=float)
    a1 = np.empty((ne, geom.w.shape[1]))
    a1[:] = params.d0 + np.where(act, lam, 0.0)[:, None]
    Na = _c(tab.alpha)
    Ru, Ku, alpha_g, psi0 = kernel(
        geom.dNu, Na, geom.dNa, geom.w, _c(u), _c(a), a1,
        params.d1, params.c, params.lam, params.mu, True, tangent,
    )
    r_lam = np.where(act, np.einsum("eg,eg->e", geom.w, alpha_g - alpha_bar), 0.0)
    col = np.einsum("eg,ga->ea", geom.w, Na) * act[:, None]
    return Ru, Ku, r_lam, col, alpha_g, psi0


def gd_element_system(geom, u, a, lam, alpha_bar, active, params: MaterialParams, tangent=True, kernel=None):
    """Residual and tangent of the element Lagrangian for a batch of elements.

    Parameters
    ----------
    geom : ElementGeometry
    u : (ne, 30) displacements
    a : (ne, 5) vertex damage values and bubble amplitude
    lam : (ne,) multipliers
    alpha_bar : (ne, g) history values
    active : (ne,) bool
    kernel : callable, optional
        Override the backend (used to compare compiled and numpy kernels).

    Returns
    -------
    R : (ne, 36)
    K : (ne, 36, 36) or None
        Exact second derivatives.  Rows/columns of ``lam`` vanish for inactive
        elements; ``K[lam, lam]`` and ``K[u, lam]`` are zero.
    alpha_g : (ne, g) damage at the Gauss points
    psi0 : (ne, g) undamaged energy density
    """
    Ru, Ku, r_lam, col, alpha_g, psi0 = _gd_parts(geom, u, a, lam, alpha_bar, active, params, tangent, kernel)
    ne = geom.n_elements
    R = np.zeros((ne, N_DOF))
    R[:, :35] = Ru
    R[:, IL] = r_lam
    if not tangent:
        return R, None, alpha_g, psi0
    K = np.zeros((ne, N_DOF, N_DOF))
    K[:, :35, :35] = Ku
    K[:, 30:35, IL] = col
    K[:, IL, 30:35] = col
    return R, K, alpha_g, psi0


def element_residual_tangent(coords, dofs, history: ElementHistory, params: MaterialParams, element: int = 0):
    """Single-element convenience wrapper around :func:`gd_element_system`.

    ``dofs`` is the 36-vector ``(u, a_v, a_B, lam)``; ``history`` may hold
    several elements, ``element`` picks the row.
    """
    geom = ElementGeometry.from_coords(coords)
    d = np.asarray(dofs, dtype=float).reshape(1, N_DOF)
    R, K, _, _ = gd_element_system(
        geom, d[:, :30], d[:, 30:35], d[:, IL],
        history.alpha_bar[element : element + 1], history.active[element : element + 1], params,
    )
    return R[0], K[0]


def element_lagrangian(geom, u, a, lam, alpha_bar, active, params: MaterialParams):
    """Element Lagrangian values (ne,), evaluated directly from the energy densities."""
    tab = shape_table()
    ne = geom.n_elements
    F = np.eye(3) + np.einsum("eIi,egIJ->egiJ", np.reshape(u, (ne, 10, 3)), geom.dNu)
    psi0, _, _ = _neo_hooke(F, params.lam, params.mu, tangent=False)
    alpha = np.asarray(a) @ tab.alpha.T
    grad = np.einsum("ea,egaj->egj", a, geom.dNa)
    dens = (
        np.exp(-alpha) * psi0
        + 0.5 * params.c * np.sum(grad * grad, axis=-1)
        + 0.5 * params.d1 * alpha**2
        + params.d0 * alpha
        + np.where(active, lam, 0.0)[:, None] * (alpha - alpha_bar)
    )
    return np.sum(geom.w * dens, axis=1)


class CondensedElement(NamedTuple):
    """Schur complement on the internal pair (a_B, lam).

    For inactive elements the multiplier equation is replaced by ``d lam = 0``
    so the same 2x2 algebra applies.
    """

    K_ext: np.ndarray  # (ne, 34, 34)
    R_ext: np.ndarray  # (ne, 34)
    Kii_inv: np.ndarray  # (ne, 2, 2)
    K_ie: np.ndarray  # (ne, 2, 34)
    R_i: np.ndarray  # (ne, 2)


def freeze_inactive(R, K, active):
    """Replace the multiplier row/column of inactive elements by ``d lam = 0``."""
    R = R.copy()
    K = K.copy()
    off = ~np.asarray(active, dtype=bool)
    K[off, IL, :] = 0.0
    K[off, :, IL] = 0.0
    K[off, IL, IL] = 1.0
    R[off, IL] = 0.0
    return R, K


def condense(R, K, active) -> CondensedElement:
    R, K = freeze_inactive(np.atleast_2d(R), K.reshape(-1, N_DOF, N_DOF), active)
    Kee = K[:, :N_EXT, :N_EXT]
    Kei = K[:, :N_EXT, N_EXT:]
    Kie = K[:, N_EXT:, :N_EXT]
    Kii = K[:, N_EXT:, N_EXT:]
    det = Kii[:, 0, 0] * Kii[:, 1, 1] - Kii[:, 0, 1] * Kii[:, 1, 0]
    scale = np.abs(Kii).max(axis=(1, 2))
    bad = np.flatnonzero(~(np.abs(det) > 1e-13 * scale**2))
    if bad.size:
        raise CondensationError(
            f"singular internal block in element {bad[0]} (check c > 0 or d1 > 0)", element=int(bad[0])
        )
    inv = np.empty_like(Kii)
    inv[:, 0, 0] = Kii[:, 1, 1]
    inv[:, 1, 1] = Kii[:, 0, 0]
    inv[:, 0, 1] = -Kii[:, 0, 1]
    inv[:, 1, 0] = -Kii[:, 1, 0]
    inv /= det[:, None, None]
    X = Kei @ inv
    Kc = Kee - X @ Kie
    Kc = 0.5 * (Kc + np.swapaxes(Kc, 1, 2))
    Rc = R[:, :N_EXT] - np.einsum("eab,eb->ea", X, R[:, N_EXT:])
    return CondensedElement(Kc, Rc, inv, Kie, R[:, N_EXT:].copy())


def recover(cond: CondensedElement, d_ext) -> np.ndarray:
    """Internal increments (ne, 2) = (d a_B, d lam) from external increments (ne, 34)."""
    rhs = cond.R_i + np.einsum("eij,ej->ei", cond.K_ie, d_ext)
    return -np.einsum("eij,ej->ei", cond.Kii_inv, rhs)


def update_history(history: ElementHistory, alpha_g, lam, iteration: int) -> np.ndarray:
    """Active-set update after a global solve; returns the mask of switched elements.

    By default the constraint is switched on with ``a_bar = a_n``.  Elements
    with a positive multiplier are switched off (``a_bar`` follows the current
    damage) except at ``iteration == 1``, where every constraint is forced on
    so that unloading can be detected.
    """
    lam = np.asarray(lam)
    off = (lam > 0.0) & (iteration != 1)
    active = ~off
    changed = active != history.active
    newly_off = history.active & off
    history.lam_frozen[newly_off] = lam[newly_off]
    history.alpha_bar[:] = np.where(active[:, None], history.alpha_n, alpha_g)
    history.active[:] = active
    return changed


def commit_step(history: ElementHistory, alpha_g, lam, tol: float = 1e-8, strict: bool = False) -> float:
    """Accept a converged step: ``a_n <- a_g`` and ``lam_frozen <- lam``.

    Returns the largest Gauss-point decrease ``max(a_n - a_g)`` (zero when
    damage did not heal anywhere).  With ``strict`` a decrease beyond ``tol``
    raises :class:`IrreversibilityError`.
    """
    drop = float(np.max(history.alpha_n - alpha_g, initial=0.0))
    if strict and drop > tol:
        raise IrreversibilityError(f"Gauss-point damage decreased by {drop:.3e}")
    history.alpha_n[:] = alpha_g
    history.lam_frozen[:] = lam
    history.alpha_bar[:] = alpha_g
    return drop


class GradientDamageFormulation:
    """Lagrange-multiplier mixed element bound to a mesh, with its internal state.

    Used by :class:`gradamage.solver.Solver`; the global system only sees the
    34 external element unknowns unless ``condensed`` is false.
    """

    name = "lagrange-mixed"
    n_alpha = 4
    n_internal = 2

    def __init__(self, mesh, params: MaterialParams, strict_irreversibility: bool = False):
        self.params = params
        self.geom = ElementGeometry.from_mesh(mesh)
        ne = self.geom.n_elements
        self.alpha_B = np.zeros(ne)
        self.lam = np.zeros(ne)
        self.history = ElementHistory.initial(ne)
        self.strict = strict_irreversibility
        self._cond: Optional[CondensedElement] = None
        self._Na = _c(shape_table().alpha)
        self.last_drop = 0.0

    # -- state
    def internal(self) -> np.ndarray:
        return np.stack([self.alpha_B, self.lam], axis=1)

    def set_internal(self, values):
        self.alpha_B[:] = values[:, 0]
        self.lam[:] = values[:, 1]

    def save(self):
        return (self.alpha_B.copy(), self.lam.copy(), self.history.copy())

    def restore(self, saved):
        a, l, h = saved
        self.alpha_B[:] = a
        self.lam[:] = l
        self.history = h.copy()

    def alpha_coeffs(self, a_v):
        return np.hstack([a_v, self.alpha_B[:, None]])

    def gauss_alpha(self, a_v):
        return self.alpha_coeffs(a_v) @ self._Na.T

    # -- assembly
    def full_system(self, u, a_v, tangent=True):
        return gd_element_system(
            self.geom, u, self.alpha_coeffs(a_v), self.lam, self.history.alpha_bar,
            self.history.active, self.params, tangent,
        )

    def system(self, u, a_v, condensed=True):
        if condensed and kernels.condense_gd is not None:
            # compiled path: condense straight from the 35x35 kernel output
            act = self.history.active
            Ru, Ku, r_lam, col, _, _ = _gd_parts(
                self.geom, u, self.alpha_coeffs(a_v), self.lam, self.history.alpha_bar, act, self.params, True, None
            )
            *parts, bad = kernels.condense_gd(Ku, Ru, col, r_lam, act.view(np.uint8))
            if bad >= 0:
                raise CondensationError(
                    f"singular internal block in element {bad} (check c > 0 or d1 > 0)", element=int(bad)
                )
            self._cond = CondensedElement(*parts)
            return self._cond.K_ext, self._cond.R_ext
        R, K, _, _ = self.full_system(u, a_v)
        if condensed:
            self._cond = condense(R, K, self.history.active)
            return self._cond.K_ext, self._cond.R_ext
        return freeze_inactive(R, K, self.history.active)[::-1]

    def residual(self, u, a_v):
        R, _, _, _ = self.full_system(u, a_v, tangent=False)
        return R[:, :N_EXT]

    def recover(self, d_ext):
        d_int = recover(self._cond, d_ext)
        self.alpha_B += d_int[:, 0]
        self.lam += d_int[:, 1]
        return d_int

    def after_solve(self, a_v, iteration) -> bool:
        changed = update_history(self.history, self.gauss_alpha(a_v), self.lam, iteration)
        return bool(changed.any())

    def commit(self, a_v):
        self.last_drop = commit_step(self.history, self.gauss_alpha(a_v), self.lam, strict=self.strict)

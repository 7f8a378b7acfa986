"""Penalty (micromorphic) reference formulation: P2 displacement, P1 nodal damage.

Per Gauss point the potential reads

    psi(F, a) + d1/2 a_bar^2 + d0 a_bar + c/2 |grad a|^2 + p/2 (a - a_bar)^2

with ``a`` the nodal P1 damage field and ``a_bar`` a local history value that
is updated in closed form (the local yield function is linear in ``a_bar``).
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .element_gd import ElementGeometry
from .interpolation import shape_table
from .material import MaterialParams

__all__ = [
    "PenaltyParams",
    "PenaltyHistory",
    "penalty_element",
    "penalty_yield",
    "penalty_history_update",
    "rate_of_change_metric",
    "PenaltyFormulation",
]


@dataclass(frozen=True)
class PenaltyParams:
    base: MaterialParams
    p: float = 10.0
    #: include the derivative of the closed-form history update in the tangent;
    #: False linearizes with alpha_bar frozen (a fixed-point iteration)
    consistent: bool = True

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"penalty parameter must be positive, got {self.p}")


@dataclass
class PenaltyHistory:
    """Gauss-point local damage ``alpha_bar`` and its last converged value."""

    alpha_bar: np.ndarray
    alpha_bar_n: np.ndarray

    @classmethod
    def initial(cls, n_elements: int, n_points: int = 4) -> "PenaltyHistory":
        return cls(np.zeros((n_elements, n_points)), np.zeros((n_elements, n_points)))

    def copy(self) -> "PenaltyHistory":
        return PenaltyHistory(self.alpha_bar.copy(), self.alpha_bar_n.copy())


def penalty_element(geom: ElementGeometry, u, a, alpha_bar, params: PenaltyParams, tangent=True, kernel=None,
                    loading=None):
    """Residual (ne, 34) and tangent (ne, 34, 34) with ``alpha_bar`` held fixed.

    ``loading`` (ne, g) marks Gauss points on the yield branch. When given and
    ``params.consistent`` is set, the tangent carries the algorithmic derivative
    ``d alpha_bar / d alpha = p / (p + d1)`` there. Also returns the Gauss-point
    damage ``alpha_g`` (ne, g).
    """
    kernel = kernel or kernels.ua_kernel
    tab = shape_table()
    b = params.base
    a1 = np.ascontiguousarray(-params.p * np.asarray(alpha_bar, dtype=float))
    R, K, alpha_g, _ = kernel(
        geom.dNu, np.ascontiguousarray(tab.p1), np.ascontiguousarray(geom.dNa[:, :, :4]), geom.w,
        np.ascontiguousarray(u, dtype=float), np.ascontiguousarray(a, dtype=float), a1,
        params.p, b.c, b.lam, b.mu, True, tangent,
    )
    if tangent and loading is not None and params.consistent:
        soft = params.p**2 / (params.p + b.d1) * np.asarray(loading, dtype=float)
        K[:, 30:, 30:] -= np.einsum("eg,ga,gb->eab", geom.w * soft, tab.p1, tab.p1)
    return R, K, alpha_g


def penalty_energy(geom: ElementGeometry, u, a, alpha_bar, params: PenaltyParams):
    """Element potential values (ne,), used by the derivative oracles."""
    from .material import _neo_hooke

    tab = shape_table()
    b = params.base
    ne = geom.n_elements
    F = np.eye(3) + np.einsum("eIi,egIJ->egiJ", np.reshape(u, (ne, 10, 3)), geom.dNu)
    psi0, _, _ = _neo_hooke(F, b.lam, b.mu, tangent=False)
    alpha = np.asarray(a) @ tab.p1.T
    grad = np.einsum("ea,egaj->egj", a, geom.dNa[:, :, :4])
    dens = (
        np.exp(-alpha) * psi0
        + 0.5 * b.d1 * alpha_bar**2
        + b.d0 * alpha_bar
        + 0.5 * b.c * np.sum(grad * grad, axis=-1)
        + 0.5 * params.p * (alpha - alpha_bar) ** 2
    )
    return np.sum(geom.w * dens, axis=1)


def penalty_yield(alpha, alpha_bar, params: PenaltyParams):
    """Local yield function ``p (a - a_bar) - (d1 a_bar + d0)``."""
    b = params.base
    return params.p * (alpha - alpha_bar) - (b.d1 * alpha_bar + b.d0)


def penalty_history_update(alpha, alpha_bar_n, params: PenaltyParams):
    """Closed-form return: root of the yield function when the trial value is positive."""
    b = params.base
    alpha = np.asarray(alpha, dtype=float)
    trial = penalty_yield(alpha, alpha_bar_n, params)
    root = (params.p * alpha - b.d0) / (params.p + b.d1)
    return np.where(trial > 0.0, root, alpha_bar_n)


def rate_of_change_metric(norms: Sequence[float]) -> np.ndarray:
    """Consecutive differences of a sequence of refinement norms."""
    norms = np.asarray(norms, dtype=float)
    if norms.ndim != 1 or norms.size < 2:
        raise ValueError("need at least two refinement results")
    return np.diff(norms)


def is_converging(diffs) -> bool:
    """True when the magnitudes of the differences decrease monotonically."""
    d = np.abs(np.asarray(diffs, dtype=float))
    return bool(np.all(d[1:] < d[:-1])) if d.size > 1 else True


class PenaltyFormulation:
    """Penalty element bound to a mesh; plugs into :class:`gradamage.solver.Solver`."""

    name = "penalty"
    n_alpha = 4
    n_internal = 0

    def __init__(self, mesh, params: PenaltyParams):
        self.params = params
        self.geom = ElementGeometry.from_mesh(mesh)
        self.history = PenaltyHistory.initial(self.geom.n_elements)
        self._Na = np.ascontiguousarray(shape_table().p1)
        self.loading = np.zeros(self.history.alpha_bar.shape, dtype=bool)
        self.last_drop = 0.0

    def internal(self):
        return np.zeros((self.geom.n_elements, 0))

    def set_internal(self, values):
        pass

    def save(self):
        return self.history.copy(), self.loading.copy()

    def restore(self, saved):
        self.history = saved[0].copy()
        self.loading = saved[1].copy()

    def gauss_alpha(self, a_v):
        return np.asarray(a_v) @ self._Na.T

    def system(self, u, a_v, condensed=True):
        R, K, _ = penalty_element(self.geom, u, a_v, self.history.alpha_bar, self.params, loading=self.loading)
        return K, R

    def residual(self, u, a_v):
        return penalty_element(self.geom, u, a_v, self.history.alpha_bar, self.params, tangent=False)[0]

    def recover(self, d_ext):
        return None

    def after_solve(self, a_v, iteration) -> bool:
        alpha = self.gauss_alpha(a_v)
        loading = penalty_yield(alpha, self.history.alpha_bar_n, self.params) > 0.0
        self.history.alpha_bar[:] = penalty_history_update(alpha, self.history.alpha_bar_n, self.params)
        # the loading set plays the role of the active set; value drift of alpha_bar
        # within a fixed set shrinks with the global increment
        changed = bool(np.any(loading != self.loading))
        self.loading = loading
        return changed

    def commit(self, a_v):
        self.last_drop = float(np.max(self.history.alpha_bar_n - self.history.alpha_bar, initial=0.0))
        self.history.alpha_bar_n[:] = self.history.alpha_bar

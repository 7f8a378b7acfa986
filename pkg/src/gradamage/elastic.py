"""Pure-elastic P2 Neo-Hooke formulation (no damage unknowns).

Serves as the reference for the elastic-limit regression and the timing
comparison.
"""

import numpy as np

from . import kernels
from .element_gd import ElementGeometry
from .interpolation import shape_table
from .material import MaterialParams

__all__ = ["ElasticFormulation"]


class ElasticFormulation:
    name = "elastic"
    n_alpha = 0
    n_internal = 0

    def __init__(self, mesh, params: MaterialParams):
        self.params = params
        self.geom = ElementGeometry.from_mesh(mesh)
        ne = self.geom.n_elements
        self._Na = np.ascontiguousarray(shape_table().p1)
        self._a = np.zeros((ne, 0))
        self._a1 = np.zeros((ne, self.geom.w.shape[1]))
        self.last_drop = 0.0

    def _call(self, u, tangent):
        p = self.params
        R, K, _, _ = kernels.ua_kernel(
            self.geom.dNu, self._Na, self.geom.dNa, self.geom.w,
            np.ascontiguousarray(u, dtype=float), self._a, self._a1,
            0.0, 0.0, p.lam, p.mu, False, tangent,
        )
        return R, K

    def internal(self):
        return np.zeros((self.geom.n_elements, 0))

    def set_internal(self, values):
        pass

    def save(self):
        return None

    def restore(self, saved):
        pass

    def gauss_alpha(self, a_v):
        return np.zeros_like(self.geom.w)

    def system(self, u, a_v, condensed=True):
        R, K = self._call(u, True)
        return K, R

    def residual(self, u, a_v):
        return self._call(u, False)[0]

    def recover(self, d_ext):
        return None

    def after_solve(self, a_v, iteration) -> bool:
        return False

    def commit(self, a_v):
        pass

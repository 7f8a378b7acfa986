"""Reference-tetrahedron shape functions and the four-point Gauss rule.

Points on the reference tetrahedron are stored as barycentric coordinates
``(L0, L1, L2, L3)`` with reference vertices ``v0=(0,0,0)``, ``v1=(1,0,0)``,
``v2=(0,1,0)``, ``v3=(0,0,1)``, so that ``(x, y, z) = (L1, L2, L3)``.

Shape-function derivatives are tabulated with respect to the four barycentric
coordinates ("4-vector" gradients).  Gradients with respect to the reference
Cartesian coordinates follow from ``d/dx_k = d/dL_k - d/dL_0``; physical
gradients from ``sum_a dN/dL_a * grad(L_a)``.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

__all__ = [
    "EDGES",
    "P2_NODES",
    "QuadratureRule",
    "ShapeTable",
    "four_point_rule",
    "eval_p1",
    "eval_p2",
    "eval_bubble",
    "shape_table",
    "barycentric_gradients",
    "physical_gradients",
    "InvertedElementError",
]

# Local edge numbering of a tet; P2 node 4+k sits on EDGES[k].
EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# Barycentric coordinates of the ten P2 nodes.
P2_NODES = np.vstack([np.eye(4)] + [0.5 * (np.eye(4)[a] + np.eye(4)[b]) for a, b in EDGES])

REFERENCE_VOLUME = 1.0 / 6.0


class InvertedElementError(ValueError):
    """Raised when an element mapping has a non-positive Jacobian."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True)
class QuadratureRule:
    """Points (barycentric, shape (n, 4)) and weights as reference-volume fractions."""

    points: np.ndarray
    weights: np.ndarray

    def integrate(self, f):
        """Integrate ``f(points) -> (n,)`` over the reference tet (volume 1/6)."""
        return REFERENCE_VOLUME * float(np.dot(self.weights, f(self.points)))


@lru_cache(maxsize=None)
def four_point_rule() -> QuadratureRule:
    # Degree-2 symmetric rule: permutations of (a, b, b, b) with a + 3b = 1.
    # Exactness for L_i^2 fixes a^2 + 3b^2 = 2/5 (times 1/4 weight, 1/10 average).
    b = (5.0 - np.sqrt(5.0)) / 20.0
    a = 1.0 - 3.0 * b
    pts = np.full((4, 4), b)
    np.fill_diagonal(pts, a)
    pts.setflags(write=False)
    w = np.full(4, 0.25)
    w.setflags(write=False)
    return QuadratureRule(pts, w)


def _as_bary(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 4:
        raise ValueError("barycentric points must have 4 coordinates")
    return p


def eval_p1(p) -> Tuple[np.ndarray, np.ndarray]:
    """Linear (P1) values ``(..., 4)`` and barycentric gradients ``(..., 4, 4)``."""
    p = _as_bary(p)
    grads = np.broadcast_to(np.eye(4), p.shape[:-1] + (4, 4)).copy()
    return p.copy(), grads


def eval_p2(p) -> Tuple[np.ndarray, np.ndarray]:
    """Quadratic Lagrange values ``(..., 10)`` and barycentric gradients ``(..., 10, 4)``.

    Vertex functions are ``L_a (2 L_a - 1)``, edge functions ``4 L_a L_b``.
    """
    p = _as_bary(p)
    shape = p.shape[:-1]
    vals = np.empty(shape + (10,))
    grads = np.zeros(shape + (10, 4))
    for a in range(4):
        vals[..., a] = p[..., a] * (2.0 * p[..., a] - 1.0)
        grads[..., a, a] = 4.0 * p[..., a] - 1.0
    for k, (a, b) in enumerate(EDGES):
        vals[..., 4 + k] = 4.0 * p[..., a] * p[..., b]
        grads[..., 4 + k, a] = 4.0 * p[..., b]
        grads[..., 4 + k, b] = 4.0 * p[..., a]
    return vals, grads


def eval_bubble(p) -> Tuple[np.ndarray, np.ndarray]:
    """Quartic volume bubble ``256 L0 L1 L2 L3`` and its barycentric gradient."""
    p = _as_bary(p)
    val = 256.0 * np.prod(p, axis=-1)
    grad = np.empty(p.shape)
    for a in range(4):
        others = [b for b in range(4) if b != a]
        grad[..., a] = 256.0 * p[..., others[0]] * p[..., others[1]] * p[..., others[2]]
    return val, grad


def bary_to_reference(grad_bary: np.ndarray) -> np.ndarray:
    """Convert barycentric 4-vector gradients to reference Cartesian 3-vectors."""
    return grad_bary[..., 1:] - grad_bary[..., :1]


@dataclass(frozen=True)
class ShapeTable:
    """Values and barycentric gradients of all element families at the rule's points.

    Arrays are indexed ``[point, function]`` (values) or
    ``[point, function, barycentric coordinate]`` (gradients).
    """

    rule: QuadratureRule
    p2: np.ndarray
    dp2: np.ndarray
    p1: np.ndarray
    dp1: np.ndarray
    bubble: np.ndarray
    dbubble: np.ndarray
    p0: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.rule.weights)

    @property
    def alpha(self) -> np.ndarray:
        """Damage interpolation values ``(g, 5)``: four P1 functions then the bubble."""
        return np.concatenate([self.p1, self.bubble[:, None]], axis=1)

    @property
    def dalpha(self) -> np.ndarray:
        return np.concatenate([self.dp1, self.dbubble[:, None, :]], axis=1)


@lru_cache(maxsize=None)
def shape_table() -> ShapeTable:
    """Shared read-only tables for the four-point rule."""
    rule = four_point_rule()
    pts = rule.points
    p2, dp2 = eval_p2(pts)
    p1, dp1 = eval_p1(pts)
    nb, dnb = eval_bubble(pts)
    table = ShapeTable(rule, p2, dp2, p1, dp1, nb, dnb, np.ones(len(pts)))
    for arr in (p2, dp2, p1, dp1, nb, dnb):
        arr.setflags(write=False)
    return table


def barycentric_gradients(coords) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of the barycentric coordinates of (batches of) tetrahedra.

    Parameters
    ----------
    coords : array_like, shape (..., 4, 3)
        Vertex coordinates.

    Returns
    -------
    grads : ndarray, shape (..., 4, 3)
        ``grads[..., a, :]`` is the constant gradient of ``L_a``.
    detj : ndarray, shape (...)
        Jacobian determinant of the affine map, equal to six times the volume.
    """
    X = np.asarray(coords, dtype=float)
    J = np.swapaxes(X[..., 1:, :] - X[..., :1, :], -1, -2)  # columns are edge vectors
    detj = np.linalg.det(J)
    if np.any(detj <= 0.0):
        bad = np.flatnonzero(np.ravel(detj) <= 0.0)
        raise InvertedElementError(
            f"non-positive Jacobian in element(s) {bad[:10].tolist()}", element=int(bad[0])
        )
    Jinv = np.linalg.inv(J)  # rows are grad(L1..L3)
    grads = np.empty(X.shape[:-2] + (4, 3))
    grads[..., 1:, :] = Jinv
    grads[..., 0, :] = -Jinv.sum(axis=-2)
    return grads, detj


def physical_gradients(dshape_bary, coords) -> Tuple[np.ndarray, np.ndarray]:
    """Map tabulated barycentric gradients to material-coordinate gradients.

    Parameters
    ----------
    dshape_bary : ndarray, shape (g, n, 4)
        Barycentric gradients, e.g. ``shape_table().dp2``.
    coords : array_like, shape (..., 4, 3)
        Vertex coordinates of one or more tetrahedra.

    Returns
    -------
    grads : ndarray, shape (..., g, n, 3)
    detj : ndarray, shape (...)
    """
    gl, detj = barycentric_gradients(coords)
    return np.einsum("gnk,...kj->...gnj", dshape_bary, gl), detj

"""Verification tools: count test, coupling-block rank probe, derivative oracles.

Everything here is desk-scale and read-only with respect to solver state.
"""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .element_gd import (
    N_DOF,
    N_EXT,
    ElementGeometry,
    condense,
    element_lagrangian,
    freeze_inactive,
    gd_element_system,
    recover,
)
from .interpolation import shape_table
from .material import MaterialParams, _neo_hooke
from .mesh import generate_structured_cube
from .penalty import PenaltyParams, penalty_element, penalty_energy

__all__ = [
    "CountRow",
    "CountReport",
    "count_test",
    "count_report",
    "ProbeSizeError",
    "ProbeResult",
    "coupling_block",
    "coupling_block_probe",
    "OracleCheck",
    "OracleReport",
    "random_element_states",
    "fd_oracle_suite",
    "condensation_equivalence",
]

PROBE_LIMIT = 2000


@dataclass(frozen=True)
class CountRow:
    label: str
    dim_V: int
    dim_M: int
    count_without_bubble: int
    count_with_bubble: int


@dataclass
class CountReport:
    rows: List[CountRow] = field(default_factory=list)

    def to_text(self) -> str:
        out = [f"{'mesh':>8} {'dim V':>8} {'dim M':>8} {'w/o bubble':>11} {'with bubble':>12}"]
        for r in self.rows:
            out.append(
                f"{r.label:>8} {r.dim_V:>8d} {r.dim_M:>8d} {r.count_without_bubble:>11d} {r.count_with_bubble:>12d}"
            )
        return "\n".join(out)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mesh", "dim_V", "dim_M", "count_without_bubble", "count_with_bubble"])
        for r in self.rows:
            w.writerow([r.label, r.dim_V, r.dim_M, r.count_without_bubble, r.count_with_bubble])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def count_test(mesh, label: str = "") -> CountRow:
    """dim D_alpha - dim D_lam with and without the volume bubble."""
    nv, ne = mesh.n_vertices, mesh.n_tets
    with_bubble = (nv + ne) - ne
    return CountRow(label, nv, ne, nv - ne, with_bubble)


def count_report(steps: Sequence[int] = (1, 2, 3)) -> CountReport:
    rep = CountReport()
    for s in steps:
        rep.rows.append(count_test(generate_structured_cube(2**s), label=f"s={s}"))
    return rep


# ---------------------------------------------------------------- rank probe


class ProbeSizeError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeResult:
    min_singular_value: float
    n_rows: int
    n_cols: int
    n_elements: int

    @property
    def rank_deficient(self) -> bool:
        return self.n_rows < self.n_cols or not self.min_singular_value > 1e-12 * max(1.0, self.n_rows)


def coupling_block(mesh, with_bubble: bool = True) -> np.ndarray:
    """Dense assembled ``d^2 L / d D_alpha d D_lam`` (rows: vertex then bubble dofs).

    The block is ``int N_alpha N_lam dX`` per element and independent of the
    state, so no solver state is needed.
    """
    geom = ElementGeometry.from_mesh(mesh)
    tab = shape_table()
    nv, ne = mesh.n_vertices, mesh.n_tets
    loc = np.einsum("eg,ga->ea", geom.w, tab.alpha)  # (ne, 5)
    rows = nv + ne if with_bubble else nv
    B = np.zeros((rows, ne))
    cols = np.arange(ne)
    for k in range(4):
        np.add.at(B, (mesh.tets[:, k], cols), loc[:, k])
    if with_bubble:
        B[nv + cols, cols] = loc[:, 4]
    return B


def coupling_block_probe(mesh, params: Optional[MaterialParams] = None, state=None, with_bubble: bool = True,
                         limit: int = PROBE_LIMIT) -> ProbeResult:
    """Smallest singular value of the alpha/lambda coupling block.

    ``params`` and ``state`` are accepted for interface symmetry; the block
    does not depend on them.  A block with fewer rows than columns is rank
    deficient by counting and reports 0.
    """
    n_alpha = mesh.n_vertices + (mesh.n_tets if with_bubble else 0)
    if n_alpha >= limit:
        raise ProbeSizeError(f"{n_alpha} damage dofs exceed the dense probe limit of {limit}")
    B = coupling_block(mesh, with_bubble)
    if B.shape[0] < B.shape[1]:
        smin = 0.0
    else:
        smin = float(np.linalg.svd(B, compute_uv=False).min())
    return ProbeResult(smin, B.shape[0], B.shape[1], mesh.n_tets)


# ---------------------------------------------------------------- oracles


@dataclass(frozen=True)
class OracleCheck:
    name: str
    max_rel_error: float
    tolerance: float
    n_states: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)


@dataclass
class OracleReport:
    seed: int
    checks: List[OracleCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_text(self) -> str:
        out = [f"derivative oracle suite (seed {self.seed})"]
        for c in self.checks:
            out.append(
                f"  {'PASS' if c.passed else 'FAIL'}  {c.name:<28} max rel err {c.max_rel_error:.2e}"
                f"  (tol {c.tolerance:.0e}, {c.n_states} states)"
            )
        return "\n".join(out)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "max_rel_error", "tolerance", "n_states", "passed"])
        for c in self.checks:
            w.writerow([c.name, f"{c.max_rel_error:.6e}", c.tolerance, c.n_states, c.passed])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _rel(err, ref):
    """Per-state max error scaled by the per-state max reference magnitude."""
    n = err.shape[0]
    e = np.abs(err).reshape(n, -1).max(axis=1)
    r = np.abs(ref).reshape(n, -1).max(axis=1)
    return float(np.max(e / np.maximum(r, 1e-300)))


def random_deformation_gradients(rng, n, amplitude=0.3):
    F = np.eye(3) + amplitude * rng.uniform(-1.0, 1.0, size=(n, 3, 3))
    J = np.linalg.det(F)
    F[J < 0.2] = np.eye(3)  # keep states well inside det F > 0
    return F


def random_tets(rng, n):
    base = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    X = base[None] + 0.2 * rng.uniform(-1.0, 1.0, size=(n, 4, 3))
    X *= rng.uniform(0.5, 5.0, size=(n, 1, 1))
    return X


def random_element_states(rng, n, u_scale=0.05):
    """Random admissible element states for the mixed element.

    Returns geometry, u (n, 30), a (n, 5), lam (n,), a_bar (n, 4), active (n,).
    Displacements are scaled with the element size so det F stays positive.
    """
    X = random_tets(rng, n)
    geom = ElementGeometry.from_coords(X)
    h = np.cbrt(geom.volume)[:, None]
    u = u_scale * h * rng.uniform(-1.0, 1.0, size=(n, 30))
    a = rng.uniform(0.0, 1.0, size=(n, 5))
    lam = rng.uniform(-2.0, 2.0, size=n)
    a_bar = rng.uniform(0.0, 0.5, size=(n, 4))
    active = rng.random(n) < 0.5
    return geom, u, a, lam, a_bar, active


def fd_oracle_suite(seed: int = 0, n_states: int = 1000, params: Optional[MaterialParams] = None,
                    constitutive: Optional[Callable] = None, h: float = 1e-6) -> OracleReport:
    """Central finite-difference checks of every derivative the solver relies on.

    Parameters
    ----------
    seed : int
    n_states : int
        Random states per check.
    constitutive : callable, optional
        Replacement for the Neo-Hooke kernel ``(F, lam, mu, tangent) -> (psi, P, A)``;
        used to verify that a deliberately wrong derivative is caught.
    """
    rng = np.random.default_rng(seed)
    params = params or MaterialParams(E=1000.0, nu=0.3, d0=1.0, d1=1.0, c=100.0)
    nh = constitutive or _neo_hooke
    lam_, mu_ = params.lam, params.mu
    rep = OracleReport(seed)

    # stress and tangent of the undamaged energy
    F = random_deformation_gradients(rng, n_states)
    psi, P, A = nh(F, lam_, mu_, True)
    Pfd = np.zeros_like(P)
    Afd = np.zeros_like(A)
    for i in range(3):
        for j in range(3):
            dF = np.zeros((3, 3))
            dF[i, j] = h
            pp, Pp, _ = nh(F + dF, lam_, mu_, False)
            pm, Pm, _ = nh(F - dF, lam_, mu_, False)
            Pfd[:, i, j] = (pp - pm) / (2 * h)
            Afd[:, :, :, i, j] = (Pp - Pm) / (2 * h)
    rep.checks.append(OracleCheck("P vs FD(psi0)", _rel(P - Pfd, P), 1e-6, n_states))
    rep.checks.append(OracleCheck("A vs FD(P)", _rel(A - Afd, A), 1e-5, n_states))
    rep.checks.append(OracleCheck("A major symmetry", _rel(A - A.transpose(0, 3, 4, 1, 2), A), 1e-12, n_states))

    # mixed element: R vs FD(L), K vs FD(R)
    geom, u, a, lam, a_bar, active = random_element_states(rng, n_states)
    d = np.hstack([u, a, lam[:, None]])

    def unpack(x):
        return x[:, :30], x[:, 30:35], x[:, 35]

    R, K, _, _ = gd_element_system(geom, u, a, lam, a_bar, active, params)
    Rfd = np.zeros_like(R)
    Kfd = np.zeros_like(K)
    for j in range(N_DOF):
        step = np.zeros(N_DOF)
        step[j] = h * (np.cbrt(geom.volume).mean() if j < 30 else 1.0)
        dp, dm = d + step, d - step
        Lp = element_lagrangian(geom, *unpack(dp), a_bar, active, params)
        Lm = element_lagrangian(geom, *unpack(dm), a_bar, active, params)
        Rfd[:, j] = (Lp - Lm) / (2 * step[j])
        Rp = gd_element_system(geom, *unpack(dp), a_bar, active, params, tangent=False)[0]
        Rm = gd_element_system(geom, *unpack(dm), a_bar, active, params, tangent=False)[0]
        Kfd[:, :, j] = (Rp - Rm) / (2 * step[j])
    rep.checks.append(OracleCheck("element R vs FD(L)", _rel(R - Rfd, R), 1e-6, n_states))
    rep.checks.append(OracleCheck("element K vs FD(R)", _rel(K - Kfd, K), 1e-5, n_states))
    rep.checks.append(OracleCheck("element K symmetry", _rel(K - np.swapaxes(K, 1, 2), K), 1e-10, n_states))

    # penalty element
    pp = PenaltyParams(params, p=10.0)
    a4 = a[:, :4]
    Rp_, Kp_, _ = penalty_element(geom, u, a4, a_bar, pp)
    dpen = np.hstack([u, a4])
    Rpfd = np.zeros_like(Rp_)
    Kpfd = np.zeros_like(Kp_)
    for j in range(N_EXT):
        step = np.zeros(N_EXT)
        step[j] = h * (np.cbrt(geom.volume).mean() if j < 30 else 1.0)
        dp, dm = dpen + step, dpen - step
        Rpfd[:, j] = (penalty_energy(geom, dp[:, :30], dp[:, 30:], a_bar, pp)
                      - penalty_energy(geom, dm[:, :30], dm[:, 30:], a_bar, pp)) / (2 * step[j])
        Kpfd[:, :, j] = (penalty_element(geom, dp[:, :30], dp[:, 30:], a_bar, pp, tangent=False)[0]
                         - penalty_element(geom, dm[:, :30], dm[:, 30:], a_bar, pp, tangent=False)[0]) / (2 * step[j])
    rep.checks.append(OracleCheck("penalty R vs FD(energy)", _rel(Rp_ - Rpfd, Rp_), 1e-6, n_states))
    rep.checks.append(OracleCheck("penalty K vs FD(R)", _rel(Kp_ - Kpfd, Kp_), 1e-5, n_states))
    return rep


def condensation_equivalence(seed: int = 0, n_states: int = 100, params: Optional[MaterialParams] = None) -> float:
    """Max abs difference between full and condensed single-element solves.

    The displacement dofs of local nodes 0..2 are held fixed to remove rigid
    body modes; both systems are solved densely.
    """
    rng = np.random.default_rng(seed)
    params = params or MaterialParams(d0=1.0, d1=1.0, c=100.0)
    geom, u, a, lam, a_bar, active = random_element_states(rng, n_states)
    R, K, _, _ = gd_element_system(geom, u, a, lam, a_bar, active, params)
    free_ext = np.arange(9, N_EXT)
    worst = 0.0
    Rf, Kf = freeze_inactive(R, K, active)
    cond = condense(R, K, active)
    for e in range(n_states):
        full_free = np.concatenate([free_ext, [N_EXT, N_EXT + 1]])
        x = np.zeros(N_DOF)
        x[full_free] = np.linalg.solve(Kf[e][np.ix_(full_free, full_free)], -Rf[e][full_free])
        y = np.zeros(N_EXT)
        y[free_ext] = np.linalg.solve(cond.K_ext[e][np.ix_(free_ext, free_ext)], -cond.R_ext[e][free_ext])
        one = type(cond)(*(arr[e : e + 1] for arr in cond))
        yi = recover(one, y[None])[0]
        worst = max(worst, float(np.abs(np.concatenate([y, yi]) - x).max()))
    return worst

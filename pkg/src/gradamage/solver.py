"""Global unknowns, sparse assembly and the load-stepping Newton driver.

The global vector is laid out as ``[u (3 per P2 node), a_v (1 per vertex)]``
for the damage formulations and ``[u]`` for the elastic one.  With
``condensed=False`` the element-internal pair ``(a_B, lam)`` is appended
(bubble amplitudes first, then multipliers) so the full saddle-point system
is solved instead of the Schur complement.

Dirichlet conditions are eliminated symmetrically: only free/free entries are
assembled and the prescribed increment of the first iteration of a step enters
the right-hand side through the element matrices.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .element_gd import CondensationError
from .material import InvertedStateError

__all__ = [
    "DirichletBC",
    "NeumannBC",
    "DofMap",
    "LoadProgram",
    "StepRecord",
    "SolveReport",
    "LinearSolveError",
    "NonConvergenceError",
    "Solver",
    "solve_linear",
    "plate_bcs",
    "run_program",
]

log = logging.getLogger(__name__)

CYCLIC_PERIOD = 8.5 * np.pi


class LinearSolveError(RuntimeError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, time=None, iterations=None):
        super().__init__(message)
        self.time = time
        self.iterations = iterations


@dataclass(frozen=True)
class DirichletBC:
    """Component ``component`` of all P2 nodes on ``tag`` prescribed to ``scale * u*(t)``."""

    tag: str
    component: int
    scale: float = 0.0


@dataclass(frozen=True)
class NeumannBC:
    """Constant dead traction (MPa) on ``tag``, multiplied by the load factor ``u*(t) / u_max``."""

    tag: str
    traction: tuple


def plate_bcs(top_tag: str = "top") -> List[DirichletBC]:
    """Displacement-driven plate: symmetry planes plus a prescribed top surface ``(0, u*, 0)``."""
    return [
        DirichletBC("x0", 0),
        DirichletBC("y0", 1),
        DirichletBC("z0", 2),
        DirichletBC(top_tag, 0),
        DirichletBC(top_tag, 1, 1.0),
        DirichletBC(top_tag, 2),
    ]


class DofMap:
    """Global numbering of the element unknowns.

    Parameters
    ----------
    mesh : Mesh
    n_alpha : int
        Nodal damage unknowns per tet (4 with damage, 0 for the elastic run).
    n_internal : int
        Internal unknowns per element that are kept global (0 when condensed).
    """

    def __init__(self, mesh, n_alpha: int = 4, n_internal: int = 0):
        self.mesh = mesh
        nn = mesh.n_p2_nodes
        ne = mesh.n_tets
        self.n_u = 3 * nn
        self.n_a = mesh.n_vertices if n_alpha else 0
        self.n_int = n_internal * ne
        self.n_ext = self.n_u + self.n_a
        self.n_total = self.n_ext + self.n_int
        conn = mesh.p2_connectivity
        u = (3 * conn[:, :, None] + np.arange(3)).reshape(ne, 30)
        parts = [u]
        if n_alpha:
            parts.append(self.n_u + mesh.tets)
        if n_internal:
            parts.append(self.n_ext + np.arange(ne)[:, None] + ne * np.arange(n_internal)[None, :])
        self.element_dofs = np.ascontiguousarray(np.hstack(parts))
        self.u_dofs = u
        self.a_dofs = self.element_dofs[:, 30 : 30 + n_alpha]
        self.int_dofs = self.element_dofs[:, 30 + n_alpha :]

    def dirichlet(self, bcs: Sequence[DirichletBC]):
        """Constrained dof ids and their unit-load scales (later entries win)."""
        values = {}
        for bc in bcs:
            for node in self.mesh.tag_nodes(bc.tag):
                values[3 * int(node) + bc.component] = bc.scale
        dofs = np.array(sorted(values), dtype=int)
        return dofs, np.array([values[d] for d in dofs], dtype=float)


@dataclass(frozen=True)
class LoadProgram:
    """Prescribed-displacement history ``u*(t)`` sampled at ``n_steps`` steps.

    ``monotone-ramp``: ``u* = u_max t`` on ``t in [0, 1]``.
    ``cyclic``: ``u* = (t^0.6 sin t + t^0.6) / (2 T^0.6) u_max`` on ``t in [0, T]``
    with ``T = 8.5 pi``.
    """

    n_steps: int
    u_max: float
    kind: str = "monotone-ramp"

    def __post_init__(self):
        if self.kind not in ("monotone-ramp", "cyclic"):
            raise ValueError(f"unknown load program kind {self.kind!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def duration(self) -> float:
        return 1.0 if self.kind == "monotone-ramp" else CYCLIC_PERIOD

    def time(self, step: int) -> float:
        return self.duration * step / self.n_steps

    def value_at(self, t: float) -> float:
        if self.kind == "monotone-ramp":
            return self.u_max * t
        tp = t**0.6
        return (tp * np.sin(t) + tp) / (2.0 * CYCLIC_PERIOD**0.6) * self.u_max

    def value(self, step: int) -> float:
        return self.value_at(self.time(step))

    def factor_at(self, t: float) -> float:
        return self.value_at(t) / self.u_max if self.u_max else 0.0


@dataclass
class StepRecord:
    step: int
    time: float
    u_prescribed: float
    newton_iters: int
    cuts: int
    increment_norms: List[float]
    reaction_top: float
    reaction_bottom: float
    D_max: float
    assembly_ms: float
    solve_ms: float
    n_active: int = 0
    irreversibility_drop: float = 0.0
    kkt_lambda_max: float = 0.0
    kkt_gap_max: float = 0.0


@dataclass
class SolveReport:
    """Per-step records plus run-level metadata."""

    formulation: str
    n_dofs: int
    records: List[StepRecord] = field(default_factory=list)
    aborted: bool = False
    failure: Optional[str] = None
    wall_s: float = 0.0
    metadata: dict = field(default_factory=dict)
    alpha_history: List[np.ndarray] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    iterates: List[List[np.ndarray]] = field(default_factory=list)

    @property
    def completed_steps(self) -> int:
        return len(self.records)

    @property
    def assembly_s(self) -> float:
        return sum(r.assembly_ms for r in self.records) / 1e3

    @property
    def solve_s(self) -> float:
        return sum(r.solve_ms for r in self.records) / 1e3

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def solve_linear(K, rhs, rtol: float = 1e-10):
    """Sparse direct solve of ``K x = rhs`` with one refinement sweep.

    Raises :class:`LinearSolveError` if the factorization is singular.
    """
    K = sp.csc_matrix(K)
    rhs = np.asarray(rhs, dtype=float)
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise LinearSolveError(
            f"sparse factorization failed ({exc}); run the count test and check c > 0"
        ) from exc
    x = lu.solve(rhs)
    scale = np.linalg.norm(rhs)
    r = rhs - K @ x
    if np.linalg.norm(r) > rtol * scale:
        x += lu.solve(r)
        r = rhs - K @ x
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("non-finite solution; the system is singular")
    res = np.linalg.norm(r)
    if res > rtol * scale:
        log.debug("linear residual %.3e exceeds %.1e relative", res / max(scale, 1e-300), rtol)
    return x


class _Pattern:
    """Sparsity pattern of the free/free block with a scatter map for element matrices."""

    def __init__(self, edofs, free_index, n_free):
        fe = free_index[edofs]  # (ne, nd)
        nd = fe.shape[1]
        rows = np.repeat(fe, nd, axis=1).ravel()
        cols = np.tile(fe, (1, nd)).ravel()
        self.mask = (rows >= 0) & (cols >= 0)
        keys = rows[self.mask].astype(np.int64) * n_free + cols[self.mask]
        uniq, self.pos = np.unique(keys, return_inverse=True)
        self.nnz = uniq.size
        r = uniq // n_free
        self.indices = (uniq % n_free).astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(n_free + 1)).astype(np.int32)
        self.n = n_free

    def matrix(self, Ke):
        data = np.bincount(self.pos, weights=Ke.reshape(-1)[self.mask], minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


class Solver:
    """Newton / load-stepping driver for one formulation on one mesh.

    Parameters
    ----------
    mesh : Mesh
    formulation : object
        One of :class:`~gradamage.element_gd.GradientDamageFormulation`,
        :class:`~gradamage.penalty.PenaltyFormulation`,
        :class:`~gradamage.elastic.ElasticFormulation`.
    bcs : list of DirichletBC
    neumann : list of NeumannBC, optional
    body_force : (3,) array, optional
        Dead load per unit reference volume (N/mm^3), scaled with the load factor.
    condensed : bool
        Solve the Schur complement (default) or the full saddle-point system.
    """

    def __init__(
        self,
        mesh,
        formulation,
        bcs: Sequence[DirichletBC] = (),
        neumann: Sequence[NeumannBC] = (),
        body_force=None,
        condensed: bool = True,
        tol: float = 1e-8,
        max_iter: int = 50,
        max_cuts: int = 6,
        observe: str = "top",
        bottom: str = "y0",
    ):
        self.mesh = mesh
        self.form = formulation
        self.condensed = condensed or formulation.n_internal == 0
        n_int = 0 if self.condensed else formulation.n_internal
        self.dofmap = DofMap(mesh, formulation.n_alpha, n_int)
        self.bc_dofs, self.bc_scale = self.dofmap.dirichlet(bcs)
        n = self.dofmap.n_total
        free = np.ones(n, dtype=bool)
        free[self.bc_dofs] = False
        self.free = np.flatnonzero(free)
        self.free_index = np.full(n, -1, dtype=np.int64)
        self.free_index[self.free] = np.arange(self.free.size)
        self.pattern = _Pattern(self.dofmap.element_dofs, self.free_index, self.free.size)
        self.D = np.zeros(n)
        self.tol = tol
        self.max_iter = max_iter
        self.max_cuts = max_cuts
        self.f_ext = self._external_load(neumann, body_force)
        self.observe = self._tag_dofs(observe)
        self.bottom = self._tag_dofs(bottom)
        self.t = 0.0

    # ---------------------------------------------------------------- helpers
    def _tag_dofs(self, tag):
        try:
            return 3 * self.mesh.tag_nodes(tag) + 1
        except KeyError:
            return np.zeros(0, dtype=int)

    def _external_load(self, neumann, body_force):
        f = np.zeros(self.dofmap.n_total)
        from .interpolation import shape_table

        if body_force is not None:
            w = self.form.geom.w
            fe = np.einsum("eg,gI,i->eIi", w, shape_table().p2, np.asarray(body_force, dtype=float))
            np.add.at(f, self.dofmap.u_dofs.ravel(), fe.ravel())
        for bc in neumann:
            # P2 on a flat triangle: vertex functions integrate to 0, edge functions to A/3
            sel = self.mesh.facet_tag == self.mesh.tag_index(bc.tag)
            tri = self.mesh.facet_vertices()[sel]
            X = self.mesh.vertices[tri]
            area = 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)
            en = self.mesh.edge_nodes
            for k, (a, b) in enumerate(((0, 1), (1, 2), (0, 2))):
                nodes = np.array([en[tuple(sorted((int(p), int(q))))] for p, q in zip(tri[:, a], tri[:, b])])
                for i in range(3):
                    np.add.at(f, 3 * nodes + i, area / 3.0 * bc.traction[i])
        return f

    def element_views(self, D=None):
        D = self.D if D is None else D
        return D[self.dofmap.u_dofs], D[self.dofmap.a_dofs]

    def _sync_internal(self):
        if not self.condensed:
            self.form.set_internal(self.D[self.dofmap.int_dofs])

    def assemble(self, load_factor=1.0, prescribed_increment=None):
        """Free/free tangent (CSR) and free residual at the current state.

        ``prescribed_increment`` (full-length, nonzero only at constrained dofs)
        adds ``K_fc dD_c`` to the residual.
        """
        u, a = self.element_views()
        Ke, Re = self.form.system(u, a, self.condensed)
        if prescribed_increment is not None:
            Re = Re + np.einsum("eij,ej->ei", Ke, prescribed_increment[self.dofmap.element_dofs])
        R = np.bincount(self.dofmap.element_dofs.ravel(), weights=Re.ravel(), minlength=self.dofmap.n_total)
        R -= load_factor * self.f_ext
        return self.pattern.matrix(Ke), R[self.free]

    def residual_full(self, load_factor=1.0):
        """Assembled residual over all dofs (reaction forces live at the constrained ones)."""
        u, a = self.element_views()
        Re = self.form.residual(u, a)
        nd = Re.shape[1]
        R = np.bincount(
            self.dofmap.element_dofs[:, :nd].ravel(), weights=Re.ravel(), minlength=self.dofmap.n_total
        )
        return R - load_factor * self.f_ext

    # ---------------------------------------------------------------- Newton
    def newton(self, t_new, program: LoadProgram, record_iterates=False):
        """Solve one time step to ``t_new`` from the current converged state.

        Returns (iterations, increment norms, assembly ms, solve ms, iterates).
        Raises :class:`NonConvergenceError` on failure; the caller restores.
        """
        u_new = program.value_at(t_new)
        lf = program.factor_at(t_new)
        dc = np.zeros(self.dofmap.n_total)
        dc[self.bc_dofs] = self.bc_scale * u_new - self.D[self.bc_dofs]
        norms, iterates = [], []
        t_asm = t_sol = 0.0
        for i in range(self.max_iter):
            t0 = time.perf_counter()
            try:
                K, R = self.assemble(lf, dc if i == 0 else None)
            except (InvertedStateError, CondensationError) as exc:
                raise NonConvergenceError(str(exc), t_new, i) from exc
            t1 = time.perf_counter()
            try:
                dx = solve_linear(K, -R)
            except LinearSolveError as exc:
                raise NonConvergenceError(str(exc), t_new, i) from exc
            t2 = time.perf_counter()
            t_asm += t1 - t0
            t_sol += t2 - t1
            dD = dc.copy() if i == 0 else np.zeros_like(self.D)
            dD[self.free] = dx
            self.D += dD
            if self.condensed:
                d_int = self.form.recover(dD[self.dofmap.element_dofs])
                extra = 0.0 if d_int is None else float(np.sum(d_int**2))
            else:
                self._sync_internal()
                extra = 0.0
            norm = float(np.sqrt(np.sum(dD**2) + extra))
            norms.append(norm)
            if not np.isfinite(norm):
                raise NonConvergenceError("non-finite increment", t_new, i + 1)
            changed = self.form.after_solve(self.D[self.dofmap.a_dofs], i)
            if record_iterates:
                iterates.append(np.concatenate([self.D[: self.dofmap.n_ext], self.form.internal().T.ravel()]))
            if norm < self.tol and not changed:
                return i + 1, norms, t_asm * 1e3, t_sol * 1e3, iterates
        raise NonConvergenceError(
            f"Newton did not converge in {self.max_iter} iterations (last increment {norms[-1]:.3e})",
            t_new,
            self.max_iter,
        )

    def _save(self):
        return self.D.copy(), self.form.save(), self.t

    def _restore(self, saved):
        D, fs, t = saved
        self.D[:] = D
        self.form.restore(fs)
        self.t = t

    def advance(self, t_new, program, record_iterates=False):
        """Advance to ``t_new`` with bisection on failure.

        Returns (iterations, cuts, norms, assembly ms, solve ms, iterates);
        KKT diagnostics of the converged substeps are left in ``self.last_kkt``.
        """
        kkt = (-np.inf, 0.0)
        stack = [(t_new, 0)]
        iters = cuts = 0
        norms_all, its_all = [], []
        asm = sol = 0.0
        while stack:
            target, depth = stack.pop()
            saved = self._save()
            try:
                it, norms, a_ms, s_ms, its = self.newton(target, program, record_iterates)
            except NonConvergenceError as exc:
                self._restore(saved)
                if depth >= self.max_cuts:
                    raise NonConvergenceError(
                        f"step to t={target:.6g} failed after {depth} bisections: {exc}", target
                    ) from exc
                cuts += 1
                mid = 0.5 * (self.t + target)
                stack.append((target, depth + 1))
                stack.append((mid, depth + 1))
                continue
            lam, gap = self.kkt()
            kkt = (max(kkt[0], lam), max(kkt[1], gap))
            self.form.commit(self.D[self.dofmap.a_dofs])
            self.t = target
            iters += it
            norms_all.extend(norms)
            its_all.extend(its)
            asm += a_ms
            sol += s_ms
        self.last_kkt = (kkt[0] if np.isfinite(kkt[0]) else 0.0, kkt[1])
        return iters, cuts, norms_all, asm, sol, its_all

    # ---------------------------------------------------------------- diagnostics
    def reactions(self, load_factor=1.0):
        R = self.residual_full(load_factor)
        return float(R[self.observe].sum()), float(R[self.bottom].sum())

    def damage_max(self) -> float:
        alpha = self.form.gauss_alpha(self.D[self.dofmap.a_dofs])
        return float(np.max(1.0 - np.exp(-alpha), initial=0.0))

    def kkt(self):
        """(max lam, max |int (a - a_bar)| / V) over constraint-active elements before commit."""
        hist = getattr(self.form, "history", None)
        if hist is None or not hasattr(hist, "active"):
            return 0.0, 0.0
        act = hist.active
        if not act.any():
            return -np.inf, 0.0
        alpha = self.form.gauss_alpha(self.D[self.dofmap.a_dofs])
        gap = np.abs(np.sum(self.form.geom.w * (alpha - hist.alpha_bar), axis=1)) / self.form.geom.volume
        return float(self.form.lam[act].max()), float(gap[act].max())

    # ---------------------------------------------------------------- driver
    def run(
        self,
        program: LoadProgram,
        keep_alpha: bool = False,
        keep_states: bool = False,
        record_iterates: bool = False,
        on_step: Optional[Callable] = None,
    ) -> SolveReport:
        """Run the whole program; nonconvergence aborts with a partial report."""
        report = SolveReport(self.form.name, self.dofmap.n_total)
        report.metadata.update(
            z_condition="u_Z = 0 on Z = 0",
            reaction="sum of assembled residual Y-components at the observation tag nodes",
            condensed=self.condensed,
            n_free=int(self.free.size),
        )
        start = time.perf_counter()
        if keep_alpha:
            report.alpha_history.append(self.form.gauss_alpha(self.D[self.dofmap.a_dofs]).copy())
        for k in range(1, program.n_steps + 1):
            t_new = program.time(k)
            try:
                it, cuts, norms, a_ms, s_ms, its = self.advance(t_new, program, record_iterates)
            except NonConvergenceError as exc:
                report.aborted = True
                report.failure = f"step {k} (u* = {program.value(k):.6g} mm): {exc}"
                log.warning("run aborted: %s", report.failure)
                break
            top, bot = self.reactions(program.factor_at(t_new))
            hist = getattr(self.form, "history", None)
            rec = StepRecord(
                step=k,
                time=t_new,
                u_prescribed=program.value(k),
                newton_iters=it,
                cuts=cuts,
                increment_norms=norms,
                reaction_top=top,
                reaction_bottom=bot,
                D_max=self.damage_max(),
                assembly_ms=a_ms,
                solve_ms=s_ms,
                n_active=int(hist.active.sum()) if hist is not None and hasattr(hist, "active") else 0,
                irreversibility_drop=self.form.last_drop,
                kkt_lambda_max=self.last_kkt[0],
                kkt_gap_max=self.last_kkt[1],
            )
            report.records.append(rec)
            if keep_alpha:
                report.alpha_history.append(self.form.gauss_alpha(self.D[self.dofmap.a_dofs]).copy())
            if keep_states:
                report.states.append(self.D.copy())
            if record_iterates:
                report.iterates.append(its)
            if on_step is not None:
                on_step(k, self)
        report.wall_s = time.perf_counter() - start
        return report


def run_program(mesh, formulation, program: LoadProgram, bcs=None, **kwargs) -> SolveReport:
    """Convenience wrapper: plate-style BCs by default."""
    run_kw = {k: kwargs.pop(k) for k in ("keep_alpha", "keep_states", "record_iterates", "on_step") if k in kwargs}
    solver = Solver(mesh, formulation, plate_bcs() if bcs is None else bcs, **kwargs)
    return solver.run(program, **run_kw)

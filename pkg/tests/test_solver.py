import numpy as np
import pytest
import scipy.sparse as sp

from gradamage.elastic import ElasticFormulation
from gradamage.element_gd import GradientDamageFormulation
from gradamage.material import MaterialParams
from gradamage.mesh import generate_quarter_plate_with_hole, generate_structured_cube
from gradamage.solver import (
    DirichletBC,
    DofMap,
    LoadProgram,
    NeumannBC,
    NonConvergenceError,
    Solver,
    plate_bcs,
    solve_linear,
)

DMG = MaterialParams(E=1000.0, nu=0.3, d0=0.5, d1=1.0, c=1.0)


@pytest.fixture(scope="module")
def plate():
    return generate_quarter_plate_with_hole(refinement=0)


def test_dofmap_dimensions(plate):
    dm = DofMap(plate, n_alpha=4)
    assert dm.n_ext == 3 * (plate.n_vertices + plate.n_edges) + plate.n_vertices
    assert DofMap(plate, n_alpha=0).n_total == 3 * (plate.n_vertices + plate.n_edges)
    full = DofMap(plate, n_alpha=4, n_internal=2)
    assert full.n_total == dm.n_ext + 2 * plate.n_tets
    assert len(np.unique(full.element_dofs[:, 34:])) == 2 * plate.n_tets


def test_dirichlet_dofs_unique(plate):
    dofs, scale = DofMap(plate).dirichlet(plate_bcs())
    assert len(np.unique(dofs)) == len(dofs)
    top = plate.tag_nodes("top")
    assert set(dofs[scale == 1.0]) == set(3 * top + 1)


def test_assembly_matches_dense_oracle(two_tet_mesh):
    s = Solver(two_tet_mesh, GradientDamageFormulation(two_tet_mesh, DMG), plate_bcs())
    rng = np.random.default_rng(0)
    s.D[:] = 0.01 * rng.normal(size=s.D.size)
    K, R = s.assemble()
    u, a = s.element_views()
    Ke, Re = s.form.system(u, a)
    n = s.dofmap.n_total
    dense = np.zeros((n, n))
    rhs = np.zeros(n)
    for e, dofs in enumerate(s.dofmap.element_dofs):
        dense[np.ix_(dofs, dofs)] += Ke[e]
        rhs[dofs] += Re[e]
    np.testing.assert_allclose(K.toarray(), dense[np.ix_(s.free, s.free)], atol=1e-11 * np.abs(dense).max())
    np.testing.assert_allclose(R, rhs[s.free], atol=1e-12 * np.abs(rhs).max())
    assert abs(K - K.T).max() <= 1e-10 * abs(K).max()


def test_reference_state_u_residual_zero(plate):
    s = Solver(plate, GradientDamageFormulation(plate, DMG), plate_bcs())
    R = s.residual_full()
    assert np.all(R[: s.dofmap.n_u] == 0.0)


def test_solve_linear_identity_and_spd():
    x = solve_linear(sp.identity(5, format="csr"), -np.eye(5)[0])
    np.testing.assert_allclose(x, -np.eye(5)[0])
    rng = np.random.default_rng(1)
    A = rng.normal(size=(50, 50))
    A = A @ A.T + 50 * np.eye(50)
    b = rng.normal(size=50)
    np.testing.assert_allclose(solve_linear(sp.csr_matrix(A), b), np.linalg.solve(A, b), atol=1e-10)


def test_solve_linear_singular():
    from gradamage.solver import LinearSolveError

    with pytest.raises(LinearSolveError):
        solve_linear(sp.csr_matrix(np.zeros((3, 3))), np.ones(3))


def test_one_element_saddle_solves():
    from gradamage.mesh import build_mesh

    m = build_mesh([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2, 3]])
    s = Solver(m, GradientDamageFormulation(m, DMG), [DirichletBC("boundary", k) for k in range(3)])
    K, R = s.assemble()
    x = solve_linear(K, -R)
    assert np.all(np.isfinite(x))


def test_zero_increment_is_fixed_point(two_tet_mesh):
    s = Solver(two_tet_mesh, GradientDamageFormulation(two_tet_mesh, DMG), plate_bcs())
    prog = LoadProgram(4, 0.2)
    s.run(prog)
    it, norms, *_ = s.newton(s.t, prog)
    assert it == 1 and norms[0] < 1e-8


def test_elastic_quadratic_convergence(plate):
    s = Solver(plate, ElasticFormulation(plate, DMG), plate_bcs())
    rep = s.run(LoadProgram(1, 5.0))
    e = rep.records[0].increment_norms
    assert e[-1] < 1e-8
    # the last informative ratio sits in the squaring regime
    tail = [(e[k + 1] / e[k] ** 2) for k in range(1, len(e) - 1) if e[k] > 1e-6]
    assert tail and max(tail) < 1.0


def test_multiplier_sign_switches_flags(two_tet_mesh):
    params = MaterialParams(E=1000.0, nu=0.3, d0=50.0, d1=1.0, c=1.0)
    s = Solver(two_tet_mesh, GradientDamageFormulation(two_tet_mesh, params), plate_bcs())
    rep = s.run(LoadProgram(6, 0.6))
    assert not rep.aborted
    active = rep.column("n_active")
    # both constrained at first, then released one after the other
    np.testing.assert_array_equal(active, [2, 2, 1, 0, 0, 0])
    assert np.all(np.diff(rep.column("D_max")) > 0)


def test_reaction_equilibrium_and_zero_program(plate):
    for form in (ElasticFormulation(plate, DMG), GradientDamageFormulation(plate, DMG)):
        rep = Solver(plate, form, plate_bcs()).run(LoadProgram(3, 2.0))
        for r in rep.records:
            assert r.reaction_top == pytest.approx(-r.reaction_bottom, rel=1e-6)
            assert r.reaction_top > 0
    rep = Solver(plate, GradientDamageFormulation(plate, DMG), plate_bcs()).run(LoadProgram(3, 0.0))
    assert all(abs(r.reaction_top) < 1e-9 for r in rep.records)


def test_traction_and_body_force_resultants():
    cube = generate_structured_cube(2)
    bcs = [DirichletBC("x0", 0), DirichletBC("y0", 1), DirichletBC("z0", 2)]
    params = MaterialParams(E=1000.0, nu=0.3, d0=1e3, d1=1.0, c=1.0)
    s = Solver(cube, ElasticFormulation(cube, params), bcs, neumann=[NeumannBC("y1", (0.0, 2.0, 0.0))])
    rep = s.run(LoadProgram(2, 1.0))
    assert rep.records[-1].reaction_bottom == pytest.approx(-2.0, rel=1e-8)
    s = Solver(cube, ElasticFormulation(cube, params), bcs, body_force=(0.0, -3.0, 0.0))
    rep = s.run(LoadProgram(1, 1.0))
    assert rep.records[-1].reaction_bottom == pytest.approx(3.0, rel=1e-8)


def test_bisection_recovers(two_tet_mesh, monkeypatch):
    s = Solver(two_tet_mesh, GradientDamageFormulation(two_tet_mesh, DMG), plate_bcs())
    orig = s.newton
    calls = {"n": 0}

    def flaky(t, prog, rec=False):
        calls["n"] += 1
        if calls["n"] == 1:
            raise NonConvergenceError("injected", t)
        return orig(t, prog, rec)

    monkeypatch.setattr(s, "newton", flaky)
    rep = s.run(LoadProgram(2, 0.1))
    assert not rep.aborted
    assert rep.records[0].cuts == 1
    assert rep.records[-1].time == pytest.approx(1.0)


def test_abort_gives_partial_report(plate):
    s = Solver(plate, GradientDamageFormulation(plate, MaterialParams(d0=0.0, d1=1.0, c=100.0)), plate_bcs(),
               max_iter=2, max_cuts=1)
    rep = s.run(LoadProgram(5, 5.0))
    assert rep.aborted and "step 1" in rep.failure
    assert rep.completed_steps == 0


def test_cyclic_program_values():
    prog = LoadProgram(100, 25.0, "cyclic")
    assert prog.value(0) == 0.0
    T = 8.5 * np.pi
    assert prog.value(100) == pytest.approx((T**0.6 * np.sin(T) + T**0.6) / (2 * T**0.6) * 25.0)
    vals = np.array([prog.value(k) for k in range(101)])
    assert vals.max() <= 25.0 + 1e-12 and vals.min() >= 0.0
    assert (np.diff(vals) < 0).any()


def test_load_program_validation():
    with pytest.raises(ValueError):
        LoadProgram(0, 1.0)
    with pytest.raises(ValueError):
        LoadProgram(5, 1.0, "sawtooth")

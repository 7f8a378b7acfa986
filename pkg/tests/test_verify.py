import numpy as np
import pytest

from gradamage.material import _neo_hooke
from gradamage.mesh import build_mesh, generate_quarter_plate_with_hole, generate_structured_cube
from gradamage.verify import (
    ProbeSizeError,
    condensation_equivalence,
    count_report,
    count_test,
    coupling_block,
    coupling_block_probe,
    fd_oracle_suite,
)

TABLE = {1: (-13, 27), 2: (-195, 125), 3: (-1831, 729)}


def test_count_report_table():
    rep = count_report((1, 2, 3))
    for s, row in zip((1, 2, 3), rep.rows):
        assert (row.count_without_bubble, row.count_with_bubble) == TABLE[s]
        assert row.dim_V == (2**s + 1) ** 3
        assert row.dim_M == 5 * 2 ** (3 * s)
    text = rep.to_csv()
    assert text.splitlines()[0] == "mesh,dim_V,dim_M,count_without_bubble,count_with_bubble"
    assert "s=2,125,320,-195,125" in text


def test_count_with_bubble_equals_vertices_on_any_mesh():
    for m in (generate_quarter_plate_with_hole(refinement=0), generate_quarter_plate_with_hole(refinement=1),
              generate_structured_cube(3)):
        assert count_test(m).count_with_bubble == m.n_vertices


def test_probe_cube_full_rank():
    r = coupling_block_probe(generate_structured_cube(2))
    assert not r.rank_deficient and r.min_singular_value > 0


def test_probe_without_bubble_deficient():
    r = coupling_block_probe(generate_structured_cube(2), with_bubble=False)
    assert r.rank_deficient


def test_probe_single_element():
    m = build_mesh([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2, 3]])
    B = coupling_block(m)
    assert B.shape == (5, 1)
    assert np.linalg.matrix_rank(B) == 1
    # the column integrates the damage shape functions: each vertex entry is V/4
    np.testing.assert_allclose(B[:4, 0], (1 / 6) / 4, rtol=1e-12)
    assert B[4, 0] > 0


def test_probe_size_limit():
    with pytest.raises(ProbeSizeError):
        coupling_block_probe(generate_structured_cube(8))


def test_oracle_suite_passes():
    rep = fd_oracle_suite(seed=0, n_states=200)
    assert rep.passed, rep.to_text()
    names = {c.name for c in rep.checks}
    assert "P vs FD(psi0)" in names and len(names) >= 6


def test_oracle_suite_detects_wrong_stress_sign():
    def wrong(F, lam, mu, tangent):
        psi, P, A = _neo_hooke(F, lam, mu, tangent)
        return psi, -P, A

    rep = fd_oracle_suite(seed=1, n_states=50, constitutive=wrong)
    assert not rep.passed
    assert "P vs FD(psi0)" in rep.failures


@pytest.mark.parametrize("seed", [3, 11])
def test_oracle_suite_seed_robust(seed):
    assert fd_oracle_suite(seed=seed, n_states=100).passed


def test_condensation_equivalence_harness():
    assert condensation_equivalence(seed=2, n_states=30) < 1e-10

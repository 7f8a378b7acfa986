import numpy as np
import pytest

from gradamage.mesh import BoundaryTag, build_mesh, classify_boundary


def make_two_tet_mesh():
    """Two tets sharing a face; symmetry planes on the first, a loaded face on the second."""
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]])
    mesh = build_mesh(verts, [[0, 1, 2, 3], [1, 2, 3, 4]], orient=True)
    tol = 1e-9
    top = lambda p: (p[:, 1] > 0.6) & (p[:, 2] > 0.6)  # noqa: E731
    preds = [
        (lambda p: np.abs(p[:, 0]) < tol, BoundaryTag("x0", "dirichlet-component")),
        (lambda p: np.abs(p[:, 1]) < tol, BoundaryTag("y0", "dirichlet-component")),
        (lambda p: np.abs(p[:, 2]) < tol, BoundaryTag("z0", "dirichlet-component")),
        (top, BoundaryTag("top", "observation")),
        (
            lambda p: (np.abs(p[:, 0]) >= tol) & (np.abs(p[:, 1]) >= tol) & (np.abs(p[:, 2]) >= tol) & ~top(p),
            BoundaryTag("free", "neumann"),
        ),
    ]
    return classify_boundary(mesh, preds)


@pytest.fixture
def two_tet_mesh():
    return make_two_tet_mesh()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])

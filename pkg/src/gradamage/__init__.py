"""Finite-strain gradient damage with a Lagrange-multiplier mixed tetrahedron.

P2 displacements, P1 plus volume-bubble damage and an elementwise constant
multiplier enforcing irreversibility; the bubble and multiplier are condensed
per element.  A penalty reference formulation and a pure-elastic P2 run are
included for comparison.
"""

from .elastic import ElasticFormulation
from .element_gd import (
    CondensationError,
    ElementGeometry,
    ElementHistory,
    GradientDamageFormulation,
    commit_step,
    condense,
    element_residual_tangent,
    gd_element_system,
    recover,
    update_history,
)
from .kernels import BACKEND
from .material import InvertedStateError, MaterialParams, neo_hooke
from .mesh import (
    BoundaryTag,
    Mesh,
    classify_boundary,
    generate_quarter_plate_with_hole,
    generate_structured_cube,
    import_mesh,
    write_mesh,
)
from .penalty import PenaltyFormulation, PenaltyParams
from .solver import DirichletBC, LoadProgram, NonConvergenceError, SolveReport, Solver, plate_bcs, run_program
from .verify import count_report, count_test, coupling_block_probe, fd_oracle_suite

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoundaryTag",
    "CondensationError",
    "DirichletBC",
    "ElasticFormulation",
    "ElementGeometry",
    "ElementHistory",
    "GradientDamageFormulation",
    "InvertedStateError",
    "LoadProgram",
    "MaterialParams",
    "Mesh",
    "NonConvergenceError",
    "PenaltyFormulation",
    "PenaltyParams",
    "SolveReport",
    "Solver",
    "classify_boundary",
    "commit_step",
    "condense",
    "count_report",
    "count_test",
    "coupling_block_probe",
    "element_residual_tangent",
    "fd_oracle_suite",
    "gd_element_system",
    "generate_quarter_plate_with_hole",
    "generate_structured_cube",
    "import_mesh",
    "neo_hooke",
    "plate_bcs",
    "recover",
    "run_program",
    "update_history",
    "write_mesh",
]

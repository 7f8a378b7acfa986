"""Scenario configuration, run orchestration and file output.

Configuration grammar (YAML, every key optional except ``scenario``)::

    scenario: plate-with-hole        # cube-count-test | plate-with-hole | custom-mesh
    mesh:
      refinement: 0                  # plate refinement level or cube step s
      radius: 50.0                   # plate geometry, mm
      length: 100.0
      thickness: 10.0
      layers: 1                      # plate elements through the thickness (default from refinement)
      path: mesh.msh                 # custom-mesh only, relative to the config file
      format: gmsh-ascii             # simple-nodes-elements | gmsh-ascii
      geometry: plate                # custom-mesh boundary classification: plate | cube
    material: {E: 1000.0, nu: 0.3, d0: 0.0, d1: 1.0, c: 100.0}
    formulation: {type: lagrange-mixed, p: 10.0}   # lagrange-mixed | penalty | local | elastic
    load: {kind: monotone-ramp, n_steps: 200, u_max: 25.0}        # or kind: cyclic
    solver: {tol: 1.0e-8, max_iter: 50, max_cuts: 6, condensed: true}
    output: {directory: out, snapshot_every: 0}
    count_test: {steps: [1, 2, 3]}

Environment overrides: ``GRADAMAGE_OUTPUT_DIR`` replaces ``output.directory``;
``GRADAMAGE_THREADS`` is recorded in the metadata and exported as
``OMP_NUM_THREADS`` for BLAS (the sparse factorization itself is serial).
"""

import csv
import hashlib
import json
import os
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .elastic import ElasticFormulation
from .element_gd import GradientDamageFormulation
from .interpolation import EDGES
from .material import MaterialParams
from .mesh import (
    classify_boundary,
    cube_predicates,
    generate_quarter_plate_with_hole,
    generate_structured_cube,
    import_mesh,
    plate_predicates,
)
from .penalty import PenaltyFormulation, PenaltyParams
from .solver import LoadProgram, SolveReport, Solver, plate_bcs
from .verify import count_report

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "build_mesh_from_config",
    "build_formulation",
    "FieldSnapshot",
    "take_snapshot",
    "export_fields",
    "read_vtu",
    "write_force_displacement",
    "run_scenario",
    "TimingComparison",
    "timing_comparison",
    "compare_reports",
]

SCENARIOS = ("cube-count-test", "plate-with-hole", "custom-mesh")
FORMULATIONS = ("lagrange-mixed", "penalty", "local", "elastic")
CSV_COLUMNS = ("step", "time", "u_prescribed_mm", "reaction_N", "newton_iters", "D_max", "assembly_ms", "solve_ms")


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ScenarioConfig:
    scenario: str
    material: MaterialParams = field(default_factory=MaterialParams)
    formulation: str = "lagrange-mixed"
    penalty: float = 10.0
    load: LoadProgram = field(default_factory=lambda: LoadProgram(200, 25.0))
    mesh: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    snapshot_every: int = 0
    count_steps: tuple = (1, 2, 3)
    threads: Optional[int] = None
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _section(raw, key):
    val = raw.get(key) or {}
    if not isinstance(val, dict):
        raise ConfigError(key, "expected a mapping")
    return val


def _number(sec, key, prefix, default, kind=float):
    val = sec.get(key, default)
    try:
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{prefix}.{key}", f"expected a number, got {val!r}") from None


def parse_config(raw: dict, base_dir=".") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {', '.join(SCENARIOS)}, got {scenario!r}")

    mat = _section(raw, "material")
    unknown = set(mat) - {"E", "nu", "d0", "d1", "c"}
    if unknown:
        raise ConfigError(f"material.{sorted(unknown)[0]}", "unknown key")
    try:
        material = MaterialParams(**{k: float(v) for k, v in mat.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError("material", str(exc)) from None

    form = _section(raw, "formulation")
    ftype = form.get("type", "lagrange-mixed")
    if ftype not in FORMULATIONS:
        raise ConfigError("formulation.type", f"must be one of {', '.join(FORMULATIONS)}")
    p = _number(form, "p", "formulation", 10.0)
    if ftype == "penalty" and not p > 0:
        raise ConfigError("formulation.p", "penalty parameter must be positive")
    if ftype == "local":
        material = MaterialParams(material.E, material.nu, material.d0, material.d1, 0.0)

    ld = _section(raw, "load")
    try:
        load = LoadProgram(
            _number(ld, "n_steps", "load", 200, int), _number(ld, "u_max", "load", 25.0), ld.get("kind", "monotone-ramp")
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("load", str(exc)) from None

    mesh = dict(_section(raw, "mesh"))
    if scenario == "custom-mesh":
        if "path" not in mesh:
            raise ConfigError("mesh.path", "required for custom-mesh")
        path = Path(base_dir) / mesh["path"]
        if not path.exists():
            raise ConfigError("mesh.path", f"file not found: {path}")
        mesh["path"] = str(path)
        if mesh.get("geometry", "plate") not in ("plate", "cube"):
            raise ConfigError("mesh.geometry", "must be plate or cube")

    out = _section(raw, "output")
    out_dir = os.environ.get("GRADAMAGE_OUTPUT_DIR") or out.get("directory", "out")
    out_dir = Path(out_dir)
    if not out_dir.is_absolute():
        out_dir = Path(base_dir) / out_dir
    threads = os.environ.get("GRADAMAGE_THREADS")
    ct = _section(raw, "count_test")
    steps = ct.get("steps", [1, 2, 3])
    if isinstance(steps, int):
        steps = [steps]
    return ScenarioConfig(
        scenario=scenario,
        material=material,
        formulation=ftype,
        penalty=p,
        load=load,
        mesh=mesh,
        solver=dict(_section(raw, "solver")),
        output_dir=out_dir,
        snapshot_every=_number(out, "snapshot_every", "output", 0, int),
        count_steps=tuple(int(s) for s in steps),
        threads=int(threads) if threads else None,
        base_dir=Path(base_dir),
        raw=raw,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from None
    return parse_config(raw, base_dir=path.parent)


def build_mesh_from_config(cfg: ScenarioConfig):
    m = cfg.mesh
    R = float(m.get("radius", 50.0))
    L = float(m.get("length", 100.0))
    H = float(m.get("thickness", 10.0))
    if cfg.scenario == "plate-with-hole":
        layers = m.get("layers")
        return generate_quarter_plate_with_hole(R, L, H, int(m.get("refinement", 0)),
                                                layers=None if layers is None else int(layers))
    if cfg.scenario == "cube-count-test":
        return generate_structured_cube(2 ** int(m.get("refinement", 1)), float(m.get("edge_length", 1.0)))
    mesh = import_mesh(m["path"], m.get("format", "simple-nodes-elements"))
    if m.get("geometry", "plate") == "plate":
        return classify_boundary(mesh, plate_predicates(R, L, H))
    return classify_boundary(mesh, cube_predicates(float(m.get("edge_length", 1.0))))


def scenario_bcs(cfg: ScenarioConfig):
    geometry = "cube" if cfg.scenario == "cube-count-test" else cfg.mesh.get("geometry", "plate")
    top = "y1" if geometry == "cube" else "top"
    return plate_bcs(top), top


def build_formulation(cfg: ScenarioConfig, mesh):
    if cfg.formulation in ("lagrange-mixed", "local"):
        return GradientDamageFormulation(mesh, cfg.material)
    if cfg.formulation == "penalty":
        return PenaltyFormulation(mesh, PenaltyParams(cfg.material, cfg.penalty))
    return ElasticFormulation(mesh, cfg.material)


def make_solver(cfg: ScenarioConfig, mesh, formulation=None) -> Solver:
    bcs, top = scenario_bcs(cfg)
    s = cfg.solver
    return Solver(
        mesh,
        formulation or build_formulation(cfg, mesh),
        bcs,
        condensed=bool(s.get("condensed", True)),
        tol=float(s.get("tol", 1e-8)),
        max_iter=int(s.get("max_iter", 50)),
        max_cuts=int(s.get("max_cuts", 6)),
        observe=top,
    )


# ---------------------------------------------------------------- snapshots / VTU


@dataclass
class FieldSnapshot:
    """Nodal and element fields of one converged step.

    ``damage`` is the element RMS of ``D(alpha)``, i.e. ``||D||_L2(T) / sqrt(|T|)``,
    so it stays in ``[0, 1)``.
    """

    step: int
    displacement: np.ndarray  # (n_p2_nodes, 3)
    damage: np.ndarray  # (ne,)
    lam: np.ndarray  # (ne,)
    alpha_bar_min: np.ndarray  # (ne,)
    alpha_bar_max: np.ndarray  # (ne,)


def take_snapshot(step: int, solver: Solver) -> FieldSnapshot:
    form = solver.form
    ne = solver.mesh.n_tets
    u = solver.D[: solver.dofmap.n_u].reshape(-1, 3).copy()
    alpha = form.gauss_alpha(solver.D[solver.dofmap.a_dofs])
    D = 1.0 - np.exp(-alpha)
    w = form.geom.w
    damage = np.sqrt(np.sum(w * D * D, axis=1) / np.sum(w, axis=1))
    lam = getattr(form, "lam", np.zeros(ne)).copy()
    hist = getattr(form, "history", None)
    abar = getattr(hist, "alpha_bar", np.zeros((ne, 4)))
    return FieldSnapshot(step, u, damage, lam, abar.min(axis=1), abar.max(axis=1))


# VTK quadratic tetra edge order: (0,1) (1,2) (0,2) (0,3) (1,3) (2,3)
_VTK_EDGE = [EDGES.index(e) for e in ((0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 3))]
VTK_QUADRATIC_TETRA = 24


def _data_array(parent, name, values, ncomp=1, dtype="Float64", fmt="{:.12g}"):
    el = ET.SubElement(parent, "DataArray", type=dtype, Name=name, NumberOfComponents=str(ncomp), format="ascii")
    el.text = " ".join(fmt.format(v) for v in np.asarray(values).ravel())
    return el


def export_fields(snapshot: FieldSnapshot, mesh, path) -> Path:
    """Write an ASCII VTU file with 10-node tetrahedra."""
    path = Path(path)
    conn = mesh.p2_connectivity[:, list(range(4)) + [4 + k for k in _VTK_EDGE]]
    root = ET.Element("VTKFile", type="UnstructuredGrid", version="0.1", byte_order="LittleEndian")
    grid = ET.SubElement(root, "UnstructuredGrid")
    piece = ET.SubElement(grid, "Piece", NumberOfPoints=str(mesh.n_p2_nodes), NumberOfCells=str(mesh.n_tets))
    pts = ET.SubElement(piece, "Points")
    _data_array(pts, "Points", mesh.p2_coordinates, 3)
    cells = ET.SubElement(piece, "Cells")
    _data_array(cells, "connectivity", conn, dtype="Int64", fmt="{:d}")
    _data_array(cells, "offsets", 10 * np.arange(1, mesh.n_tets + 1), dtype="Int64", fmt="{:d}")
    _data_array(cells, "types", np.full(mesh.n_tets, VTK_QUADRATIC_TETRA), dtype="UInt8", fmt="{:d}")
    pd = ET.SubElement(piece, "PointData", Vectors="displacement")
    _data_array(pd, "displacement", snapshot.displacement, 3)
    cd = ET.SubElement(piece, "CellData", Scalars="damage")
    _data_array(cd, "damage", snapshot.damage)
    _data_array(cd, "lambda", snapshot.lam)
    _data_array(cd, "alpha_bar_min", snapshot.alpha_bar_min)
    _data_array(cd, "alpha_bar_max", snapshot.alpha_bar_max)
    ET.ElementTree(root).write(path, xml_declaration=True, encoding="utf-8")
    return path


def read_vtu(path) -> dict:
    """Minimal reader for files written by :func:`export_fields`.

    Returns ``n_points``, ``n_cells`` and every data array by name.
    """
    root = ET.parse(path).getroot()
    piece = root.find("UnstructuredGrid/Piece")
    out = {"n_points": int(piece.get("NumberOfPoints")), "n_cells": int(piece.get("NumberOfCells"))}
    for arr in piece.iter("DataArray"):
        kind = int if arr.get("type", "").startswith(("Int", "UInt")) else float
        vals = np.array([kind(t) for t in (arr.text or "").split()])
        ncomp = int(arr.get("NumberOfComponents", "1"))
        out[arr.get("Name")] = vals.reshape(-1, ncomp) if ncomp > 1 else vals
    return out


# ---------------------------------------------------------------- CSV / report


def write_force_displacement(report: SolveReport, path, config_hash: str = "", header: Optional[dict] = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("# force-displacement record\n")
        fh.write("# units: time [-], u_prescribed_mm [mm], reaction_N [N], assembly_ms [ms], solve_ms [ms]; "
                 "material parameters in MPa and N mm\n")
        fh.write(f"# config_hash: {config_hash}\n")
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.records:
            w.writerow([
                r.step, repr(float(r.time)), repr(float(r.u_prescribed)), repr(float(r.reaction_top)),
                r.newton_iters, repr(float(r.D_max)), f"{r.assembly_ms:.3f}", f"{r.solve_ms:.3f}",
            ])
    return path


def read_force_displacement(path) -> dict:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_COLUMNS}


def report_to_dict(report: SolveReport) -> dict:
    return {
        "formulation": report.formulation,
        "n_dofs": report.n_dofs,
        "aborted": report.aborted,
        "failure": report.failure,
        "wall_s": report.wall_s,
        "assembly_s": report.assembly_s,
        "solve_s": report.solve_s,
        "metadata": report.metadata,
        "records": [asdict(r) for r in report.records],
    }


def run_scenario(cfg: ScenarioConfig):
    """Execute a configured scenario and write its artifacts.

    Returns ``(exit_status, report_or_count_report)``; status 0 on success,
    2 when the load program aborted on nonconvergence.
    """
    if cfg.threads:
        os.environ["OMP_NUM_THREADS"] = str(cfg.threads)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if cfg.scenario == "cube-count-test":
        rep = count_report(cfg.count_steps)
        path = out / "count_test.csv"
        path.write_text(f"# count test\n# config_hash: {cfg.config_hash}\n" + rep.to_csv())
        return 0, rep

    mesh = build_mesh_from_config(cfg)
    solver = make_solver(cfg, mesh)
    every = cfg.snapshot_every

    def on_step(k, s):
        if every and k % every == 0:
            export_fields(take_snapshot(k, s), mesh, out / f"fields_{k:05d}.vtu")

    report = solver.run(cfg.load, on_step=on_step)
    report.metadata.update(config_hash=cfg.config_hash, threads=cfg.threads, formulation=cfg.formulation,
                           n_tets=mesh.n_tets, n_vertices=mesh.n_vertices)
    header = {"formulation": cfg.formulation, "n_tets": mesh.n_tets, "dofs": report.n_dofs}
    if report.aborted:
        header["status"] = f"aborted: {report.failure}"
    write_force_displacement(report, out / "force_displacement.csv", cfg.config_hash, header)
    (out / "report.json").write_text(json.dumps(report_to_dict(report), indent=1, default=float))
    return (2 if report.aborted else 0), report


# ---------------------------------------------------------------- timing comparison


@dataclass(frozen=True)
class TimingComparison:
    label: str
    n_dofs_a: int
    n_dofs_b: int
    assembly_ratio: float
    solve_ratio: float
    total_ratio: float

    def to_text(self) -> str:
        return (
            f"{self.label}: dofs {self.n_dofs_a} vs {self.n_dofs_b}; assembly x{self.assembly_ratio:.2f}, "
            f"solve x{self.solve_ratio:.2f}, total x{self.total_ratio:.2f}"
        )


def compare_reports(a: SolveReport, b: SolveReport, label: str = "") -> TimingComparison:
    """Time ratios ``a / b`` (assembly, linear solve, and their sum)."""
    if len(a.records) != len(b.records):
        raise ValueError("reports cover different numbers of steps")

    def ratio(x, y):
        return x / y if y > 0 else float("nan")

    return TimingComparison(
        label, a.n_dofs, b.n_dofs,
        ratio(a.assembly_s, b.assembly_s),
        ratio(a.solve_s, b.solve_s),
        ratio(a.assembly_s + a.solve_s, b.assembly_s + b.solve_s),
    )


def timing_comparison(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig) -> TimingComparison:
    """Run two configurations on the same mesh and load program and compare timings."""
    if cfg_a.scenario != cfg_b.scenario or cfg_a.mesh != cfg_b.mesh:
        raise ValueError("configurations use different meshes")
    if cfg_a.load != cfg_b.load:
        raise ValueError("configurations use different load programs")
    mesh = build_mesh_from_config(cfg_a)
    ra = make_solver(cfg_a, mesh).run(cfg_a.load)
    rb = make_solver(cfg_b, mesh).run(cfg_b.load)
    return compare_reports(ra, rb, f"{cfg_a.formulation} / {cfg_b.formulation}")

"""Tetrahedral meshes with the node sets of a P2 / P1+bubble / P0 discretization.

A :class:`Mesh` stores vertices and positively oriented tetrahedra.  Edge
(mid-side) nodes, the P2 connectivity and the boundary facets are derived
from the connectivity; files never carry them.

P2 node numbering: vertices first (``0 .. nv-1``), then one node per unique
edge (``nv .. nv+ne-1``).  Local P2 order inside a tet follows
:data:`gradamage.interpolation.EDGES`.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .interpolation import EDGES

__all__ = [
    "BoundaryTag",
    "Mesh",
    "MeshFormatError",
    "OrientationError",
    "ClassificationError",
    "build_mesh",
    "generate_structured_cube",
    "generate_quarter_plate_with_hole",
    "import_mesh",
    "write_mesh",
    "classify_boundary",
    "cube_predicates",
    "plate_predicates",
]

TAG_KINDS = ("dirichlet-component", "neumann", "observation")

# faces[f] is the face opposite local vertex f, ordered so the normal points outward
# for a positively oriented tet
FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


class MeshFormatError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OrientationError(ValueError):
    def __init__(self, message, tet=None):
        super().__init__(message)
        self.tet = tet


class ClassificationError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryTag:
    name: str
    kind: str = "neumann"

    def __post_init__(self):
        if self.kind not in TAG_KINDS:
            raise ValueError(f"unknown boundary tag kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tetrahedral mesh.

    Attributes
    ----------
    vertices : (nv, 3) float
    tets : (ne, 4) int, positive orientation
    edges : (ned, 2) int, sorted vertex pairs; edge k carries P2 node ``nv + k``
    tet_edges : (ne, 6) int, edge index of each local edge
    facet_tet, facet_local, facet_tag : (nf,) int
        Boundary facets as (tet, local face, index into ``tags``).
    tags : tuple of BoundaryTag
    """

    vertices: np.ndarray
    tets: np.ndarray
    edges: np.ndarray
    tet_edges: np.ndarray
    facet_tet: np.ndarray
    facet_local: np.ndarray
    facet_tag: np.ndarray
    tags: Tuple[BoundaryTag, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_p2_nodes(self) -> int:
        return self.n_vertices + self.n_edges

    @property
    def edge_nodes(self) -> Dict[Tuple[int, int], int]:
        if "edge_nodes" not in self._cache:
            nv = self.n_vertices
            self._cache["edge_nodes"] = {
                (int(a), int(b)): nv + k for k, (a, b) in enumerate(self.edges)
            }
        return self._cache["edge_nodes"]

    @property
    def p2_connectivity(self) -> np.ndarray:
        """(ne, 10) P2 node ids: 4 vertices then the 6 edge nodes."""
        if "p2" not in self._cache:
            self._cache["p2"] = np.hstack([self.tets, self.n_vertices + self.tet_edges])
        return self._cache["p2"]

    @property
    def p2_coordinates(self) -> np.ndarray:
        mid = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        return np.vstack([self.vertices, mid])

    @property
    def element_coords(self) -> np.ndarray:
        return self.vertices[self.tets]

    @property
    def volumes(self) -> np.ndarray:
        X = self.element_coords
        return np.linalg.det(np.swapaxes(X[:, 1:] - X[:, :1], 1, 2)) / 6.0

    @property
    def element_centroids(self) -> np.ndarray:
        return self.element_coords.mean(axis=1)

    @property
    def boundary_facets(self) -> List[Tuple[int, int, str]]:
        return [
            (int(t), int(f), self.tags[g].name)
            for t, f, g in zip(self.facet_tet, self.facet_local, self.facet_tag)
        ]

    def facet_vertices(self) -> np.ndarray:
        """(nf, 3) vertex ids of the boundary facets (outward orientation)."""
        faces = np.asarray(FACES)
        return self.tets[self.facet_tet[:, None], faces[self.facet_local]]

    def facet_centroids(self) -> np.ndarray:
        return self.vertices[self.facet_vertices()].mean(axis=1)

    def tag_index(self, name: str) -> int:
        for i, t in enumerate(self.tags):
            if t.name == name:
                return i
        raise KeyError(f"no boundary tag named {name!r}")

    def tag_nodes(self, name: str) -> np.ndarray:
        """Sorted P2 node ids lying on the facets tagged ``name``."""
        sel = self.facet_tag == self.tag_index(name)
        tets = self.facet_tet[sel]
        loc = self.facet_local[sel]
        nodes = []
        p2 = self.p2_connectivity
        for f in range(4):
            verts = FACES[f]
            local = list(verts) + [
                4 + k for k, (a, b) in enumerate(EDGES) if a in verts and b in verts
            ]
            nodes.append(p2[tets[loc == f]][:, local].ravel())
        return np.unique(np.concatenate(nodes)) if nodes else np.zeros(0, dtype=int)

    def tag_vertices(self, name: str) -> np.ndarray:
        nodes = self.tag_nodes(name)
        return nodes[nodes < self.n_vertices]

    def max_edge_length(self) -> float:
        d = self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]]
        return float(np.sqrt((d * d).sum(axis=1)).max())


def _edges_of(tets: np.ndarray):
    pairs = np.stack([tets[:, [a, b]] for a, b in EDGES], axis=1)  # (ne, 6, 2)
    pairs = np.sort(pairs, axis=2).reshape(-1, 2)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 6)


def _boundary_of(tets: np.ndarray):
    ne = len(tets)
    faces = np.asarray(FACES)
    allf = np.sort(tets[:, faces].reshape(-1, 3), axis=1)
    _, inverse, counts = np.unique(allf, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise ValueError("non-manifold mesh: a face is shared by more than two tets")
    on_boundary = counts[inverse] == 1
    idx = np.flatnonzero(on_boundary)
    return idx // 4, idx % 4


def _signed_volumes(vertices, tets):
    X = vertices[tets]
    return np.linalg.det(np.swapaxes(X[:, 1:] - X[:, :1], 1, 2)) / 6.0


def build_mesh(vertices, tets, tags=None, facet_tag=None, orient: bool = False) -> Mesh:
    """Assemble a :class:`Mesh`, deriving edges and boundary facets.

    With ``orient=True`` negatively oriented tets are repaired by swapping two
    vertices; otherwise they raise :class:`OrientationError`.  Without tags,
    all boundary facets receive the single tag ``"boundary"``.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 3)
    tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
    if tets.size and (tets.min() < 0 or tets.max() >= len(vertices)):
        raise ValueError("tet references a vertex that does not exist")
    vol = _signed_volumes(vertices, tets)
    if orient:
        flip = vol < 0.0
        tets[flip] = tets[flip][:, [0, 2, 1, 3]]
        vol = np.abs(vol)
    bad = np.flatnonzero(vol <= 0.0)
    if bad.size:
        raise OrientationError(f"tet {bad[0]} has non-positive volume {vol[bad[0]]:.3e}", tet=int(bad[0]))
    edges, tet_edges = _edges_of(tets)
    ft, fl = _boundary_of(tets)
    if tags is None:
        tags = (BoundaryTag("boundary", "neumann"),)
        facet_tag = np.zeros(len(ft), dtype=np.int64)
    mesh = Mesh(
        vertices=vertices,
        tets=tets,
        edges=edges,
        tet_edges=tet_edges,
        facet_tet=ft,
        facet_local=fl,
        facet_tag=np.asarray(facet_tag, dtype=np.int64),
        tags=tuple(tags),
    )
    for arr in (mesh.vertices, mesh.tets, mesh.edges, mesh.tet_edges):
        arr.setflags(write=False)
    return mesh


def _hex_grid_to_tets(shape):
    """Split a logically structured hex grid of ``shape = (ni, nj, nk)`` cells into 5 tets each.

    Cells alternate between the two mirror-image splits so that face diagonals
    of neighbouring cells agree.  Returns vertex index quadruples (unoriented).
    """
    ni, nj, nk = shape

    def vid(i, j, k):
        return (i * (nj + 1) + j) * (nk + 1) + k

    even = [
        [(0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)],
        [(1, 0, 0), (0, 0, 0), (1, 1, 0), (1, 0, 1)],
        [(0, 1, 0), (0, 0, 0), (1, 1, 0), (0, 1, 1)],
        [(0, 0, 1), (0, 0, 0), (1, 0, 1), (0, 1, 1)],
        [(1, 1, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1)],
    ]
    odd = [[(1 - a, b, c) for a, b, c in tet] for tet in even]
    I, J, K = np.meshgrid(np.arange(ni), np.arange(nj), np.arange(nk), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    parity = (I + J + K) % 2
    out = np.empty((len(I), 5, 4), dtype=np.int64)
    for pattern, sel in ((even, parity == 0), (odd, parity == 1)):
        for t, tet in enumerate(pattern):
            for v, (a, b, c) in enumerate(tet):
                out[sel, t, v] = vid(I[sel] + a, J[sel] + b, K[sel] + c)
    return out.reshape(-1, 4)


def generate_structured_cube(subdivisions_per_axis: int, edge_length: float = 1.0) -> Mesh:
    """Uniform cube mesh, each cubic cell split into five tets.

    For ``subdivisions_per_axis = 2**s`` the mesh has ``(2**s+1)**3`` vertices
    and ``5 * 2**(3s)`` tets.  The six faces are tagged ``x0, x1, y0, y1, z0, z1``.
    """
    n = int(subdivisions_per_axis)
    if n <= 0 or n != subdivisions_per_axis:
        raise ValueError(f"subdivisions_per_axis must be a positive integer, got {subdivisions_per_axis}")
    if not edge_length > 0:
        raise ValueError("edge_length must be positive")
    x = np.linspace(0.0, edge_length, n + 1)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    mesh = build_mesh(verts, _hex_grid_to_tets((n, n, n)), orient=True)
    return classify_boundary(mesh, cube_predicates(edge_length))


def cube_predicates(edge_length: float = 1.0):
    tol = 1e-9 * edge_length
    preds = []
    for axis, name in enumerate("xyz"):
        preds.append((lambda p, a=axis: np.abs(p[:, a]) < tol, BoundaryTag(f"{name}0", "neumann")))
        preds.append(
            (lambda p, a=axis: np.abs(p[:, a] - edge_length) < tol, BoundaryTag(f"{name}1", "neumann"))
        )
    return preds


def generate_quarter_plate_with_hole(
    radius: float = 50.0,
    length: float = 100.0,
    thickness: float = 10.0,
    refinement: int = 0,
    base_radial: int = 2,
    base_angular: int = 2,
    layers: Optional[int] = None,
) -> Mesh:
    """Quarter of a plate with a central circular hole.

    Occupies ``[0, L] x [0, L] x [0, H]`` minus the cylinder ``x^2 + y^2 < R^2``.
    The region is a structured grid of two patches split along the diagonal;
    each logical hex is cut into five tets.  Every refinement step doubles the
    radial and angular cell counts; the number of layers through the thickness
    follows the in-plane size ``L / (2 m)`` unless ``layers`` is given.

    Tags: ``x0``, ``y0``, ``z0`` (Dirichlet components), ``top`` (``Y = L``,
    prescribed displacement and reaction recovery), ``right`` (``X = L``),
    ``front`` (``Z = H``) and ``hole``.
    """
    R, L, H = float(radius), float(length), float(thickness)
    if not R < L:
        raise ValueError(f"radius ({R}) must be smaller than length ({L})")
    if R <= 0 or H <= 0:
        raise ValueError("radius and thickness must be positive")
    if refinement < 0:
        raise ValueError("refinement must be >= 0")
    m = base_radial * 2**refinement
    n = base_angular * 2**refinement
    nz = max(1, int(round(H / (L / (2.0 * m))))) if layers is None else int(layers)
    if nz < 1:
        raise ValueError("layers must be >= 1")

    s = np.linspace(0.0, 1.0, m + 1)
    j = np.arange(2 * n + 1)
    t = np.where(j <= n, j / n, (2 * n - j) / n)
    theta = np.where(j <= n, t * np.pi / 4.0, np.pi / 2.0 - t * np.pi / 4.0)
    inner = R * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    outer = np.where((j <= n)[:, None], np.stack([np.full_like(t, L), L * t], 1), np.stack([L * t, np.full_like(t, L)], 1))
    inner[0, 1] = 0.0
    inner[-1, 0] = 0.0
    xy = (1.0 - s)[:, None, None] * inner[None] + s[:, None, None] * outer[None]  # (m+1, 2n+1, 2)
    z = np.linspace(0.0, H, nz + 1)
    verts = np.empty((m + 1, 2 * n + 1, nz + 1, 3))
    verts[..., :2] = xy[:, :, None, :]
    verts[..., 2] = z[None, None, :]
    mesh = build_mesh(verts.reshape(-1, 3), _hex_grid_to_tets((m, 2 * n, nz)), orient=True)
    return classify_boundary(mesh, plate_predicates(R, L, H))


def plate_predicates(radius: float, length: float, thickness: float):
    R, L, H = radius, length, thickness
    tol = 1e-9 * L

    def hole(p):
        r = np.hypot(p[:, 0], p[:, 1])
        inside = (p[:, 2] > tol) & (p[:, 2] < H - tol) & (p[:, 0] > tol) & (p[:, 1] > tol)
        return inside & (r <= R * (1.0 + 1e-9))

    return [
        (lambda p: np.abs(p[:, 0]) < tol, BoundaryTag("x0", "dirichlet-component")),
        (lambda p: np.abs(p[:, 1]) < tol, BoundaryTag("y0", "dirichlet-component")),
        (lambda p: np.abs(p[:, 2]) < tol, BoundaryTag("z0", "dirichlet-component")),
        (lambda p: np.abs(p[:, 1] - L) < tol, BoundaryTag("top", "observation")),
        (lambda p: np.abs(p[:, 0] - L) < tol, BoundaryTag("right", "neumann")),
        (lambda p: np.abs(p[:, 2] - H) < tol, BoundaryTag("front", "neumann")),
        (hole, BoundaryTag("hole", "neumann")),
    ]


def classify_boundary(
    mesh: Mesh, predicates: Sequence[Tuple[Callable[[np.ndarray], np.ndarray], BoundaryTag]]
) -> Mesh:
    """Tag every boundary facet by exactly one predicate on its centroid.

    Predicates receive an ``(nf, 3)`` array of facet centroids and return a
    boolean mask.  Facets matched by none or by several predicates raise
    :class:`ClassificationError`.
    """
    names = [tag.name for _, tag in predicates]
    if len(set(names)) != len(names):
        raise ClassificationError("boundary tag names must be unique")
    cent = mesh.facet_centroids()
    nf = len(cent)
    hits = np.zeros((len(predicates), nf), dtype=bool)
    for i, (pred, _) in enumerate(predicates):
        hits[i] = np.asarray(pred(cent), dtype=bool)
    count = hits.sum(axis=0) if predicates else np.zeros(nf, dtype=int)
    if np.any(count != 1):
        bad = np.flatnonzero(count != 1)
        kind = "uncovered" if count[bad[0]] == 0 else "multiply covered"
        raise ClassificationError(
            f"{bad.size} boundary facet(s) not covered exactly once; first is {kind} "
            f"at centroid {np.round(cent[bad[0]], 6).tolist()}"
        )
    facet_tag = hits.argmax(axis=0)
    empty = [names[i] for i in range(len(predicates)) if not hits[i].any()]
    if empty:
        # an unused tag is legal but usually a predicate typo
        import logging

        logging.getLogger(__name__).debug("boundary tags without facets: %s", empty)
    return replace(mesh, facet_tag=facet_tag, tags=tuple(tag for _, tag in predicates), _cache={})


# ---------------------------------------------------------------- file formats


def _read_simple(lines):
    it = iter(enumerate(lines, start=1))

    def next_content():
        for no, raw in it:
            s = raw.split("#", 1)[0].strip()
            if s:
                return no, s.split()
        raise MeshFormatError("unexpected end of file", line=len(lines) + 1)

    def header(word):
        no, tok = next_content()
        if len(tok) != 2 or tok[0].lower() != word:
            raise MeshFormatError(f"expected '{word} <count>'", line=no)
        try:
            return int(tok[1])
        except ValueError:
            raise MeshFormatError(f"bad count {tok[1]!r}", line=no) from None

    nn = header("nodes")
    ids, xyz = [], []
    for _ in range(nn):
        no, tok = next_content()
        if len(tok) != 4:
            raise MeshFormatError("node line needs 'id x y z'", line=no)
        try:
            ids.append(int(tok[0]))
            xyz.append([float(v) for v in tok[1:]])
        except ValueError:
            raise MeshFormatError("unparseable node line", line=no) from None
    index = {nid: i for i, nid in enumerate(ids)}
    nt = header("tets")
    tets = []
    for _ in range(nt):
        no, tok = next_content()
        if len(tok) != 5:
            raise MeshFormatError("tet line needs 'id v1 v2 v3 v4'", line=no)
        try:
            tets.append([index[int(v)] for v in tok[1:]])
        except (ValueError, KeyError):
            raise MeshFormatError("tet references unknown node", line=no) from None
    return np.array(xyz).reshape(-1, 3), np.array(tets, dtype=np.int64).reshape(-1, 4)


def _read_gmsh(lines):
    pos = 0
    n = len(lines)

    def nxt():
        nonlocal pos
        while pos < n and not lines[pos].strip():
            pos += 1
        if pos >= n:
            raise MeshFormatError("unexpected end of file", line=n + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    def ints(tok, no):
        try:
            return [int(v) for v in tok]
        except ValueError:
            raise MeshFormatError("expected integers", line=no) from None

    nodes: Dict[int, List[float]] = {}
    tets = []
    seen_format = False
    while True:
        while pos < n and not lines[pos].strip():
            pos += 1
        if pos >= n:
            break
        no, tok = nxt()
        section = tok[0]
        if section == "$MeshFormat":
            no, tok = nxt()
            if not tok or not tok[0].startswith("4"):
                raise MeshFormatError("only gmsh format version 4 is supported", line=no)
            if len(tok) > 1 and tok[1] != "0":
                raise MeshFormatError("binary gmsh files are not supported", line=no)
            seen_format = True
        elif section == "$Nodes":
            no, tok = nxt()
            nblocks = ints(tok, no)[0]
            for _ in range(nblocks):
                no, tok = nxt()
                _, _, parametric, count = ints(tok, no)[:4]
                if parametric:
                    raise MeshFormatError("parametric nodes are not supported", line=no)
                tags = []
                for _ in range(count):
                    no, tok = nxt()
                    tags.append(ints(tok, no)[0])
                for tag in tags:
                    no, tok = nxt()
                    try:
                        nodes[tag] = [float(v) for v in tok[:3]]
                    except ValueError:
                        raise MeshFormatError("unparseable coordinates", line=no) from None
                    if len(tok) < 3:
                        raise MeshFormatError("node needs three coordinates", line=no)
        elif section == "$Elements":
            no, tok = nxt()
            nblocks = ints(tok, no)[0]
            for _ in range(nblocks):
                no, tok = nxt()
                dim, _, etype, count = ints(tok, no)[:4]
                if dim == 3 and etype != 4:
                    raise MeshFormatError(f"unsupported 3D element type {etype}", line=no)
                for _ in range(count):
                    no, tok = nxt()
                    if dim == 3:
                        vals = ints(tok, no)
                        if len(vals) != 5:
                            raise MeshFormatError("tetrahedron needs 4 nodes", line=no)
                        tets.append(vals[1:])
        elif section.startswith("$End"):
            continue
        elif section.startswith("$"):
            # skip unknown sections (physical names, entities, ...)
            end = "$End" + section[1:]
            while True:
                no, tok = nxt()
                if tok and tok[0] == end:
                    break
        else:
            raise MeshFormatError(f"unexpected content {tok[0]!r}", line=no)
    if not seen_format:
        raise MeshFormatError("missing $MeshFormat section", line=1)
    tags = sorted(nodes)
    index = {t: i for i, t in enumerate(tags)}
    try:
        conn = [[index[v] for v in tet] for tet in tets]
    except KeyError as exc:
        raise MeshFormatError(f"element references unknown node {exc.args[0]}") from None
    return np.array([nodes[t] for t in tags]).reshape(-1, 3), np.array(conn, dtype=np.int64).reshape(-1, 4)


def import_mesh(path: Union[str, Path], format: str = "simple-nodes-elements") -> Mesh:
    """Read a tetrahedral mesh; edge nodes and boundary facets are synthesized."""
    lines = Path(path).read_text().splitlines()
    if format == "simple-nodes-elements":
        verts, tets = _read_simple(lines)
    elif format == "gmsh-ascii":
        verts, tets = _read_gmsh(lines)
    else:
        raise ValueError(f"unknown mesh format {format!r}")
    return build_mesh(verts, tets)


def write_mesh(mesh: Mesh, path: Union[str, Path], format: str = "simple-nodes-elements") -> None:
    path = Path(path)
    out = []
    if format == "simple-nodes-elements":
        out.append(f"nodes {mesh.n_vertices}")
        out += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(mesh.vertices.tolist())]
        out.append(f"tets {mesh.n_tets}")
        out += [f"{i + 1} " + " ".join(str(v + 1) for v in t) for i, t in enumerate(mesh.tets.tolist())]
    elif format == "gmsh-ascii":
        nv, ne = mesh.n_vertices, mesh.n_tets
        out += ["$MeshFormat", "4.1 0 8", "$EndMeshFormat", "$Nodes", f"1 {nv} 1 {nv}", f"3 1 0 {nv}"]
        out += [str(i + 1) for i in range(nv)]
        out += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
        out += ["$EndNodes", "$Elements", f"1 {ne} 1 {ne}", f"3 1 4 {ne}"]
        out += [f"{i + 1} " + " ".join(str(v + 1) for v in t) for i, t in enumerate(mesh.tets.tolist())]
        out.append("$EndElements")
    else:
        raise ValueError(f"unknown mesh format {format!r}")
    path.write_text("\n".join(out) + "\n")

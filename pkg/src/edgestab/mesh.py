"""Structured triangulations of the unit square and their edge topology.

Four families are provided:

``criss-cross``
    every grid cell split into four triangles through its centre.
``union-jack``
    alternating diagonals, so grid nodes have valence 4 or 8.
``three-directional``
    every cell split by the same (south-west to north-east) diagonal.
``non-symmetric``
    a sheared three-directional grid with checkerboard-flipped diagonals.
    Half of the cells are cut along their long diagonal, which makes the
    mesh neither point-symmetric around interior nodes nor Delaunay.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MESH_KINDS",
    "Mesh",
    "EdgeTopology",
    "NodeStencil",
    "MeshError",
    "canonical_kind",
    "build_mesh",
    "extract_edges",
    "build_stencils",
    "is_symmetric",
    "check_xu_zikatanov",
    "delaunay_incircle_check",
]

MESH_KINDS = ("criss-cross", "union-jack", "three-directional", "non-symmetric")

_KIND_ALIASES = {
    "a": "criss-cross",
    "b": "union-jack",
    "c": "three-directional",
    "d": "non-symmetric",
}

MAX_NODES = 5_000_000

# relative x-shift of interior grid nodes in the non-symmetric family
_SHEAR = 0.25


class MeshError(ValueError):
    """Raised for invalid or non-conforming triangulations."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """A conforming triangulation.

    ``nodes`` is (N, 2), ``triangles`` is (T, 3) and oriented counterclockwise,
    ``boundary`` is a boolean mask over nodes.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    level: int = 0
    kind: str = "custom"

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def h(self) -> float:
        """Largest triangle diameter."""
        p = self.nodes[self.triangles]
        sides = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return float(np.sqrt((sides**2).sum(axis=2)).max())

    def validate(self, domain_area: float | None = 1.0) -> None:
        areas = self.signed_areas()
        if np.any(areas <= 0):
            bad = np.flatnonzero(areas <= 0)
            raise MeshError(f"{len(bad)} triangles with non-positive signed area, first {bad[0]}")
        if domain_area is not None:
            total = areas.sum()
            if abs(total - domain_area) > 1e-12 * domain_area:
                raise MeshError(f"triangle areas sum to {total!r}, expected {domain_area!r}")


@dataclass(frozen=True, eq=False)
class EdgeTopology:
    """Interior and boundary edges of a mesh.

    Edges are stored as ``(i, j)`` with ``i < j``; the tangent points from
    ``i`` to ``j``. ``patches[e]`` holds the two triangles sharing interior
    edge ``e``; ``boundary_patches[e]`` the single triangle of boundary edge
    ``e``.
    """

    edges: np.ndarray
    lengths: np.ndarray
    tangents: np.ndarray
    patches: np.ndarray
    boundary_edges: np.ndarray
    boundary_patches: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def all_edges(self) -> np.ndarray:
        return np.concatenate([self.edges, self.boundary_edges])


@dataclass(frozen=True, eq=False)
class NodeStencil:
    """Neighbourhoods of interior nodes in compressed (CSR-like) form.

    For the k-th interior node ``nodes[k]``, its neighbours S_i are
    ``neighbors[ptr[k]:ptr[k+1]]`` and the connecting interior edges are
    ``edge_ids`` over the same slice. Incident triangles live in
    ``tri_ptr`` / ``triangles``.
    """

    nodes: np.ndarray
    ptr: np.ndarray
    neighbors: np.ndarray
    edge_ids: np.ndarray
    tri_ptr: np.ndarray
    triangles: np.ndarray
    n_mesh_nodes: int

    @property
    def owner(self) -> np.ndarray:
        """Mesh index of the centre node for every entry of ``neighbors``."""
        return np.repeat(self.nodes, np.diff(self.ptr))

    def position(self, i: int) -> int:
        k = np.searchsorted(self.nodes, i)
        if k >= len(self.nodes) or self.nodes[k] != i:
            raise KeyError(f"node {i} is not an interior node")
        return int(k)

    def S(self, i: int) -> np.ndarray:
        k = self.position(i)
        return self.neighbors[self.ptr[k] : self.ptr[k + 1]]

    def E(self, i: int) -> np.ndarray:
        k = self.position(i)
        return self.edge_ids[self.ptr[k] : self.ptr[k + 1]]

    def Omega(self, i: int) -> np.ndarray:
        k = self.position(i)
        return self.triangles[self.tri_ptr[k] : self.tri_ptr[k + 1]]

    def sizes(self) -> np.ndarray:
        return np.diff(self.ptr)


def canonical_kind(kind: str) -> str:
    kind = _KIND_ALIASES.get(kind, kind)
    if kind not in MESH_KINDS:
        raise MeshError(f"unknown mesh kind {kind!r}; expected one of {MESH_KINDS}")
    return kind


def _square_boundary(nodes: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    x, y = nodes[:, 0], nodes[:, 1]
    return (np.abs(x) < tol) | (np.abs(x - 1) < tol) | (np.abs(y) < tol) | (np.abs(y - 1) < tol)


def build_mesh(kind: str, level: int, max_nodes: int = MAX_NODES) -> Mesh:
    """Build a mesh of the unit square with ``2**level`` cells per side.

    Grid nodes are numbered row-major (x fastest); criss-cross cell centres
    are appended after the grid nodes in the same cell order.
    """
    kind = canonical_kind(kind)
    if int(level) != level or level < 1:
        raise MeshError(f"level must be an integer >= 1, got {level!r}")
    level = int(level)
    n = 2**level
    n_grid = (n + 1) ** 2
    n_total = n_grid + (n * n if kind == "criss-cross" else 0)
    if n_total > max_nodes:
        raise MeshError(f"level {level} needs {n_total} nodes, above the cap of {max_nodes}")

    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ci, cj = np.meshgrid(np.arange(n), np.arange(n))
    ci, cj = ci.ravel(), cj.ravel()
    sw = cj * (n + 1) + ci
    se = sw + 1
    ne = sw + n + 2
    nw = sw + n + 1

    if kind == "three-directional":
        forward = np.ones(n * n, dtype=bool)
    elif kind == "union-jack":
        forward = (ci + cj) % 2 == 0
    elif kind == "non-symmetric":
        forward = (ci + cj) % 2 == 0
        # shear: interior columns shift by +-SHEAR*h alternating by row
        gi = np.tile(np.arange(n + 1), n + 1)
        gj = np.repeat(np.arange(n + 1), n + 1)
        inner = (gi > 0) & (gi < n)
        nodes[inner, 0] += _SHEAR / n * np.where(gj[inner] % 2 == 0, 1.0, -1.0)
    else:
        forward = None

    if kind == "criss-cross":
        centers = np.column_stack([(ci + 0.5) / n, (cj + 0.5) / n])
        m = n_grid + np.arange(n * n)
        nodes = np.vstack([nodes, centers])
        triangles = np.concatenate(
            [
                np.column_stack([sw, se, m]),
                np.column_stack([se, ne, m]),
                np.column_stack([ne, nw, m]),
                np.column_stack([nw, sw, m]),
            ]
        )
    else:
        fwd = np.concatenate(
            [np.column_stack([sw, se, ne])[forward], np.column_stack([sw, ne, nw])[forward]]
        )
        bwd = np.concatenate(
            [np.column_stack([sw, se, nw])[~forward], np.column_stack([se, ne, nw])[~forward]]
        )
        triangles = np.concatenate([fwd, bwd])

    mesh = Mesh(
        nodes=nodes,
        triangles=triangles.astype(np.int64),
        boundary=_square_boundary(nodes),
        level=level,
        kind=kind,
    )
    mesh.validate()
    if kind == "non-symmetric":
        ok, _ = check_xu_zikatanov(mesh, extract_edges(mesh))
        if ok:
            raise MeshError("non-symmetric mesh construction failed to violate the Delaunay criterion")
    return mesh


def extract_edges(mesh: Mesh) -> EdgeTopology:
    """Split all triangle sides into interior and boundary edges."""
    tri = mesh.triangles
    T = len(tri)
    sides = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    owner = np.tile(np.arange(T), 3)
    sides.sort(axis=1)
    keys = sides[:, 0] * mesh.n_nodes + sides[:, 1]
    order = np.argsort(keys, kind="stable")
    uniq, first, counts = np.unique(keys[order], return_index=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("an edge is shared by more than two triangles")
    edge_nodes = sides[order][first]

    interior = counts == 2
    inner_edges = edge_nodes[interior]
    patches = np.column_stack([owner[order][first[interior]], owner[order][first[interior] + 1]])
    bnd_edges = edge_nodes[~interior]
    bnd_patches = owner[order][first[~interior]]

    if not np.all(mesh.boundary[bnd_edges]):
        raise MeshError("non-conforming mesh: a single-triangle side has an interior endpoint (hanging node)")

    vec = mesh.nodes[inner_edges[:, 1]] - mesh.nodes[inner_edges[:, 0]]
    lengths = np.hypot(vec[:, 0], vec[:, 1])
    if np.any(lengths <= 0):
        raise MeshError("zero-length edge")
    return EdgeTopology(
        edges=inner_edges,
        lengths=lengths,
        tangents=vec / lengths[:, None],
        patches=patches,
        boundary_edges=bnd_edges,
        boundary_patches=bnd_patches,
    )


def _csr_groups(keys: np.ndarray, values: np.ndarray, n: int):
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=n)
    ptr = np.concatenate([[0], np.cumsum(counts)])
    return ptr, values[order]


def build_stencils(mesh: Mesh, edges: EdgeTopology) -> NodeStencil:
    """Collect S_i, E_i and Omega_i for every interior node."""
    N = mesh.n_nodes
    e = edges.edges
    if e.size and e.max() >= N:
        raise MeshError("edge topology does not match the mesh")
    ids = np.arange(len(e))
    centre = np.concatenate([e[:, 0], e[:, 1]])
    other = np.concatenate([e[:, 1], e[:, 0]])
    eid = np.concatenate([ids, ids])

    keep = ~mesh.boundary[centre]
    centre, other, eid = centre[keep], other[keep], eid[keep]
    order = np.lexsort((other, centre))
    centre, other, eid = centre[order], other[order], eid[order]

    interior = mesh.interior_nodes
    counts = np.bincount(centre, minlength=N)[interior]
    ptr = np.concatenate([[0], np.cumsum(counts)])

    tcentre = mesh.triangles.ravel()
    tids = np.repeat(np.arange(mesh.n_triangles), 3)
    tkeep = ~mesh.boundary[tcentre]
    tcentre, tids = tcentre[tkeep], tids[tkeep]
    torder = np.lexsort((tids, tcentre))
    tcounts = np.bincount(tcentre, minlength=N)[interior]
    tri_ptr = np.concatenate([[0], np.cumsum(tcounts)])

    return NodeStencil(
        nodes=interior,
        ptr=ptr,
        neighbors=other,
        edge_ids=eid,
        tri_ptr=tri_ptr,
        triangles=tids[torder],
        n_mesh_nodes=N,
    )


def is_symmetric(mesh: Mesh, stencils: NodeStencil, tol: float = 1e-12) -> tuple[bool, list[int]]:
    """Check point symmetry of every interior stencil.

    Returns the verdict and the interior nodes where some neighbour offset
    has no mirrored counterpart.
    """
    owner = stencils.owner
    offsets = mesh.nodes[stencils.neighbors] - mesh.nodes[owner]
    violating = []
    for k, i in enumerate(stencils.nodes):
        d = offsets[stencils.ptr[k] : stencils.ptr[k + 1]]
        # pairwise |d_j + d_k|; each row needs a zero
        s = np.abs(d[:, None, :] + d[None, :, :]).max(axis=2)
        if not np.all(s.min(axis=1) <= tol):
            violating.append(int(i))
    return not violating, violating


def _opposite_vertices(mesh: Mesh, edges: EdgeTopology) -> np.ndarray:
    tri = mesh.triangles[edges.patches]  # (E, 2, 3)
    e = edges.edges[:, None, None]
    mask = (tri != e[..., 0]) & (tri != e[..., 1])
    if not np.all(mask.sum(axis=2) == 1):
        raise MeshError("inconsistent edge patches")
    return tri[mask].reshape(-1, 2)


@dataclass
class XuZikatanovReport:
    weights: np.ndarray
    violating: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def ok(self) -> bool:
        return len(self.violating) == 0


def check_xu_zikatanov(
    mesh: Mesh, edges: EdgeTopology, tol: float = 1e-12
) -> tuple[bool, XuZikatanovReport]:
    """Per-edge weight ``0.5 * sum cot(theta)`` over the angles opposite the edge.

    The mesh passes when every interior-edge weight is at least ``-tol``.
    """
    opp = _opposite_vertices(mesh, edges)
    P = mesh.nodes
    a = P[edges.edges[:, 0]][:, None, :] - P[opp]
    b = P[edges.edges[:, 1]][:, None, :] - P[opp]
    dot = (a * b).sum(axis=2)
    cross = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    if np.any(cross <= 0):
        raise MeshError("degenerate triangle (zero angle) found")
    weights = 0.5 * (dot / cross).sum(axis=1)
    report = XuZikatanovReport(weights=weights, violating=np.flatnonzero(weights < -tol))
    return report.ok, report


def delaunay_incircle_check(mesh: Mesh, edges: EdgeTopology, rtol: float = 1e-10) -> np.ndarray:
    """Locally-Delaunay flag per interior edge from the in-circle determinant.

    Independent of the cotangent route; used as a cross-check.
    """
    opp = _opposite_vertices(mesh, edges)
    P = mesh.nodes
    i, j = edges.edges[:, 0], edges.edges[:, 1]
    k, l = opp[:, 0], opp[:, 1]
    # orient (i, j, k) counterclockwise
    pi, pj, pk, pl = P[i], P[j], P[k], P[l]
    orient = (pj[:, 0] - pi[:, 0]) * (pk[:, 1] - pi[:, 1]) - (pj[:, 1] - pi[:, 1]) * (pk[:, 0] - pi[:, 0])
    flip = orient < 0
    pi2 = np.where(flip[:, None], pj, pi)
    pj2 = np.where(flip[:, None], pi, pj)
    rows = []
    for q in (pi2, pj2, pk):
        d = q - pl
        rows.append(np.column_stack([d[:, 0], d[:, 1], (d**2).sum(axis=1)]))
    M = np.stack(rows, axis=1)
    det = np.linalg.det(M)
    scale = edges.lengths**4
    # det > 0 means l lies strictly inside the circumcircle of (i, j, k)
    return det <= rtol * scale

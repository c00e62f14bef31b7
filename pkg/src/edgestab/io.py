"""Plain-text readers and writers: meshes, nodal fields, legacy VTK."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import Mesh, MeshError

__all__ = [
    "write_mesh",
    "read_mesh",
    "write_field",
    "read_field",
    "write_vtk",
    "metadata_line",
    "read_metadata",
]


def metadata_line(metadata: dict) -> str:
    """One ``# {json}`` comment line, keys sorted so output is byte-stable."""
    return "# " + json.dumps(metadata, sort_keys=True, default=str) + "\n"


def read_metadata(path) -> dict:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise ValueError(f"{path}: no metadata header")
    return json.loads(first[2:])


def write_mesh(mesh: Mesh, path) -> None:
    """``nodes N triangles T``, then ``x y tag`` (tag 1 on the boundary), then ``i j k``."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}\n")
        for (x, y), b in zip(mesh.nodes, mesh.boundary):
            fh.write(f"{x:.17g} {y:.17g} {int(b)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def read_mesh(path, kind: str = "file", level: int = -1) -> Mesh:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
        raise MeshError(f"{path}: bad header {lines[0]!r}")
    n, t = int(head[1]), int(head[3])
    if len(lines) < 1 + n + t:
        raise MeshError(f"{path}: expected {n} nodes and {t} triangles, file is truncated")
    node_rows = np.array([ln.split() for ln in lines[1 : 1 + n]], dtype=float).reshape(n, 3)
    tris = np.array([ln.split() for ln in lines[1 + n : 1 + n + t]], dtype=np.int64).reshape(t, 3)
    if tris.size and (tris.min() < 0 or tris.max() >= n):
        raise MeshError(f"{path}: triangle index out of range")
    mesh = Mesh(
        nodes=node_rows[:, :2].copy(),
        triangles=tris,
        boundary=node_rows[:, 2] != 0,
        level=level,
        kind=kind,
    )
    mesh.validate(domain_area=None)
    return mesh


def write_field(mesh: Mesh, values: np.ndarray, path, metadata: dict | None = None) -> None:
    """Nodal ``x y value`` triples sorted row-major (by y, then x)."""
    values = np.asarray(values, dtype=float)
    order = np.lexsort((mesh.nodes[:, 0], mesh.nodes[:, 1]))
    with open(path, "w") as fh:
        if metadata is not None:
            fh.write(metadata_line(metadata))
        fh.write("# x y value\n")
        for k in order:
            x, y = mesh.nodes[k]
            fh.write(f"{x:.16e} {y:.16e} {values[k]:.16e}\n")


def read_field(path) -> np.ndarray:
    """``(n, 3)`` array of the triples written by :func:`write_field`."""
    return np.loadtxt(path, comments="#", ndmin=2)


def write_vtk(mesh: Mesh, values: np.ndarray, path, name: str = "u", title: str = "edgestab field") -> None:
    """Legacy ASCII VTK unstructured grid with one point-data scalar."""
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.16e} {y:.16e} 0\n")
        fh.write(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")
        fh.write(f"CELL_TYPES {mesh.n_triangles}\n")
        fh.write("5\n" * mesh.n_triangles)
        fh.write(f"POINT_DATA {mesh.n_nodes}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in values:
            fh.write(f"{v:.16e}\n")

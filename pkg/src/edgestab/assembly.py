"""P1 Galerkin assembly with the three-edge-midpoint quadrature rule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, MeshError
from .problems import ProblemSpec

__all__ = [
    "DirichletLift",
    "p1_gradients",
    "assemble_galerkin",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "dirichlet_lift",
    "apply_dirichlet",
    "write_triplets",
]


def p1_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric gradients (T, 3, 2) and areas (T,) of every triangle."""
    p = mesh.nodes[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0):
        raise MeshError("degenerate or clockwise triangle in assembly")
    # grad(lambda_k) = rot(opposite side) / (2 area)
    opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-opp[..., 1], opp[..., 0]], axis=-1) / det[:, None, None]
    return grads, 0.5 * det


def _midpoints(mesh: Mesh) -> np.ndarray:
    """Midpoint of the side opposite each local vertex, shape (T, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    return 0.5 * np.stack([p[:, 1] + p[:, 2], p[:, 2] + p[:, 0], p[:, 0] + p[:, 1]], axis=1)


# value of local basis function i at midpoint opposite vertex k
_PSI_AT_MID = 0.5 * (1.0 - np.eye(3))


def _to_csr(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    N = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    grads, area = p1_gradients(mesh)
    return _to_csr(mesh, area[:, None, None] * np.einsum("tid,tjd->tij", grads, grads))


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    _, area = p1_gradients(mesh)
    # midpoint rule is exact here: area/6 on the diagonal, area/12 off it
    local = (area / 3)[:, None, None] * np.einsum("ik,jk->ij", _PSI_AT_MID, _PSI_AT_MID)[None]
    return _to_csr(mesh, local)


def assemble_galerkin(mesh: Mesh, spec: ProblemSpec) -> sp.csr_matrix:
    """Matrix of ``a(psi_j, psi_i)``; entry (i, j) couples test i with trial j."""
    grads, area = p1_gradients(mesh)
    mids = _midpoints(mesh)
    b = spec.velocity_at(mids[..., 0], mids[..., 1])  # (T, 3, 2)

    diffusion = spec.epsilon * area[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    # sum_k |K|/3 psi_i(m_k) b(m_k).grad(psi_j)
    convection = (area / 3)[:, None, None] * np.einsum("ik,tkd,tjd->tij", _PSI_AT_MID, b, grads)
    reaction = (spec.sigma * area / 3)[:, None, None] * np.einsum("ik,jk->ij", _PSI_AT_MID, _PSI_AT_MID)[None]
    return _to_csr(mesh, diffusion + convection + reaction)


def assemble_load(mesh: Mesh, spec: ProblemSpec) -> np.ndarray:
    _, area = p1_gradients(mesh)
    mids = _midpoints(mesh)
    f = np.broadcast_to(spec.source(mids[..., 0], mids[..., 1]), mids.shape[:2])
    local = (area / 3)[:, None] * (f @ _PSI_AT_MID.T)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


@dataclass(frozen=True, eq=False)
class DirichletLift:
    """Nodal interpolant of g on Dirichlet nodes, zero elsewhere."""

    values: np.ndarray
    mask: np.ndarray

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)

    @property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def dirichlet_lift(mesh: Mesh, spec: ProblemSpec) -> DirichletLift:
    mask = spec.dirichlet_mask(mesh)
    values = np.zeros(mesh.n_nodes)
    x, y = mesh.nodes[mask, 0], mesh.nodes[mask, 1]
    values[mask] = np.broadcast_to(spec.dirichlet_data(x, y), x.shape)
    return DirichletLift(values=values, mask=mask)


def apply_dirichlet(A: sp.spmatrix, rhs: np.ndarray, lift: DirichletLift):
    """Eliminate Dirichlet nodes, keeping the full index space.

    Dirichlet rows and columns become identity rows and zero columns, the
    right-hand side of free rows absorbs ``-A @ lift``.
    """
    A = sp.csr_matrix(A)
    free = (~lift.mask).astype(float)
    P = sp.diags(free)
    A_mod = (P @ A @ P + sp.diags(lift.mask.astype(float))).tocsr()
    rhs_mod = np.where(lift.mask, lift.values, rhs - A @ lift.values)
    return A_mod, rhs_mod


def write_triplets(A: sp.spmatrix, path) -> None:
    C = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v:.17g}\n")

"""Algebraic flux correction view of the edge stabilization.

From the Galerkin matrix ``A`` the artificial diffusion matrix ``D`` has
``d_ij = -max(a_ij, 0, a_ji)`` off the diagonal and zero row sums. The
limited scheme adds ``sum_j (1 - alpha_ij) d_ij (u_j - u_i)`` to row i, which
over interior edges equals ``sum_E (1 - alpha_ij) |d_ij| (u_i - u_j)(v_i - v_j)``.
Matching that with the stabilizer edge weight ``gamma0 h_E alpha_E`` fixes
``alpha_ij = 1 - gamma0 h_E alpha_E / |d_ij|``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import EdgeTopology
from .stabilizer import StabilizerParams

__all__ = [
    "AfcLimiters",
    "build_diffusion_matrix",
    "compute_fluxes",
    "edge_diffusion",
    "limiters_from_stabilizer",
    "afc_edge_form",
    "afc_node_pair_form",
    "afc_term",
]


def build_diffusion_matrix(A: sp.spmatrix) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    pattern = A.copy()
    pattern.data[:] = 1.0
    if (pattern - pattern.T).count_nonzero():
        raise ValueError("matrix has an asymmetric sparsity pattern")
    off = A - sp.diags(A.diagonal())
    # max(a_ij, a_ji, 0); absent entries count as 0
    m = off.maximum(off.T).maximum(0.0)
    D = -m.tocsr()
    D.eliminate_zeros()
    D = D - sp.diags(np.asarray(D.sum(axis=1)).ravel())
    return D.tocsr()


def compute_fluxes(D: sp.spmatrix, u: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix of ``f_ij = d_ij (u_j - u_i)`` for ``i != j``."""
    C = sp.coo_matrix(D)
    off = C.row != C.col
    r, c, d = C.row[off], C.col[off], C.data[off]
    return sp.csr_matrix((d * (u[c] - u[r]), (r, c)), shape=D.shape)


def edge_diffusion(D: sp.spmatrix, edges: np.ndarray) -> np.ndarray:
    """``d_ij`` looked up for every (i, j) row of ``edges``."""
    D = sp.csr_matrix(D)
    return np.asarray(D[edges[:, 0], edges[:, 1]]).ravel()


@dataclass(frozen=True, eq=False)
class AfcLimiters:
    """Per-interior-edge limiter data.

    ``feasible`` is False where the stabilizer weight cannot be written as
    ``(1 - alpha_ij) |d_ij|`` with ``alpha_ij`` in [0, 1]; the stored limiter
    there is the clamped value.
    """

    alpha: np.ndarray
    d: np.ndarray
    alpha_E: np.ndarray
    target: np.ndarray
    feasible: np.ndarray
    dirichlet: np.ndarray

    @property
    def infeasible(self) -> np.ndarray:
        return np.flatnonzero(~self.feasible)

    def census(self) -> dict:
        n = len(self.alpha)
        return {
            "edges": n,
            "feasible": int(self.feasible.sum()),
            "infeasible": int(n - self.feasible.sum()),
            "dirichlet_pairs": int(self.dirichlet.sum()),
            "zero_d_with_active_alpha": int(((self.d == 0) & (self.target > 0) & ~self.dirichlet).sum()),
        }

    def weights(self) -> np.ndarray:
        """``(1 - alpha_ij) |d_ij|`` per edge, the AFC counterpart of the stabilizer weight."""
        return (1.0 - self.alpha) * np.abs(self.d)

    def to_csv(self, edges: EdgeTopology, metadata: dict | None = None) -> str:
        buf = io.StringIO()
        if metadata is not None:
            buf.write("# " + json.dumps(metadata, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "h_E", "d_ij", "alpha_E", "alpha_ij", "feasible"])
        for k, (i, j) in enumerate(edges.edges):
            w.writerow(
                [i, j, f"{edges.lengths[k]:.16e}", f"{self.d[k]:.16e}", f"{self.alpha_E[k]:.16e}",
                 f"{self.alpha[k]:.16e}", int(self.feasible[k])]
            )
        return buf.getvalue()


def limiters_from_stabilizer(
    edges: EdgeTopology,
    alpha_E: np.ndarray,
    D: sp.spmatrix,
    params: StabilizerParams,
    dirichlet_mask: np.ndarray | None = None,
    tol: float = 1e-14,
) -> AfcLimiters:
    """Limiters reproducing ``gamma0 h_E alpha_E`` edge by edge.

    Edges joining two Dirichlet nodes get ``alpha_ij = 1``; they never enter
    a free-node residual.
    """
    d = edge_diffusion(D, edges.edges)
    target = params.gamma0 * edges.lengths * np.asarray(alpha_E, dtype=float)
    absd = np.abs(d)
    raw = np.ones_like(target)
    pos = absd > 0
    raw[pos] = 1.0 - target[pos] / absd[pos]
    feasible = np.where(pos, raw >= -tol, target == 0)
    raw[~pos & (target > 0)] = 0.0
    alpha = np.clip(raw, 0.0, 1.0)

    if dirichlet_mask is None:
        dirichlet = np.zeros(len(d), dtype=bool)
    else:
        dirichlet = dirichlet_mask[edges.edges[:, 0]] & dirichlet_mask[edges.edges[:, 1]]
    alpha[dirichlet] = 1.0
    feasible = feasible | dirichlet
    return AfcLimiters(alpha=alpha, d=d, alpha_E=np.asarray(alpha_E, dtype=float), target=target,
                       feasible=feasible, dirichlet=dirichlet)


def afc_edge_form(alpha_ij: np.ndarray, d: np.ndarray, edges: EdgeTopology, u: np.ndarray, v: np.ndarray) -> float:
    """``sum_E (1 - alpha_ij) |d_ij| h_E (d_t u, d_t v)_E`` for P1 fields."""
    i, j = edges.edges[:, 0], edges.edges[:, 1]
    # h_E (d_t u, d_t v)_E = (u_i - u_j)(v_i - v_j)
    return float(np.sum((1.0 - alpha_ij) * np.abs(d) * (u[i] - u[j]) * (v[i] - v[j])))


def _limited_matrix(alpha_ij, d, edges: EdgeTopology, n: int) -> sp.csr_matrix:
    i, j = edges.edges[:, 0], edges.edges[:, 1]
    vals = (1.0 - alpha_ij) * d
    return sp.csr_matrix((np.concatenate([vals, vals]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))


def afc_node_pair_form(alpha_ij, d, edges: EdgeTopology, u: np.ndarray, v: np.ndarray) -> float:
    """``sum_{i != j} (1 - alpha_ij) d_ij (u_j - u_i) v_i``, pairs outside ``edges`` fully limited."""
    W = sp.coo_matrix(_limited_matrix(alpha_ij, d, edges, len(u)))
    return float(np.sum(W.data * (u[W.col] - u[W.row]) * v[W.row]))


def afc_term(alpha_ij, d, edges: EdgeTopology, u: np.ndarray) -> np.ndarray:
    """Row vector ``sum_j (1 - alpha_ij) d_ij (u_j - u_i)`` for every node.

    The sign convention matches the stabilizer: this is the vector that is
    added to ``A u`` (so a local maximum receives a positive contribution).
    """
    W = _limited_matrix(alpha_ij, d, edges, len(u))
    return W @ u - np.asarray(W.sum(axis=1)).ravel() * u

"""Damped fixed-point iteration for the stabilized nonlinear system."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import DirichletLift, assemble_galerkin, assemble_load, dirichlet_lift
from .mesh import EdgeTopology, Mesh, NodeStencil, build_stencils, extract_edges
from .problems import ProblemSpec
from .stabilizer import StabilizerParams, edge_laplacian, edge_weights

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SingularSystemError",
    "LinearSolver",
    "Discretization",
    "solve_linearized",
    "residual",
    "fixed_point_solve",
]

log = logging.getLogger(__name__)

LINEAR_SOLVERS = ("direct", "iterative")


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    omega: float = 0.1
    residual_tol: float = 1e-8
    max_iters: int = 20000
    linear_solver: str = "direct"
    linear_tol: float = 1e-12

    def __post_init__(self):
        if not 0 < self.omega < 1:
            raise ValueError(f"omega must lie in (0, 1), got {self.omega!r}")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValueError(f"linear_solver must be one of {LINEAR_SOLVERS}")


@dataclass
class SolveReport:
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)
    converged: bool = False

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual"])
            for k, r in enumerate(self.history, start=1):
                w.writerow([k, f"{r:.17g}"])


@dataclass(eq=False)
class Discretization:
    """Everything about a (mesh, problem) pair that does not change between iterations."""

    mesh: Mesh
    spec: ProblemSpec
    edges: EdgeTopology
    stencils: NodeStencil
    A: sp.csr_matrix
    load: np.ndarray
    lift: DirichletLift

    @classmethod
    def build(cls, mesh: Mesh, spec: ProblemSpec, edges=None, stencils=None) -> "Discretization":
        edges = edges if edges is not None else extract_edges(mesh)
        stencils = stencils if stencils is not None else build_stencils(mesh, edges)
        return cls(
            mesh=mesh,
            spec=spec,
            edges=edges,
            stencils=stencils,
            A=assemble_galerkin(mesh, spec),
            load=assemble_load(mesh, spec),
            lift=dirichlet_lift(mesh, spec),
        )

    @property
    def free(self) -> np.ndarray:
        return self.lift.free

    def stabilizer_matrix(self, w: np.ndarray, params: StabilizerParams) -> sp.csr_matrix:
        return edge_laplacian(edge_weights(w, self.edges, self.stencils, params), self.edges, self.mesh.n_nodes)

    def impose(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        u[self.lift.mask] = self.lift.values[self.lift.mask]
        return u


class LinearSolver:
    """``direct``: sparse LU per system; ``iterative``: ILU-preconditioned GMRES."""

    def __init__(self, config: SolverConfig):
        self.config = config
        self.factorizations = 0

    def _factorize(self, K: sp.csc_matrix):
        try:
            lu = spla.splu(K)
        except RuntimeError as exc:
            raise SingularSystemError(
                f"factorization failed ({exc}); n={K.shape[0]}, nnz={K.nnz}, "
                f"min |diag|={np.abs(K.diagonal()).min():.3e}"
            ) from exc
        self.factorizations += 1
        return lu

    def _gmres(self, K, rhs, precond, x0=None, budget=200):
        M = spla.LinearOperator(K.shape, precond, dtype=float)
        iters = [0]

        def count(_):
            iters[0] += 1

        x, info = spla.gmres(
            K, rhs, x0=x0, M=M, rtol=self.config.linear_tol, atol=0.0,
            restart=budget, maxiter=1, callback=count, callback_type="pr_norm",
        )
        return x, info, iters[0]

    def solve(self, K: sp.csr_matrix, rhs: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        mode = self.config.linear_solver
        K = K.tocsc()
        if mode == "direct":
            x = self._factorize(K).solve(rhs)
        else:
            ilu = spla.spilu(K, drop_tol=1e-6, fill_factor=30)
            x, info, _ = self._gmres(K, rhs, ilu.solve, x0)
            if info != 0:
                raise SingularSystemError(f"GMRES did not converge (info={info})")
        if not np.all(np.isfinite(x)):
            raise SingularSystemError(f"non-finite solution; n={K.shape[0]}, nnz={K.nnz}")
        return x


def _solve_with(
    disc: Discretization, K: sp.csr_matrix, solver: LinearSolver, x0: np.ndarray | None = None
) -> np.ndarray:
    free = disc.free
    g = disc.lift.values
    rhs = disc.load - K @ g
    u = g.copy()
    u[free] = solver.solve(K[free][:, free], rhs[free], None if x0 is None else x0[free])
    return u


def solve_linearized(
    disc: Discretization,
    w: np.ndarray | None,
    params: StabilizerParams,
    config: SolverConfig = SolverConfig(),
    solver: LinearSolver | None = None,
) -> np.ndarray:
    """Solve ``a(u, v) + d_h(w; u, v) = (f, v)`` with ``u = g`` on Dirichlet nodes.

    ``w=None`` gives the plain Galerkin solution.
    """
    K = disc.A if w is None else disc.A + disc.stabilizer_matrix(w, params)
    return _solve_with(disc, K, solver or LinearSolver(config))


def residual(disc: Discretization, u: np.ndarray, params: StabilizerParams) -> np.ndarray:
    """Nonlinear residual ``(A + D_h(u)) u - F`` on the free nodes."""
    K = disc.A + disc.stabilizer_matrix(u, params)
    return (K @ u - disc.load)[disc.free]


def fixed_point_solve(
    mesh: Mesh | Discretization,
    spec: ProblemSpec | None = None,
    params: StabilizerParams = StabilizerParams(),
    config: SolverConfig = SolverConfig(),
    initial: np.ndarray | None = None,
    callback=None,
) -> tuple[np.ndarray, SolveReport]:
    """Iterate ``u <- u + omega * (u_tilde - u)`` until the residual is small.

    Starts from the Galerkin solution unless ``initial`` is given (its
    Dirichlet values are overwritten by the boundary data). The residual is
    taken at the updated iterate. Running out of iterations is reported, not
    raised. ``callback(k, u, r)`` is called after every iteration.
    """
    disc = mesh if isinstance(mesh, Discretization) else Discretization.build(mesh, spec)
    solver = LinearSolver(config)
    u = _solve_with(disc, disc.A, solver) if initial is None else disc.impose(initial)

    free = disc.free
    history: list[float] = []
    converged = False
    K = disc.A + disc.stabilizer_matrix(u, params)
    for k in range(1, config.max_iters + 1):
        u_tilde = _solve_with(disc, K, solver, x0=u)
        u = u + config.omega * (u_tilde - u)
        # the same matrix drives the next linearized solve
        K = disc.A + disc.stabilizer_matrix(u, params)
        r = float(np.linalg.norm((K @ u - disc.load)[free]))
        history.append(r)
        if callback is not None:
            callback(k, u, r)
        if r <= config.residual_tol:
            converged = True
            break
    if not converged:
        log.warning("fixed point iteration stopped after %d iterations, residual %.3e", k, history[-1])
    return u, SolveReport(iterations=len(history), residual=history[-1], history=history, converged=converged)

"""Problem data for steady convection-diffusion-reaction on the unit square."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh, extract_edges

__all__ = [
    "ProblemSpec",
    "smooth_problem",
    "rotating_layer_problem",
    "skew_advection_problem",
    "constant_problem",
    "PRESETS",
]

ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorFn = Callable[[np.ndarray, np.ndarray], tuple]


def _zero(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


def _everywhere(x, y):
    return np.ones_like(np.asarray(x, dtype=float), dtype=bool)


@dataclass
class ProblemSpec:
    """Coefficients and data of ``-eps*lap(u) + b.grad(u) + sigma*u = f``.

    ``dirichlet_boundary(x, y)`` marks which boundary points carry the
    Dirichlet condition ``u = dirichlet_data``; the remaining boundary nodes
    get the natural (homogeneous Neumann) condition. With ``inflow_only`` the
    Dirichlet nodes are instead the endpoints of boundary edges whose
    midpoint has ``b.n < 0``, so nodes where ``b.n`` merely vanishes stay free.
    """

    epsilon: float
    velocity: VectorFn
    sigma: float = 0.0
    source: ScalarFn = _zero
    dirichlet_data: ScalarFn = _zero
    dirichlet_boundary: ScalarFn = _everywhere
    exact: ScalarFn | None = None
    exact_grad: VectorFn | None = None
    name: str = "custom"
    metadata: dict = field(default_factory=dict)
    inflow_only: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma!r}")

    def dirichlet_mask(self, mesh: Mesh) -> np.ndarray:
        if self.inflow_only:
            mask = self._inflow_nodes(mesh)
        else:
            x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
            mask = mesh.boundary & np.asarray(self.dirichlet_boundary(x, y), dtype=bool)
        if not mask.any():
            raise ValueError("problem has no Dirichlet boundary nodes")
        return mask

    def _inflow_nodes(self, mesh: Mesh, tol: float = 1e-14) -> np.ndarray:
        topo = extract_edges(mesh)
        be = topo.boundary_edges
        P = mesh.nodes
        mid = 0.5 * (P[be[:, 0]] + P[be[:, 1]])
        t = P[be[:, 1]] - P[be[:, 0]]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        # orient away from the owning triangle
        centroid = P[mesh.triangles[topo.boundary_patches]].mean(axis=1)
        n *= np.sign(np.sum(n * (mid - centroid), axis=1))[:, None]
        bn = np.sum(self.velocity_at(mid[:, 0], mid[:, 1]) * n, axis=1)
        mask = np.zeros(mesh.n_nodes, dtype=bool)
        mask[be[bn < -tol].ravel()] = True
        return mask

    def velocity_at(self, x, y) -> np.ndarray:
        bx, by = self.velocity(x, y)
        shape = np.shape(x)
        return np.stack([np.broadcast_to(bx, shape), np.broadcast_to(by, shape)], axis=-1).astype(float)


def smooth_problem(epsilon: float = 1.0, sigma: float = 1.0, b=(2.0, 1.0)) -> ProblemSpec:
    """Manufactured solution ``sin(2 pi x) sin(2 pi y)`` with constant velocity."""
    bx, by = float(b[0]), float(b[1])
    k = 2 * math.pi

    def u(x, y):
        return np.sin(k * x) * np.sin(k * y)

    def grad(x, y):
        return k * np.cos(k * x) * np.sin(k * y), k * np.sin(k * x) * np.cos(k * y)

    def f(x, y):
        ux, uy = grad(x, y)
        return epsilon * 2 * k**2 * u(x, y) + bx * ux + by * uy + sigma * u(x, y)

    return ProblemSpec(
        epsilon=epsilon,
        velocity=lambda x, y: (np.full_like(x, bx, dtype=float), np.full_like(x, by, dtype=float)),
        sigma=sigma,
        source=f,
        dirichlet_data=u,
        exact=u,
        exact_grad=grad,
        name="smooth",
        metadata={"epsilon": epsilon, "sigma": sigma, "b": [bx, by]},
    )


def rotating_layer_problem(epsilon: float = 1e-5, inflow_value: Callable | None = None) -> ProblemSpec:
    """Rotating field ``b = (-y, x)`` with a discontinuous inflow profile.

    Dirichlet data on the inflow sides (bottom and right), natural outflow
    on the top and left sides.
    """

    def velocity(x, y):
        return -np.asarray(y, dtype=float), np.asarray(x, dtype=float)

    def g(x, y):
        return np.where(np.asarray(x) <= 0.5, 1.0, 0.0)

    return ProblemSpec(
        epsilon=epsilon,
        velocity=velocity,
        sigma=0.0,
        source=_zero,
        dirichlet_data=inflow_value or g,
        inflow_only=True,
        name="rotating-layer",
        metadata={"epsilon": epsilon, "sigma": 0.0, "b": "(-y, x)"},
    )


def skew_advection_problem(epsilon: float = 1e-5, angle: float = math.pi / 3) -> ProblemSpec:
    """Constant velocity at ``angle`` to the x-axis; ``u = 1`` on x = 0 and y = 1."""
    bx, by = math.cos(angle), math.sin(angle)

    def g(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.where((np.abs(x) < 1e-14) | (np.abs(y - 1) < 1e-14), 1.0, 0.0)

    return ProblemSpec(
        epsilon=epsilon,
        velocity=lambda x, y: (np.full_like(x, bx, dtype=float), np.full_like(x, by, dtype=float)),
        sigma=0.0,
        source=_zero,
        dirichlet_data=g,
        name="skew-advection",
        metadata={"epsilon": epsilon, "sigma": 0.0, "b": [bx, by]},
    )


def constant_problem(c: float, epsilon: float = 1.0, sigma: float = 1.0, b=(1.0, 0.5)) -> ProblemSpec:
    """Data for which ``u = c`` is the exact solution."""
    bx, by = b
    return ProblemSpec(
        epsilon=epsilon,
        velocity=lambda x, y: (np.full_like(x, bx, dtype=float), np.full_like(x, by, dtype=float)),
        sigma=sigma,
        source=lambda x, y: np.full_like(np.asarray(x, dtype=float), sigma * c),
        dirichlet_data=lambda x, y: np.full_like(np.asarray(x, dtype=float), c),
        exact=lambda x, y: np.full_like(np.asarray(x, dtype=float), c),
        exact_grad=lambda x, y: (_zero(x, y), _zero(x, y)),
        name="constant",
    )


PRESETS = {
    "smooth": smooth_problem,
    "rotating-layer": rotating_layer_problem,
    "skew-advection": skew_advection_problem,
}

"""Error norms, convergence orders, maximum-principle checks and property probes."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import assemble_stiffness, p1_gradients
from .mesh import EdgeTopology, Mesh, NodeStencil
from .problems import ProblemSpec
from .stabilizer import StabilizerParams, assemble_dh, compute_xi, dh_apply, edge_weights

__all__ = [
    "ErrorTriple",
    "ConvergenceReport",
    "DMPReport",
    "error_norms",
    "eoc",
    "dmp_check",
    "measure_lipschitz",
    "h1_seminorm",
    "layer_width",
    "xi_lipschitz_bound",
]

# Dunavant degree-4 rule: (barycentric coordinates, weight relative to area)
_A, _WA = 0.445948490915965, 0.223381589678011
_B, _WB = 0.091576213509771, 0.109951743655322
QUAD4_POINTS = np.array(
    [
        [_A, _A, 1 - 2 * _A],
        [_A, 1 - 2 * _A, _A],
        [1 - 2 * _A, _A, _A],
        [_B, _B, 1 - 2 * _B],
        [_B, 1 - 2 * _B, _B],
        [1 - 2 * _B, _B, _B],
    ]
)
QUAD4_WEIGHTS = np.array([_WA] * 3 + [_WB] * 3)


@dataclass
class ErrorTriple:
    l2: float
    h1_semi: float
    h_norm: float


def _edge_error_term(exact_grad, u_h, mesh, edges, weights, npts=4) -> float:
    """``sum_E c_E h_E int_E (d_t u - d_t u_h)^2`` with Gauss-Legendre on each edge."""
    s, w = np.polynomial.legendre.leggauss(npts)
    s, w = 0.5 * (s + 1), 0.5 * w
    i, j = edges.edges[:, 0], edges.edges[:, 1]
    P = mesh.nodes
    t = edges.tangents
    dt_uh = (u_h[j] - u_h[i]) / edges.lengths
    total = 0.0
    for sq, wq in zip(s, w):
        X = (1 - sq) * P[i] + sq * P[j]
        gx, gy = exact_grad(X[:, 0], X[:, 1])
        dt_u = gx * t[:, 0] + gy * t[:, 1]
        # gamma0 h_E^2 alpha_E = c_E h_E, and the edge integral adds one more h_E
        total += float(np.sum(weights * edges.lengths**2 * wq * (dt_u - dt_uh) ** 2))
    return total


def error_norms(
    exact,
    exact_grad,
    u_h: np.ndarray,
    mesh: Mesh,
    edges: EdgeTopology,
    stencils: NodeStencil,
    params: StabilizerParams,
    epsilon: float,
    sigma: float,
    stabilization_term: str = "edge",
) -> ErrorTriple:
    """L2, H1-seminorm and mesh-dependent norm of ``exact - u_h``.

    The stabilization part of the mesh norm is ``d_h(u_h; e, e)``. With
    ``stabilization_term="edge"`` the tangential derivative of the exact
    solution is integrated along every interior edge; ``"interpolant"``
    replaces ``e`` by ``I_h u - u_h`` with ``I_h`` the nodal interpolant.
    """
    grads, area = p1_gradients(mesh)
    tri = mesh.triangles
    P = mesh.nodes[tri]  # (T, 3, 2)
    X = np.einsum("qk,tkd->tqd", QUAD4_POINTS, P)
    uh_q = np.einsum("qk,tk->tq", QUAD4_POINTS, u_h[tri])
    guh = np.einsum("tkd,tk->td", grads, u_h[tri])

    u_q = exact(X[..., 0], X[..., 1])
    gx, gy = exact_grad(X[..., 0], X[..., 1])
    wq = area[:, None] * QUAD4_WEIGHTS[None, :]
    l2 = math.sqrt(float(np.sum(wq * (u_q - uh_q) ** 2)))
    h1 = math.sqrt(float(np.sum(wq * ((gx - guh[:, None, 0]) ** 2 + (gy - guh[:, None, 1]) ** 2))))

    if stabilization_term == "edge":
        dterm = _edge_error_term(exact_grad, u_h, mesh, edges, edge_weights(u_h, edges, stencils, params))
    elif stabilization_term == "interpolant":
        e_h = exact(mesh.nodes[:, 0], mesh.nodes[:, 1]) - u_h
        dterm = max(dh_apply(u_h, e_h, e_h, edges, stencils, params), 0.0)
    else:
        raise ValueError(f"unknown stabilization_term {stabilization_term!r}")
    h_norm = math.sqrt(sigma * l2**2 + epsilon * h1**2 + dterm)
    return ErrorTriple(l2=l2, h1_semi=h1, h_norm=h_norm)


def eoc(errors, h=None) -> list[float]:
    """Orders between consecutive entries; ``nan`` where an error is zero.

    With ``h`` omitted the mesh size is assumed to halve per entry.
    """
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise ValueError("need at least two levels")
    out = []
    for k in range(1, len(errors)):
        e0, e1 = errors[k - 1], errors[k]
        ratio = 2.0 if h is None else h[k - 1] / h[k]
        if e0 <= 0 or e1 <= 0:
            out.append(float("nan"))
        else:
            out.append(math.log(e0 / e1) / math.log(ratio))
    return out


@dataclass
class ConvergenceReport:
    levels: list[int]
    errors: list[ErrorTriple]
    metadata: dict = field(default_factory=dict)
    converged: list[bool] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)

    def orders(self, norm: str) -> list[float]:
        return eoc([getattr(e, norm) for e in self.errors])

    def rows(self) -> list[dict]:
        cols = {}
        for n in ("l2", "h1_semi", "h_norm"):
            cols[n] = [float("nan")] + (self.orders(n) if len(self.errors) > 1 else [])
        out = []
        for k, (lvl, e) in enumerate(zip(self.levels, self.errors)):
            row = {
                "level": lvl,
                "l2": e.l2,
                "ord_l2": cols["l2"][k],
                "h1": e.h1_semi,
                "ord_h1": cols["h1_semi"][k],
                "hnorm": e.h_norm,
                "ord_hnorm": cols["h_norm"][k],
            }
            if self.converged:
                row["converged"] = int(self.converged[k])
            if self.iterations:
                row["iterations"] = self.iterations[k]
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.metadata, sort_keys=True) + "\n")
        rows = self.rows()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6e}" if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def to_gnuplot(self) -> str:
        lines = ["# " + json.dumps(self.metadata, sort_keys=True), "# h l2 h1 hnorm"]
        for lvl, e in zip(self.levels, self.errors):
            lines.append(f"{2.0**-lvl:.6e} {e.l2:.6e} {e.h1_semi:.6e} {e.h_norm:.6e}")
        return "\n".join(lines) + "\n"


@dataclass
class DMPReport:
    undershoots: list[int]
    overshoots: list[int]
    boundary_min: float
    boundary_max: float
    global_min: float
    global_max: float
    bounds: tuple[float, float] | None = None
    out_of_bounds: list[int] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return len(self.undershoots) + len(self.overshoots) + len(self.out_of_bounds)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["violations"] = self.violations
        return d


def dmp_check(
    u_h: np.ndarray,
    mesh: Mesh,
    spec: ProblemSpec | None = None,
    bounds: tuple[float, float] | None = None,
    tol: float = 1e-10,
) -> DMPReport:
    """Interior nodes outside the boundary range, by the sign of the source.

    ``f >= 0`` (sampled at the nodes) enables the minimum check, ``f <= 0``
    the maximum check; both for ``f == 0`` or when ``spec`` is omitted.
    """
    u_h = np.asarray(u_h, dtype=float)
    interior = mesh.interior_nodes
    bvals = u_h[mesh.boundary]
    bmin, bmax = float(bvals.min()), float(bvals.max())
    check_min = check_max = True
    if spec is not None:
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        f = np.broadcast_to(spec.source(x, y), x.shape)
        check_min = bool(np.all(f >= 0))
        check_max = bool(np.all(f <= 0))
    under = interior[u_h[interior] < bmin - tol].tolist() if check_min else []
    over = interior[u_h[interior] > bmax + tol].tolist() if check_max else []
    oob = []
    if bounds is not None:
        lo, hi = bounds
        oob = np.flatnonzero((u_h < lo - tol) | (u_h > hi + tol)).tolist()
    return DMPReport(
        undershoots=under,
        overshoots=over,
        boundary_min=bmin,
        boundary_max=bmax,
        global_min=float(u_h.min()),
        global_max=float(u_h.max()),
        bounds=bounds,
        out_of_bounds=oob,
    )


def h1_seminorm(u: np.ndarray, K) -> float:
    return math.sqrt(max(float(u @ (K @ u)), 0.0))


def measure_lipschitz(
    mesh: Mesh,
    edges: EdgeTopology,
    stencils: NodeStencil,
    params: StabilizerParams,
    samples: int = 1000,
    seed: int = 42,
    test_field: str = "dual",
) -> float:
    """Largest observed ``|d(v;v,z) - d(w;w,z)| / (gamma0 h |v-w|_1 |z|_1)``.

    ``v`` and ``w`` are i.i.d. uniform nodal values in [-1, 1]. With
    ``test_field="random"`` so is ``z``; random ``z`` makes the numerator
    cancel and the ratio decays like ``h``. The default ``"dual"`` takes the
    supremum over ``z`` vanishing on the boundary in closed form: the
    numerator is ``r . z`` with ``r = D(v) v - D(w) w``, so the sup is
    ``sqrt(r K^{-1} r)`` on the interior block of the stiffness matrix.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if test_field not in ("dual", "random"):
        raise ValueError(f"unknown test_field {test_field!r}")
    rng = np.random.default_rng(seed)
    K = assemble_stiffness(mesh)
    inner = mesh.interior_nodes
    lu = spla.splu(K[inner][:, inner].tocsc()) if test_field == "dual" else None
    h = mesh.h
    best = 0.0
    N = mesh.n_nodes
    for _ in range(samples):
        v, w, z = rng.uniform(-1.0, 1.0, size=(3, N))
        dv = h1_seminorm(v - w, K)
        if dv <= 0:
            continue
        if lu is None:
            dz = h1_seminorm(z, K)
            if dz <= 0:
                continue
            num = abs(dh_apply(v, v, z, edges, stencils, params) - dh_apply(w, w, z, edges, stencils, params))
            ratio = num / (params.gamma0 * h * dv * dz)
        else:
            r = (assemble_dh(v, edges, stencils, params) @ v - assemble_dh(w, edges, stencils, params) @ w)[inner]
            ratio = math.sqrt(max(float(r @ lu.solve(r)), 0.0)) / (params.gamma0 * h * dv)
        best = max(best, ratio)
    return best


def xi_lipschitz_bound(v: np.ndarray, w: np.ndarray, stencils: NodeStencil) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-interior-node ``|xi_v - xi_w|``, its edge-sum bound, and a validity mask.

    The bound is ``4 sum|d(v-w)| / sum(|dv| + |dw|)`` over incident edges,
    using ``h_E |d_t u| = |u_i - u_j|``.
    """
    xv = compute_xi(v, stencils)[stencils.nodes]
    xw = compute_xi(w, stencils)[stencils.nodes]
    owner, nb = stencils.owner, stencils.neighbors
    k = np.repeat(np.arange(len(stencils.nodes)), stencils.sizes())
    n = len(stencils.nodes)
    sv = v[owner] - v[nb]
    sw = w[owner] - w[nb]
    # difference of edge jumps, not jump of v - w, so tiny w is not absorbed
    dvw = np.abs(sv - sw)
    dv, dw = np.abs(sv), np.abs(sw)
    top = np.bincount(k, weights=dvw, minlength=n)
    bottom = np.bincount(k, weights=dv + dw, minlength=n)
    valid = bottom > 0
    bound = np.full(n, np.inf)
    bound[valid] = 4 * top[valid] / bottom[valid]
    return np.abs(xv - xw), bound, valid


def layer_width(u: np.ndarray, region: np.ndarray | None = None, band=(0.1, 0.9)) -> int:
    """Number of nodes (inside ``region``) whose value lies strictly within ``band``."""
    u = np.asarray(u, dtype=float)
    inside = (u > band[0]) & (u < band[1])
    if region is not None:
        inside &= np.asarray(region, dtype=bool)
    return int(inside.sum())

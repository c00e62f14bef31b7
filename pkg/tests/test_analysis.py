import math

import numpy as np
import pytest

from edgestab.analysis import (
    QUAD4_POINTS,
    QUAD4_WEIGHTS,
    ConvergenceReport,
    ErrorTriple,
    dmp_check,
    eoc,
    error_norms,
    layer_width,
    measure_lipschitz,
)
from edgestab.mesh import build_mesh
from edgestab.problems import skew_advection_problem, smooth_problem
from edgestab.stabilizer import StabilizerParams, dh_apply, edge_weights

from conftest import topology

P = StabilizerParams(3.0, 4.0)


@pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (2, 1), (4, 0), (2, 2), (1, 3)])
def test_quadrature_exact_to_degree_four(a, b):
    # reference triangle (0,0), (1,0), (0,1): barycentric (l0, l1, l2) -> x = l1, y = l2
    x, y = QUAD4_POINTS[:, 1], QUAD4_POINTS[:, 2]
    approx = 0.5 * np.sum(QUAD4_WEIGHTS * x**a * y**b)
    exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
    assert approx == pytest.approx(exact, rel=1e-13)


def _affine():
    u = lambda x, y: 1.0 + 2.0 * x - 0.5 * y
    g = lambda x, y: (np.full_like(x, 2.0), np.full_like(x, -0.5))
    return u, g


def test_affine_interpolant_is_exact():
    mesh, edges, st_ = topology("criss-cross", 3)
    u, g = _affine()
    e = error_norms(u, g, u(*mesh.nodes.T), mesh, edges, st_, P, 1.0, 1.0)
    assert e.l2 <= 1e-12 and e.h1_semi <= 1e-12 and e.h_norm <= 1e-12


def test_zero_discrete_solution_norms():
    mesh, edges, st_ = topology("three-directional", 5)
    spec = smooth_problem()
    e = error_norms(spec.exact, spec.exact_grad, np.zeros(mesh.n_nodes), mesh, edges, st_, P, 1.0, 1.0)
    assert e.l2 == pytest.approx(0.5, rel=1e-4)
    assert e.h1_semi == pytest.approx(math.sqrt(2) * math.pi, rel=1e-4)
    # zero field: xi = 0 everywhere, no stabilization part
    assert e.h_norm == pytest.approx(math.sqrt(e.l2**2 + e.h1_semi**2), rel=1e-12)


def _edge_term_brute(spec, u_h, mesh, edges, weights, n=2001):
    """Composite Simpson along every edge."""
    s = np.linspace(0, 1, n)
    w = np.ones(n)
    w[1:-1:2], w[2:-1:2] = 4, 2
    w /= 3 * (n - 1)
    total = 0.0
    for k, (i, j) in enumerate(edges.edges):
        a, b = mesh.nodes[i], mesh.nodes[j]
        h = edges.lengths[k]
        t = (b - a) / h
        X = a[None, :] + s[:, None] * (b - a)[None, :]
        gx, gy = spec.exact_grad(X[:, 0], X[:, 1])
        du = gx * t[0] + gy * t[1] - (u_h[j] - u_h[i]) / h
        total += weights[k] * h * h * np.sum(w * du**2)
    return total


def test_h_norm_edge_term_exact_for_polynomials(rng):
    # cubic u: the squared tangential derivative has degree 4, integrated exactly on each edge
    mesh, edges, st_ = topology("three-directional", 2)
    u = lambda x, y: x**3 - 2 * x * y**2 + y
    grad = lambda x, y: (3 * x**2 - 2 * y**2, -4 * x * y + 1)
    spec = smooth_problem(epsilon=0.3, sigma=0.0)
    spec.exact, spec.exact_grad = u, grad
    u_h = u(*mesh.nodes.T) + 0.05 * rng.uniform(-1, 1, mesh.n_nodes)
    e = error_norms(u, grad, u_h, mesh, edges, st_, P, 0.3, 0.0)
    dterm = _edge_term_brute(spec, u_h, mesh, edges, edge_weights(u_h, edges, st_, P))
    assert e.h_norm**2 - 0.3 * e.h1_semi**2 == pytest.approx(dterm, rel=1e-10)


def test_h_norm_edge_term_against_simpson(rng):
    mesh, edges, st_ = topology("three-directional", 4)
    spec = smooth_problem(epsilon=0.3, sigma=0.0)
    u_h = spec.exact(*mesh.nodes.T) + 0.05 * rng.uniform(-1, 1, mesh.n_nodes)
    e = error_norms(spec.exact, spec.exact_grad, u_h, mesh, edges, st_, P, 0.3, 0.0)
    dterm = _edge_term_brute(spec, u_h, mesh, edges, edge_weights(u_h, edges, st_, P))
    assert e.h_norm**2 - 0.3 * e.h1_semi**2 == pytest.approx(dterm, rel=1e-6)


def test_h_norm_interpolant_variant(rng):
    mesh, edges, st_ = topology("three-directional", 3)
    spec = smooth_problem(epsilon=0.2, sigma=0.0)
    u_h = spec.exact(*mesh.nodes.T) + 0.05 * rng.uniform(-1, 1, mesh.n_nodes)
    e = error_norms(spec.exact, spec.exact_grad, u_h, mesh, edges, st_, P, 0.2, 0.0, stabilization_term="interpolant")
    eh = spec.exact(*mesh.nodes.T) - u_h
    assert e.h_norm**2 == pytest.approx(0.2 * e.h1_semi**2 + dh_apply(u_h, eh, eh, edges, st_, P), rel=1e-12)
    with pytest.raises(ValueError):
        error_norms(spec.exact, spec.exact_grad, u_h, mesh, edges, st_, P, 0.2, 0.0, stabilization_term="nodal")


def test_h_norm_dominates_weighted_parts(rng):
    mesh, edges, st_ = topology("criss-cross", 2)
    spec = smooth_problem()
    for _ in range(10):
        u_h = rng.uniform(-1, 1, mesh.n_nodes)
        e = error_norms(spec.exact, spec.exact_grad, u_h, mesh, edges, st_, P, 0.7, 1.3)
        assert e.h_norm**2 >= 1.3 * e.l2**2 + 0.7 * e.h1_semi**2 - 1e-12


def test_eoc_examples():
    assert eoc([0.4, 0.1]) == [pytest.approx(2.0)]
    assert round(eoc([0.16557, 0.03268])[0], 2) == 2.34
    assert eoc([0.3, 0.3]) == [0.0]
    assert math.isnan(eoc([0.1, 0.0])[0])
    assert eoc([1.0, 1 / 3], h=[0.3, 0.1]) == [pytest.approx(1.0)]
    with pytest.raises(ValueError):
        eoc([0.1])


def test_convergence_report_layout():
    rep = ConvergenceReport(
        levels=[3, 4],
        errors=[ErrorTriple(0.4, 2.0, 1.0), ErrorTriple(0.1, 1.0, 0.5)],
        metadata={"kind": "three-directional"},
        converged=[True, False],
        iterations=[10, 20],
    )
    rows = rep.rows()
    assert math.isnan(rows[0]["ord_l2"])
    assert rows[1]["ord_l2"] == pytest.approx(2.0)
    assert rows[1]["ord_h1"] == pytest.approx(1.0)
    assert rows[1]["converged"] == 0
    gp = rep.to_gnuplot().splitlines()
    assert gp[0].startswith("# ") and len(gp) == 4
    assert float(gp[2].split()[0]) == 0.125


def test_dmp_constant_field():
    mesh = build_mesh("three-directional", 3)
    rep = dmp_check(np.full(mesh.n_nodes, 0.3), mesh, skew_advection_problem(), bounds=(0, 1))
    assert rep.ok and rep.violations == 0


def test_dmp_detects_interior_extrema():
    mesh = build_mesh("three-directional", 3)
    u = np.full(mesh.n_nodes, 0.5)
    lo, hi = mesh.interior_nodes[[3, 7]]
    u[lo], u[hi] = -0.1, 1.2
    rep = dmp_check(u, mesh, skew_advection_problem(), bounds=(0, 1))
    assert rep.undershoots == [lo] and rep.overshoots == [hi]
    assert sorted(rep.out_of_bounds) == sorted([lo, hi])
    assert rep.global_min == -0.1 and rep.global_max == 1.2
    # pointwise source sign decides which half of the check applies
    pos = smooth_problem(epsilon=1.0, sigma=1.0, b=(0.0, 0.0))
    pos.source = lambda x, y: np.ones_like(x)
    rep = dmp_check(u, mesh, pos)
    assert rep.undershoots == [lo] and rep.overshoots == []


def test_dmp_tolerance():
    mesh = build_mesh("three-directional", 2)
    u = np.zeros(mesh.n_nodes)
    u[mesh.interior_nodes[0]] = -5e-11
    assert dmp_check(u, mesh).ok
    u[mesh.interior_nodes[0]] = -2e-10
    assert not dmp_check(u, mesh).ok


def test_lipschitz_measurement():
    mesh, edges, st_ = topology("three-directional", 3)
    a = measure_lipschitz(mesh, edges, st_, P, samples=20, seed=5)
    b = measure_lipschitz(mesh, edges, st_, P, samples=20, seed=5)
    assert a == b and 0 < a < np.inf
    r = measure_lipschitz(mesh, edges, st_, P, samples=20, seed=5, test_field="random")
    assert 0 < r < np.inf
    with pytest.raises(ValueError):
        measure_lipschitz(mesh, edges, st_, P, samples=0)
    with pytest.raises(ValueError):
        measure_lipschitz(mesh, edges, st_, P, test_field="sobolev")


def test_lipschitz_trivial_cases(rng):
    mesh, edges, st_ = topology("three-directional", 3)
    v, z = rng.uniform(-1, 1, (2, mesh.n_nodes))
    assert dh_apply(v, v, z, edges, st_, P) - dh_apply(v, v, z, edges, st_, P) == 0.0
    assert dh_apply(v, v, np.full(mesh.n_nodes, 2.0), edges, st_, P) == 0.0


def test_layer_width():
    u = np.array([0.0, 0.05, 0.1, 0.5, 0.9, 0.95, 1.0])
    assert layer_width(u) == 1
    assert layer_width(u, band=(0.0, 1.0)) == 5
    assert layer_width(u, region=np.array([0, 0, 0, 0, 0, 0, 1])) == 0

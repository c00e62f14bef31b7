"""Acceptance runs, one test per criterion, each printing a PASS/FAIL line."""
import time

import numpy as np
import pytest

from edgestab.afc import build_diffusion_matrix, compute_fluxes
from edgestab.analysis import measure_lipschitz, xi_lipschitz_bound
from edgestab.experiments import build_config, run_afc_compare, run_convergence, run_layer
from edgestab.mesh import MESH_KINDS, build_mesh, check_xu_zikatanov, delaunay_incircle_check
from edgestab.problems import smooth_problem
from edgestab.solver import Discretization, fixed_point_solve
from edgestab.stabilizer import StabilizerParams, assemble_dh, compute_alpha, compute_xi, edge_coefficients

from conftest import SYMMETRIC_KINDS, topology


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number} ({title}): {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"criterion {number}: {detail}"

    return emit


def _finest(rep):
    return rep.orders("l2")[-1], rep.orders("h1_semi")[-1], rep.orders("h_norm")[-1]


def _smooth(**over):
    base = {"problem": "smooth", "level_min": 3, "level_max": 7}
    base.update(over)
    return build_config(base)


@pytest.mark.slow
def test_criterion_1_diffusion_dominated_orders(report):
    t0 = time.perf_counter()
    rep = run_convergence(_smooth(epsilon=1.0), write=False)
    elapsed = time.perf_counter() - t0
    l2, h1, hn = _finest(rep)
    ok = all(rep.converged) and 1.8 <= l2 <= 2.6 and 0.9 <= h1 <= 1.1 and 0.9 <= hn <= 1.2 and elapsed < 120
    report(1, "eps=1 orders", ok, f"L2 {l2:.3f} in [1.8,2.6], H1 {h1:.3f} in [0.9,1.1], "
           f"h-norm {hn:.3f} in [0.9,1.2], {elapsed:.1f}s < 120s")


@pytest.mark.slow
def test_criterion_2_convection_dominated_orders(report):
    rep = run_convergence(_smooth(epsilon=1e-6), write=False)
    l2, _, hn = _finest(rep)
    ok = all(rep.converged) and l2 >= 2.0 and hn >= 2.0
    report(2, "eps=1e-6 orders", ok, f"L2 {l2:.3f} >= 2.0, h-norm {hn:.3f} >= 2.0, iterations {rep.iterations}")


@pytest.mark.slow
def test_criterion_3_non_symmetric_mesh_orders(report):
    rep = run_convergence(_smooth(epsilon=1.0, kind="non-symmetric"), write=False)
    l2, h1, _ = _finest(rep)
    ok = all(rep.converged) and 0.9 <= h1 <= 1.1 and l2 >= 1.0
    report(3, "non-symmetric mesh orders", ok, f"H1 {h1:.3f} in [0.9,1.1], L2 {l2:.3f} >= 1.0")


def test_criterion_4_maximum_principle(report):
    lines = []
    ok = True
    for problem, gamma0 in (("rotating-layer", 1.0), ("skew-advection", 0.75)):
        cfg = build_config({"problem": problem, "level": 5, "p_values": "1 4"})
        assert cfg.gamma0 == gamma0
        rep = run_layer(cfg, write=False)
        widths = {r.p: r.width for r in rep.results}
        ok &= widths[4.0] <= widths[1.0]
        for r in rep.results:
            bad = len(r.dmp["undershoots"]) + len(r.dmp["overshoots"])
            ok &= r.converged and bad == 0
            lines.append(f"{problem} p={r.p:g}: {bad} violations, range [{r.dmp['global_min']:.2e}, "
                         f"{r.dmp['global_max']:.2e}], layer width {r.width}")
    report(4, "discrete maximum principle", ok, "; ".join(lines))


def test_criterion_5_afc_equivalence(report):
    cfg = _smooth(epsilon=1.0, level_min=3, level_max=3)
    res = run_afc_compare(cfg, write=False)
    ok = res.converged and res.max_edge_discrepancy <= 1e-12 and res.max_residual_discrepancy <= 1e-12
    report(5, "AFC equivalence", ok, f"edge gap {res.max_edge_discrepancy:.2e}, residual gap "
           f"{res.max_residual_discrepancy:.2e} over {res.nodes_compared} nodes, census {res.census}")


def test_criterion_6_property_suites(report):
    rng = np.random.default_rng(6)
    fails = []
    mesh, edges, st_ = topology("three-directional", 3)
    N = mesh.n_nodes

    params = StabilizerParams(3.0, 4.0)
    for _ in range(1000):
        w = rng.uniform(-1, 1, N)
        c = edge_coefficients(w, edges, st_, params)
        if not (np.all((c.xi >= 0) & (c.xi <= 1)) and np.all((c.alpha >= 0) & (c.alpha <= 1))):
            fails.append("xi/alpha range")
            break

    for _ in range(1000):
        v, w = rng.uniform(-1, 1, (2, N))
        diff, bound, valid = xi_lipschitz_bound(v, w, st_)
        if np.any(diff[valid] > bound[valid] + 1e-12):
            fails.append("xi Lipschitz bound")
            break

    for kind in SYMMETRIC_KINDS:
        for level in (2, 3, 4):
            m, e, s = topology(kind, level)
            inner = ~m.boundary[e.edges].any(axis=1)
            for _ in range(20):
                a, b, c = rng.uniform(-3, 3, 3)
                xi = compute_xi(a + b * m.nodes[:, 0] + c * m.nodes[:, 1], s)
                if compute_alpha(xi, e, StabilizerParams(1.0, 1.0))[inner].max(initial=0.0) > 1e-10:
                    fails.append(f"linearity preservation on {kind}")

    for _ in range(100):
        w, u = rng.uniform(-1, 1, (2, N))
        D = assemble_dh(w, edges, st_, params)
        if np.abs(np.asarray(D.sum(axis=1))).max() > 1e-13 or u @ (D @ u) < -1e-13 or (D - D.T).count_nonzero():
            fails.append("D_h PSD / row sums")
            break

    A = Discretization.build(topology("three-directional", 2)[0], smooth_problem(epsilon=1e-3)).A
    Dafc = build_diffusion_matrix(A)
    for _ in range(100):
        u = rng.uniform(-1, 1, A.shape[0])
        F = compute_fluxes(Dafc, u)
        if abs(F + F.T).max() > 0 or np.abs(np.asarray(F.sum(axis=1)).ravel() - Dafc @ u).max() > 1e-13:
            fails.append("flux identities")
            break

    for kind in MESH_KINDS:
        for level in (1, 2, 3):
            m, e, _ = topology(kind, level)
            ok_xz, rep = check_xu_zikatanov(m, e)
            if not np.array_equal(rep.weights >= -1e-12, delaunay_incircle_check(m, e)):
                fails.append(f"Xu-Zikatanov vs in-circle on {kind} level {level}")

    report(6, "property suites", not fails, "all suites hold" if not fails else ", ".join(sorted(set(fails))))


def test_criterion_7_uniqueness(report):
    disc = Discretization.build(build_mesh("three-directional", 5), smooth_problem(epsilon=1.0))
    params = StabilizerParams(3.0, 4.0)
    u_gal, r1 = fixed_point_solve(disc, params=params)
    u_zero, r2 = fixed_point_solve(disc, params=params, initial=np.zeros(disc.mesh.n_nodes))
    gap = float(np.abs(u_gal - u_zero).max())
    ok = r1.converged and r2.converged and gap <= 1e-7
    report(7, "uniqueness", ok, f"max |u_galerkin_start - u_zero_start| = {gap:.2e} <= 1e-7 "
           f"({r1.iterations} / {r2.iterations} iterations)")


def test_criterion_8_lipschitz_stability(report):
    params = StabilizerParams(3.0, 4.0)
    values = {}
    for level in (3, 4, 5):
        mesh, edges, st_ = topology("three-directional", level)
        values[level] = measure_lipschitz(mesh, edges, st_, params, samples=1000, seed=42)
    ratio = max(values.values()) / min(values.values())
    ok = np.isfinite(ratio) and ratio < 2.0
    report(8, "Lipschitz stability", ok, f"constants {({k: round(v, 4) for k, v in values.items()})}, "
           f"max/min {ratio:.3f} < 2")

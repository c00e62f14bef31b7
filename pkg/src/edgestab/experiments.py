"""Configured experiment runs: convergence tables, layer problems, AFC comparison, audits."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as eio
from .afc import afc_term, build_diffusion_matrix, limiters_from_stabilizer
from .analysis import ConvergenceReport, dmp_check, error_norms, layer_width, measure_lipschitz
from .mesh import (
    MESH_KINDS,
    build_mesh,
    build_stencils,
    canonical_kind,
    check_xu_zikatanov,
    delaunay_incircle_check,
    extract_edges,
    is_symmetric,
)
from .problems import ProblemSpec, rotating_layer_problem, skew_advection_problem, smooth_problem
from .solver import LINEAR_SOLVERS, Discretization, SolverConfig, fixed_point_solve
from .stabilizer import StabilizerParams, edge_coefficients, edge_laplacian

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESET_DEFAULTS",
    "THREADS_ENV",
    "thread_count",
    "load_config_file",
    "build_config",
    "make_problem",
    "run_convergence",
    "run_layer",
    "run_afc_compare",
    "run_mesh_audit",
    "run_lipschitz",
]

log = logging.getLogger(__name__)

THREADS_ENV = "EDGESTAB_THREADS"

PROBLEMS = ("smooth", "rotating-layer", "skew-advection", "custom")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass
class ExperimentConfig:
    problem: str = "smooth"
    kind: str = "three-directional"
    level_min: int = 3
    level_max: int = 7
    epsilon: float = 1.0
    sigma: float = 1.0
    b: tuple[float, float] = (2.0, 1.0)
    gamma0: float = 3.0
    p: float = 4.0
    p_values: tuple[float, ...] = (1.0, 4.0)
    boundary_xi: float = 0.0
    omega: float = 0.1
    residual_tol: float = 1e-8
    max_iters: int = 20000
    linear_solver: str = "direct"
    hnorm_term: str = "edge"
    samples: int = 1000
    seed: int = 42
    output: str = "out"

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.kind not in MESH_KINDS:
            raise ConfigError(f"kind must be one of {MESH_KINDS}, got {self.kind!r}")
        if not 0 <= self.level_min <= self.level_max:
            raise ConfigError(f"need 0 <= level_min <= level_max, got {self.level_min}..{self.level_max}")
        if len(self.b) != 2:
            raise ConfigError("b needs two components")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ConfigError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if self.hnorm_term not in ("edge", "interpolant"):
            raise ConfigError("hnorm_term must be 'edge' or 'interpolant'")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if not self.p_values:
            raise ConfigError("p_values is empty")
        try:
            self.stabilizer()
            for p in self.p_values:
                StabilizerParams(self.gamma0, p, self.boundary_xi)
            self.solver()
            make_problem(self)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def levels(self) -> list[int]:
        return list(range(self.level_min, self.level_max + 1))

    def stabilizer(self, p: float | None = None) -> StabilizerParams:
        return StabilizerParams(gamma0=self.gamma0, p=self.p if p is None else p, boundary_xi=self.boundary_xi)

    def solver(self) -> SolverConfig:
        return SolverConfig(
            omega=self.omega,
            residual_tol=self.residual_tol,
            max_iters=self.max_iters,
            linear_solver=self.linear_solver,
        )

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["b"] = list(self.b)
        d["p_values"] = list(self.p_values)
        return d


# parameters each preset pins; keys a preset omits keep the dataclass default
PRESET_DEFAULTS: dict[str, dict] = {
    "smooth": dict(kind="three-directional", level_min=3, level_max=7, epsilon=1.0, sigma=1.0,
                   b=(2.0, 1.0), gamma0=3.0, p=4.0),
    "rotating-layer": dict(kind="three-directional", level_min=5, level_max=5, epsilon=1e-5, sigma=0.0,
                           gamma0=1.0, p=4.0, p_values=(1.0, 4.0)),
    "skew-advection": dict(kind="criss-cross", level_min=5, level_max=5, epsilon=1e-5, sigma=0.0,
                           gamma0=0.75, p=4.0, p_values=(1.0, 4.0)),
}

# custom runs use the manufactured sine solution and must state every physical parameter
CUSTOM_REQUIRED = ("kind", "level_min", "level_max", "epsilon", "sigma", "b", "gamma0", "p")

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_KEY_ALIASES = {"mesh": "kind", "eps": "epsilon", "gamma": "gamma0", "solver": "linear_solver", "out": "output"}


def thread_count() -> int:
    """Worker threads from the environment; 1 (sequential) when unset."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _parse_value(key: str, raw) -> object:
    if not isinstance(raw, str):
        return raw
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw.strip()


def _normalize(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        key = _KEY_ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key == "level":
            out["level_min"] = out["level_max"] = _parse_value("level_min", value)
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _parse_value(key, value)
    if "kind" in out:
        try:
            out["kind"] = canonical_kind(out["kind"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return out


def load_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge preset defaults, then the config file, then command-line overrides."""
    given = _normalize(file_values or {})
    given.update(_normalize({k: v for k, v in (overrides or {}).items() if v is not None}))
    problem = given.get("problem", "smooth")
    if problem == "custom":
        missing = [k for k in CUSTOM_REQUIRED if k not in given]
        if missing:
            raise ConfigError(f"custom problem needs {', '.join(missing)}")
        merged = {}
    else:
        merged = dict(PRESET_DEFAULTS.get(problem, {}))
    merged.update(given)
    cfg = ExperimentConfig(**merged)
    cfg.validate()
    return cfg


def make_problem(cfg: ExperimentConfig) -> ProblemSpec:
    if cfg.problem in ("smooth", "custom"):
        return smooth_problem(epsilon=cfg.epsilon, sigma=cfg.sigma, b=cfg.b)
    if cfg.problem == "rotating-layer":
        return rotating_layer_problem(epsilon=cfg.epsilon)
    if cfg.problem == "skew-advection":
        return skew_advection_problem(epsilon=cfg.epsilon)
    raise ConfigError(f"unknown problem {cfg.problem!r}")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map(fn, items):
    """Ordered map, threaded when the environment asks for it."""
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6e}"


def convergence_csv(report: ConvergenceReport) -> str:
    lines = [eio.metadata_line(report.metadata).rstrip("\n"),
             "level,l2,ord,h1,ord,hnorm,ord,converged,iterations"]
    for r in report.rows():
        lines.append(",".join([
            str(r["level"]), _fmt(r["l2"]), _fmt(r["ord_l2"]), _fmt(r["h1"]), _fmt(r["ord_h1"]),
            _fmt(r["hnorm"]), _fmt(r["ord_hnorm"]), str(r.get("converged", 1)), str(r.get("iterations", 0)),
        ]))
    return "\n".join(lines) + "\n"


def run_convergence(cfg: ExperimentConfig, write: bool = True) -> ConvergenceReport:
    """Solve the manufactured problem on every level and tabulate errors and orders."""
    cfg.validate()
    if cfg.problem not in ("smooth", "custom"):
        raise ConfigError("convergence needs a problem with a known exact solution")
    spec = make_problem(cfg)
    params = cfg.stabilizer()
    scfg = cfg.solver()
    out = _outdir(cfg) if write else None

    def one(level):
        mesh = build_mesh(cfg.kind, level)
        disc = Discretization.build(mesh, spec)
        u, rep = fixed_point_solve(disc, params=params, config=scfg)
        err = error_norms(spec.exact, spec.exact_grad, u, mesh, disc.edges, disc.stencils, params,
                          spec.epsilon, spec.sigma, stabilization_term=cfg.hnorm_term)
        if not rep.converged:
            log.warning("level %d did not converge (residual %.3e)", level, rep.residual)
        if out is not None:
            rep.write_csv(out / f"residuals_level{level}.csv")
        return err, rep

    results = _map(one, cfg.levels)
    report = ConvergenceReport(
        levels=cfg.levels,
        errors=[e for e, _ in results],
        metadata={"run": "convergence", **cfg.as_dict()},
        converged=[r.converged for _, r in results],
        iterations=[r.iterations for _, r in results],
    )
    if out is not None:
        (out / "convergence.csv").write_text(convergence_csv(report))
        (out / "convergence.dat").write_text(report.to_gnuplot())
    return report


@dataclass
class LayerResult:
    p: float
    u: np.ndarray
    converged: bool
    iterations: int
    residual: float
    dmp: dict
    width: int


@dataclass
class LayerReport:
    level: int
    results: list[LayerResult] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.results)

    def by_p(self, p: float) -> LayerResult:
        return next(r for r in self.results if r.p == p)


def run_layer(cfg: ExperimentConfig, write: bool = True, spec: ProblemSpec | None = None) -> LayerReport:
    """Layer problems for each ``p`` in ``p_values`` at ``level_max``: fields and DMP report."""
    cfg.validate()
    if spec is None:
        if cfg.problem not in ("rotating-layer", "skew-advection"):
            raise ConfigError("layer runs need the rotating-layer or skew-advection problem")
        spec = make_problem(cfg)
    level = cfg.level_max
    mesh = build_mesh(cfg.kind, level)
    disc = Discretization.build(mesh, spec)
    meta = {"run": "layer", **cfg.as_dict()}
    report = LayerReport(level=level, metadata=meta)
    out = _outdir(cfg) if write else None

    def one(p):
        u, rep = fixed_point_solve(disc, params=cfg.stabilizer(p), config=cfg.solver())
        dmp = dmp_check(u, mesh, spec, bounds=(0.0, 1.0))
        return LayerResult(p=p, u=u, converged=rep.converged, iterations=rep.iterations,
                           residual=rep.residual, dmp=dmp.as_dict(), width=layer_width(u)), rep

    for res, rep in _map(one, list(cfg.p_values)):
        report.results.append(res)
        if out is not None:
            tag = f"p{res.p:g}"
            eio.write_field(mesh, res.u, out / f"field_{tag}.txt", metadata={**meta, "p": res.p})
            eio.write_vtk(mesh, res.u, out / f"field_{tag}.vtk", title=f"{cfg.problem} level {level} p {res.p:g}")
            rep.write_csv(out / f"residuals_{tag}.csv")

    if out is not None:
        lines = [eio.metadata_line(meta).rstrip("\n"),
                 "p,converged,iterations,residual,violations,global_min,global_max,layer_width"]
        for r in report.results:
            lines.append(f"{r.p:g},{int(r.converged)},{r.iterations},{r.residual:.6e},{r.dmp['violations']},"
                         f"{r.dmp['global_min']:.6e},{r.dmp['global_max']:.6e},{r.width}")
        (out / "layer_summary.csv").write_text("\n".join(lines) + "\n")
        dmp = {f"{r.p:g}": r.dmp for r in report.results}
        (out / "dmp_report.json").write_text(json.dumps({"metadata": meta, "dmp": dmp}, indent=2, sort_keys=True) + "\n")
    return report


@dataclass
class AfcComparison:
    census: dict
    max_edge_discrepancy: float
    max_residual_discrepancy: float
    nodes_compared: int
    converged: bool
    metadata: dict


def run_afc_compare(cfg: ExperimentConfig, write: bool = True) -> AfcComparison:
    """Solve with the stabilizer, derive limiters, and re-evaluate the residual in AFC form.

    Edge discrepancies compare ``gamma0 h_E alpha_E`` with ``(1 - alpha_ij)|d_ij|``
    on feasible edges. The residual comparison keeps only the feasible edges
    in both routes and checks every free node.
    """
    cfg.validate()
    spec = make_problem(cfg)
    params = cfg.stabilizer()
    level = cfg.level_max
    mesh = build_mesh(cfg.kind, level)
    disc = Discretization.build(mesh, spec)
    u, rep = fixed_point_solve(disc, params=params, config=cfg.solver())

    D = build_diffusion_matrix(disc.A)
    alpha_E = edge_coefficients(u, disc.edges, disc.stencils, params).alpha
    lim = limiters_from_stabilizer(disc.edges, alpha_E, D, params, dirichlet_mask=disc.lift.mask)
    stab_w = lim.target
    afc_w = lim.weights()
    check = lim.feasible & ~lim.dirichlet
    edge_gap = np.abs(stab_w - afc_w)
    max_edge = float(edge_gap[check].max()) if check.any() else 0.0

    # residuals with only the feasible edges stabilized, once per assembly route
    c = np.where(check, stab_w, 0.0)
    r_stab = (disc.A + edge_laplacian(c, disc.edges, mesh.n_nodes)) @ u - disc.load
    alpha_check = np.where(check, lim.alpha, 1.0)
    r_afc = disc.A @ u + afc_term(alpha_check, lim.d, disc.edges, u) - disc.load
    nodes = ~disc.lift.mask
    max_res = float(np.abs(r_stab - r_afc)[nodes].max()) if nodes.any() else 0.0

    meta = {"run": "afc-compare", "level": level, **cfg.as_dict()}
    result = AfcComparison(census=lim.census(), max_edge_discrepancy=max_edge, max_residual_discrepancy=max_res,
                           nodes_compared=int(nodes.sum()), converged=rep.converged, metadata=meta)
    if write:
        out = _outdir(cfg)
        (out / "afc_edges.csv").write_text(lim.to_csv(disc.edges, metadata=meta))
        summary = dict(dataclasses.asdict(result))
        (out / "afc_census.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return result


def run_mesh_audit(kinds, levels, output: str | None = None) -> list[dict]:
    """Symmetry, Xu-Zikatanov and in-circle checks for each mesh."""
    rows = []
    for kind in kinds:
        for level in levels:
            mesh = build_mesh(kind, level)
            edges = extract_edges(mesh)
            stencils = build_stencils(mesh, edges)
            sym, asym_nodes = is_symmetric(mesh, stencils)
            xz_ok, xz = check_xu_zikatanov(mesh, edges)
            delaunay = delaunay_incircle_check(mesh, edges)
            rows.append({
                "kind": mesh.kind,
                "level": level,
                "nodes": mesh.n_nodes,
                "triangles": mesh.n_triangles,
                "interior_edges": edges.n_edges,
                "symmetric": int(sym),
                "asymmetric_nodes": len(asym_nodes),
                "xu_zikatanov": int(xz_ok),
                "violating_edges": len(xz.violating),
                "delaunay": int(delaunay.all()),
                "oracle_agrees": int(np.array_equal(xz.weights >= -1e-12, delaunay)),
            })
    if output is not None:
        out = Path(output)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "mesh_audit.csv", "w", newline="") as fh:
            fh.write(eio.metadata_line({"run": "mesh-audit", "kinds": list(kinds), "levels": list(levels)}))
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows


def run_lipschitz(cfg: ExperimentConfig, write: bool = True) -> dict[int, float]:
    """Empirical Lipschitz ratio of the stabilizer on every configured level."""
    cfg.validate()
    params = cfg.stabilizer()

    def one(level):
        mesh = build_mesh(cfg.kind, level)
        edges = extract_edges(mesh)
        return measure_lipschitz(mesh, edges, build_stencils(mesh, edges), params, samples=cfg.samples, seed=cfg.seed)

    values = dict(zip(cfg.levels, _map(one, cfg.levels)))
    if write:
        out = _outdir(cfg)
        lines = [eio.metadata_line({"run": "measure-lipschitz", **cfg.as_dict()}).rstrip("\n"), "level,constant"]
        lines += [f"{lvl},{c:.6e}" for lvl, c in values.items()]
        (out / "lipschitz.csv").write_text("\n".join(lines) + "\n")
    return values

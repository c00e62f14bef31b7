"""Command-line entry point.

Exit status: 0 on success, 2 if any nonlinear solve failed to converge,
3 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import (
    ConfigError,
    build_config,
    load_config_file,
    run_afc_compare,
    run_convergence,
    run_layer,
    run_lipschitz,
    run_mesh_audit,
    thread_count,
)
from .mesh import MESH_KINDS, MeshError, canonical_kind

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_CONFIG = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _run_options(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only flags actually given override the config file
    p.add_argument("--config", help="key = value file; flags take precedence")
    p.add_argument("--problem", choices=["smooth", "rotating-layer", "skew-advection", "custom"])
    p.add_argument("--kind", "--mesh", dest="kind")
    p.add_argument("--level-min", type=int)
    p.add_argument("--level-max", type=int)
    p.add_argument("--level", type=int, help="shorthand for --level-min L --level-max L")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--b", type=float, nargs=2, metavar=("BX", "BY"))
    p.add_argument("--gamma0", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--p-values", type=float, nargs="+")
    p.add_argument("--boundary-xi", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--residual-tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--linear-solver", choices=["direct", "iterative"])
    p.add_argument("--hnorm-term", choices=["edge", "interpolant"])
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o")


_RUN_KEYS = ("problem", "kind", "level_min", "level_max", "epsilon", "sigma", "b", "gamma0", "p", "p_values",
             "boundary_xi", "omega", "residual_tol", "max_iters", "linear_solver", "hnorm_term", "samples",
             "seed", "output")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgestab", description="Edge-based nonlinear diffusion for P1 convection-diffusion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _run_options(sub.add_parser("convergence", help="error table and orders on a level range"))
    _run_options(sub.add_parser("layer", help="layer problem fields and maximum-principle report"))
    _run_options(sub.add_parser("afc-compare", help="stabilizer vs limiter residual comparison"))
    _run_options(sub.add_parser("measure-lipschitz", help="empirical Lipschitz ratio per level"))

    audit = sub.add_parser("mesh-audit", help="symmetry and Delaunay checks")
    audit.add_argument("--kind", "--mesh", dest="kinds", action="append",
                       help=f"mesh kind, repeatable (default: all of {', '.join(MESH_KINDS)})")
    audit.add_argument("--level-min", type=int, default=1)
    audit.add_argument("--level-max", type=int, default=3)
    audit.add_argument("--output", "-o")
    return parser


def _config(args):
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _RUN_KEYS}
    if args.level is not None:
        overrides["level_min"] = overrides["level_max"] = args.level
    return build_config(file_values, overrides)


def _convergence(args) -> int:
    cfg = _config(args)
    report = run_convergence(cfg)
    print(f"{'level':>5} {'l2':>12} {'ord':>6} {'h1':>12} {'ord':>6} {'hnorm':>12} {'ord':>6} iters")
    for r in report.rows():
        flag = "" if r.get("converged", 1) else "  (not converged)"
        print(f"{r['level']:>5} {r['l2']:12.5e} {r['ord_l2']:6.2f} {r['h1']:12.5e} {r['ord_h1']:6.2f} "
              f"{r['hnorm']:12.5e} {r['ord_hnorm']:6.2f} {r.get('iterations', 0):>5}{flag}")
    return EXIT_OK if all(report.converged) else EXIT_NONCONVERGED


def _layer(args) -> int:
    cfg = _config(args)
    report = run_layer(cfg)
    for r in report.results:
        print(f"p={r.p:g} converged={r.converged} iterations={r.iterations} violations={r.dmp['violations']} "
              f"min={r.dmp['global_min']:.3e} max={r.dmp['global_max']:.3e} layer_width={r.width}")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def _afc(args) -> int:
    cfg = _config(args)
    res = run_afc_compare(cfg)
    print(json.dumps(res.census, sort_keys=True))
    print(f"max edge discrepancy {res.max_edge_discrepancy:.3e}, "
          f"max residual discrepancy {res.max_residual_discrepancy:.3e} over {res.nodes_compared} nodes")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _lipschitz(args) -> int:
    cfg = _config(args)
    for level, c in run_lipschitz(cfg).items():
        print(f"level {level}: {c:.6f}")
    return EXIT_OK


def _audit(args) -> int:
    if args.level_min < 0 or args.level_max < args.level_min:
        raise ConfigError("need 0 <= level-min <= level-max")
    kinds = [canonical_kind(k) for k in args.kinds] if args.kinds else list(MESH_KINDS)
    rows = run_mesh_audit(kinds, range(args.level_min, args.level_max + 1), output=args.output)
    for r in rows:
        print(" ".join(f"{k}={v}" for k, v in r.items()))
    return EXIT_OK


_COMMANDS = {
    "convergence": _convergence,
    "layer": _layer,
    "afc-compare": _afc,
    "measure-lipschitz": _lipschitz,
    "mesh-audit": _audit,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        thread_count()
        return _COMMANDS[args.command](args)
    except (ConfigError, MeshError) as exc:
        print(f"edgestab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

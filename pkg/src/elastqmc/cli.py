"""Command-line interface.

Exit codes: 0 success, 1 unexpected error, 2 bad configuration or usage,
3 missing or corrupt asset (generating vectors, config files), 4 solver or
sample failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_ASSET, EXIT_SOLVER = 0, 1, 2, 3, 4

log = logging.getLogger("elastqmc")


def bundled_config(name: str) -> Path | None:
    path = Path(str(resources.files("elastqmc") / "data" / "configs" / name))
    return path if path.exists() else None


def _resolve_config(arg: str | None) -> Path | None:
    """A config path on disk, or the name of a bundled config such as ``ex2.cfg``."""
    if arg is None:
        return None
    p = Path(arg)
    if p.exists():
        return p
    for name in (p.name, f"{p.name}.cfg"):
        found = bundled_config(name)
        if found is not None:
            return found
    from .experiments.config import ConfigError
    raise ConfigError(f"config {arg!r} not found (bundled: "
                      f"{', '.join(sorted(x.name for x in _bundled_dir().glob('*.cfg')))})")


def _bundled_dir() -> Path:
    return Path(str(resources.files("elastqmc") / "data" / "configs"))


def _load(args):
    from .experiments.config import load_config, parse_overrides

    overrides = parse_overrides(args.set)
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        overrides["out"] = str(args.out)
    return load_config(_resolve_config(args.config), overrides, args.profile)


# --- subcommands ---------------------------------------------------------------------

def cmd_run(args) -> int:
    from .experiments import run_experiment
    from .experiments.report import format_table

    cfg = _load(args)
    log.info("running %s (profile %s, config %s)", cfg.experiment, cfg.profile, cfg.digest())
    report = run_experiment(cfg)
    files = report.write(cfg.out)
    for name, rows in report.tables.items():
        if name == "samples":
            continue
        print(f"# {cfg.experiment} {name}")
        print(format_table(rows))
        print()
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .experiments.config import describe_schema

    cfg = _load(args)
    print(f"config OK: experiment={cfg.experiment} profile={cfg.profile} digest={cfg.digest()}")
    for k, v in cfg.to_dict().items():
        print(f"  {k:14s} = {v}")
    if args.schema:
        print("\nschema:")
        print(describe_schema())
    return EXIT_OK


def cmd_points(args) -> int:
    from .qmc import bundled_rule, load_genvec, rule_points, shift_center

    if args.genvec:
        rule = load_genvec(args.genvec, b=args.b, m=args.m, s=args.s, interlace=args.interlace)
    else:
        if args.b != 2:
            raise FileNotFoundError("bundled rules are base 2; pass --genvec for other bases")
        rule = bundled_rule(args.m, args.s, args.interlace)
    pts = rule_points(rule).points
    if args.shifted:
        pts = shift_center(pts)
    header = ",".join(f"x{j + 1}" for j in range(pts.shape[1]))
    text = header + "\n" + "\n".join(",".join(f"{v:.17g}" for v in row) for row in pts) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def cmd_field_snapshot(args) -> int:
    from .experiments.pipeline import field_spec_for
    from .experiments.qmc_study import qmc_nodes
    from .fields import REGISTRY, eval_field_grid, save_grid

    spec = field_spec_for(args.experiment, args.Lambda, args.n_diag, args.alpha)
    s = spec.s2 if args.field == "lambda" else spec.s1
    if s == 0:
        coeffs = np.zeros(0)
    elif args.coeffs:
        coeffs = np.loadtxt(args.coeffs, ndmin=1)
        if coeffs.size != s:
            raise ValueError(f"{args.coeffs}: expected {s} coefficients, got {coeffs.size}")
    elif args.node is not None:
        nodes, _ = qmc_nodes(args.m, spec.s1, spec.s2, args.interlace, "combined")
        if not 0 <= args.node < len(nodes):
            raise ValueError(f"node must lie in [0, {len(nodes)})")
        r = nodes[args.node] - 0.5
        coeffs = r[spec.s1:] if args.field == "lambda" else r[:spec.s1]
    else:
        coeffs = np.zeros(s)
    M = args.M
    nodes1 = np.linspace(0.0, 1.0, M + 1)
    X1, X2 = np.meshgrid(nodes1, nodes1, indexing="ij")
    S = eval_field_grid(coeffs, spec.decay_alpha, M) if coeffs.size else 0.0
    if args.field == "lambda":
        grid = spec.Lambda * (REGISTRY[spec.lambda_hat0].value(X1, X2) + S)
    else:
        grid = REGISTRY[spec.mu0].value(X1, X2) + S
    grid = np.broadcast_to(grid, X1.shape)
    save_grid(grid, args.output)
    print(f"wrote {args.output}: {grid.shape[0]}x{grid.shape[1]} grid of {args.field}, "
          f"range [{grid.min():.6g}, {grid.max():.6g}]")
    return EXIT_OK


def cmd_mesh(args) -> int:
    from .mesh import make_structured_mesh, refine_family, save_mesh

    domain = ((0.0, np.pi), (0.0, np.pi)) if args.domain == "pi" else ((0.0, 1.0), (0.0, 1.0))
    coarse = make_structured_mesh(domain, args.n, args.perturb, args.seed, args.n_crossed)
    family = refine_family(coarse, args.levels)
    print(f"{'level':>5} {'h':>8} {'triangles':>10} {'vertices':>9} {'edges':>8} "
          f"{'cr_dof':>8} {'p1_dof':>8}")
    for k, m in enumerate(family):
        n_int_e = int((~m.edge_is_boundary).sum())
        n_int_v = int((~m.boundary_vertices()).sum())
        print(f"{k:5d} {m.h:8.4f} {m.n_triangles:10d} {m.n_vertices:9d} {m.n_edges:8d} "
              f"{2 * n_int_e:8d} {2 * n_int_v:8d}")
    if args.output:
        save_mesh(family[-1], args.output)
        print(f"wrote {args.output}")
    return EXIT_OK


def _emit(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


# --- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastqmc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp):
        sp.add_argument("config", nargs="?", help="config file or bundled name (ex1..ex4, "
                                                  "truncation)")
        sp.add_argument("--config", dest="config_opt", help="same as the positional argument")
        sp.add_argument("--profile", choices=("desk", "paper"))
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")

    r = sub.add_parser("run", help="run an experiment and write its report")
    config_args(r)
    r.add_argument("--out", type=Path, help="output directory")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate-config", help="check a config without computing")
    config_args(v)
    v.add_argument("--schema", action="store_true", help="also print every key")
    v.set_defaults(func=cmd_validate)

    pt = sub.add_parser("points", help="dump a QMC point set as CSV")
    pt.add_argument("--m", type=int, required=True)
    pt.add_argument("--s", type=int, required=True)
    pt.add_argument("--b", type=int, default=2)
    pt.add_argument("--interlace", type=int, default=2)
    pt.add_argument("--genvec", type=Path, help="generating-vector file (default: bundled)")
    pt.add_argument("--shifted", action="store_true", help="subtract 1/2 from every entry")
    pt.add_argument("-o", "--output", help="output file (default stdout)")
    pt.set_defaults(func=cmd_points)

    fs = sub.add_parser("field-snapshot", help="write a coefficient field on a grid (CSV)")
    fs.add_argument("--experiment", choices=("ex2", "ex3", "ex4"), default="ex2")
    fs.add_argument("--field", choices=("lambda", "mu"), default="lambda")
    fs.add_argument("--Lambda", type=float, default=1.0)
    fs.add_argument("--n-diag", type=int, default=22)
    fs.add_argument("--alpha", type=float, default=2.0)
    fs.add_argument("--M", type=int, default=256)
    fs.add_argument("--coeffs", type=Path, help="text file with the coefficient vector")
    fs.add_argument("--node", type=int, help="take coefficients from this QMC node")
    fs.add_argument("--m", type=int, default=9, help="rule exponent for --node")
    fs.add_argument("--interlace", type=int, default=2)
    fs.add_argument("-o", "--output", required=True)
    fs.set_defaults(func=cmd_field_snapshot)

    ms = sub.add_parser("mesh", help="build a mesh family, print statistics, save the finest")
    ms.add_argument("--domain", choices=("unit", "pi"), default="unit")
    ms.add_argument("--n", type=int, default=4)
    ms.add_argument("--perturb", type=float, default=0.0)
    ms.add_argument("--seed", type=int, default=0)
    ms.add_argument("--n-crossed", type=int, default=0)
    ms.add_argument("--levels", type=int, default=1)
    ms.add_argument("-o", "--output")
    ms.set_defaults(func=cmd_mesh)
    return p


def main(argv=None) -> int:
    from .experiments.config import ConfigError
    from .experiments.pipeline import SampleFailure
    from .fem import AssemblyError
    from .fields import FieldBoundError
    from .mesh import MeshError
    from .qmc import GenvecFormatError
    from .solver import ConvergenceError, FactorizationError, IndefiniteSystemError

    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "config_opt"):
        if args.config_opt and args.config:
            parser.error("give the config either positionally or with --config")
        args.config = args.config or args.config_opt
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, GenvecFormatError) as exc:
        print(f"error: missing asset: {exc}", file=sys.stderr)
        return EXIT_ASSET
    except (SampleFailure, ConvergenceError, IndefiniteSystemError, FactorizationError,
            FieldBoundError, AssemblyError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.exception("unexpected failure")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())

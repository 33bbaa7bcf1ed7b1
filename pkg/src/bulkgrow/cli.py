"""Command-line driver.

Subcommands: ``simulate``, ``converge``, ``stability`` and ``mesh gen`` /
``mesh info``.  Exit code 0 on success, 2 for configuration errors, 3 for
numerical failures.  BULKGROW_THREADS caps worker parallelism for grid
experiments.
"""

import argparse
import json
import sys

from .errors import BulkgrowError, ConfigError
from .experiments import (
    load_config,
    run_converge,
    run_regularization,
    run_simulate,
    run_stability,
)
from .mesh import generate_ball_mesh, generate_disk_mesh, load_mesh, quality_report, save_mesh

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bulkgrow",
        description="Evolving bulk-surface finite element simulation of "
                    "free-boundary tissue growth",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (
        ("simulate", "time-step a configuration to its final time"),
        ("converge", "mesh/time-step error study against the radial solution"),
        ("stability", "boundary-value stability ratio sweeps"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("config", help="JSON configuration file")
        p.add_argument("-o", "--outdir", default=None,
                       help="output directory (default: run.outputs)")

    mesh = sub.add_parser("mesh", help="generate or inspect .bsm meshes")
    mesh_sub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = mesh_sub.add_parser("gen", help="generate a mesh file")
    gen.add_argument("kind", choices=["disk", "ball", "ellipsoid"])
    gen.add_argument("--h", type=float, required=True, help="target mesh size")
    gen.add_argument("--radius", type=float, default=None)
    gen.add_argument("--radii", type=float, nargs=3, default=None)
    gen.add_argument("--degree", type=int, default=1, choices=[1, 2])
    gen.add_argument("-o", "--output", required=True)
    info = mesh_sub.add_parser("info", help="print mesh statistics")
    info.add_argument("path")
    return parser


def _outdir(args, config):
    outdir = args.outdir or config["run"].get("outputs")
    if not outdir:
        raise ConfigError("no output directory (run.outputs or --outdir)")
    return outdir


def _cmd_simulate(args):
    config = load_config(args.config)
    outdir = _outdir(args, config)
    if config["run"]["kind"] == "regularization":
        run_regularization(config, outdir)
    else:
        run_simulate(config, outdir)
    return EXIT_OK


def _cmd_converge(args):
    config = load_config(args.config)
    run_converge(config, _outdir(args, config))
    return EXIT_OK


def _cmd_stability(args):
    config = load_config(args.config)
    run_stability(config, _outdir(args, config))
    return EXIT_OK


def _cmd_mesh(args):
    if args.mesh_command == "info":
        mesh = load_mesh(args.path)
        print(json.dumps(quality_report(mesh), indent=2, sort_keys=True))
        return EXIT_OK
    if args.kind == "disk":
        if args.radius is None:
            raise ConfigError("disk meshes need --radius")
        mesh = generate_disk_mesh(args.radius, args.h, degree=args.degree)
    else:
        radii = args.radii if args.radii else (args.radius,) * 3
        if radii[0] is None:
            raise ConfigError("ball/ellipsoid meshes need --radius or --radii")
        mesh = generate_ball_mesh(radii, args.h, degree=args.degree)
    save_mesh(mesh, args.output)
    print(json.dumps(quality_report(mesh), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "converge": _cmd_converge,
        "stability": _cmd_stability,
        "mesh": _cmd_mesh,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BulkgrowError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: ``generate`` (networks from a generator config), ``solve``
(one graph file, linear or nonlinear), ``dataset`` (build a solved
dataset + manifest), ``train``, ``eval``, ``study`` (generalization
sweep), ``bench`` (solver vs surrogate timings), ``bench-kernels``
(compiled vs numpy kernels) and ``import-anatomical`` (diameter-threshold
boundary detection on an external graph file).

Exit codes: 0 success, 1 usage/input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import (CapflowError, SchemaError)
from ..fileio import read_graph, write_graph, write_solution
from ..graph import detect_boundaries_by_diameter
from ..linear import solve_linear
from ..netgen import GeneratorConfig, config_from_file, generate_network
from ..nonlinear import solve_nonlinear
from ..surrogate.checkpoint import load_checkpoint
from ..surrogate.model import GnnConfig
from . import bench as bench_mod
from .dataset import build_dataset, load_manifest
from .evaluation import evaluate, generalization_study, save_study
from .training import TrainConfig, train

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(USAGE_ERROR, f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    def __init__(self, code, message=""):
        super().__init__(message)
        self.code = code


def _generator_config(args) -> GeneratorConfig:
    config = config_from_file(args.config) if args.config \
        else GeneratorConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args):
    config = _generator_config(args)
    out = _out_dir(args)
    for i in range(args.count):
        cfg = replace(config, seed=int(
            np.random.SeedSequence([config.seed, i]).generate_state(1)[0]))
        graph, bc = generate_network(cfg)
        path = out / f"network_{i:04d}.json"
        write_graph(graph, bc, path)
        print(f"wrote {path} ({graph.n} nodes, {graph.m} edges, "
              f"{len(bc.inlets)} inlets)")
    return 0


def cmd_solve(args):
    graph, bc = read_graph(args.graph)
    if args.rheology == "linear":
        solution = solve_linear(graph, bc)
    else:
        solution = solve_nonlinear(graph, bc)
    out = Path(args.out or ".") / (Path(args.graph).stem +
                                   f".{args.rheology}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_solution(solution, out)
    print(f"wrote {out} (iterations={solution.iterations}, "
          f"residuals={json.dumps(solution.residuals)})")
    return 0


def cmd_dataset(args):
    config = _generator_config(args)
    fractions = tuple(float(f) for f in args.fractions.split(","))
    manifest = build_dataset(config, args.count, fractions, args.rheology,
                             _out_dir(args), workers=args.workers)
    print(f"wrote {manifest}")
    return 0


def cmd_train(args):
    manifest = load_manifest(args.manifest)
    gnn_config = GnnConfig(variant=args.variant, seed=args.seed or 0)
    if args.gnn_config:
        overrides = json.loads(Path(args.gnn_config).read_text())
        gnn_config = replace(gnn_config, **overrides)
    train_config = TrainConfig(seed=args.seed or 0)
    if args.epochs is not None:
        train_config = replace(train_config, max_epochs=args.epochs)
    out = _out_dir(args)
    gnn, log = train(manifest, train_config, gnn_config, out_dir=out)
    print(f"trained variant {args.variant}: best val loss "
          f"{log.best_val_loss:.6g} at epoch {log.best_epoch} "
          f"({log.stop_reason}); checkpoint in {out}")
    return 0


def cmd_eval(args):
    manifest = load_manifest(args.manifest)
    gnn, _ = load_checkpoint(args.checkpoint)
    report = evaluate(manifest, args.split, gnn)
    out = _out_dir(args)
    report.save(out)
    if args.export_predictions:
        from ..fileio import read_graph as _rg
        export = out / "predictions"
        export.mkdir(parents=True, exist_ok=True)
        for entry in manifest.split(args.split):
            graph, bc = _rg(manifest.root / entry.graph)
            solution = gnn.predict_solution(graph, bc)
            write_solution(solution, export / f"{entry.id}.gnn.json",
                           source="gnn",
                           extra={"variant": gnn.config.variant})
    print(json.dumps({"mean_errors": report.mean_errors,
                      "physics_residuals": report.physics_residuals,
                      "timings": report.timings}, indent=1))
    return 0


def cmd_study(args):
    gnn, _ = load_checkpoint(args.checkpoint)
    counts = [int(c) for c in args.inlets.split(",")]
    config = _generator_config(args)
    rows = generalization_study(gnn, config, counts,
                                graphs_per_count=args.per_count,
                                seed=args.seed or 1234)
    out = _out_dir(args)
    save_study(rows, out)
    for row in rows:
        tag = "in " if row.in_distribution else "out"
        print(f"inlets {row.inlet_count:4d} [{tag}]  " + "  ".join(
            f"{q} L2 {row.errors[q]['L2']:.2f}%" for q in sorted(row.errors)))
    return 0


def cmd_bench(args):
    gnn, _ = load_checkpoint(args.checkpoint)
    pairs = []
    if args.manifest:
        manifest = load_manifest(args.manifest)
        for entry in manifest.split(args.split)[:args.limit]:
            graph, bc = read_graph(manifest.root / entry.graph)
            pairs.append((entry.id, graph, bc))
    else:
        for path in sorted(Path(args.graphs).glob("*.json"))[:args.limit]:
            graph, bc = read_graph(path)
            pairs.append((path.stem, graph, bc))
    if not pairs:
        raise SystemExit_(USAGE_ERROR, "bench: no graphs found")
    rows = bench_mod.bench(pairs, gnn, args.rheology, trials=args.trials)
    out = _out_dir(args)
    bench_mod.save_bench(rows, out)
    for r in rows:
        print(f"{r.graph_id}: solver {r.solver['median_s']*1e3:.1f} ms, "
              f"surrogate {r.surrogate['median_s']*1e3:.1f} ms, "
              f"speedup {r.speedup:.1f}x")
    return 0


def cmd_bench_kernels(args):
    rows = bench_mod.bench_kernels(edge_count=args.edges,
                                   node_count=args.nodes,
                                   latent=args.latent, trials=args.trials)
    out = _out_dir(args)
    bench_mod.save_kernel_bench(rows, out)
    for r in rows:
        print(f"{r['kernel']:>14s}: numpy {r['numpy_median_s']*1e3:.2f} ms, "
              f"{r['backend']} {r['active_median_s']*1e3:.2f} ms "
              f"({r['speedup_vs_numpy']:.1f}x)")
    return 0


def cmd_import_anatomical(args):
    graph, bc_in = read_graph(args.input)
    bc = detect_boundaries_by_diameter(graph, args.arterial_root,
                                       args.venous_root, args.threshold)
    inlets = np.union1d(bc.inlets, [args.arterial_root])
    outlets = np.union1d(bc.outlets, [args.venous_root])
    from ..graph import BoundaryConditions
    bc = BoundaryConditions(
        inlets=inlets, outlets=outlets,
        inlet_pressures=np.full(inlets.size, args.inlet_pressure),
        outlet_pressures=np.full(outlets.size, args.outlet_pressure),
        inlet_hematocrit=bc_in.inlet_hematocrit)
    bc.validate(graph)
    out = Path(args.out or ".") / (Path(args.input).stem + ".boundaries.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graph(graph, bc, out)
    print(f"wrote {out} ({inlets.size} inlets, {outlets.size} outlets, "
          f"threshold {args.threshold} um)")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="capflow",
                     description="Microvascular blood-flow workbench")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", type=str, default=None,
                       help="generator config JSON")
        p.add_argument("--out", type=str, default=None, help="output directory")

    p = sub.add_parser("generate", help="generate synthetic networks")
    common(p)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("solve", help="solve one graph file")
    common(p)
    p.add_argument("graph")
    p.add_argument("--rheology", choices=("linear", "nonlinear"),
                   default="linear")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("dataset", help="build a solved dataset + manifest")
    common(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--fractions", type=str, default="0.8,0.1,0.1")
    p.add_argument("--rheology", choices=("linear", "nonlinear", "both"),
                   default="linear")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_dataset)

    p = sub.add_parser("train", help="train a surrogate variant")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--gnn-config", type=str, default=None,
                   help="JSON file with GnnConfig overrides")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"),
                   default="test")
    p.add_argument("--export-predictions", action="store_true",
                   help="write per-graph surrogate predictions as "
                        "solution files tagged source=gnn")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("study", help="generalization sweep over inlet counts")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--inlets", type=str, default="5,10,15,20,25,30")
    p.add_argument("--per-count", type=int, default=3)
    p.set_defaults(fn=cmd_study)

    p = sub.add_parser("bench", help="solver vs surrogate timings")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--graphs", default=None, help="directory of graph files")
    p.add_argument("--split", default="test")
    p.add_argument("--rheology", choices=("linear", "nonlinear"),
                   default="nonlinear")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--limit", type=int, default=10)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("bench-kernels", help="compiled vs numpy kernels")
    common(p)
    p.add_argument("--edges", type=int, default=30000)
    p.add_argument("--nodes", type=int, default=10000)
    p.add_argument("--latent", type=int, default=16)
    p.add_argument("--trials", type=int, default=7)
    p.set_defaults(fn=cmd_bench_kernels)

    p = sub.add_parser("import-anatomical",
                       help="detect boundaries on an external graph")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--arterial-root", type=int, required=True)
    p.add_argument("--venous-root", type=int, required=True)
    p.add_argument("--threshold", type=float, default=12.0)
    p.add_argument("--inlet-pressure", type=float, default=32.5)
    p.add_argument("--outlet-pressure", type=float, default=12.5)
    p.set_defaults(fn=cmd_import_anatomical)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit_ as exc:
        if str(exc):
            print(str(exc), file=sys.stderr)
        return exc.code
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except CapflowError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return NUMERICAL_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())

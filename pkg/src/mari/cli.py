"""Command-line interface.

Subcommands: ``gca`` (detect sites), ``reorg`` (group fragmented layouts),
``rewrite`` (decompose detected MatMuls, or fragment them), ``run``
(execute a graph on random inputs), ``flops`` (closed-form cost model) and
``bench`` (wall-clock benchmarks).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    BenchConfig,
    DEFAULT_CHUNKS,
    bench_fixture,
    bench_fragmentation,
    bench_sweep,
    fixture_text,
    fragmentation_csv,
    sweep_csv,
)
from .errors import MariError
from .executor import execute, random_bundle
from .flops import MatmulDims, SweepPoint, flops_speedup_table, table2_rows
from .gca import run_gca
from .reorg import reorg_all
from .rewrite import fragment_site, rewrite_all
from .textio import parse, serialize


def _load_graph(path: str):
    return parse(Path(path).read_text(encoding="utf-8"))


def _cmd_gca(args) -> int:
    g = _load_graph(args.graph)
    sites = run_gca(g)
    for site in sites:
        print(f"{site.matmul_id} concat={site.concat_id}")
    if not sites:
        print("no optimizable MatMul nodes", file=sys.stderr)
    return 0


def _cmd_reorg(args) -> int:
    g = _load_graph(args.graph)
    out, changed = reorg_all(g)
    Path(args.output).write_text(serialize(out), encoding="utf-8")
    for concat_id in changed:
        print(f"reorganized {concat_id}")
    return 0


def _cmd_rewrite(args) -> int:
    g = _load_graph(args.graph)
    if args.fragment is not None:
        for site in run_gca(g):
            g = fragment_site(g, site.matmul_id, args.fragment)
            print(f"fragmented {site.matmul_id} chunk={args.fragment}")
        Path(args.output).write_text(serialize(g), encoding="utf-8")
        return 0
    out, report = rewrite_all(g)
    Path(args.output).write_text(serialize(out), encoding="utf-8")
    for site in report.sites:
        print(
            f"rewrote {site.matmul_id} concat={site.concat_id} "
            f"split=({site.d_user},{site.d_item},{site.d_cross}) "
            f"saving_at_B{args.batch}={site.flops_saving(args.batch)}"
        )
    if not report.sites:
        print("nothing to rewrite", file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    g = _load_graph(args.graph)
    bundle = random_bundle(g, args.B, seed=args.seed)
    report = execute(
        g,
        bundle,
        strategy=args.strategy,
        dtype=args.dtype,
        fast_matmul=args.fast,
    )
    payload = {
        "strategy": report.strategy,
        "dtype": report.dtype,
        "batch_size": args.B,
        "seed": args.seed,
        "flops_total": report.flops_total,
        "flops_by_node": dict(sorted(report.flops_by_node.items())),
        "flops_breakdown": {
            k: dict(sorted(v.items()))
            for k, v in sorted(report.flops_breakdown.items())
        },
        "wall_time_ns": report.wall_time_ns,
        "outputs": {
            k: np.asarray(v).tolist() for k, v in sorted(report.outputs.items())
        },
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _cmd_flops(args) -> int:
    if args.preset == "table2":
        rows = table2_rows()
    else:
        required = dict(B=args.B, du=args.du, d=args.d)
        missing = [k for k, v in required.items() if v is None]
        if missing:
            print(
                f"either --preset table2 or all of --B --du --d (missing {missing})",
                file=sys.stderr,
            )
            return 2
        dims = MatmulDims(args.B, args.du, args.di or 0, args.dc or 0, args.d)
        rows = flops_speedup_table([SweepPoint("custom", args.B, dims)])
    print("axis,value,B,D_u,D_i,D_c,d,flops_baseline,flops_optimized,speedup,saving")
    for r in rows:
        d = r.dims
        print(
            f"{r.axis},{r.value},{d.B},{d.d_user},{d.d_item},{d.d_cross},{d.d_out},"
            f"{r.report.flops_baseline},{r.report.flops_optimized},"
            f"{r.report.speedup:.4f},{r.report.absolute_saving}"
        )
    return 0


def _cmd_bench(args) -> int:
    cfg = BenchConfig(
        repeats=args.repeats,
        warmup=args.warmup,
        seed=args.seed,
        dtype={"f32": "f32", "f64": "f64"}[args.dtype],
        batch_size=args.batch,
    )
    if args.mode == "table2":
        rows = bench_sweep(cfg)
        text = sweep_csv(rows, cfg)
    elif args.mode == "fragmentation":
        rows = bench_fragmentation(cfg, chunks=tuple(args.chunks or DEFAULT_CHUNKS))
        text = fragmentation_csv(rows, cfg)
    else:
        summary = bench_fixture(cfg)
        text = fixture_text(summary, cfg)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}", file=sys.stderr)
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mari",
        description="Detect, reorganize and decompose feature-fusion MatMuls "
        "in ranking-model computation graphs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gca", help="detect optimizable MatMul nodes")
    p.add_argument("graph")
    p.set_defaults(func=_cmd_gca)

    p = sub.add_parser("reorg", help="group fragmented layouts at detected sites")
    p.add_argument("graph")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_reorg)

    p = sub.add_parser("rewrite", help="decompose detected MatMuls")
    p.add_argument("graph")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--fragment", type=int, default=None, metavar="CHUNK")
    p.add_argument("--batch", type=int, default=1000, help="batch size for the report")
    p.set_defaults(func=_cmd_rewrite)

    p = sub.add_parser("run", help="execute a graph on seeded random inputs")
    p.add_argument("graph")
    p.add_argument("--strategy", choices=("vani", "uoi"), default="uoi")
    p.add_argument("--B", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    p.add_argument("--fast", action="store_true", help="BLAS matmul path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("flops", help="closed-form cost model")
    p.add_argument("--preset", choices=("table2",))
    p.add_argument("--B", type=int)
    p.add_argument("--du", type=int)
    p.add_argument("--di", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--d", type=int)
    p.set_defaults(func=_cmd_flops)

    p = sub.add_parser("bench", help="wall-clock benchmarks")
    p.add_argument("mode", choices=("table2", "fragmentation", "fixture"))
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    p.add_argument("--batch", type=int, default=2000)
    p.add_argument("--chunks", type=int, nargs="*", default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MariError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

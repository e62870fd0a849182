"""Benchmark harness: sweeps, the fragmentation experiment and the
end-to-end fixture comparison.

Timing discipline: BLAS pools are pinned to one thread, every variant is
warmed up, and repeats are taken round-robin across variants so slow
machine drift hits all of them equally. Each sample is the executor's
wall time, which covers graph evaluation only. Timed runs use the fast
matmul path on both sides of every comparison, so measured ratios reflect
the work removed, not kernel differences. Reported times are nanoseconds;
summary statistics are mean, sample standard deviation and median.
"""

from __future__ import annotations

import io
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from threadpoolctl import threadpool_limits

from .errors import InvalidArgumentError
from .executor import ONE_SHOT, InputBundle, check_equivalence, execute, random_bundle
from .fixtures import FixtureDims, fixture_ranking_model, neat_site_graph
from .flops import MatmulDims, mari_flops, table2_points
from .graph import Graph
from .rewrite import fragment_site, rewrite_all

_VERSION = "0.1.0"

SWEEP_CSV_COLUMNS = (
    "axis,value,B,D_u,D_i,D_c,d,theoretical_speedup,"
    "t_vanilla_mean_ns,t_vanilla_std_ns,t_mari_mean_ns,t_mari_std_ns,"
    "measured_speedup"
)

FRAGMENTATION_CSV_COLUMNS = (
    "chunk,B,D_u,D_i,D_c,d,"
    "t_vanilla_median_ns,t_mari_median_ns,"
    "t_frag_mean_ns,t_frag_std_ns,t_frag_median_ns,"
    "degradation_vs_vanilla,degradation_vs_mari,equivalent"
)


@dataclass(frozen=True)
class BenchConfig:
    """Shared benchmark settings."""

    repeats: int = 100
    warmup: int = 10
    seed: int = 0
    dtype: str = "f64"
    batch_size: int = 2000

    def __post_init__(self):
        if self.repeats < 2:
            raise InvalidArgumentError("repeats must be >= 2 so std is defined")
        if self.warmup < 0:
            raise InvalidArgumentError("warmup must be >= 0")
        if self.dtype not in ("f64", "f32"):
            raise InvalidArgumentError(f"unknown dtype {self.dtype!r}")


@dataclass(frozen=True)
class Timing:
    mean_ns: float
    std_ns: float
    median_ns: float
    samples: tuple[int, ...]


def _summarize(samples: Sequence[int]) -> Timing:
    return Timing(
        mean_ns=statistics.fmean(samples),
        std_ns=statistics.stdev(samples),
        median_ns=statistics.median(samples),
        samples=tuple(samples),
    )


def time_variants(
    variants: dict[str, tuple[Graph, InputBundle]],
    cfg: BenchConfig,
) -> dict[str, Timing]:
    """Round-robin timing of several graph/bundle pairs."""
    samples: dict[str, list[int]] = {name: [] for name in variants}
    with threadpool_limits(limits=1):
        for _ in range(cfg.warmup):
            for g, bundle in variants.values():
                execute(g, bundle, strategy=ONE_SHOT, dtype=cfg.dtype, fast_matmul=True)
        for _ in range(cfg.repeats):
            for name, (g, bundle) in variants.items():
                report = execute(
                    g, bundle, strategy=ONE_SHOT, dtype=cfg.dtype, fast_matmul=True
                )
                samples[name].append(report.wall_time_ns)
    return {name: _summarize(s) for name, s in samples.items()}


@dataclass(frozen=True)
class BenchRow:
    axis: str
    value: int
    dims: MatmulDims
    theoretical_speedup: float
    vanilla: Timing
    mari: Timing

    @property
    def measured_speedup(self) -> float:
        return self.vanilla.mean_ns / self.mari.mean_ns


def _site_pair(dims: MatmulDims, seed: int) -> tuple[Graph, Graph, InputBundle]:
    g = neat_site_graph(dims.d_user, dims.d_item, dims.d_cross, dims.d_out, seed=seed)
    rewritten, _ = rewrite_all(g)
    bundle = random_bundle(g, dims.B, seed=seed + 1)
    return g, rewritten, bundle


def bench_sweep(
    cfg: BenchConfig,
    points=None,
) -> list[BenchRow]:
    """Vanilla versus decomposed product across a parameter grid.

    ``points`` defaults to the full reference grid; pass the result of
    ``table2_points(axes=...)`` to restrict it.
    """
    if points is None:
        points = table2_points()
    rows = []
    for p in points:
        g, rewritten, bundle = _site_pair(p.dims, cfg.seed)
        timings = time_variants(
            {"vanilla": (g, bundle), "mari": (rewritten, bundle)}, cfg
        )
        rows.append(
            BenchRow(
                axis=p.axis,
                value=p.value,
                dims=p.dims,
                theoretical_speedup=mari_flops(p.dims).speedup,
                vanilla=timings["vanilla"],
                mari=timings["mari"],
            )
        )
    return rows


@dataclass(frozen=True)
class FragmentationRow:
    chunk: int
    dims: MatmulDims
    vanilla: Timing
    mari: Timing
    fragmented: Timing
    equivalent: bool

    @property
    def degradation_vs_vanilla(self) -> float:
        """(T_fragmented - T_vanilla) / T_vanilla over medians."""
        return (self.fragmented.median_ns - self.vanilla.median_ns) / self.vanilla.median_ns

    @property
    def degradation_vs_mari(self) -> float:
        return (self.fragmented.median_ns - self.mari.median_ns) / self.mari.median_ns


DEFAULT_CHUNKS = (50, 100, 200, 400, 800)
FRAGMENTATION_DIMS = MatmulDims(
    B=2000, d_user=4000, d_item=1000, d_cross=0, d_out=256
)


def bench_fragmentation(
    cfg: BenchConfig,
    chunks: Sequence[int] = DEFAULT_CHUNKS,
    dims: MatmulDims = FRAGMENTATION_DIMS,
) -> list[FragmentationRow]:
    """Fragmented variants of one site against the vanilla product and the
    neat decomposed form. All variants share the timing rounds."""
    if any(c < 1 for c in chunks):
        raise InvalidArgumentError(f"chunks must be positive: {chunks}")
    dims = MatmulDims(cfg.batch_size, dims.d_user, dims.d_item, dims.d_cross, dims.d_out)
    g, rewritten, bundle = _site_pair(dims, cfg.seed)
    variants: dict[str, tuple[Graph, InputBundle]] = {
        "vanilla": (g, bundle),
        "mari": (rewritten, bundle),
    }
    fragmented: dict[int, Graph] = {}
    for chunk in chunks:
        fragmented[chunk] = fragment_site(g, "mm", chunk)
        variants[f"chunk{chunk}"] = (fragmented[chunk], bundle)
    timings = time_variants(variants, cfg)
    tol = 1e-12 if cfg.dtype == "f64" else 1e-5
    rows = []
    for chunk in chunks:
        verdict = check_equivalence(
            g,
            fragmented[chunk],
            trials=2,
            tol=tol,
            seed=cfg.seed,
            batch_size=min(cfg.batch_size, 64),
            dtype=cfg.dtype,
            fast_matmul=True,
        )
        rows.append(
            FragmentationRow(
                chunk=chunk,
                dims=dims,
                vanilla=timings["vanilla"],
                mari=timings["mari"],
                fragmented=timings[f"chunk{chunk}"],
                equivalent=verdict.passed,
            )
        )
    return rows


@dataclass(frozen=True)
class FixtureSummary:
    site_count: int
    concat_groups: int
    per_site_saving: dict[str, int]
    theoretical_speedups: dict[str, float]
    baseline: Timing
    rewritten: Timing
    equivalence_passed: bool
    max_deviation: float

    @property
    def measured_speedup(self) -> float:
        return self.baseline.mean_ns / self.rewritten.mean_ns


def bench_fixture(
    cfg: BenchConfig,
    dims: Optional[FixtureDims] = None,
    *,
    trials: int = 20,
) -> FixtureSummary:
    """One-shot baseline versus the fully rewritten ranking-model fixture."""
    fixture_dims = dims if dims is not None else FixtureDims(
        d_user=192, d_item=96, d_cross=64, d_item_query=48,
        seq_len=32, d_seq=48, d_attn=64, d_user_hidden=128,
        d_user_tower=64, n_experts=4, d_expert=96, d_tower=64, n_tasks=2,
    )
    g = fixture_ranking_model(fixture_dims, seed=cfg.seed)
    rewritten, report = rewrite_all(g)
    tol = 1e-12 if cfg.dtype == "f64" else 1e-5
    verdict = check_equivalence(
        g,
        rewritten,
        trials=trials,
        tol=tol,
        seed=cfg.seed,
        batch_size=min(cfg.batch_size, 128),
        dtype=cfg.dtype,
        fast_matmul=True,
    )
    bundle = random_bundle(g, cfg.batch_size, seed=cfg.seed + 1)
    timings = time_variants(
        {"baseline": (g, bundle), "mari": (rewritten, bundle)}, cfg
    )
    return FixtureSummary(
        site_count=report.site_count,
        concat_groups=report.concat_groups,
        per_site_saving={
            s.matmul_id: s.flops_saving(cfg.batch_size) for s in report.sites
        },
        theoretical_speedups={
            s.matmul_id: s.speedup(cfg.batch_size) for s in report.sites
        },
        baseline=timings["baseline"],
        rewritten=timings["mari"],
        equivalence_passed=verdict.passed,
        max_deviation=verdict.max_deviation,
    )


def _provenance(cfg: BenchConfig, mode: str) -> str:
    return (
        f"# mari-bench v{_VERSION} mode={mode} repeats={cfg.repeats} "
        f"warmup={cfg.warmup} seed={cfg.seed} dtype={cfg.dtype} "
        f"batch={cfg.batch_size}\n"
    )


def sweep_csv(rows: Iterable[BenchRow], cfg: BenchConfig) -> str:
    out = io.StringIO()
    out.write(_provenance(cfg, "sweep"))
    out.write(SWEEP_CSV_COLUMNS + "\n")
    for r in rows:
        d = r.dims
        out.write(
            f"{r.axis},{r.value},{d.B},{d.d_user},{d.d_item},{d.d_cross},{d.d_out},"
            f"{r.theoretical_speedup:.6f},"
            f"{r.vanilla.mean_ns:.1f},{r.vanilla.std_ns:.1f},"
            f"{r.mari.mean_ns:.1f},{r.mari.std_ns:.1f},"
            f"{r.measured_speedup:.4f}\n"
        )
    return out.getvalue()


def fragmentation_csv(rows: Iterable[FragmentationRow], cfg: BenchConfig) -> str:
    out = io.StringIO()
    out.write(_provenance(cfg, "fragmentation"))
    out.write(FRAGMENTATION_CSV_COLUMNS + "\n")
    for r in rows:
        d = r.dims
        out.write(
            f"{r.chunk},{d.B},{d.d_user},{d.d_item},{d.d_cross},{d.d_out},"
            f"{r.vanilla.median_ns:.1f},{r.mari.median_ns:.1f},"
            f"{r.fragmented.mean_ns:.1f},{r.fragmented.std_ns:.1f},"
            f"{r.fragmented.median_ns:.1f},"
            f"{r.degradation_vs_vanilla:.4f},{r.degradation_vs_mari:.4f},"
            f"{'yes' if r.equivalent else 'no'}\n"
        )
    return out.getvalue()


def fixture_text(summary: FixtureSummary, cfg: BenchConfig) -> str:
    lines = [
        _provenance(cfg, "fixture").rstrip("\n"),
        f"sites_rewritten: {summary.site_count}",
        f"concat_groups: {summary.concat_groups}",
        f"equivalence: {'pass' if summary.equivalence_passed else 'FAIL'} "
        f"(max deviation {summary.max_deviation:.3e})",
        f"baseline_median_ns: {summary.baseline.median_ns:.0f}",
        f"rewritten_median_ns: {summary.rewritten.median_ns:.0f}",
        f"measured_speedup: {summary.measured_speedup:.3f}",
    ]
    for site, saving in sorted(summary.per_site_saving.items()):
        speedup = summary.theoretical_speedups[site]
        lines.append(
            f"site {site}: flops_saving={saving} theoretical_speedup={speedup:.3f}"
        )
    return "\n".join(lines) + "\n"

"""Evaluation harness: run variants over problems, aggregate, report.

Estimates are pass@1 solve rates in percent with percentile-bootstrap
confidence intervals (numpy PCG64 generator, one index draw per
resample, linear-interpolation quantiles). Reports are deterministic
functions of the persisted records plus run metadata, so regenerating a
report never changes its bytes.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._util import add_months, month_floor
from .ccflows import DEFAULT_VARIANTS, VariantSettings, build_variant, parse_variant, problem_payload
from .core import ROUNDS_USED_KEY, RunContext, create_flow, package_input, run
from .dataset import BUCKET_ORDER, DEFAULT_CUTOFF, Problem, bucket_key
from .errors import NestflowError
from .sandbox import ExecutionLimits, Verdict, run_tests
from .trace import TraceSink

logger = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 1000
DEFAULT_LEVEL = 0.95
EMPTY_CELL = "--"


@dataclass(frozen=True)
class SolveRate:
    """Solve rate in percent with an optional confidence interval."""

    point: float
    ci_low: float | None
    ci_high: float | None
    n: int


@dataclass(frozen=True)
class WindowPoint:
    start: dt.date
    end: dt.date
    rate: SolveRate


@dataclass(frozen=True)
class RunRecord:
    problem_id: str
    variant: str
    solved: bool
    rounds_used: int
    release_date: str
    trace_ref: str
    wall_time: float
    verdict: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "problem_id": self.problem_id,
            "variant": self.variant,
            "solved": self.solved,
            "rounds_used": self.rounds_used,
            "release_date": self.release_date,
            "trace_ref": self.trace_ref,
            "wall_time": self.wall_time,
        }
        if self.verdict is not None:
            doc["verdict"] = self.verdict
        if self.error is not None:
            doc["error"] = self.error
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunRecord":
        return cls(
            problem_id=doc["problem_id"],
            variant=doc["variant"],
            solved=doc["solved"],
            rounds_used=doc["rounds_used"],
            release_date=doc["release_date"],
            trace_ref=doc["trace_ref"],
            wall_time=doc["wall_time"],
            verdict=doc.get("verdict"),
            error=doc.get("error"),
        )


def append_record(path: str | Path, record: RunRecord) -> None:
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(RunRecord.from_dict(json.loads(line)))
    return records


def pass_at_1(outcomes: list[bool]) -> float:
    """Fraction of solved problems, in percent."""
    if not outcomes:
        raise ValueError("pass_at_1 needs at least one outcome")
    return 100.0 * sum(outcomes) / len(outcomes)


def bootstrap_ci(outcomes: list[bool], resamples: int = DEFAULT_RESAMPLES,
                 level: float = DEFAULT_LEVEL, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the solve rate, in percent.

    Resample b draws ``rng.integers(0, n, size=n)`` from
    ``numpy.random.default_rng(seed)``; the interval is the
    (alpha, 1-alpha) linear-interpolation quantiles of the resampled
    means, widened if needed to contain the point estimate.
    """
    if not outcomes:
        raise ValueError("bootstrap_ci needs at least one outcome")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    values = np.asarray(outcomes, dtype=float)
    n = values.size
    rng = np.random.default_rng(seed)
    means = np.empty(resamples, dtype=float)
    for b in range(resamples):
        indices = rng.integers(0, n, size=n)
        means[b] = values[indices].mean()
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    point = values.mean()
    return float(100.0 * min(low, point)), float(100.0 * max(high, point))


def solve_rate(outcomes: list[bool], resamples: int = DEFAULT_RESAMPLES,
               level: float = DEFAULT_LEVEL, seed: int = 0) -> SolveRate:
    point = pass_at_1(outcomes)
    low, high = bootstrap_ci(outcomes, resamples=resamples, level=level, seed=seed)
    return SolveRate(point=point, ci_low=low, ci_high=high, n=len(outcomes))


def sliding_window(dated_outcomes: list[tuple[dt.date, bool]], span_months: int = 2,
                   step_months: int = 1, resamples: int = DEFAULT_RESAMPLES,
                   level: float = DEFAULT_LEVEL, seed: int = 0) -> list[WindowPoint]:
    """Solve rate over a window sliding across release months.

    Windows are [start, start + span) aligned to month starts, stepping
    by ``step_months``; windows containing no problems are skipped.
    """
    if span_months < 1 or step_months < 1:
        raise ValueError("span_months and step_months must be >= 1")
    if not dated_outcomes:
        return []
    ordered = sorted(dated_outcomes, key=lambda pair: pair[0])
    first = month_floor(ordered[0][0])
    last = ordered[-1][0]
    points = []
    start = first
    while start <= last:
        end = add_months(start, span_months)
        outcomes = [solved for day, solved in ordered if start <= day < end]
        if outcomes:
            points.append(WindowPoint(start=start, end=end,
                                      rate=solve_rate(outcomes, resamples=resamples,
                                                      level=level, seed=seed)))
        start = add_months(start, step_months)
    return points


def write_temporal_csv(by_variant: dict[str, list[WindowPoint]], path: str | Path) -> None:
    """Write window series losslessly (floats via repr round-trip)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "window_start", "window_end",
                         "point", "ci_low", "ci_high", "n"])
        for variant in sorted(by_variant):
            for wp in by_variant[variant]:
                writer.writerow([variant, wp.start.isoformat(), wp.end.isoformat(),
                                 repr(wp.rate.point), repr(wp.rate.ci_low),
                                 repr(wp.rate.ci_high), wp.rate.n])


def read_temporal_csv(path: str | Path) -> dict[str, list[WindowPoint]]:
    by_variant: dict[str, list[WindowPoint]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rate = SolveRate(point=float(row["point"]), ci_low=float(row["ci_low"]),
                             ci_high=float(row["ci_high"]), n=int(row["n"]))
            point = WindowPoint(start=dt.date.fromisoformat(row["window_start"]),
                                end=dt.date.fromisoformat(row["window_end"]), rate=rate)
            by_variant.setdefault(row["variant"], []).append(point)
    return by_variant


def format_cell(rate: SolveRate | None, baseline: SolveRate | None = None) -> str:
    """One table cell: absolute "71.8 ±11.0", delta "+9.3 ±9.7", or "--"."""
    if rate is None or rate.n == 0:
        return EMPTY_CELL
    half = (rate.ci_high - rate.ci_low) / 2.0 if rate.ci_low is not None else 0.0
    if baseline is None:
        return f"{rate.point:.1f} ±{half:.1f}"
    delta = round(rate.point - baseline.point, 1)
    if delta == 0:
        delta = 0.0
    return f"{delta:+.1f} ±{half:.1f}"


_BUCKET_LABELS = {
    "codeforces-pre": ("Codeforces", "Pre-cutoff"),
    "codeforces-post": ("Codeforces", "Post-cutoff"),
    "leetcode-pre-easy": ("LeetCode", "Pre Easy"),
    "leetcode-pre-medium": ("LeetCode", "Pre Medium"),
    "leetcode-pre-hard": ("LeetCode", "Pre Hard"),
    "leetcode-post-easy": ("LeetCode", "Post Easy"),
    "leetcode-post-medium": ("LeetCode", "Post Medium"),
    "leetcode-post-hard": ("LeetCode", "Post Hard"),
}


def _table_cells(stats: dict[str, dict[str, SolveRate | None]], variants: list[str],
                 buckets: list[str], baseline_variant: str) -> list[list[str]]:
    rows = []
    baseline_stats = stats.get(baseline_variant, {})
    for variant in variants:
        cells = [variant]
        for bucket in buckets:
            rate = stats.get(variant, {}).get(bucket)
            if variant == baseline_variant:
                cells.append(format_cell(rate))
            else:
                baseline = baseline_stats.get(bucket)
                if baseline is None or rate is None:
                    cells.append(EMPTY_CELL if rate is None else format_cell(rate))
                else:
                    cells.append(format_cell(rate, baseline))
        rows.append(cells)
    return rows


def render_results_table(stats: dict[str, dict[str, SolveRate | None]],
                         variants: list[str] | None = None,
                         baseline_variant: str = "Code") -> str:
    """Plain-text results table: baseline row absolute, other rows as deltas."""
    variants = list(variants if variants is not None else stats)
    buckets = [b for b in BUCKET_ORDER
               if any(stats.get(v, {}).get(b) is not None for v in variants)]
    rows = _table_cells(stats, variants, buckets, baseline_variant)
    group_row = ["Flow"] + [_BUCKET_LABELS[b][0] for b in buckets]
    label_row = [""] + [_BUCKET_LABELS[b][1] for b in buckets]
    # Blank out repeated group names so each source reads as one span.
    for i in range(len(group_row) - 1, 1, -1):
        if group_row[i] == group_row[i - 1]:
            group_row[i] = ""
    table = [group_row, label_row] + rows
    widths = [max(len(row[col]) for row in table) for col in range(len(table[0]))]
    lines = []
    for index, row in enumerate(table):
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
        if index == 1:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"


def results_table_csv(stats: dict[str, dict[str, SolveRate | None]],
                      variants: list[str] | None = None,
                      baseline_variant: str = "Code") -> str:
    variants = list(variants if variants is not None else stats)
    buckets = [b for b in BUCKET_ORDER
               if any(stats.get(v, {}).get(b) is not None for v in variants)]
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["variant"] + buckets)
    for row in _table_cells(stats, variants, buckets, baseline_variant):
        writer.writerow(row)
    return buffer.getvalue()


@dataclass
class EvalSettings:
    """Everything evaluate_grid needs besides the problems and variants."""

    out_dir: Path
    backend: object
    variant_settings: VariantSettings = VariantSettings()
    cutoff: dt.date = DEFAULT_CUTOFF
    workers: int = 1
    seed: int = 0
    resamples: int = DEFAULT_RESAMPLES
    level: float = DEFAULT_LEVEL
    resume: bool = True
    cache: object | None = None


@dataclass
class GridResult:
    records: list[RunRecord]
    new_runs: int


def _judge(problem: Problem, code: str, settings: EvalSettings) -> tuple[bool, str]:
    limits = ExecutionLimits(wall_time=settings.variant_settings.wall_time,
                             memory_bytes=settings.variant_settings.memory_bytes)
    report = run_tests(code, list(problem.hidden_tests), limits=limits,
                       language_tag=settings.variant_settings.language_tag)
    return report.verdict == Verdict.ALL_PASSED, report.verdict.value


def run_pair(problem: Problem, variant_name: str, settings: EvalSettings) -> RunRecord:
    """Run one (problem, variant) pair and judge it on the hidden tests."""
    started = time.perf_counter()
    trace_ref = f"{problem.id}/{variant_name}/trace.log"
    trace_path = settings.out_dir / trace_ref
    config = build_variant(variant_name, settings.variant_settings)
    flow = create_flow(config)
    error = None
    code = None
    rounds = 0
    with TraceSink(trace_path) as sink:
        ctx = RunContext(trace=sink, backends={settings.variant_settings.backend: settings.backend},
                         cache=settings.cache)
        message = package_input(problem_payload(problem), created_by="harness")
        try:
            output = run(flow, message, ctx)
        except NestflowError as exc:
            error = str(exc)
            logger.warning("run failed for %s/%s: %s", problem.id, variant_name, exc)
        else:
            code = output.payload.get("code")
            rounds = output.payload.get(ROUNDS_USED_KEY, 0)
    verdict = None
    if error is None:
        if code is None:
            solved, error = False, "no program extracted"
        else:
            solved, verdict = _judge(problem, code, settings)
    else:
        solved = False
    return RunRecord(
        problem_id=problem.id,
        variant=variant_name,
        solved=solved,
        rounds_used=rounds,
        release_date=problem.release_date.isoformat(),
        trace_ref=trace_ref,
        wall_time=round(time.perf_counter() - started, 3),
        verdict=verdict,
        error=error,
    )


def _write_run_meta(path: Path, problems: list[Problem], variants: list[str],
                    settings: EvalSettings) -> None:
    meta = {
        "seed": settings.seed,
        "cutoff": settings.cutoff.isoformat(),
        "resamples": settings.resamples,
        "level": settings.level,
        "variants": list(variants),
        "variant_settings": asdict(settings.variant_settings),
        "problems": {
            p.id: {
                "source": p.source,
                "difficulty": p.difficulty,
                "release_date": p.release_date.isoformat(),
            }
            for p in problems
        },
    }
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_run_meta(out_dir: str | Path) -> dict:
    return json.loads((Path(out_dir) / "run_meta.json").read_text(encoding="utf-8"))


def evaluate_grid(problems: list[Problem], variants: list[str],
                  settings: EvalSettings) -> GridResult:
    """Run every (problem, variant) pair not already recorded.

    Pairs run on a thread pool; results append to records.jsonl as they
    finish. A failing pair becomes a solved=false record with an error
    note rather than aborting the grid. Record order on disk is
    completion order; aggregation always re-sorts.
    """
    for variant in variants:
        parse_variant(variant)
    out_dir = Path(settings.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    if not settings.resume and records_path.exists():
        records_path.unlink()
    _write_run_meta(out_dir / "run_meta.json", problems, variants, settings)
    existing = {(r.problem_id, r.variant): r for r in read_records(records_path)}
    by_id = {p.id: p for p in problems}
    todo = [(pid, variant) for pid in sorted(by_id) for variant in variants
            if (pid, variant) not in existing]
    write_lock = threading.Lock()
    results: dict[tuple[str, str], RunRecord] = dict(existing)

    def one(task: tuple[str, str]) -> None:
        pid, variant = task
        record = run_pair(by_id[pid], variant, settings)
        with write_lock:
            append_record(records_path, record)
            results[(pid, variant)] = record

    if todo:
        workers = max(1, settings.workers)
        if workers == 1:
            for task in todo:
                one(task)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(one, todo))
    ordered = [results[key] for key in sorted(results)]
    logger.info("grid complete: %d records (%d new)", len(ordered), len(todo))
    return GridResult(records=ordered, new_runs=len(todo))


def stats_from_records(records: list[RunRecord], problem_meta: dict[str, dict],
                       cutoff: dt.date, resamples: int = DEFAULT_RESAMPLES,
                       level: float = DEFAULT_LEVEL, seed: int = 0
                       ) -> dict[str, dict[str, SolveRate]]:
    """Per-variant, per-bucket solve rates from sorted records."""
    grouped: dict[str, dict[str, list[bool]]] = {}
    for record in sorted(records, key=lambda r: (r.problem_id, r.variant)):
        meta = problem_meta[record.problem_id]
        side = "pre" if dt.date.fromisoformat(record.release_date) < cutoff else "post"
        if meta["source"] == "codeforces":
            bucket = f"codeforces-{side}"
        else:
            bucket = f"leetcode-{side}-{meta['difficulty']}"
        grouped.setdefault(record.variant, {}).setdefault(bucket, []).append(record.solved)
    stats: dict[str, dict[str, SolveRate]] = {}
    for variant, buckets in grouped.items():
        stats[variant] = {
            bucket: solve_rate(outcomes, resamples=resamples, level=level, seed=seed)
            for bucket, outcomes in buckets.items()
        }
    return stats


def write_report(out_dir: str | Path) -> dict[str, Path]:
    """Regenerate the report files from records + run metadata.

    Output depends only on run_meta.json and records.jsonl, so repeated
    calls produce byte-identical files.
    """
    out_dir = Path(out_dir)
    meta = read_run_meta(out_dir)
    records = read_records(out_dir / "records.jsonl")
    cutoff = dt.date.fromisoformat(meta["cutoff"])
    stats = stats_from_records(records, meta["problems"], cutoff,
                               resamples=meta["resamples"], level=meta["level"],
                               seed=meta["seed"])
    variants = [v for v in meta["variants"] if v in stats]
    baseline = "Code" if "Code" in variants else (variants[0] if variants else "Code")
    table_path = out_dir / "results_table.txt"
    table_path.write_text(render_results_table(stats, variants, baseline), encoding="utf-8")
    csv_path = out_dir / "results_table.csv"
    csv_path.write_text(results_table_csv(stats, variants, baseline), encoding="utf-8")
    by_variant: dict[str, list[WindowPoint]] = {}
    for variant in variants:
        dated = [(dt.date.fromisoformat(r.release_date), r.solved)
                 for r in sorted(records, key=lambda r: (r.problem_id, r.variant))
                 if r.variant == variant]
        by_variant[variant] = sliding_window(dated, resamples=meta["resamples"],
                                             level=meta["level"], seed=meta["seed"])
    temporal_path = out_dir / "temporal_series.csv"
    write_temporal_csv(by_variant, temporal_path)
    return {"table": table_path, "csv": csv_path, "temporal": temporal_path}

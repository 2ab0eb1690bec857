"""Command-line interface.

Exit codes: 0 success (problem solved / traces identical), 1 completed
but negative (unsolved, replay divergence), 2 usage or config errors,
3 environment errors (missing interpreter, missing credential).
"""
from __future__ import annotations

import datetime as dt
import logging
import sys
from pathlib import Path

import click
import yaml

from .backends import RemoteBackend, ResponseCache, ScriptedBackend
from .ccflows import DEFAULT_VARIANTS, VariantSettings, build_variant, parse_variant, problem_payload
from .core import RunContext, create_flow, package_input, run, ROUNDS_USED_KEY
from .dataset import DEFAULT_CUTOFF, load_problem_file, load_problems
from .errors import AuthError, ConfigError, DatasetError, NestflowError, SandboxEnvironmentError
from .evalharness import (
    EvalSettings,
    evaluate_grid,
    read_run_meta,
    run_pair,
    write_report,
)
from .sandbox import DEFAULT_MEMORY_BYTES, DEFAULT_WALL_TIME, ExecutionLimits, Verdict, run_tests
from .trace import MemoryTraceSink, normalize_trace, read_trace, replay_backend

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigError, DatasetError)
ENVIRONMENT_ERRORS = (SandboxEnvironmentError, AuthError)


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, ENVIRONMENT_ERRORS):
        sys.exit(3)
    sys.exit(2)


def load_backend_profile(profiles_path: str | Path, name: str):
    """Build (backend, cache, model) from one profile in the profiles file."""
    path = Path(profiles_path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read profiles file {path}: {exc}") from exc
    profiles = (doc or {}).get("profiles", {})
    if name not in profiles:
        raise ConfigError(f"no profile {name!r} in {path}; available: {sorted(profiles)}")
    profile = profiles[name]
    kind = profile.get("kind")
    cache = ResponseCache(path.parent / profile["cache_dir"]) if profile.get("cache_dir") else None
    model = profile.get("model", "default")
    if kind == "scripted":
        if "rules_file" in profile:
            backend = ScriptedBackend.from_rules_file(path.parent / profile["rules_file"])
        elif "responses" in profile:
            backend = ScriptedBackend(responses=list(profile["responses"]))
        else:
            raise ConfigError(f"scripted profile {name!r} needs rules_file or responses")
    elif kind == "remote":
        for field in ("endpoint", "api_key_env"):
            if field not in profile:
                raise ConfigError(f"remote profile {name!r} needs {field!r}")
        backend = RemoteBackend(endpoint=profile["endpoint"],
                                api_key_env=profile["api_key_env"],
                                max_attempts=int(profile.get("max_attempts", 5)),
                                backoff_base=float(profile.get("backoff_base", 0.5)),
                                request_timeout=float(profile.get("request_timeout", 60.0)))
    else:
        raise ConfigError(f"profile {name!r} has unknown kind {kind!r}")
    return backend, cache, model


def _variant_settings(model: str, wall_time: float, memory_mb: int, max_rounds: int,
                      interactive_plan: bool = False) -> VariantSettings:
    return VariantSettings(model=model, wall_time=wall_time,
                           memory_bytes=memory_mb * 1024 * 1024, max_rounds=max_rounds,
                           interactive_plan=interactive_plan)


@click.group()
@click.option("--verbose", is_flag=True, help="Log debug detail to stderr.")
def main(verbose: bool) -> None:
    """Run, evaluate and replay message-passing flows."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("run")
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True),
              help="Problem YAML file.")
@click.option("--variant", required=True, help="Variant name, e.g. Code_Debug or Plan-Code.")
@click.option("--profiles", "profiles_path", default="profiles.yaml", show_default=True,
              help="Backend profiles file.")
@click.option("--backend-profile", default="scripted", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory for the run trace (same layout as eval).")
@click.option("--interactive-plan", is_flag=True,
              help="Read the Plan_Oracle plan from stdin instead of the dataset.")
@click.option("--wall-time", default=DEFAULT_WALL_TIME, show_default=True, type=float)
@click.option("--memory", "memory_mb", default=DEFAULT_MEMORY_BYTES // (1024 * 1024),
              show_default=True, type=int, help="Sandbox memory limit in MiB.")
@click.option("--max-rounds", default=4, show_default=True, type=int)
def cmd_run(problem_path: str, variant: str, profiles_path: str, backend_profile: str,
            out_dir: str | None, interactive_plan: bool, wall_time: float,
            memory_mb: int, max_rounds: int) -> None:
    """Run one variant on one problem and judge it on the hidden tests."""
    try:
        parse_variant(variant)
        problem = load_problem_file(problem_path)
        backend, cache, model = load_backend_profile(profiles_path, backend_profile)
        vsettings = _variant_settings(model, wall_time, memory_mb, max_rounds, interactive_plan)
        settings = EvalSettings(out_dir=Path(out_dir) if out_dir else Path("."),
                                backend=backend, variant_settings=vsettings, cache=cache)
        if out_dir:
            record = run_pair(problem, variant, settings)
            solved, rounds, error = record.solved, record.rounds_used, record.error
            code = None if error else _final_code(problem, variant, settings)
        else:
            config = build_variant(variant, vsettings)
            flow = create_flow(config)
            ctx = RunContext(backends={vsettings.backend: backend}, cache=cache)
            message = package_input(problem_payload(problem), created_by="cli")
            try:
                output = run(flow, message, ctx)
                code = output.payload.get("code")
                rounds = output.payload.get(ROUNDS_USED_KEY, 0)
                error = None
            except NestflowError as exc:
                if isinstance(exc.__cause__, ENVIRONMENT_ERRORS):
                    _fail(exc.__cause__)
                code, rounds, error = None, 0, str(exc)
            solved = False
            if code is not None:
                limits = ExecutionLimits(wall_time=wall_time, memory_bytes=memory_mb * 1024 * 1024)
                solved = run_tests(code, list(problem.hidden_tests),
                                   limits=limits).verdict == Verdict.ALL_PASSED
    except USAGE_ERRORS as exc:
        _fail(exc)
    except ENVIRONMENT_ERRORS as exc:
        _fail(exc)
    click.echo(f"problem: {problem.id}")
    click.echo(f"variant: {variant}")
    click.echo(f"rounds_used: {rounds}")
    if error:
        click.echo(f"error: {error}")
    if code:
        click.echo("program:")
        click.echo(code)
    click.echo(f"solved: {str(solved).lower()}")
    sys.exit(0 if solved else 1)


def _final_code(problem, variant: str, settings: EvalSettings) -> str | None:
    # Re-read the final program from the trace the run just wrote.
    events = read_trace(settings.out_dir / problem.id / variant / "trace.log")
    outs = [e for e in events if e.kind == "message_out"]
    if outs:
        return outs[-1].body["message"]["payload"].get("code")
    return None


@main.command("eval")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True),
              help="Problem directory (or one YAML file).")
@click.option("--variants", default=",".join(DEFAULT_VARIANTS), show_default=False,
              help="Comma-separated variant names (default: the 9-variant suite).")
@click.option("--profiles", "profiles_path", default="profiles.yaml", show_default=True)
@click.option("--backend-profile", default="scripted", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Run directory.")
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--cutoff", default=DEFAULT_CUTOFF.isoformat(), show_default=True)
@click.option("--resume/--no-resume", default=True, show_default=True,
              help="Keep existing records and run only missing pairs.")
@click.option("--wall-time", default=DEFAULT_WALL_TIME, show_default=True, type=float)
@click.option("--memory", "memory_mb", default=DEFAULT_MEMORY_BYTES // (1024 * 1024),
              show_default=True, type=int)
@click.option("--max-rounds", default=4, show_default=True, type=int)
def cmd_eval(dataset_path: str, variants: str, profiles_path: str, backend_profile: str,
             out_dir: str, workers: int, seed: int, cutoff: str, resume: bool,
             wall_time: float, memory_mb: int, max_rounds: int) -> None:
    """Evaluate variants over a dataset and write records plus reports."""
    try:
        variant_list = [v.strip() for v in variants.split(",") if v.strip()]
        for name in variant_list:
            parse_variant(name)
        problems = load_problems(dataset_path)
        backend, cache, model = load_backend_profile(profiles_path, backend_profile)
        cutoff_date = dt.date.fromisoformat(cutoff)
        settings = EvalSettings(
            out_dir=Path(out_dir), backend=backend, cache=cache,
            variant_settings=_variant_settings(model, wall_time, memory_mb, max_rounds),
            cutoff=cutoff_date, workers=workers, seed=seed, resume=resume)
        result = evaluate_grid(problems, variant_list, settings)
        paths = write_report(out_dir)
    except USAGE_ERRORS as exc:
        _fail(exc)
    except ENVIRONMENT_ERRORS as exc:
        _fail(exc)
    except ValueError as exc:
        _fail(ConfigError(str(exc)))
    click.echo(f"{len(result.records)} records ({result.new_runs} new runs)")
    click.echo((Path(out_dir) / "records.jsonl").as_posix())
    click.echo(paths["table"].read_text(encoding="utf-8"), nl=False)
    sys.exit(0)


@main.command("report")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
def cmd_report(run_dir: str) -> None:
    """Regenerate report files from a run directory (byte-stable)."""
    try:
        paths = write_report(run_dir)
    except (USAGE_ERRORS + (FileNotFoundError, KeyError)) as exc:
        _fail(ConfigError(f"run directory is incomplete: {exc}"))
    click.echo(paths["table"].read_text(encoding="utf-8"), nl=False)
    sys.exit(0)


@main.command("replay")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--problem-id", required=True)
@click.option("--variant", required=True)
def cmd_replay(run_dir: str, problem_id: str, variant: str) -> None:
    """Re-execute a recorded run from its trace and diff the two traces."""
    try:
        parse_variant(variant)
        meta = read_run_meta(run_dir)
        trace_path = Path(run_dir) / problem_id / variant / "trace.log"
        if not trace_path.exists():
            raise ConfigError(f"no trace at {trace_path}")
        original = read_trace(trace_path)
        message_in = next(e for e in original if e.kind == "message_in")
        payload = message_in.body["message"]["payload"]
        vsettings = VariantSettings(**meta["variant_settings"])
        flow = create_flow(build_variant(variant, vsettings))
        sink = MemoryTraceSink()
        ctx = RunContext(trace=sink, backends={vsettings.backend: replay_backend(trace_path)})
        run(flow, package_input(payload, created_by=message_in.body["message"]["created_by"]), ctx)
    except USAGE_ERRORS as exc:
        _fail(exc)
    except NestflowError as exc:
        click.echo(f"replay diverged: {exc}", err=True)
        sys.exit(1)
    before = normalize_trace(original)
    after = normalize_trace(sink.events)
    if before == after:
        click.echo(f"replay identical: {len(after)} events")
        sys.exit(0)
    for index, (a, b) in enumerate(zip(before, after)):
        if a != b:
            click.echo(f"replay diverged at event {index + 1}: {a['kind']} != {b['kind']}")
            break
    else:
        click.echo(f"replay diverged: event count {len(before)} != {len(after)}")
    sys.exit(1)


@main.group("cache")
def cmd_cache() -> None:
    """Inspect or clear a response cache directory."""


@cmd_cache.command("stats")
@click.option("--cache-dir", required=True, type=click.Path())
def cache_stats(cache_dir: str) -> None:
    stats = ResponseCache(cache_dir).stats()
    click.echo(f"entries: {stats['entries']}")
    click.echo(f"bytes: {stats['bytes']}")


@cmd_cache.command("clear")
@click.option("--cache-dir", required=True, type=click.Path())
def cache_clear(cache_dir: str) -> None:
    removed = ResponseCache(cache_dir).clear()
    click.echo(f"removed: {removed}")


if __name__ == "__main__":
    main()

from __future__ import annotations

import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import click

from . import core, ga, harness, llm_loop, rankers
from .llm_client import HttpBackend, LlmError, Transcript, load_profile


def _load(path: str) -> core.DsmCase:
    try:
        return core.load_case(path)
    except core.CaseError as exc:
        raise click.ClickException(str(exc)) from exc


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """DSM sequencing: evaluate orders and run the optimizer and benchmarks."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command("eval")
@click.option("--case", "case_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sequence", required=True, help="Comma-separated node ids.")
def eval_cmd(case_path: str, sequence: str) -> None:
    """Print the feedback count of SEQUENCE."""
    case = _load(case_path)
    seq = [s.strip() for s in sequence.split(",") if s.strip()]
    try:
        click.echo(core.feedback_count(case, seq))
    except core.InvalidSequenceError as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--case", "case_path", required=True, type=click.Path(exists=True, dir_okay=False))
def metrics(case_path: str) -> None:
    """Print network characteristics as JSON."""
    m = core.network_metrics(_load(case_path))
    out = asdict(m)
    for key in ("density", "average_degree", "clustering_coefficient", "average_path_length"):
        out[key] = round(out[key], 3)
    click.echo(json.dumps(out, indent=2))


@main.command()
@click.option("--case", "case_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice([k.value for k in rankers.RankerKind]), required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--delta", default=rankers.DEFAULT_DELTA, show_default=True, help="Resolvent edge probability.")
def rank(case_path: str, method: str, seed: int, delta: float) -> None:
    """Order nodes with a deterministic ranking heuristic."""
    case = _load(case_path)
    seq = rankers.rank(case, method, rng_seed=seed, delta=delta)
    click.echo(json.dumps({"sequence": list(seq), "score": core.feedback_count(case, seq)}))


@main.command("ga")
@click.option("--case", "case_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--preset", type=click.Choice(["exploration", "exploitation", "balanced"]), default="balanced", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--generations", default=2000, show_default=True)
@click.option("--trace", "trace_dir", type=click.Path(file_okay=False), help="Write the convergence trace CSV here.")
def ga_cmd(case_path: str, preset: str, seed: int, generations: int, trace_dir: str | None) -> None:
    """Run the genetic algorithm benchmark."""
    case = _load(case_path)
    config = ga.GaConfig.from_preset(preset, seed=seed, generations=generations)
    result = ga.ga_run(case, config, method=f"ga-{preset}")
    if trace_dir:
        harness.emit_traces([ga.truncate_trace(result.trace)], trace_dir)
    click.echo(json.dumps({
        "sequence": list(result.best.sequence),
        "score": result.best.score,
        "unique_solutions": result.trace.unique_solutions,
    }))


@main.command()
@click.option("--case", "case_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", required=True, help="Backend profile JSON, or 'mock' for the offline responder.")
@click.option("--knowledge", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--iterations", default=20, show_default=True)
@click.option("--transcript", type=click.Path(dir_okay=False), help="Append every model call to this JSON-lines file.")
def llm(case_path: str, backend: str, knowledge: str, seed: int, iterations: int, transcript: str | None) -> None:
    """Run the LLM-guided optimizer on one case."""
    case = _load(case_path)
    client = llm_loop.MockOptimizerBackend() if backend == "mock" else HttpBackend(load_profile(backend))
    config = llm_loop.LoopConfig(max_iterations=iterations, with_knowledge=knowledge == "on", seed=seed)
    log = Transcript(transcript, run_id=f"{case.name}/{seed}") if transcript else None
    try:
        out = llm_loop.optimize(case, client, config, transcript=log)
    except LlmError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps({
        "sequence": list(out.best.sequence),
        "score": out.best.score,
        "initial_score": out.base.entries[0].score,
        "base_size": len(out.base),
        "skipped_iterations": list(out.skipped_iterations),
    }))


@main.command()
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=None, help="Override the plan's worker count.")
@click.option("--transcripts", is_flag=True, help="Keep JSON-lines transcripts of LLM calls.")
def run(plan_path: str, out_dir: str, workers: int | None, transcripts: bool) -> None:
    """Run an experiment plan and write traces and tables to OUT."""
    plan = harness.load_plan(plan_path)
    if workers is not None:
        plan.workers = workers
    out = Path(out_dir)
    result = harness.run_plan(plan, transcript_dir=out / "transcripts" if transcripts else None)
    harness.write_results(result, out)
    click.echo((out / "table.txt").read_text(encoding="utf-8"), nl=False)
    if result.failures:
        click.echo(f"{len(result.failures)} of {len(result.cells)} cells failed; see failures.json", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()

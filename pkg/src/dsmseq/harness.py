"""Experiment runner: methods x cases x seeds, aggregated into mean/std tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from . import ga, llm_loop, rankers
from .core import DsmCase, feedback_count, load_case
from .llm_client import HttpBackend, ScriptedBackend, Transcript, load_profile
from .trace import RunTrace, truncate_trace

log = logging.getLogger(__name__)

TRACE_LIMIT = 10_000
DEFAULT_SEEDS = tuple(range(10))
DEFAULT_TRIALS = (1, 5, 20)


@dataclass(frozen=True)
class MethodSpec:
    """``family`` is one of llm, ga, rank; ``variant`` the knowledge flag, preset or ranker."""

    family: str
    variant: str

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        family, _, variant = text.partition(":")
        family = family.strip().lower()
        variant = variant.strip().lower()
        if family == "llm":
            if variant not in ("with", "without"):
                raise ValueError(f"llm method needs ':with' or ':without', got {text!r}")
        elif family == "ga":
            variant = ga.GaPreset.parse(variant).name.lower()
        elif family == "rank":
            variant = rankers.RankerKind(variant).value
        else:
            raise ValueError(f"unknown method {text!r}")
        return cls(family, variant)

    @property
    def label(self) -> str:
        if self.family == "llm":
            return f"llm-{self.variant}-knowledge"
        if self.family == "ga":
            return f"ga-{self.variant.replace('_', '-')}"
        return self.variant

    def __str__(self) -> str:
        return f"{self.family}:{self.variant}"


@dataclass
class ExperimentPlan:
    cases: list[Path]
    methods: list[MethodSpec]
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    trial_counts: list[int] = field(default_factory=lambda: list(DEFAULT_TRIALS))
    backend: dict = field(default_factory=lambda: {"kind": "mock"})
    ga_generations: int = 2000
    llm_iterations: int | None = None
    sampling: tuple[int, int] = (5, 5)
    workers: int = 1

    def __post_init__(self):
        if not self.cases or not self.methods or not self.seeds:
            raise ValueError("plan needs at least one case, method and seed")
        bad = [k for k in self.trial_counts if k not in (1, 5, 20)]
        if bad or not self.trial_counts:
            raise ValueError(f"trial_counts must be a non-empty subset of {{1, 5, 20}}, got {self.trial_counts}")

    @classmethod
    def from_dict(cls, data: dict, root: Path | None = None) -> "ExperimentPlan":
        root = root or Path(".")
        cases = [p if Path(p).is_absolute() else root / p for p in data["cases"]]
        backend = dict(data.get("backend", {"kind": "mock"}))
        if backend.get("kind") == "profile" and not Path(backend["path"]).is_absolute():
            backend["path"] = str(root / backend["path"])
        return cls(
            cases=[Path(c) for c in cases],
            methods=[MethodSpec.parse(m) for m in data["methods"]],
            seeds=list(data.get("seeds", DEFAULT_SEEDS)),
            trial_counts=sorted(data.get("trial_counts", DEFAULT_TRIALS)),
            backend=backend,
            ga_generations=int(data.get("ga_generations", 2000)),
            llm_iterations=data.get("llm_iterations"),
            sampling=tuple(data.get("sampling", (5, 5))),
            workers=int(data.get("workers", 1)),
        )


def load_plan(path: str | Path) -> ExperimentPlan:
    path = Path(path)
    return ExperimentPlan.from_dict(json.loads(path.read_text(encoding="utf-8")), root=path.parent)


@dataclass(frozen=True)
class StatRow:
    method: str
    case: str
    trial_count: int | None
    mean: float
    std: float
    n: int = 0

    @property
    def row_label(self) -> str:
        return self.method if self.trial_count is None else f"{self.method} ({self.trial_count}-trial)"


@dataclass
class CellResult:
    method: str
    case: str
    seed: int
    scores: dict  # trial count (or None) -> best score
    trace: RunTrace | None = None
    error: str | None = None


@dataclass
class PlanResult:
    traces: list[RunTrace]
    stats: list[StatRow]
    cells: list[CellResult]

    @property
    def failures(self) -> list[CellResult]:
        return [c for c in self.cells if c.error]

    def __iter__(self):
        return iter((self.traces, self.stats))


def make_backend(spec: dict, case: DsmCase):
    kind = spec.get("kind", "mock")
    if kind == "mock":
        return llm_loop.MockOptimizerBackend()
    if kind == "scripted":
        scripts = spec.get("scripts", {})
        responses = scripts.get(case.name, spec.get("responses"))
        if responses is None:
            raise ValueError(f"scripted backend has no responses for case {case.name!r}")
        return ScriptedBackend(responses)
    if kind == "profile":
        return HttpBackend(load_profile(spec["path"]))
    raise ValueError(f"unknown backend kind {kind!r}")


def run_cell(case_path: Path, method: MethodSpec, seed: int, plan: ExperimentPlan, transcript_dir: Path | None = None) -> CellResult:
    case = load_case(case_path)
    label = method.label
    try:
        if method.family == "rank":
            seq = rankers.rank(case, method.variant, rng_seed=seed)
            return CellResult(label, case.name, seed, {None: feedback_count(case, seq)})
        if method.family == "ga":
            config = ga.GaConfig.from_preset(method.variant, seed=seed, generations=plan.ga_generations)
            result = ga.ga_run(case, config, method=label)
            trace = truncate_trace(result.trace, TRACE_LIMIT)
            return CellResult(label, case.name, seed, {None: trace.final_best}, trace=trace)
        iterations = plan.llm_iterations or max(plan.trial_counts)
        config = llm_loop.LoopConfig(
            max_iterations=iterations,
            sampling=llm_loop.SamplingParams(*plan.sampling),
            with_knowledge=method.variant == "with",
            seed=seed,
        )
        transcript = None
        if transcript_dir is not None:
            transcript = Transcript(transcript_dir / f"{_slug(label)}__{_slug(case.name)}__{seed}.jsonl", f"{label}/{case.name}/{seed}")
        out = llm_loop.optimize(case, make_backend(plan.backend, case), config, transcript=transcript, method=label)
        scores = {k: out.base.best(up_to_iteration=k).score for k in plan.trial_counts}
        return CellResult(label, case.name, seed, scores, trace=out.trace)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not sink the plan
        log.warning("cell %s/%s/seed %s failed: %s", label, case.name, seed, exc)
        return CellResult(label, case.name, seed, {}, error=f"{type(exc).__name__}: {exc}")


def _run_cell_args(args):
    return run_cell(*args)


def aggregate(cells: list[CellResult]) -> list[StatRow]:
    groups: dict[tuple, list[int]] = {}
    for cell in cells:
        if cell.error:
            continue
        for k, value in cell.scores.items():
            groups.setdefault((cell.method, cell.case, k), []).append(value)
    rows = []
    for (method, case, k), values in groups.items():
        rows.append(StatRow(method, case, k, statistics.fmean(values), statistics.pstdev(values), len(values)))
    rows.sort(key=lambda r: (r.method, r.case, -1 if r.trial_count is None else r.trial_count))
    return rows


def run_plan(plan: ExperimentPlan, transcript_dir: Path | None = None) -> PlanResult:
    jobs = [(Path(c), m, s, plan, transcript_dir) for c in plan.cases for m in plan.methods for s in plan.seeds]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            cells = list(pool.map(_run_cell_args, jobs))
    else:
        cells = [run_cell(*job) for job in jobs]
    cells.sort(key=lambda c: (c.method, c.case, c.seed))
    traces = [c.trace for c in cells if c.trace is not None and not c.error]
    return PlanResult(traces=traces, stats=aggregate(cells), cells=cells)


# ----------------------------------------------------------------- output


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-").lower() or "x"


def step_value(points: list[tuple[int, int]], x: int) -> int | None:
    """Last observation carried forward; None before the first point."""
    value = None
    for px, py in points:
        if px > x:
            break
        value = py
    return value


def emit_traces(traces: list[RunTrace], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    if not traces:
        log.warning("no traces to write")
        return []
    out_dir.mkdir(parents=True, exist_ok=True)
    grouped: dict[tuple[str, str], list[RunTrace]] = {}
    for t in traces:
        grouped.setdefault((t.method, t.case), []).append(t)
    written = []
    for (method, case), group in sorted(grouped.items()):
        group = sorted(group, key=lambda t: t.seed)
        stem = f"{_slug(method)}__{_slug(case)}"
        path = out_dir / f"{stem}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unique_solutions", "best_score", "seed"])
            for t in group:
                for x, y in t.points:
                    w.writerow([x, y, t.seed])
        written.append(path)

        grid = sorted({x for t in group for x, _ in t.points})
        mean_path = out_dir / f"{stem}__mean.csv"
        with mean_path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unique_solutions", "mean_best_score", "n_seeds"])
            for x in grid:
                vals = [v for v in (step_value(t.points, x) for t in group) if v is not None]
                w.writerow([x, f"{statistics.fmean(vals):.6f}", len(vals)])
        written.append(mean_path)
    return written


def format_cell(mean: float, std: float) -> str:
    q = Decimal("0.1")
    m = Decimal(repr(mean)).quantize(q, rounding=ROUND_HALF_UP)
    s = Decimal(repr(std)).quantize(q, rounding=ROUND_HALF_UP)
    return f"{m}±{s}"


def table_rows(stats: list[StatRow]) -> tuple[list[str], list[list[str]]]:
    cases = sorted({r.case for r in stats})
    ordered = sorted(stats, key=lambda r: (r.method, -1 if r.trial_count is None else r.trial_count))
    labels = list(dict.fromkeys(r.row_label for r in ordered))
    cells = {(r.row_label, r.case): format_cell(r.mean, r.std) for r in stats}
    header = ["method", *cases]
    body = [[label, *(cells.get((label, c), "") for c in cases)] for label in labels]
    return header, body


def emit_table(stats: list[StatRow], out_path: str | Path) -> list[Path]:
    """Write a CSV table and an aligned plain-text copy next to it."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    header, body = table_rows(stats)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    out_path.write_text(buf.getvalue(), encoding="utf-8")

    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in [header, *body]]
    txt_path = out_path.with_suffix(".txt")
    txt_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [out_path, txt_path]


def emit_stats(stats: list[StatRow], out_path: str | Path) -> Path:
    out_path = Path(out_path)
    with out_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "case", "trial_count", "mean", "std", "n"])
        for r in stats:
            w.writerow([r.method, r.case, "" if r.trial_count is None else r.trial_count, f"{r.mean:.6f}", f"{r.std:.6f}", r.n])
    return out_path


def write_results(result: PlanResult, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_traces(result.traces, out_dir / "traces")
    emit_table(result.stats, out_dir / "table.csv")
    emit_stats(result.stats, out_dir / "stats.csv")
    failures = [
        {"method": c.method, "case": c.case, "seed": c.seed, "error": c.error} for c in result.failures
    ]
    fail_path = out_dir / "failures.json"
    if failures:
        fail_path.write_text(json.dumps(failures, indent=2) + "\n", encoding="utf-8")
    elif fail_path.exists():
        fail_path.unlink()

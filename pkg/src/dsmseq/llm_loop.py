"""LLM-in-the-loop sequencing optimizer.

One run starts from a random permutation, then repeatedly shows the model a
sample of the archive (best few plus a random handful), asks for a new order,
checks it and appends it with its score.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import NamedTuple

from .core import (
    DsmCase,
    InvalidSequenceError,
    ScoredSolution,
    Sequence,
    check_permutation,
    feedback_count,
)
from .llm_client import Backend, LlmError, LlmRequest, LlmResponse, Transcript
from .trace import RunTrace

HEADER = (
    "You are an expert in the domain of combinational optimization.\n"
    "\n"
    "Please assist me to find an optimal sequential order that minimizes feedback cycles in the "
    "dependency network described below. Your task is to propose a new order that differs from "
    "previous attempts and has fewer feedback cycles than any listed.\n"
    "\n"
)

KNOWLEDGE_BLOCK = (
    "<Description of the entire Network> {network_description} </Description of the entire Network>\n"
    "<Nodes with Descriptions> {node_list_with_description} </Nodes with Descriptions>\n"
    "<Edges> {edge_list} </Edges>\n"
)

BARE_BLOCK = "<Nodes> {node_list} </Nodes>\n<Edges> {edge_list} </Edges>\n"

HISTORY = (
    "\n"
    "Below are some previous sequential orders arranged in descending order of feedback cycles "
    "(lower is better): {selected_historical_solutions}\n"
    "\n"
    "Please suggest a new order that:\n"
    "- Is different from all prior orders.\n"
    "- Has fewer feedback cycles than any previous order.\n"
    "- Covers all nodes exactly once.\n"
    "- Starts with <order> and ends with </order>.\n"
)

KNOWLEDGE_HINT = "- You can use the descriptions of nodes and networks to support your suggestion.\n"

FOOTER = "\nOutput Format:\n<order> ...... </order>\n\nPlease provide only the order and nothing else."

_ORDER_RE = re.compile(r"<order>(.*?)</order>", re.DOTALL | re.IGNORECASE)


class InvalidResponseError(ValueError):
    """The model's reply could not be turned into a valid sequence."""


class LoopTransportError(LlmError):
    """Backend failure mid-run; carries everything gathered so far."""

    def __init__(self, iteration: int, cause: Exception, base: "SolutionBase", trace: RunTrace):
        self.iteration = iteration
        self.base = base
        self.trace = trace
        super().__init__(f"iteration {iteration}: {cause}")


class SolutionBase:
    """Append-only archive of scored sequences."""

    def __init__(self):
        self._entries: list[ScoredSolution] = []

    def append(self, solution: ScoredSolution) -> None:
        self._entries.append(solution)

    @property
    def entries(self) -> tuple[ScoredSolution, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def best(self, up_to_iteration: int | None = None) -> ScoredSolution:
        pool = [
            (s.score, i, s)
            for i, s in enumerate(self._entries)
            if up_to_iteration is None or s.iteration <= up_to_iteration
        ]
        if not pool:
            raise ValueError("solution base is empty")
        return min(pool, key=lambda t: (t[0], t[1]))[2]


@dataclass(frozen=True)
class SamplingParams:
    k_top: int = 5
    k_random: int = 5

    def __post_init__(self):
        if self.k_top < 0 or self.k_random < 0 or self.k_top + self.k_random < 1:
            raise ValueError("need k_top >= 0, k_random >= 0 and k_top + k_random >= 1")


@dataclass(frozen=True)
class LoopConfig:
    max_iterations: int = 20
    sampling: SamplingParams = field(default_factory=SamplingParams)
    with_knowledge: bool = True
    invalid_response_retries: int = 3
    seed: int = 0
    model_name: str = ""
    max_output_tokens: int = 1024
    temperature_override: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.invalid_response_retries < 0:
            raise ValueError("invalid_response_retries must be >= 0")


@dataclass(frozen=True)
class PromptBundle:
    text: str
    with_knowledge: bool
    shown_solutions: tuple[ScoredSolution, ...]


class LoopResult(NamedTuple):
    best: ScoredSolution
    base: SolutionBase
    trace: RunTrace
    skipped_iterations: tuple[int, ...] = ()


def _as_rng(rng_or_seed) -> random.Random:
    return rng_or_seed if isinstance(rng_or_seed, random.Random) else random.Random(rng_or_seed)


def init_solution(case: DsmCase, rng_seed, method: str = "init") -> tuple[ScoredSolution, SolutionBase]:
    rng = _as_rng(rng_seed)
    order = list(case.node_ids)
    rng.shuffle(order)
    seq = tuple(order)
    solution = ScoredSolution(seq, feedback_count(case, seq), method=method, iteration=0)
    base = SolutionBase()
    base.append(solution)
    return solution, base


def sample_solutions(base: SolutionBase, params: SamplingParams, rng_seed) -> list[ScoredSolution]:
    """Best ``k_top`` entries plus ``k_random`` drawn from the rest, ordered worst to best."""
    if not len(base):
        raise ValueError("cannot sample from an empty solution base")
    rng = _as_rng(rng_seed)
    indexed = list(enumerate(base.entries))
    if len(indexed) <= params.k_top + params.k_random:
        chosen = indexed
    else:
        ranked = sorted(indexed, key=lambda t: (t[1].score, t[0]))
        top, rest = ranked[: params.k_top], ranked[params.k_top :]
        rest.sort(key=lambda t: t[0])
        chosen = top + rng.sample(rest, min(params.k_random, len(rest)))
    chosen.sort(key=lambda t: (-t[1].score, t[0]))
    return [s for _, s in chosen]


def _render_records(records: list[dict]) -> str:
    if not records:
        return "[]"
    return "[\n" + ",\n".join(repr(r) for r in records) + "\n]"


def format_solutions(samples) -> str:
    return _render_records([{"solution": ", ".join(s.sequence), "score": float(s.score)} for s in samples])


def build_prompt(case: DsmCase, samples, with_knowledge: bool, rng_seed=0) -> PromptBundle:
    rng = _as_rng(rng_seed)
    edges = list(case.edges)
    rng.shuffle(edges)
    edge_list = _render_records([{"dependent": e.dependent, "predecessor": e.predecessor} for e in edges])
    if with_knowledge:
        nodes = []
        for node in case.nodes:
            entry = {"id": node.id, "name": node.name}
            if node.description:
                entry["description"] = node.description
            nodes.append(entry)
        body = KNOWLEDGE_BLOCK.format(
            network_description=case.network_description,
            node_list_with_description=_render_records(nodes),
            edge_list=edge_list,
        )
    else:
        body = BARE_BLOCK.format(node_list=repr(list(case.node_ids)), edge_list=edge_list)
    history = HISTORY.format(selected_historical_solutions=format_solutions(samples))
    text = HEADER + body + history + (KNOWLEDGE_HINT if with_knowledge else "") + FOOTER
    return PromptBundle(text=text, with_knowledge=with_knowledge, shown_solutions=tuple(samples))


def parse_order(raw_response: str, case: DsmCase | None = None) -> Sequence:
    match = _ORDER_RE.search(raw_response or "")
    if match is None:
        raise InvalidResponseError("response has no <order>...</order> block")
    tokens = [t.strip().strip("'\"").strip() for t in match.group(1).split(",")]
    tokens = [t for t in tokens if t]
    if not tokens:
        raise InvalidResponseError("<order> block is empty")
    return tuple(tokens)


def check_sequence(candidate, case: DsmCase) -> Sequence:
    return check_permutation(candidate, case)


def optimize(
    case: DsmCase,
    llm: Backend,
    config: LoopConfig = LoopConfig(),
    transcript: Transcript | None = None,
    method: str | None = None,
) -> LoopResult:
    method = method or ("llm-with-knowledge" if config.with_knowledge else "llm-without-knowledge")
    rng = random.Random(config.seed)
    first, base = init_solution(case, rng, method="init")
    trace = RunTrace(method=method, case=case.name, seed=config.seed)
    seen = {first.sequence}
    best_score = first.score
    trace.record(1, best_score)
    skipped: list[int] = []

    for iteration in range(1, config.max_iterations + 1):
        samples = sample_solutions(base, config.sampling, rng)
        bundle = build_prompt(case, samples, config.with_knowledge, rng)
        request = LlmRequest(
            prompt=bundle.text,
            model_name=config.model_name,
            max_output_tokens=config.max_output_tokens,
            temperature_override=config.temperature_override,
        )
        seq = None
        for _attempt in range(config.invalid_response_retries + 1):
            try:
                response: LlmResponse = llm.complete(request)
            except LlmError as exc:
                if transcript:
                    transcript.record(iteration, request, None, error=str(exc))
                raise LoopTransportError(iteration, exc, base, trace) from exc
            if transcript:
                transcript.record(iteration, request, response)
            try:
                seq = check_sequence(parse_order(response.text, case), case)
                break
            except (InvalidResponseError, InvalidSequenceError):
                continue
        if seq is None:
            skipped.append(iteration)
            continue
        solution = ScoredSolution(seq, feedback_count(case, seq), method=method, iteration=iteration)
        base.append(solution)
        if seq not in seen:
            seen.add(seq)
            best_score = min(best_score, solution.score)
            trace.record(len(seen), best_score)

    return LoopResult(base.best(), base, trace, tuple(skipped))


# ---------------------------------------------------------------- mock model

_EDGE_RE = re.compile(r"\{'dependent': '([^']*)', 'predecessor': '([^']*)'\}")
_SOLUTION_RE = re.compile(r"\{'solution': '([^']*)', 'score': ([0-9.]+)\}")


class MockOptimizerBackend:
    """Offline stand-in for a model: reads the prompt and returns a local improvement.

    It recovers the edges and the shown orders from the prompt text, then
    proposes the best single-node relocation of the best shown order that is
    not itself among the shown orders. Fully deterministic.
    """

    name = "mock"

    def __init__(self):
        self.calls = 0

    def complete(self, request: LlmRequest) -> LlmResponse:
        self.calls += 1
        edges = _EDGE_RE.findall(request.prompt)
        shown = [(tuple(s.split(", ")), float(score)) for s, score in _SOLUTION_RE.findall(request.prompt)]
        if not shown:
            raise InvalidResponseError("mock backend found no historical solutions in the prompt")
        best = list(min(shown, key=lambda t: t[1])[0])
        known = {s for s, _ in shown}

        def cost(order):
            pos = {v: i for i, v in enumerate(order)}
            return sum(1 for d, p in edges if pos[d] < pos[p])

        candidate, candidate_cost = None, None
        for i in range(len(best)):
            rest = best[:i] + best[i + 1 :]
            for j in range(len(best)):
                if j == i:
                    continue
                order = tuple(rest[:j] + [best[i]] + rest[j:])
                if order in known:
                    continue
                c = cost(order)
                if candidate_cost is None or c < candidate_cost:
                    candidate, candidate_cost = order, c
        if candidate is None:
            candidate = tuple(reversed(best))
        return LlmResponse(text="<order>" + ", ".join(candidate) + "</order>", backend=self.name)

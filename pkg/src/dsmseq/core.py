"""DSM data model, sequence scoring, network metrics and the exact oracle."""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

ID_ALPHABET = string.digits + string.ascii_letters
ID_LENGTH = 5

# A sequence is a permutation of node ids, first position first.
Sequence = tuple[str, ...]


class CaseError(ValueError):
    """Raised when a case file or case object violates the data model."""


class InvalidSequenceError(ValueError):
    """Raised when a candidate is not an exact permutation of the case nodes."""

    def __init__(self, missing=(), duplicates=(), unknown=()):
        self.missing = list(missing)
        self.duplicates = list(duplicates)
        self.unknown = list(unknown)
        parts = []
        if self.missing:
            parts.append(f"missing {', '.join(self.missing)}")
        if self.duplicates:
            parts.append(f"duplicate {', '.join(self.duplicates)}")
        if self.unknown:
            parts.append(f"unknown {', '.join(self.unknown)}")
        super().__init__("invalid sequence: " + "; ".join(parts or ["empty"]))


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    id: str
    name: str
    description: str = ""


@dataclass(frozen=True)
class Edge:
    """``dependent`` needs the output of ``predecessor``."""

    dependent: str
    predecessor: str


@dataclass(frozen=True)
class DsmCase:
    name: str
    network_description: str
    nodes: tuple[NodeSpec, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        if len(self.nodes) < 2:
            raise CaseError(f"case {self.name!r} needs at least 2 nodes, got {len(self.nodes)}")
        seen: set[str] = set()
        for node in self.nodes:
            if not node.id:
                raise CaseError(f"node {node.name!r} has an empty id")
            if node.id in seen:
                raise CaseError(f"duplicate node id {node.id!r}")
            seen.add(node.id)
        pairs: set[tuple[str, str]] = set()
        for edge in self.edges:
            for end in (edge.dependent, edge.predecessor):
                if end not in seen:
                    raise CaseError(f"edge {edge.dependent}->{edge.predecessor} references unknown node {end!r}")
            if edge.dependent == edge.predecessor:
                raise CaseError(f"self-loop on node {edge.dependent!r}")
            key = (edge.dependent, edge.predecessor)
            if key in pairs:
                raise CaseError(f"duplicate edge {edge.dependent}->{edge.predecessor}")
            pairs.add(key)

    @property
    def node_ids(self) -> Sequence:
        return tuple(node.id for node in self.nodes)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def index(self) -> dict[str, int]:
        return {node.id: i for i, node in enumerate(self.nodes)}


@dataclass(frozen=True)
class ScoredSolution:
    sequence: Sequence
    score: int
    method: str = ""
    iteration: int = 0


@dataclass(frozen=True)
class NetworkMetrics:
    node_count: int
    edge_count: int
    diameter: int
    density: float
    average_degree: float
    clustering_coefficient: float
    average_path_length: float
    connected: bool = True
    component_size: int = field(default=0)


# ---------------------------------------------------------------- file I/O


def case_from_dict(data: dict) -> DsmCase:
    try:
        nodes = [
            NodeSpec(id=str(n["id"]), name=str(n["name"]), description=str(n.get("description", "")))
            for n in data["nodes"]
        ]
        edges = [Edge(dependent=str(e["dependent"]), predecessor=str(e["predecessor"])) for e in data["edges"]]
        return DsmCase(
            name=str(data["name"]),
            network_description=str(data.get("network_description", "")),
            nodes=tuple(nodes),
            edges=tuple(edges),
        )
    except (KeyError, TypeError) as exc:
        raise CaseError(f"malformed case data: missing or invalid field {exc}") from exc


def case_to_dict(case: DsmCase) -> dict:
    nodes = []
    for node in case.nodes:
        entry = {"id": node.id, "name": node.name}
        if node.description:
            entry["description"] = node.description
        nodes.append(entry)
    return {
        "name": case.name,
        "network_description": case.network_description,
        "nodes": nodes,
        "edges": [{"dependent": e.dependent, "predecessor": e.predecessor} for e in case.edges],
    }


def load_case(path: str | Path) -> DsmCase:
    """Read and validate a JSON case file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise CaseError(f"{path}: top-level value must be an object")
    return case_from_dict(data)


def save_case(case: DsmCase, path: str | Path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def randomize_ids(case: DsmCase, rng_seed: int, max_retries: int = 1000) -> DsmCase:
    """Replace every node id by a fresh random 5-character alphanumeric token."""
    rng = random.Random(rng_seed)
    mapping: dict[str, str] = {}
    used: set[str] = set()
    for node in case.nodes:
        for _ in range(max_retries):
            token = "".join(rng.choice(ID_ALPHABET) for _ in range(ID_LENGTH))
            if token not in used:
                break
        else:
            raise RuntimeError(f"could not draw a unique id after {max_retries} attempts")
        used.add(token)
        mapping[node.id] = token
    return relabel(case, mapping)


def relabel(case: DsmCase, mapping: dict[str, str]) -> DsmCase:
    return DsmCase(
        name=case.name,
        network_description=case.network_description,
        nodes=tuple(NodeSpec(mapping[n.id], n.name, n.description) for n in case.nodes),
        edges=tuple(Edge(mapping[e.dependent], mapping[e.predecessor]) for e in case.edges),
    )


# ------------------------------------------------------------- evaluation


def check_permutation(candidate: Iterable[str], case: DsmCase) -> Sequence:
    """Return ``candidate`` as a tuple if it covers every node exactly once."""
    seq = tuple(candidate)
    known = set(case.node_ids)
    seen: set[str] = set()
    duplicates: list[str] = []
    unknown: list[str] = []
    for node_id in seq:
        if node_id not in known:
            if node_id not in unknown:
                unknown.append(node_id)
        elif node_id in seen:
            if node_id not in duplicates:
                duplicates.append(node_id)
        seen.add(node_id)
    missing = [i for i in case.node_ids if i not in seen]
    if missing or duplicates or unknown:
        raise InvalidSequenceError(missing, duplicates, unknown)
    return seq


def feedback_count(case: DsmCase, seq: Iterable[str]) -> int:
    """Number of dependencies placed before their predecessor (above-diagonal marks)."""
    seq = check_permutation(seq, case)
    position = {node_id: i for i, node_id in enumerate(seq)}
    return sum(1 for e in case.edges if position[e.dependent] < position[e.predecessor])


def feedforward_count(case: DsmCase, seq: Iterable[str]) -> int:
    seq = check_permutation(seq, case)
    position = {node_id: i for i, node_id in enumerate(seq)}
    return sum(1 for e in case.edges if position[e.dependent] > position[e.predecessor])


def adjacency_matrix(case: DsmCase, order: Iterable[str] | None = None) -> np.ndarray:
    """Binary matrix with entry (i, j) = 1 iff node i depends on node j."""
    ids = case.node_ids if order is None else check_permutation(order, case)
    index = {node_id: i for i, node_id in enumerate(ids)}
    a = np.zeros((len(ids), len(ids)), dtype=np.int64)
    for e in case.edges:
        a[index[e.dependent], index[e.predecessor]] = 1
    return a


def is_topological(case: DsmCase, seq: Iterable[str]) -> bool:
    return feedback_count(case, seq) == 0


# ----------------------------------------------------------------- metrics


def network_metrics(case: DsmCase) -> NetworkMetrics:
    n, e = case.n, len(case.edges)
    g = nx.Graph()
    g.add_nodes_from(case.node_ids)
    g.add_edges_from((edge.dependent, edge.predecessor) for edge in case.edges)
    connected = nx.is_connected(g)
    core = g if connected else g.subgraph(max(nx.connected_components(g), key=len))
    if core.number_of_nodes() > 1:
        diameter = nx.diameter(core)
        path_length = nx.average_shortest_path_length(core)
    else:
        diameter, path_length = 0, 0.0
    return NetworkMetrics(
        node_count=n,
        edge_count=e,
        diameter=int(diameter),
        density=2 * e / (n * (n - 1)),
        average_degree=2 * e / n,
        clustering_coefficient=nx.average_clustering(g),
        average_path_length=float(path_length),
        connected=connected,
        component_size=core.number_of_nodes(),
    )


# ------------------------------------------------------------------ oracle


def brute_force_optimum(case: DsmCase, node_limit: int = 10) -> tuple[Sequence, int]:
    """Exact minimum feedback ordering by depth-first branch and bound.

    A node appended to the prefix adds one feedback mark for each of its
    predecessors that is still unplaced. Branches are cut when the prefix
    cost reaches the incumbent, or when the same placed set was already
    reached more cheaply (the cost of the remaining suffix only depends on
    which nodes are placed, not their order).
    """
    n = case.n
    if n > node_limit:
        raise OracleLimitError(f"case has {n} nodes, oracle limit is {node_limit}")
    index = case.index()
    preds = [0] * n
    for e in case.edges:
        preds[index[e.dependent]] |= 1 << index[e.predecessor]
    full = (1 << n) - 1

    # Seed the incumbent with the identity order.
    ident = list(range(n))
    best_cost = _prefix_cost(ident, preds)
    best_order = ident
    best_at: dict[int, int] = {}
    prefix: list[int] = []

    def search(placed: int, cost: int) -> None:
        nonlocal best_cost, best_order
        if placed == full:
            if cost < best_cost:
                best_cost, best_order = cost, list(prefix)
            return
        for v in range(n):
            bit = 1 << v
            if placed & bit:
                continue
            new_cost = cost + (preds[v] & ~placed & ~bit).bit_count()
            if new_cost >= best_cost:
                continue
            new_placed = placed | bit
            seen = best_at.get(new_placed)
            if seen is not None and seen <= new_cost:
                continue
            best_at[new_placed] = new_cost
            prefix.append(v)
            search(new_placed, new_cost)
            prefix.pop()

    search(0, 0)
    ids = case.node_ids
    return tuple(ids[i] for i in best_order), best_cost


def _prefix_cost(order: list[int], preds: list[int]) -> int:
    placed = 0
    cost = 0
    for v in order:
        placed |= 1 << v
        cost += (preds[v] & ~placed).bit_count()
    return cost


# --------------------------------------------------------------- generators


def random_case(n: int, density: float, seed: int, name: str | None = None) -> DsmCase:
    """Random directed case with each ordered pair linked with probability ``density``."""
    rng = random.Random(seed)
    ids = [f"n{i}" for i in range(n)]
    edges = [Edge(a, b) for a in ids for b in ids if a != b and rng.random() < density]
    return _synthetic(ids, edges, name or f"random-{n}-{seed}")


def random_case_with_edges(n: int, m: int, seed: int, name: str | None = None) -> DsmCase:
    rng = random.Random(seed)
    ids = [f"n{i}" for i in range(n)]
    pairs = [(a, b) for a in ids for b in ids if a != b]
    edges = [Edge(a, b) for a, b in rng.sample(pairs, m)]
    return _synthetic(ids, edges, name or f"random-{n}x{m}-{seed}")


def random_dag(n: int, density: float, seed: int) -> DsmCase:
    """Random DAG whose ids are listed in shuffled (non-topological) order."""
    rng = random.Random(seed)
    topo = [f"n{i}" for i in range(n)]
    edges = [Edge(topo[j], topo[i]) for i in range(n) for j in range(i + 1, n) if rng.random() < density]
    listed = topo[:]
    rng.shuffle(listed)
    return _synthetic(listed, edges, f"dag-{n}-{seed}")


def chain_case(n: int = 3) -> DsmCase:
    ids = [f"n{i + 1}" for i in range(n)]
    return _synthetic(ids, [Edge(ids[i + 1], ids[i]) for i in range(n - 1)], f"chain-{n}")


def cycle_case(n: int = 3) -> DsmCase:
    ids = [f"n{i + 1}" for i in range(n)]
    return _synthetic(ids, [Edge(ids[(i + 1) % n], ids[i]) for i in range(n)], f"cycle-{n}")


def _synthetic(ids: list[str], edges: list[Edge], name: str) -> DsmCase:
    return DsmCase(
        name=name,
        network_description="",
        nodes=tuple(NodeSpec(i, i) for i in ids),
        edges=tuple(edges),
    )

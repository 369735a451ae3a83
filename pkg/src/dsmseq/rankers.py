"""Deterministic node-ranking heuristics for DSM sequencing.

Each scorer returns a primary and a secondary value per node together with
the sort direction for each. ``order_from_scores`` sorts on the primary,
breaks ties on the secondary and shuffles whatever is still tied.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

import numpy as np

from .core import DsmCase, Sequence, adjacency_matrix

DEFAULT_DELTA = 0.025
POWER_ITER_CAP = 10_000
POWER_ITER_TOL = 1e-10
TAYLOR_TOL = 1e-12
TIE_RTOL = 1e-9


class RankerKind(str, enum.Enum):
    OUT_IN_DEGREE = "out-in-degree"
    EIGENVECTOR = "eigenvector"
    WALK_EXPONENTIAL = "walk-exponential"
    WALK_RESOLVENT = "walk-resolvent"
    VISIBILITY = "visibility"


class ResolventDivergenceError(ValueError):
    def __init__(self, delta: float, spectral_radius: float):
        self.delta = delta
        self.spectral_radius = spectral_radius
        super().__init__(
            f"resolvent diverges: delta={delta} * spectral radius {spectral_radius:.6g} >= 1"
        )


@dataclass(frozen=True)
class ScoreVector:
    primary: np.ndarray
    secondary: np.ndarray
    primary_ascending: bool = True
    secondary_ascending: bool = False

    def __post_init__(self):
        p = np.asarray(self.primary, dtype=float)
        s = np.asarray(self.secondary, dtype=float)
        if p.shape != s.shape or p.ndim != 1:
            raise ValueError("primary and secondary must be 1-d and the same length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(s))):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "primary", p)
        object.__setattr__(self, "secondary", s)


def score_out_in_degree(case: DsmCase) -> ScoreVector:
    # Orientation predecessor -> dependent: out-degree counts dependents.
    a = adjacency_matrix(case)
    out_deg = a.sum(axis=0)
    in_deg = a.sum(axis=1)
    return ScoreVector(out_deg - in_deg, out_deg, primary_ascending=False, secondary_ascending=False)


def _power_iteration(m: np.ndarray) -> np.ndarray | None:
    n = m.shape[0]
    x = np.full(n, 1.0 / n)
    for _ in range(POWER_ITER_CAP):
        y = m @ x
        total = y.sum()
        if total <= 0 or not np.isfinite(total):
            return None
        y /= total
        if np.abs(y - x).sum() < POWER_ITER_TOL:
            return y
        x = y
    return None


def score_eigenvector(case: DsmCase) -> ScoreVector:
    """Perron-vector ranking.

    A vector whose power iteration does not settle (nilpotent or periodic
    matrices) is replaced by a constant, i.e. it ties every node.
    """
    a = adjacency_matrix(case).astype(float)
    right = _power_iteration(a)
    left = _power_iteration(a.T)
    flat = np.zeros(case.n)
    return ScoreVector(
        flat if right is None else right,
        flat if left is None else left,
        primary_ascending=True,
        secondary_ascending=False,
    )


def spectral_radius(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def matrix_exponential(a: np.ndarray, tol: float = TAYLOR_TOL) -> np.ndarray:
    """Truncated Taylor series; stops once a term's max-norm drops below ``tol``."""
    a = np.asarray(a, dtype=float)
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    k = 0
    while True:
        k += 1
        term = term @ a / k
        result = result + term
        if np.max(np.abs(term)) < tol:
            return result


def resolvent(a: np.ndarray, delta: float = DEFAULT_DELTA) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    rho = spectral_radius(a)
    if delta * rho >= 1:
        raise ResolventDivergenceError(delta, rho)
    n = a.shape[0]
    return np.linalg.solve(np.eye(n) - delta * a, np.eye(n))


def score_walk(case: DsmCase, kind: str = "exponential", delta: float = DEFAULT_DELTA) -> ScoreVector:
    a = adjacency_matrix(case)
    if kind == "exponential":
        f = matrix_exponential(a)
    elif kind == "resolvent":
        if not 0 < delta:
            raise ValueError("delta must be positive")
        f = resolvent(a, delta)
    else:
        raise ValueError(f"unknown walk kind {kind!r}")
    return ScoreVector(f.sum(axis=1), f.sum(axis=0), primary_ascending=True, secondary_ascending=False)


def visibility_matrix(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    step = (np.asarray(a) > 0).astype(np.int64)
    reach = np.eye(n, dtype=np.int64)
    power = np.eye(n, dtype=np.int64)
    for _ in range(n):
        power = ((power @ step) > 0).astype(np.int64)
        reach |= power
    return reach


def score_visibility(case: DsmCase) -> ScoreVector:
    v = visibility_matrix(adjacency_matrix(case))
    return ScoreVector(v.sum(axis=1), v.sum(axis=0), primary_ascending=True, secondary_ascending=False)


def _tie_groups(values: np.ndarray, ascending: bool) -> np.ndarray:
    """Rank values into groups, merging neighbours within a relative tolerance."""
    keyed = values if ascending else -values
    order = np.argsort(keyed, kind="stable")
    groups = np.empty(len(values), dtype=np.int64)
    group = 0
    prev = None
    for idx in order:
        v = keyed[idx]
        if prev is not None and abs(v - prev) > TIE_RTOL * max(abs(v), abs(prev)):
            group += 1
        groups[idx] = group
        prev = v
    return groups


def order_from_scores(case: DsmCase, scores: ScoreVector, rng_seed: int) -> Sequence:
    if len(scores.primary) != case.n:
        raise ValueError(f"expected {case.n} scores, got {len(scores.primary)}")
    rng = random.Random(rng_seed)
    shuffled = list(range(case.n))
    rng.shuffle(shuffled)
    g1 = _tie_groups(scores.primary, scores.primary_ascending)
    g2 = _tie_groups(scores.secondary, scores.secondary_ascending)
    ranked = sorted(shuffled, key=lambda i: (g1[i], g2[i]))
    ids = case.node_ids
    return tuple(ids[i] for i in ranked)


def score(case: DsmCase, kind: RankerKind | str, delta: float = DEFAULT_DELTA) -> ScoreVector:
    kind = RankerKind(kind)
    if kind is RankerKind.OUT_IN_DEGREE:
        return score_out_in_degree(case)
    if kind is RankerKind.EIGENVECTOR:
        return score_eigenvector(case)
    if kind is RankerKind.WALK_EXPONENTIAL:
        return score_walk(case, "exponential")
    if kind is RankerKind.WALK_RESOLVENT:
        return score_walk(case, "resolvent", delta)
    return score_visibility(case)


def rank(case: DsmCase, kind: RankerKind | str, rng_seed: int = 0, delta: float = DEFAULT_DELTA) -> Sequence:
    return order_from_scores(case, score(case, kind, delta), rng_seed)

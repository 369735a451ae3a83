from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RunTrace:
    """Best score seen so far, keyed by the number of distinct sequences evaluated."""

    method: str = ""
    case: str = ""
    seed: int = 0
    points: list[tuple[int, int]] = field(default_factory=list)

    def record(self, unique_count: int, best_score: int) -> None:
        if self.points and unique_count <= self.points[-1][0]:
            raise ValueError("unique_solutions must strictly increase")
        if self.points and best_score > self.points[-1][1]:
            raise ValueError("best score cannot get worse")
        self.points.append((unique_count, best_score))

    @property
    def final_best(self) -> int | None:
        return self.points[-1][1] if self.points else None

    @property
    def unique_solutions(self) -> int:
        return self.points[-1][0] if self.points else 0

    def __len__(self) -> int:
        return len(self.points)


def truncate_trace(trace: RunTrace, limit: int = 10_000) -> RunTrace:
    return RunTrace(
        method=trace.method,
        case=trace.case,
        seed=trace.seed,
        points=[p for p in trace.points if p[0] <= limit],
    )

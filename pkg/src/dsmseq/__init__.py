"""Design structure matrix sequencing with an LLM-guided optimizer and classical benchmarks."""

from .core import (
    CaseError,
    DsmCase,
    Edge,
    InvalidSequenceError,
    NetworkMetrics,
    NodeSpec,
    ScoredSolution,
    brute_force_optimum,
    feedback_count,
    load_case,
    network_metrics,
    randomize_ids,
)
from .trace import RunTrace, truncate_trace

__version__ = "0.1.0"

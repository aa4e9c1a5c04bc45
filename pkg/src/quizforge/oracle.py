"""Exhaustive baseline: scan every quiz in the universe for the best match.

Deterministic, RNG-free, and intentionally unindexed; it is the accuracy
ceiling the agents are compared against, not a performance contender.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .domain import TargetSpec
from .environment import Universe


@dataclass(frozen=True)
class OracleResult:
    quiz_index: int
    match: float
    scan_count: int
    elapsed_sec: float


def oracle_best(u: Universe, spec: TargetSpec) -> OracleResult:
    """argmax of targetMatch over all quizzes; ties break to the lowest index."""
    if len(u) == 0:
        raise ValueError("universe is empty")
    t0 = time.perf_counter()
    matches = u.target_matches(spec)
    best = int(np.argmax(matches))  # first occurrence wins ties
    elapsed = time.perf_counter() - t0
    return OracleResult(quiz_index=best, match=float(matches[best]),
                        scan_count=len(u), elapsed_sec=elapsed)

"""Exact oracles, bit brute force and simulated annealing."""
from __future__ import annotations

from typing import Optional

from ..qubo import QuboModel, decode
from ..schedule import check_feasibility, total_delay
from .anneal import AnnealParams, SampleSet, flip_delta, simulated_annealing
from .oracle import (
    SearchTooLarge,
    TooManyVariables,
    all_assignments,
    brute_force_bits,
    exhaustive_schedule_oracle,
    search_space,
)


def best_feasible(model: QuboModel, sampleset: SampleSet) -> Optional[tuple]:
    """First sample, in energy order, whose decoded schedule is feasible.

    Returns:
        ``(schedule, total_delay_seconds)`` or None if every sample is infeasible.
    """
    for bits in sampleset.samples:
        schedule, _ = decode(model, bits)
        if check_feasibility(model.instance, schedule).feasible:
            return schedule, total_delay(model.instance, schedule)
    return None


__all__ = [
    "AnnealParams",
    "SampleSet",
    "SearchTooLarge",
    "TooManyVariables",
    "all_assignments",
    "best_feasible",
    "brute_force_bits",
    "exhaustive_schedule_oracle",
    "flip_delta",
    "search_space",
    "simulated_annealing",
]

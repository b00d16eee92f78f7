"""Sequential greedy plan used to pick the scheduling horizon."""
from __future__ import annotations

from dataclasses import dataclass

from .instance import Instance
from .schedule import Schedule


@dataclass(frozen=True)
class GreedyResult:
    schedule: Schedule
    makespan_slots: int
    horizon: int


def greedy_schedule(instance: Instance) -> GreedyResult:
    """Run every function back to back, as if all chains were one chain.

    Each step goes to the capable VM with the fewest slots (lowest id on
    ties); chains are concatenated in id order. The horizon is one slot past
    the makespan because the last finish indicator fires after the final
    busy slot.
    """
    placements = {}
    cursor = 1
    for i, j in instance.steps():
        m = min(instance.capable_set(i, j), key=lambda v: (instance.processing_slots(i, j, v), v))
        placements[(i, j)] = (m, cursor)
        cursor += instance.processing_slots(i, j, m)
    makespan = cursor - 1
    horizon = makespan + 1
    return GreedyResult(Schedule.from_placements(instance, horizon, placements), makespan, horizon)


def horizon(instance: Instance, bump: int = 0) -> int:
    """Slots available to the scheduler: the override if set, else the greedy horizon, plus ``bump``."""
    if instance.horizon_override is not None:
        return instance.horizon_override + bump
    return greedy_schedule(instance).horizon + bump

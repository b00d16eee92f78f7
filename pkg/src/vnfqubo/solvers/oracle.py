"""Exact ground truth for small instances, by enumeration."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..instance import Instance
from ..qubo import QuboModel, energies
from ..schedule import Schedule

DEFAULT_SPACE_CAP = 10**15


class SearchTooLarge(ValueError):
    pass


def search_space(instance: Instance, horizon: int) -> int:
    """Crude size of the (VM, start slot) choice space: prod over steps of |capable| * horizon."""
    return math.prod(len(instance.capable_set(i, j)) * horizon for i, j in instance.steps())


def exhaustive_schedule_oracle(
    instance: Instance, horizon: int, cap: Optional[int] = DEFAULT_SPACE_CAP
) -> Optional[tuple]:
    """Depth-first branch and bound over per-step (VM, start) choices.

    Steps are placed chain by chain. Each placement must fit the VM's free
    slots, start no earlier than the previous step's finish, and finish by
    ``horizon``. A branch is cut when its partial delay plus the fastest
    remaining processing of every chain cannot beat the incumbent.

    Returns:
        ``(schedule, total_delay_seconds)`` for a provably optimal schedule,
        or None when nothing fits in ``horizon``.
    """
    size = search_space(instance, horizon)
    if cap is not None and size > cap:
        raise SearchTooLarge(f"search space ~{size:.3g} exceeds cap {cap:.3g}")
    steps = list(instance.steps())
    options = []
    for i, j in steps:
        opts = sorted(
            ((instance.processing_slots(i, j, m), m) for m in instance.capable_set(i, j)),
        )
        options.append([(m, n) for n, m in opts])
    fastest = [opts[0][1] for opts in options]
    # remaining[k]: fastest processing of steps k.. within the same chain
    remaining = [0] * (len(steps) + 1)
    for k in range(len(steps) - 1, -1, -1):
        same = k + 1 < len(steps) and steps[k + 1][0] == steps[k][0]
        remaining[k] = fastest[k] + (remaining[k + 1] if same else 0)
    # chain_floor[i]: lower bound on the delay of chain i before any placement
    chain_floor = {}
    for k, (i, j) in enumerate(steps):
        if j == 1:
            chain_floor[i] = remaining[k]
    busy = [0] * (instance.n_vms + 1)  # bitmask of occupied slots, bit t-1 for slot t
    best = [math.inf, None]
    chosen = [None] * len(steps)

    def dfs(k, ready, done_delay, future_floor):
        # ready: earliest start slot for step k; future_floor: bound for chains not yet started
        if k == len(steps):
            if done_delay < best[0]:
                best[0] = done_delay
                best[1] = list(chosen)
            return
        i, j = steps[k]
        if done_delay + (ready - 1) + remaining[k] + future_floor >= best[0]:
            return
        last = k + 1 == len(steps) or steps[k + 1][0] != i
        for m, n in options[k]:
            mask = (1 << n) - 1
            for start in range(ready, horizon - n + 1):
                window = mask << (start - 1)
                if busy[m] & window:
                    continue
                finish = start + n  # slot at which the finish indicator fires
                if last:
                    nxt_floor = chain_floor.get(i + 1, 0) if k + 1 < len(steps) else 0
                    new_done = done_delay + finish - 1
                    if new_done + future_floor >= best[0]:
                        break  # later starts only finish later
                    busy[m] |= window
                    chosen[k] = (m, start)
                    dfs(k + 1, 1, new_done, future_floor - nxt_floor)
                    busy[m] &= ~window
                else:
                    if done_delay + (finish - 1) + remaining[k + 1] + future_floor >= best[0]:
                        break
                    busy[m] |= window
                    chosen[k] = (m, start)
                    dfs(k + 1, finish, done_delay, future_floor)
                    busy[m] &= ~window

    if not steps:
        return Schedule.empty(instance, horizon), 0.0
    total_floor = sum(chain_floor.values())
    dfs(0, 1, 0, total_floor - chain_floor[steps[0][0]])
    if best[1] is None:
        return None
    placements = dict(zip(steps, best[1]))
    schedule = Schedule.from_placements(instance, horizon, placements)
    return schedule, best[0] * instance.slot_length


class TooManyVariables(ValueError):
    pass


def brute_force_bits(model: QuboModel, max_vars: int = 24, chunk: int = 1 << 16) -> tuple:
    """Global minimum over all ``2**N`` assignments; ties go to the lexicographically smallest.

    Bit ``v`` of assignment ``k`` is ``(k >> (N - 1 - v)) & 1`` so that
    increasing ``k`` walks the bit vectors in lexicographic order.
    """
    n = model.n_vars
    if n > max_vars:
        raise TooManyVariables(f"{n} variables exceed the brute-force limit of {max_vars}")
    best_e, best_k = math.inf, 0
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    for lo in range(0, 1 << n, chunk):
        ks = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        bits = ((ks[:, None] >> shifts) & 1).astype(np.int8)
        e = energies(model, bits)
        a = int(np.argmin(e))
        if e[a] < best_e:
            best_e, best_k = float(e[a]), int(ks[a])
    bits = ((np.int64(best_k) >> shifts) & 1).astype(np.int8)
    return bits, best_e


def all_assignments(n: int, chunk: int = 1 << 16):
    """Yield ``(k_offset, bits)`` blocks covering every assignment in lexicographic order."""
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    for lo in range(0, 1 << n, chunk):
        ks = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        yield lo, ((ks[:, None] >> shifts) & 1).astype(np.int8)

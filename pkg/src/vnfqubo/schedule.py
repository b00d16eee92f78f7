"""Binary schedule tensors, feasibility checking and delay metrics.

A schedule holds four 0/1 arrays over (chain, step, VM[, slot]):

* ``x`` - the VM chosen for a step,
* ``y`` - the VM is busy with the step during a slot,
* ``z`` - processing starts at the beginning of a slot,
* ``p`` - processing has finished at the beginning of a slot.

Arrays are 0-based; slot ``t`` (1-based) lives at index ``t - 1``. Entries
for VMs that cannot serve a step must stay zero because those variables do
not exist in the model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .instance import Instance

# constraint ids used in feasibility reports
ASSIGN_ONE = "assign_one"  # exactly one VM per step
START_IFF_ASSIGNED = "start_iff_assigned"  # x = sum_t z
VM_CAPACITY = "vm_capacity"  # one function per VM per slot
BUSY_IMPLIES_ASSIGNED = "busy_implies_assigned"  # y <= x
BUSY_DURATION = "busy_duration"  # sum_t y = T * x
START_FINISH_EXCLUSIVE = "start_finish_exclusive"  # z + p <= 1
BUSY_TRANSITION = "busy_transition"  # y[t-1] - y[t] + z[t] - p[t] = 0
RUN_LENGTH = "run_length"  # a start within the last T slots implies busy
PRECEDENCE = "precedence"  # next step starts no earlier than the previous finish
SINGLE_START_FINISH = "single_start_finish"  # exactly one z and one p per step

CONSTRAINTS = (
    ASSIGN_ONE,
    START_IFF_ASSIGNED,
    VM_CAPACITY,
    BUSY_IMPLIES_ASSIGNED,
    BUSY_DURATION,
    START_FINISH_EXCLUSIVE,
    BUSY_TRANSITION,
    RUN_LENGTH,
    PRECEDENCE,
    SINGLE_START_FINISH,
)


class ScheduleShapeError(ValueError):
    """Schedule tensors do not match the instance (distinct from infeasibility)."""


class MalformedScheduleError(ValueError):
    """A delay cannot be read off the schedule (zero or several finish indicators)."""


class InfeasibleScheduleError(ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SlackRangeError(ValueError):
    """A canonical slack expression left {0, 1}."""


@dataclass(frozen=True)
class Schedule:
    horizon: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    p: np.ndarray

    @classmethod
    def empty(cls, instance: Instance, horizon: int) -> "Schedule":
        I, J, M = instance.n_chains, instance.max_steps, instance.n_vms
        return cls(
            horizon,
            np.zeros((I, J, M), dtype=np.int8),
            np.zeros((I, J, M, horizon), dtype=np.int8),
            np.zeros((I, J, M, horizon), dtype=np.int8),
            np.zeros((I, J, M, horizon), dtype=np.int8),
        )

    @classmethod
    def from_placements(
        cls, instance: Instance, horizon: int, placements: Mapping[tuple, tuple]
    ) -> "Schedule":
        """Build a schedule from ``{(i, j): (m, start_slot)}``, all 1-based.

        Busy slots run from ``start`` for the VM's slot count; the finish
        indicator goes one slot past the run. Indicators that fall beyond the
        horizon are dropped, which the feasibility check then reports.
        """
        s = cls.empty(instance, horizon)
        for (i, j), (m, start) in placements.items():
            n = instance.processing_slots(i, j, m)
            a, b, c = i - 1, j - 1, m - 1
            s.x[a, b, c] = 1
            lo, hi = start - 1, min(start - 1 + n, horizon)
            s.y[a, b, c, max(lo, 0):hi] = 1
            if 0 <= lo < horizon:
                s.z[a, b, c, lo] = 1
            if 0 <= start - 1 + n < horizon:
                s.p[a, b, c, start - 1 + n] = 1
        return s

    def placements(self) -> dict:
        """``{(i, j): (m, start_slot)}`` read from the start indicators, 1-based.

        Steps with no start indicator are skipped; with several, the earliest wins.
        """
        out = {}
        for a, b, c, t in zip(*np.nonzero(self.z)):
            key = (int(a) + 1, int(b) + 1)
            cand = (int(c) + 1, int(t) + 1)
            if key not in out or cand[1] < out[key][1]:
                out[key] = cand
        return dict(sorted(out.items()))

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return self.horizon == other.horizon and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in "xyzp"
        )

    __hash__ = None


@dataclass
class Violation:
    constraint: str
    index: tuple
    detail: str


@dataclass
class FeasibilityReport:
    violations: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def by_constraint(self) -> dict:
        counts: dict = {}
        for v in self.violations:
            counts[v.constraint] = counts.get(v.constraint, 0) + 1
        return counts

    def __bool__(self):
        return self.feasible


@dataclass(frozen=True)
class SlackAssignment:
    """Slack bits over (i, j, m, t).

    ``rseq[i, j, m, t]`` belongs to the precedence link from step ``j`` to
    step ``j + 1`` and is indexed by the VM ``m`` of the later step.
    """

    r1: np.ndarray
    r2: np.ndarray
    rseq: np.ndarray


def check_shape(instance: Instance, schedule: Schedule) -> None:
    I, J, M, H = instance.n_chains, instance.max_steps, instance.n_vms, schedule.horizon
    if schedule.x.shape != (I, J, M):
        raise ScheduleShapeError(f"x has shape {schedule.x.shape}, expected {(I, J, M)}")
    for name in "yzp":
        arr = getattr(schedule, name)
        if arr.shape != (I, J, M, H):
            raise ScheduleShapeError(f"{name} has shape {arr.shape}, expected {(I, J, M, H)}")
    capable = instance.capable_mask
    for name in "xyzp":
        arr = getattr(schedule, name)
        if not np.isin(arr, (0, 1)).all():
            raise ScheduleShapeError(f"{name} has entries outside {{0, 1}}")
        mask = capable if arr.ndim == 3 else capable[..., None]
        if np.any(arr[~np.broadcast_to(mask, arr.shape)]):
            bad = np.argwhere(arr * ~mask)[0] + 1
            raise ScheduleShapeError(f"{name} set at non-existent variable {tuple(int(v) for v in bad)}")


def _window_sums(z: np.ndarray, width: int) -> np.ndarray:
    """``out[t] = sum(z[t - width + 1 .. t])`` with out-of-range slots read as 0."""
    c = np.concatenate(([0], np.cumsum(z)))
    t = np.arange(1, len(z) + 1)
    return c[t] - c[np.maximum(t - width, 0)]


def check_feasibility(instance: Instance, schedule: Schedule) -> FeasibilityReport:
    """Evaluate every scheduling constraint at every index and collect all violations."""
    check_shape(instance, schedule)
    x, y, z, p = (getattr(schedule, n).astype(np.int64) for n in "xyzp")
    T = instance.slot_table
    capable = T > 0
    steps = instance.step_mask
    report = FeasibilityReport()
    add = report.violations.append

    def idx(*a):
        return tuple(int(v) + 1 for v in a)

    for a, b in np.argwhere(steps & (x.sum(axis=2) != 1)):
        add(Violation(ASSIGN_ONE, idx(a, b), f"{int(x[a, b].sum())} VMs assigned"))

    zsum = z.sum(axis=3)
    for a, b, c in np.argwhere(capable & (zsum != x)):
        add(Violation(START_IFF_ASSIGNED, idx(a, b, c), f"x={x[a, b, c]}, starts={zsum[a, b, c]}"))

    load = y.sum(axis=(0, 1))
    for c, t in np.argwhere(load > 1):
        add(Violation(VM_CAPACITY, idx(c, t), f"{load[c, t]} functions busy"))

    for a, b, c, t in np.argwhere(y > x[..., None]):
        add(Violation(BUSY_IMPLIES_ASSIGNED, idx(a, b, c, t), "busy on an unassigned VM"))

    ysum = y.sum(axis=3)
    for a, b, c in np.argwhere(capable & (ysum != T * x)):
        add(Violation(BUSY_DURATION, idx(a, b, c), f"busy {ysum[a, b, c]} slots, need {T[a, b, c] * x[a, b, c]}"))

    for a, b, c, t in np.argwhere(z + p > 1):
        add(Violation(START_FINISH_EXCLUSIVE, idx(a, b, c, t), "start and finish in one slot"))

    y_prev = np.concatenate([np.zeros_like(y[..., :1]), y[..., :-1]], axis=3)
    balance = y_prev - y + z - p
    for a, b, c, t in np.argwhere(balance != 0):
        add(Violation(BUSY_TRANSITION, idx(a, b, c, t), f"balance {balance[a, b, c, t]}"))

    for a, b, c in np.argwhere(capable):
        w = _window_sums(z[a, b, c], int(T[a, b, c]))
        for t in np.nonzero(w > y[a, b, c])[0]:
            add(Violation(RUN_LENGTH, idx(a, b, c, t), f"{w[t]} starts in window, busy={y[a, b, c, t]}"))

    finished = np.cumsum(p.sum(axis=2), axis=2)  # (I, J, H): finishes of step j up to slot t
    for chain in instance.chains:
        a = chain.id - 1
        for b in range(len(chain) - 1):
            late = z[a, b + 1] > finished[a, b][None, :]
            late &= capable[a, b + 1][:, None]
            for c, t in np.argwhere(late):
                add(Violation(PRECEDENCE, idx(a, b + 1, c, t), f"step {b + 2} starts before step {b + 1} finishes"))

    starts = z.sum(axis=(2, 3))
    ends = p.sum(axis=(2, 3))
    for a, b in np.argwhere(steps & ((starts != 1) | (ends != 1))):
        add(Violation(SINGLE_START_FINISH, idx(a, b), f"{starts[a, b]} starts, {ends[a, b]} finishes"))
    return report


def chain_delay(instance: Instance, schedule: Schedule, i: int) -> float:
    """Finish time of chain ``i`` in seconds: ``(t - 1) * slot_length`` where the last step's finish fires."""
    check_shape(instance, schedule)
    chain = instance.chains[i - 1]
    fired = np.argwhere(schedule.p[i - 1, len(chain) - 1])
    if len(fired) != 1:
        raise MalformedScheduleError(f"chain {i}: {len(fired)} finish indicators on the last step")
    t = int(fired[0][1]) + 1
    return (t - 1) * instance.slot_length


def chain_delays(instance: Instance, schedule: Schedule) -> list:
    return [chain_delay(instance, schedule, c.id) for c in instance.chains]


def total_delay(instance: Instance, schedule: Schedule) -> float:
    return float(sum(chain_delays(instance, schedule)))


def longest_delay(instance: Instance, schedule: Schedule) -> float:
    return float(max(chain_delays(instance, schedule), default=0.0))


def avg_vm_busy_time(instance: Instance, schedule: Schedule) -> float:
    check_shape(instance, schedule)
    return float(schedule.y.sum()) * instance.slot_length / instance.n_vms


def canonical_slacks(instance: Instance, schedule: Schedule) -> SlackAssignment:
    """Slack values that zero the three inequality penalties.

    Raises:
        SlackRangeError: an expression fell outside {0, 1}, which only
            happens for infeasible schedules.
    """
    check_shape(instance, schedule)
    x, y, z, p = (getattr(schedule, n).astype(np.int64) for n in "xyzp")
    T = instance.slot_table
    capable = T > 0
    r1 = np.where(capable[..., None], x[..., None] - y, 0)
    r2 = np.zeros_like(y)
    for a, b, c in np.argwhere(capable):
        r2[a, b, c] = y[a, b, c] - _window_sums(z[a, b, c], int(T[a, b, c]))
    rseq = np.zeros_like(y)
    finished = np.cumsum(p.sum(axis=2), axis=2)
    for chain in instance.chains:
        a = chain.id - 1
        for b in range(len(chain) - 1):
            rseq[a, b] = np.where(capable[a, b + 1][:, None], finished[a, b][None, :] - z[a, b + 1], 0)
    for name, arr in (("r1", r1), ("r2", r2), ("rseq", rseq)):
        bad = np.argwhere((arr < 0) | (arr > 1))
        if len(bad):
            where = tuple(int(v) + 1 for v in bad[0])
            raise SlackRangeError(f"{name} slack at {where} is {arr[tuple(bad[0])]}, outside {{0, 1}}")
    return SlackAssignment(r1.astype(np.int8), r2.astype(np.int8), rseq.astype(np.int8))


def gantt(instance: Instance, schedule: Schedule) -> list:
    """Per-VM timelines: ``rows[m - 1][t - 1]`` is ``(i, j)`` or None when idle."""
    report = check_feasibility(instance, schedule)
    if not report.feasible:
        raise InfeasibleScheduleError("cannot draw an infeasible schedule", report)
    rows = [[None] * schedule.horizon for _ in range(instance.n_vms)]
    for a, b, c, t in np.argwhere(schedule.y):
        rows[c][t] = (int(a) + 1, int(b) + 1)
    return rows


def format_gantt(instance: Instance, schedule: Schedule) -> str:
    rows = gantt(instance, schedule)
    width = 6
    head = "slot  " + "".join(f"{t:>{width}}" for t in range(1, schedule.horizon + 1))
    lines = [head]
    for m, row in enumerate(rows, start=1):
        cells = ("." if cell is None else f"{cell[0]}-{cell[1]}" for cell in row)
        lines.append(f"VM{m:<4}" + "".join(f"{c:>{width}}" for c in cells))
    return "\n".join(lines)


def schedule_to_dict(schedule: Schedule) -> dict:
    out = []
    for a, b, c in np.argwhere(schedule.x):
        out.append({"var": "x", "i": int(a) + 1, "j": int(b) + 1, "m": int(c) + 1})
    for name in "yzp":
        for a, b, c, t in np.argwhere(getattr(schedule, name)):
            out.append({"var": name, "i": int(a) + 1, "j": int(b) + 1, "m": int(c) + 1, "t": int(t) + 1})
    return {"t_max": schedule.horizon, "variables": out}


def schedule_from_dict(instance: Instance, data: dict) -> Schedule:
    try:
        s = Schedule.empty(instance, int(data["t_max"]))
        for entry in data["variables"]:
            name = entry["var"]
            if name not in ("x", "y", "z", "p"):
                raise ScheduleShapeError(f"unknown variable family {name!r}")
            key = [int(entry["i"]) - 1, int(entry["j"]) - 1, int(entry["m"]) - 1]
            if name != "x":
                key.append(int(entry["t"]) - 1)
            arr = getattr(s, name)
            if any(k < 0 or k >= n for k, n in zip(key, arr.shape)):
                raise ScheduleShapeError(f"index {entry} out of range")
            arr[tuple(key)] = 1
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScheduleShapeError):
            raise
        raise ScheduleShapeError(f"malformed schedule file: {exc!r}") from exc
    check_shape(instance, s)
    return s


def save_schedule(schedule: Schedule) -> str:
    return json.dumps(schedule_to_dict(schedule), indent=1) + "\n"


def load_schedule(instance: Instance, text: str) -> Schedule:
    return schedule_from_dict(instance, json.loads(text))


def narrated_fig1_schedule(instance: Optional[Instance] = None) -> Schedule:
    """The hand arrangement of the three example chains, 20 s in total, horizon 11."""
    from .instance import fig1_fixture

    inst = instance or fig1_fixture()
    placements = {
        (1, 1): (1, 1), (1, 2): (1, 4), (1, 3): (3, 7),
        (2, 1): (2, 1), (2, 2): (3, 3), (2, 3): (3, 4),
        (3, 1): (3, 1), (3, 2): (2, 3), (3, 3): (2, 5),
    }
    return Schedule.from_placements(inst, 11, placements)

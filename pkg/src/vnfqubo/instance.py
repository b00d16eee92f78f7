"""Problem instances: VMs, service chains, workloads and the time grid.

Chain ids, step positions and VM ids are 1-based everywhere in the public
API and in instance files. Arrays built from an instance are 0-based.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np


class InstanceError(ValueError):
    """Raised for malformed or unservable instances."""


class CapabilityError(ValueError):
    """Raised when a VM is asked to process a function kind it does not serve."""


def _exact(value: float) -> Fraction:
    # decimal intent of the float, so 0.8 / 1.0 is 4/5 and not 0.8000000000000000444
    return Fraction(str(value))


@dataclass(frozen=True)
class VmSpec:
    id: int
    capabilities: frozenset
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "capabilities", frozenset(int(k) for k in self.capabilities))
        if not self.rate > 0:
            raise InstanceError(f"VM {self.id}: rate must be positive, got {self.rate}")
        if not self.capabilities:
            raise InstanceError(f"VM {self.id}: capability set is empty")
        if any(k < 1 for k in self.capabilities):
            raise InstanceError(f"VM {self.id}: function kinds are 1-based")


@dataclass(frozen=True)
class FunctionStep:
    kind: int
    workload: float

    def __post_init__(self):
        if self.kind < 1:
            raise InstanceError(f"function kind must be >= 1, got {self.kind}")
        if not self.workload > 0:
            raise InstanceError(f"workload must be positive, got {self.workload}")


@dataclass(frozen=True)
class ServiceChain:
    id: int
    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise InstanceError(f"chain {self.id} has no steps")

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class Instance:
    """An NFV scheduling problem.

    Args:
        vms: VMs with ids 1..M in order.
        chains: service chains with ids 1..I in order.
        slot_length: length of one time slot in seconds.
        horizon_override: fixed number of slots, bypassing the greedy horizon.
    """

    vms: tuple
    chains: tuple
    slot_length: float = 1.0
    horizon_override: Optional[int] = None
    _slots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vms", tuple(self.vms))
        object.__setattr__(self, "chains", tuple(self.chains))
        if not self.slot_length > 0:
            raise InstanceError(f"slot length must be positive, got {self.slot_length}")
        if [vm.id for vm in self.vms] != list(range(1, len(self.vms) + 1)):
            raise InstanceError("VM ids must be unique and contiguous from 1")
        if [c.id for c in self.chains] != list(range(1, len(self.chains) + 1)):
            raise InstanceError("chain ids must be unique and contiguous from 1")
        if self.horizon_override is not None and self.horizon_override < 1:
            raise InstanceError("horizon override must be a positive slot count")
        served = set().union(*(vm.capabilities for vm in self.vms)) if self.vms else set()
        for chain in self.chains:
            for j, step in enumerate(chain.steps, start=1):
                if step.kind not in served:
                    raise InstanceError(
                        f"chain {chain.id} step {j}: no VM serves function kind {step.kind}"
                    )
        object.__setattr__(self, "_slots", self._slot_table())
        self._slots.setflags(write=False)

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_vms(self) -> int:
        return len(self.vms)

    @property
    def max_steps(self) -> int:
        return max((len(c) for c in self.chains), default=0)

    @property
    def n_kinds(self) -> int:
        kinds = [k for vm in self.vms for k in vm.capabilities]
        kinds += [s.kind for c in self.chains for s in c.steps]
        return max(kinds, default=0)

    def steps(self) -> Iterable[tuple[int, int]]:
        """Yield every (chain id, step position), 1-based, in chain order."""
        for chain in self.chains:
            for j in range(1, len(chain) + 1):
                yield chain.id, j

    def step(self, i: int, j: int) -> FunctionStep:
        if not 1 <= i <= len(self.chains):
            raise IndexError(f"chain {i} out of range 1..{len(self.chains)}")
        chain = self.chains[i - 1]
        if not 1 <= j <= len(chain):
            raise IndexError(f"step {j} out of range 1..{len(chain)} for chain {i}")
        return chain.steps[j - 1]

    def capable_set(self, i: int, j: int) -> frozenset:
        kind = self.step(i, j).kind
        return frozenset(vm.id for vm in self.vms if kind in vm.capabilities)

    def processing_slots(self, i: int, j: int, m: int) -> int:
        """Number of slots VM ``m`` needs for step ``j`` of chain ``i``."""
        step = self.step(i, j)
        if not 1 <= m <= len(self.vms):
            raise IndexError(f"VM {m} out of range 1..{len(self.vms)}")
        vm = self.vms[m - 1]
        if step.kind not in vm.capabilities:
            raise CapabilityError(f"VM {m} cannot serve kind {step.kind} (chain {i} step {j})")
        seconds = _exact(step.workload) / _exact(vm.rate)
        return max(1, math.ceil(seconds / _exact(self.slot_length)))

    @property
    def slot_table(self) -> np.ndarray:
        """Slot counts as an (I, Jmax, M) int array; 0 marks incapable or absent."""
        return self._slots

    @property
    def capable_mask(self) -> np.ndarray:
        return self._slots > 0

    @property
    def step_mask(self) -> np.ndarray:
        """(I, Jmax) bool array, True where the chain has that step."""
        mask = np.zeros((self.n_chains, self.max_steps), dtype=bool)
        for c in self.chains:
            mask[c.id - 1, : len(c)] = True
        return mask

    def _slot_table(self) -> np.ndarray:
        table = np.zeros((self.n_chains, self.max_steps, self.n_vms), dtype=np.int64)
        for i, j in self.steps():
            for m in self.capable_set(i, j):
                table[i - 1, j - 1, m - 1] = self.processing_slots(i, j, m)
        return table


def to_dict(instance: Instance) -> dict:
    data = {
        "slot_length_s": instance.slot_length,
        "vms": [
            {"id": vm.id, "rate_mb_per_s": vm.rate, "capabilities": sorted(vm.capabilities)}
            for vm in instance.vms
        ],
        "chains": [
            {
                "id": c.id,
                "steps": [{"kind": s.kind, "workload_mb": s.workload} for s in c.steps],
            }
            for c in instance.chains
        ],
    }
    if instance.horizon_override is not None:
        data["t_max"] = instance.horizon_override
    return data


def from_dict(data: dict) -> Instance:
    try:
        vms = [
            VmSpec(int(v["id"]), frozenset(v["capabilities"]), float(v["rate_mb_per_s"]))
            for v in data["vms"]
        ]
        chains = [
            ServiceChain(
                int(c["id"]),
                tuple(FunctionStep(int(s["kind"]), float(s["workload_mb"])) for s in c["steps"]),
            )
            for c in data["chains"]
        ]
        slot_length = float(data.get("slot_length_s", 1.0))
        t_max = data.get("t_max")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError(f"malformed instance: {exc!r}") from exc
    vms.sort(key=lambda v: v.id)
    chains.sort(key=lambda c: c.id)
    return Instance(tuple(vms), tuple(chains), slot_length, None if t_max is None else int(t_max))


def save_instance(instance: Instance) -> str:
    return json.dumps(to_dict(instance), indent=2) + "\n"


def load_instance(text: str) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"instance is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InstanceError("instance JSON must be an object")
    return from_dict(data)


def fig1_fixture() -> Instance:
    """The three-VM, three-chain example network with 1 s slots."""
    vms = (
        VmSpec(1, frozenset({1, 2, 3}), 1.5),
        VmSpec(2, frozenset({1, 3, 5}), 1.0),
        VmSpec(3, frozenset({2, 4, 5}), 1.0),
    )

    def chain(cid, kinds, size):
        return ServiceChain(cid, tuple(FunctionStep(k, size) for k in kinds))

    chains = (
        chain(1, (1, 3, 4), 4.0),
        chain(2, (3, 4, 2), 0.8),
        chain(3, (2, 5, 3), 2.0),
    )
    return Instance(vms, chains, 1.0)

import numpy as np
import pytest

from vnfqubo.bench import GeneratorParams, generate_case
from vnfqubo.greedy import greedy_schedule
from vnfqubo.instance import FunctionStep, Instance, ServiceChain, VmSpec, fig1_fixture
from vnfqubo.schedule import Schedule, narrated_fig1_schedule

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, ok in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {text}")


@pytest.fixture
def fig1():
    return fig1_fixture()


@pytest.fixture
def narrated(fig1):
    return narrated_fig1_schedule(fig1)


def single_step(slots=1, vms=1, slot_length=1.0):
    """One chain, one step of kind 1, every VM capable at rate 1 MB/s."""
    return Instance(
        tuple(VmSpec(m, frozenset({1}), 1.0) for m in range(1, vms + 1)),
        (ServiceChain(1, (FunctionStep(1, float(slots) * slot_length),)),),
        slot_length,
    )


def random_instance(rng, max_chains=3, max_steps=3, max_vms=3):
    params = GeneratorParams(
        chains=int(rng.integers(1, max_chains + 1)),
        steps=int(rng.integers(1, max_steps + 1)),
        vms=int(rng.integers(1, max_vms + 1)),
        kinds=3,
        workload_range=(0.2, 2.0),
        rates=(1.0, 1.5, 2.0),
        density=0.7,
    )
    return generate_case(params, int(rng.integers(0, 2**31)))


def random_feasible_schedule(instance, horizon, rng, tries=50):
    """Random list schedule: random chain interleaving, random VM, random start that still fits.

    Returns None when the random choices paint themselves into a corner.
    """
    for _ in range(tries):
        remaining = {c.id: 1 for c in instance.chains}
        ready = {c.id: 1 for c in instance.chains}
        busy = np.zeros((instance.n_vms + 1, horizon + 2), dtype=bool)
        placements = {}
        ok = True
        while remaining:
            i = int(rng.choice(sorted(remaining)))
            j = remaining[i]
            options = []
            for m in sorted(instance.capable_set(i, j)):
                n = instance.processing_slots(i, j, m)
                for start in range(ready[i], horizon - n + 1):
                    if not busy[m, start:start + n].any():
                        options.append((m, start, n))
            if not options:
                ok = False
                break
            # bias towards early starts so most draws complete
            weights = np.array([1.0 / (1 + o[1] - ready[i]) for o in options])
            m, start, n = options[int(rng.choice(len(options), p=weights / weights.sum()))]
            busy[m, start:start + n] = True
            placements[(i, j)] = (m, start)
            ready[i] = start + n
            if j == len(instance.chains[i - 1]):
                del remaining[i]
            else:
                remaining[i] = j + 1
        if ok:
            return Schedule.from_placements(instance, horizon, placements)
    return None


def small_random_cases(seed, count, max_horizon=12):
    """``count`` (instance, horizon) pairs with greedy horizon <= max_horizon."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        inst = random_instance(rng)
        g = greedy_schedule(inst).horizon
        if g > max_horizon:
            continue
        out.append((inst, int(rng.integers(g, max_horizon + 1))))
    return out

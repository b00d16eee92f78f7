"""Delay-minimising VNF scheduling as a QUBO, with classical samplers."""
from .greedy import GreedyResult, greedy_schedule, horizon
from .instance import (
    CapabilityError,
    FunctionStep,
    Instance,
    InstanceError,
    ServiceChain,
    VmSpec,
    fig1_fixture,
    load_instance,
    save_instance,
)
from .qubo import (
    PenaltyConfig,
    QuboModel,
    VariableMap,
    build_qubo,
    decode,
    encode,
    energy,
    export_qubo,
    import_result,
    objective_upper_bound,
)
from .schedule import (
    FeasibilityReport,
    Schedule,
    SlackAssignment,
    avg_vm_busy_time,
    canonical_slacks,
    chain_delay,
    check_feasibility,
    gantt,
    longest_delay,
    narrated_fig1_schedule,
    total_delay,
)
from .solvers import (
    AnnealParams,
    SampleSet,
    best_feasible,
    brute_force_bits,
    exhaustive_schedule_oracle,
    simulated_annealing,
)

__version__ = "0.1.0"

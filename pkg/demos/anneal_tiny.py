"""
Annealing a tiny model
======================

On a model small enough to enumerate, simulated annealing should land on
the same optimum as brute force.
"""
from vnfqubo import build_qubo, decode, total_delay
from vnfqubo.instance import FunctionStep, Instance, ServiceChain, VmSpec
from vnfqubo.solvers import AnnealParams, best_feasible, brute_force_bits, simulated_annealing

# one step, two VMs; VM2 is twice as fast
inst = Instance(
    (VmSpec(1, frozenset({1}), 1.0), VmSpec(2, frozenset({1}), 2.0)),
    (ServiceChain(1, (FunctionStep(1, 2.0),)),),
)
model = build_qubo(inst, 2)
print("variables:", model.n_vars)

bits, e = brute_force_bits(model)
schedule, _ = decode(model, bits)
print("brute force energy", e, "placements", schedule.placements())

ss = simulated_annealing(model, AnnealParams(reads=50, seed=1))
print("lowest annealed energies:", ss.energies[:5])
found = best_feasible(model, ss)
print("first feasible sample:", found[0].placements(), "delay", total_delay(inst, found[0]))

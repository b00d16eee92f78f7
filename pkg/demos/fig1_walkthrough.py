"""
Three service chains on three VMs
=================================

Builds the small three-chain example, checks the hand-made schedule, then
compares it with the greedy plan and the exact optimum.
"""
from vnfqubo import (
    avg_vm_busy_time,
    check_feasibility,
    fig1_fixture,
    greedy_schedule,
    narrated_fig1_schedule,
    total_delay,
)
from vnfqubo.schedule import chain_delays, format_gantt
from vnfqubo.solvers import exhaustive_schedule_oracle

inst = fig1_fixture()

# the hand-made plan fits in 11 slots
hand = narrated_fig1_schedule(inst)
print(format_gantt(inst, hand))
print("feasible:", check_feasibility(inst, hand).feasible)
print("chain delays:", chain_delays(inst, hand), "total", total_delay(inst, hand))
print("mean VM busy time: %.3f s" % avg_vm_busy_time(inst, hand))

# greedy runs everything back to back; its makespan sets the horizon
g = greedy_schedule(inst)
print("\ngreedy makespan %d slots, horizon %d" % (g.makespan_slots, g.horizon))
print("greedy total delay:", total_delay(inst, g.schedule))

# branch and bound says 20 s is the best possible
best, value = exhaustive_schedule_oracle(inst, g.horizon)
print("\noptimal total delay:", value)
print(format_gantt(inst, best))

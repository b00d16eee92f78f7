"""
From schedule to bits and back
==============================

Encodes a feasible schedule into QUBO bits, shows that its energy is the
total delay, writes the model to a coordinate file and reads a result back.
"""
import tempfile
from pathlib import Path

import numpy as np

from vnfqubo import build_qubo, canonical_slacks, decode, encode, energy, fig1_fixture, narrated_fig1_schedule
from vnfqubo.qubo import export_qubo, export_result, import_result, model_from_export, part_energies

inst = fig1_fixture()
hand = narrated_fig1_schedule(inst)
model = build_qubo(inst, 11)
print("variables:", model.n_vars, dict(model.varmap.sizes))
print("penalty coefficient:", model.config.base)

bits = encode(inst, hand, canonical_slacks(inst, hand))
print("energy of the hand schedule:", energy(model, bits))
# every penalty family is zero, only the objective remains
for name, value in part_energies(model, bits).items():
    print("  %-24s %g" % (name, value))

# flip a single start bit: the schedule breaks and the energy jumps by a penalty
broken = bits.copy()
broken[model.varmap.position("z", 1, 1, 1, 1)] ^= 1
print("energy after one flip:", energy(model, broken))

# exchange through files, as an external sampler would
with tempfile.TemporaryDirectory() as tmp:
    qfile = Path(tmp) / "fig1.qubo"
    qfile.write_text(export_qubo(model))
    again = model_from_export(qfile.read_text())
    back = import_result(again, export_result(bits))
    schedule, _ = decode(again, back)
    print("round trip keeps the schedule:", schedule == hand, np.array_equal(back, bits))

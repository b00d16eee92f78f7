"""
Success rate against model size
===============================

Runs the size ladder in ``cases_ladder.json`` and prints how the fraction
of feasible runs changes as Q grows. Takes a few minutes.
"""
import sys
from pathlib import Path

from scipy.stats import spearmanr

from vnfqubo import bench

here = Path(__file__).parent
configs = bench.load_cases((here / "cases_ladder.json").read_text(), here)
results = []
for cfg in configs:
    res = bench.run_case(cfg)
    print("%-8s N=%5d success=%.2f" % (res.name, res.q_size, res.success_rate))
    results.append(res)

print()
print(bench.emit_table(results, "table4", "text"))
rho = spearmanr([r.q_size for r in results], [r.success_rate for r in results]).statistic
print("Spearman rho(size, success) = %.2f" % rho)

if len(sys.argv) > 1:
    bench.write_outputs(results, sys.argv[1])

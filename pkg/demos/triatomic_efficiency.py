"""Work-precision table for the highly oscillatory triatomic molecule.

Runs a shortened version of the ``exp1`` preset (t_end = 5 instead of 50)
and prints one row per (method, h). Pass ``--full`` for the complete sweep
and a CSV in ``results/``; on one core that takes about two minutes.

    python demos/triatomic_efficiency.py [--full]
"""

import sys

from eavf import harness

full = "--full" in sys.argv
spec = harness.preset("exp1") if full else harness.preset("exp1", t_end=5.0)
result = harness.run_experiment(spec, out_dir="results" if full else None)

print(f"{'method':<9} {'h':>10} {'FE':>9} {'GE':>10} {'EH':>10}")
for p in result.points:
    print(f"{p.method:<9} {p.h:>10.6f} {p.total_fe:>9d} {p.ge:>10.2e} {p.eh:>10.2e}")

print("\nEAVF dominates MID:", harness.dominates(result.points, "EAVFGL3", "MID"))
print("EAVF dominates AVF:", harness.dominates(result.points, "EAVFGL3", "AVFGL3"))

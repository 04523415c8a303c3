"""
Energy and reduction curves
===========================

The cost model turns ledger counters into energy. The 1 MiB scenario below
(2048 chunks of 512 INT8 values, 50 candidates) shows that DRAM traffic
dominates everything else by two orders of magnitude.
"""

from bprag import closed_form_ledger, energy_report, latency_report, reduction_curve
from bprag.cost import format_energy_table, log_spaced

ledger = closed_form_ledger(2048, 50, 512)
print(format_energy_table(energy_report(ledger)))
lat = latency_report(ledger)
print(f"\n{lat.cycles} cycles = {lat.seconds * 1e6:.1f} us at {lat.clock_mhz:g} MHz\n")

# memory and compute savings against a full INT8 scan, as the corpus grows
print(f"{'chunks':>7} {'memory':>8} {'compute':>8}")
for n, mem, comp in reduction_curve(log_spaced(100, 10000, 9) + [20000, 100000]):
    print(f"{n:>7} {mem:>8.3f} {comp:>8.3f}")
# with a fixed C=50, small corpora gain nothing: C covers most of the corpus,
# and the savings approach 50% / 75% as N grows

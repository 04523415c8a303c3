"""
Precision@1 on planted-neighbour data
=====================================

Each synthetic query is a noisy copy of one document. As the noise grows, the
INT4-only scan loses precision first, while the two-stage pipeline keeps pace
with the full INT8 scan.
"""

from bprag import RetrievalConfig, compare_modes, generate_synthetic

for noise in (1.5, 3.0, 5.0):
    ds = generate_synthetic(1000, 100, 512, noise=noise, seed=0)
    report = compare_modes(ds, RetrievalConfig(candidate_size=50, final_k=1))
    print(report.to_text(), "\n")

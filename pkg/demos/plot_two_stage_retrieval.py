"""
Two-stage retrieval
===================

Stage 1 scores every document on its MSB nibbles and keeps the best C.
Stage 2 re-reads only those candidates at full INT8 precision. The ledger
records exactly how many bits each step moved.
"""

import numpy as np

from bprag import FloatEmbedding, RetrievalConfig, build_store, retrieve

rng = np.random.default_rng(1)
docs = rng.standard_normal((5000, 512))
store = build_store(docs)

# a query close to document 1234
query = FloatEmbedding(docs[1234] + 0.3 * rng.standard_normal(512))

for mode in ("hierarchical", "pure_int8", "pure_int4"):
    res = retrieve(store, query, RetrievalConfig(candidate_size=50, final_k=5, mode=mode))
    print(f"{mode:<13} top-5 {res.doc_ids}  DRAM bits {res.ledger.dram_bits_read:>10}"
          f"  cycles {res.cycles['total']}")

# the candidate map bridges the stages: doc id plus its root address
res = retrieve(store, query, RetrievalConfig(candidate_size=50, final_k=5))
print("first candidates:", res.candidates.entries[:3])

# scores are kept as integer fractions; the ordering never divides
best = res.scores[0]
print("best:", best, "cosine ~", round(best.to_float(), 4))

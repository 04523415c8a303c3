"""
Quantization and bit-planes
===========================

A float embedding becomes INT8 with one shared corpus scale, and its bits are
then stored transposed: one row per bit position. Reading only the first four
rows gives the INT4 "MSB nibble" of every coordinate.
"""

import numpy as np

from bprag import AccessLedger, build_store, choose_scale, decode_msb4, encode_block, quantize
from bprag import FloatEmbedding, msb_nibble

rng = np.random.default_rng(0)
docs = rng.standard_normal((3, 16))

# one scale for the whole corpus: the largest magnitude maps to 127
scale = choose_scale(docs)
q = quantize(FloatEmbedding(docs[0], id=7), scale)
print("scale      ", round(scale, 5))
print("int8       ", q.values)

# plane 0 holds bit 7 (the sign bit), plane 7 the least significant bit
block = encode_block(q)
for p in range(8):
    print(f"plane {p} bits", "".join(map(str, block.plane_bits(p))))

# the top four planes decode to an arithmetic shift right by 4
ledger = AccessLedger()
nib = decode_msb4(block, ledger)
print("msb nibble ", nib.values)
assert nib == msb_nibble(q)
print("bits streamed for one INT4 read:", ledger.dram_bits_read)

# a whole corpus is a single array of packed planes
store = build_store(docs, ids=[10, 11, 12])
print(store.count, "docs, planes array", store.planes.shape, store.planes.dtype)

"""Two-stage hierarchical retrieval over a bit-planar store.

Stage 1 streams only the MSB planes of every document and keeps the top-C
candidates; stage 2 reloads those candidates at full INT8 precision and
returns the final top-k.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bitplanar import MSB_PLANES, N_PLANES, AccessLedger, BitPlanarStore
from .cost import RERANK_BITS_PER_COMPARISON, SIMCALC_BITS_PER_DOC, CycleModel
from .embedding import (
    FloatEmbedding,
    NibbleEmbedding,
    QuantizedEmbedding,
    ValidationError,
    msb_nibble,
    quantize,
    query_scale,
)
from .similarity import ScoreFraction, select_topk

MODES = ("hierarchical", "pure_int8", "pure_int4")
METRICS = ("cosine", "mips")


@dataclass(frozen=True)
class RetrievalConfig:
    candidate_size: int = 50
    final_k: int = 10
    metric: str = "cosine"
    mode: str = "hierarchical"
    dim: int | None = None
    # stage-1 document norms: "int4" (nibble-derived) or "int8" (stored full-precision)
    stage1_norms: str = "int4"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if self.stage1_norms not in ("int4", "int8"):
            raise ValidationError(f"stage1_norms must be 'int4' or 'int8'")
        if self.final_k < 1 or self.candidate_size < 1:
            raise ValidationError("final_k and candidate_size must be positive")
        if self.final_k > self.candidate_size:
            raise ValidationError(
                f"final_k ({self.final_k}) may not exceed candidate_size ({self.candidate_size})"
            )


@dataclass(frozen=True)
class ChunkIdEntry:
    rank: int
    doc_id: int
    root_address: int


@dataclass
class ChunkIdMap:
    entries: list[ChunkIdEntry]
    scores: list[ScoreFraction] = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.entries)

    @property
    def doc_ids(self) -> list[int]:
        return [e.doc_id for e in self.entries]

    @property
    def root_addresses(self) -> list[int]:
        return [e.root_address for e in self.entries]

    @classmethod
    def from_doc_ids(cls, store: BitPlanarStore, doc_ids) -> "ChunkIdMap":
        return cls([ChunkIdEntry(r, int(d), store.root_address(d)) for r, d in enumerate(doc_ids)])


@dataclass
class RetrievalResult:
    scores: list[ScoreFraction]
    ledger: AccessLedger
    cycles: dict
    config: RetrievalConfig
    candidates: ChunkIdMap | None = None

    @property
    def doc_ids(self) -> list[int]:
        return [s.doc_id for s in self.scores]

    @property
    def topk(self) -> list[tuple[int, int]]:
        return [(s.doc_id, r) for r, s in enumerate(self.scores)]

    def as_dict(self) -> dict:
        return {
            "topk": [
                {"rank": r, "doc_id": s.doc_id, "dot": s.dot, "q_sq_norm": s.q_sq_norm,
                 "d_sq_norm": s.d_sq_norm}
                for r, s in enumerate(self.scores)
            ],
            "ledger": self.ledger.as_dict(),
            "cycles": dict(self.cycles),
            "config": asdict(self.config),
            "candidates": None if self.candidates is None else self.candidates.doc_ids,
        }


def _check_dim(store: BitPlanarStore, dim: int, cfg: RetrievalConfig) -> None:
    if store.count == 0:
        raise ValidationError("store is empty")
    if dim != store.dim or (cfg.dim is not None and cfg.dim != store.dim):
        raise ValidationError(f"query dimension {dim} does not match store dimension {store.dim}")


def _score(store, addrs, query_vals, n_planes, norm_kind, cfg, ledger, k):
    """Stream documents at the given precision, score them, keep the best ``k``."""
    if n_planes == MSB_PLANES:
        docs = store.read_msb4(addrs, ledger)
    else:
        docs = store.read_full(addrs, ledger)
    q = np.asarray(query_vals, dtype=np.int64)
    dots = docs @ q
    n = len(addrs)
    if cfg.metric == "cosine":
        d_norms = store.read_norms(addrs, norm_kind, ledger)
        q_norm = int(q @ q)
    else:
        d_norms = np.ones(n, dtype=np.int64)
        q_norm = 1
    ledger.charge(
        pe_bits_processed=n * n_planes * store.dim,
        simcalc_bits=n * SIMCALC_BITS_PER_DOC,
        rerank_bits=n * RERANK_BITS_PER_COMPARISON,
        **({"int4_docs": n} if n_planes == MSB_PLANES else {"int8_docs": n}),
    )
    return select_topk(dots, q_norm, d_norms, store.ids[addrs], k)


def _stage_cycles(n_docs: int, bits_per_doc: int, rerank: bool, model: CycleModel) -> int:
    total = 0
    for _ in range(n_docs):
        total += model.doc_cycles(bits_per_doc)
        if rerank:
            total += model.rerank_cycles_per_insertion
    return total


def stage1_scan(store: BitPlanarStore, query_nibbles: NibbleEmbedding, cfg: RetrievalConfig,
                ledger: AccessLedger, size: int | None = None) -> ChunkIdMap:
    _check_dim(store, query_nibbles.dim, cfg)
    size = cfg.candidate_size if size is None else size
    addrs = np.arange(store.count)
    norm_kind = "int4" if cfg.stage1_norms == "int4" else "int8"
    scores = _score(store, addrs, query_nibbles.values, MSB_PLANES, norm_kind, cfg, ledger, size)
    entries = [ChunkIdEntry(r, s.doc_id, store.root_address(s.doc_id)) for r, s in enumerate(scores)]
    return ChunkIdMap(entries, scores)


def stage2_rerank(store: BitPlanarStore, query_int8: QuantizedEmbedding, candidates: ChunkIdMap,
                  cfg: RetrievalConfig, ledger: AccessLedger) -> list[ScoreFraction]:
    _check_dim(store, query_int8.dim, cfg)
    if len(candidates) == 0:
        raise ValidationError("stage 2 needs a non-empty candidate set")
    addrs = np.asarray(candidates.root_addresses, dtype=np.int64)
    if addrs.min() < 0 or addrs.max() >= store.count:
        raise IndexError("stale root address in chunk-id map")
    for e in candidates.entries:
        if int(store.ids[e.root_address]) != e.doc_id:
            raise IndexError(f"root address {e.root_address} does not hold document {e.doc_id}")
    return _score(store, addrs, query_int8.values, N_PLANES, "int8", cfg, ledger, cfg.final_k)


def quantize_query(query: FloatEmbedding) -> QuantizedEmbedding:
    return quantize(query, query_scale(query))


def retrieve(store: BitPlanarStore, query: FloatEmbedding, cfg: RetrievalConfig = RetrievalConfig(),
             cycle_model: CycleModel | None = None) -> RetrievalResult:
    _check_dim(store, query.dim, cfg)
    model = cycle_model or CycleModel()
    ledger = AccessLedger()
    q8 = quantize_query(query)
    n, d = store.count, store.dim
    cycles = {"stage1": 0, "stage2": 0}
    candidates = None

    if cfg.mode == "pure_int4":
        k = min(cfg.final_k, n)
        cmap = stage1_scan(store, msb_nibble(q8), cfg, ledger, size=k)
        scores = cmap.scores
        cycles["stage1"] = _stage_cycles(n, MSB_PLANES * d, False, model)
    elif cfg.mode == "pure_int8" or cfg.candidate_size >= n:
        # exhaustive candidate set: stage 1 would select everything, skip it
        scores = _score(store, np.arange(n), q8.values, N_PLANES, "int8", cfg, ledger, cfg.final_k)
        cycles["stage2"] = _stage_cycles(n, N_PLANES * d, True, model)
    else:
        candidates = stage1_scan(store, msb_nibble(q8), cfg, ledger)
        cycles["stage1"] = _stage_cycles(n, MSB_PLANES * d, False, model)
        scores = stage2_rerank(store, q8, candidates, cfg, ledger)
        cycles["stage2"] = _stage_cycles(len(candidates), N_PLANES * d, True, model)

    cycles["total"] = cycles["stage1"] + cycles["stage2"]
    return RetrievalResult(scores, ledger.snapshot(), cycles, cfg, candidates)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("BPRAG_THREADS", "1")))
    except ValueError:
        return 1


def retrieve_many(store: BitPlanarStore, queries, cfg: RetrievalConfig = RetrievalConfig(),
                  threads: int | None = None, cycle_model: CycleModel | None = None
                  ) -> list[RetrievalResult]:
    """Run queries concurrently; results come back in query order."""
    threads = default_threads() if threads is None else threads
    queries = list(queries)
    if threads <= 1:
        return [retrieve(store, q, cfg, cycle_model) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: retrieve(store, q, cfg, cycle_model), queries))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bprag.bitplanar import AccessLedger, BitPlanarStore, build_store
from bprag.cost import latency_report
from bprag.embedding import FloatEmbedding, ValidationError, msb_nibble, msb_nibble_values
from bprag.pipeline import (
    ChunkIdEntry,
    ChunkIdMap,
    RetrievalConfig,
    quantize_query,
    retrieve,
    retrieve_many,
    stage1_scan,
    stage2_rerank,
)


def float_cosine_ranking(docs, q):
    docs = docs.astype(np.float64)
    q = q.astype(np.float64)
    norms = np.linalg.norm(docs, axis=1) * np.linalg.norm(q)
    cos = np.divide(docs @ q, norms, out=np.zeros(len(docs)), where=norms > 0)
    return cos


def assert_same_ranking_up_to_ties(got_ids, cos, ids, tol=1e-12):
    by_id = dict(zip(ids.tolist(), cos))
    got = [by_id[i] for i in got_ids]
    assert all(a >= b - tol for a, b in zip(got, got[1:]))
    # the k-th score bounds everything left out
    rest = [c for i, c in by_id.items() if i not in set(got_ids)]
    if rest:
        assert max(rest) <= got[-1] + tol


def test_config_validation():
    with pytest.raises(ValidationError):
        RetrievalConfig(candidate_size=5, final_k=6)
    with pytest.raises(ValidationError):
        RetrievalConfig(mode="int2")
    with pytest.raises(ValidationError):
        RetrievalConfig(metric="l2")


def test_stage1_single_doc():
    store = build_store(np.ones((1, 16)))
    q = quantize_query(FloatEmbedding(np.ones(16)))
    cmap = stage1_scan(store, msb_nibble(q), RetrievalConfig(), AccessLedger())
    assert len(cmap) == 1
    assert cmap.entries[0] == ChunkIdEntry(0, 0, 0)


def test_stage1_self_similarity(rng):
    docs = rng.uniform(-1, 1, (300, 64))
    docs[42, 7] = 5.0  # doc 42 carries the corpus peak, so query and doc share a scale
    store = build_store(docs)
    q = quantize_query(FloatEmbedding(docs[42]))
    cmap = stage1_scan(store, msb_nibble(q), RetrievalConfig(), AccessLedger())
    assert cmap.doc_ids[0] == 42
    top = cmap.scores[0]
    assert top.dot * top.dot == top.q_sq_norm * top.d_sq_norm  # cosine exactly 1


def test_stage1_matches_float_oracle_over_nibbles(rng):
    docs = rng.standard_normal((1000, 96))
    store = build_store(docs)
    q8 = quantize_query(FloatEmbedding(rng.standard_normal(96)))
    ledger = AccessLedger()
    cmap = stage1_scan(store, msb_nibble(q8), RetrievalConfig(), ledger)
    nib_docs = msb_nibble_values(store.read_full(np.arange(1000)).astype(np.int8))
    cos = float_cosine_ranking(nib_docs, msb_nibble_values(q8.values))
    assert_same_ranking_up_to_ties(cmap.doc_ids, cos, store.ids)
    assert ledger.dram_bits_read == 1000 * (4 * 96 + 32)
    assert ledger.pe_bits_processed == 1000 * 4 * 96


def test_stage2_exhaustive_candidates_equal_pure_int8(rng):
    store = build_store(rng.standard_normal((120, 32)))
    query = FloatEmbedding(rng.standard_normal(32))
    cfg = RetrievalConfig(candidate_size=120, final_k=10)
    cands = ChunkIdMap.from_doc_ids(store, store.ids[::-1])
    got = stage2_rerank(store, quantize_query(query), cands, cfg, AccessLedger())
    pure = retrieve(store, query, RetrievalConfig(final_k=10, mode="pure_int8"))
    assert [s.doc_id for s in got] == pure.doc_ids


def test_stage2_single_candidate_returned(rng):
    store = build_store(rng.standard_normal((30, 16)))
    q8 = quantize_query(FloatEmbedding(rng.standard_normal(16)))
    ledger = AccessLedger()
    got = stage2_rerank(store, q8, ChunkIdMap.from_doc_ids(store, [17]), RetrievalConfig(final_k=5), ledger)
    assert [s.doc_id for s in got] == [17]
    assert ledger.dram_bits_read == 8 * 16 + 32


def test_stage2_stale_root_address(rng):
    store = build_store(rng.standard_normal((5, 8)))
    q8 = quantize_query(FloatEmbedding(np.ones(8)))
    with pytest.raises(IndexError):
        stage2_rerank(store, q8, ChunkIdMap([ChunkIdEntry(0, 3, 9)]), RetrievalConfig(final_k=1), AccessLedger())
    with pytest.raises(IndexError):
        stage2_rerank(store, q8, ChunkIdMap([ChunkIdEntry(0, 3, 2)]), RetrievalConfig(final_k=1), AccessLedger())
    with pytest.raises(ValidationError):
        stage2_rerank(store, q8, ChunkIdMap([]), RetrievalConfig(final_k=1), AccessLedger())


def test_containment_oracle(rng):
    trials = checked = 0
    while trials < 200:
        trials += 1
        store = build_store(rng.standard_normal((200, 32)))
        query = FloatEmbedding(rng.standard_normal(32))
        hier = retrieve(store, query, RetrievalConfig(candidate_size=50, final_k=1))
        pure = retrieve(store, query, RetrievalConfig(candidate_size=50, final_k=1, mode="pure_int8"))
        if pure.doc_ids[0] in hier.candidates.doc_ids:
            checked += 1
            assert hier.doc_ids == pure.doc_ids
    assert checked > 150


def test_pure_int8_is_brute_force_argsort(rng):
    store = build_store(rng.standard_normal((25, 12)))
    query = FloatEmbedding(rng.standard_normal(12))
    res = retrieve(store, query, RetrievalConfig(final_k=25, candidate_size=25, mode="pure_int8"))
    docs = store.read_full(np.arange(25))
    q8 = quantize_query(query).values
    cos = float_cosine_ranking(docs, q8)
    assert_same_ranking_up_to_ties(res.doc_ids, cos, store.ids)
    assert sorted(res.doc_ids) == list(range(25))


def test_mips_mode(rng):
    store = build_store(rng.standard_normal((60, 16)))
    query = FloatEmbedding(rng.standard_normal(16))
    res = retrieve(store, query, RetrievalConfig(final_k=60, candidate_size=60, metric="mips", mode="pure_int8"))
    dots = store.read_full(np.arange(60)) @ quantize_query(query).values.astype(np.int64)
    assert res.doc_ids == sorted(range(60), key=lambda i: (-dots[i], i))
    assert res.ledger.dram_bits_read == 60 * 8 * 16  # no norm traffic for MIPS


def test_metering_arithmetic_10000_docs():
    store = BitPlanarStore.from_quantized(
        np.random.default_rng(0).integers(-127, 128, (10_000, 512), dtype=np.int8).clip(-127)
    )
    res = retrieve(store, FloatEmbedding(np.random.default_rng(1).standard_normal(512)), RetrievalConfig())
    assert res.ledger.dram_bits_read == 21_006_400
    assert res.ledger.sram_bits_written == res.ledger.sram_bits_read == 10_000 * 2048 + 50 * 4096
    assert latency_report(res.ledger).cycles == res.cycles["total"]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 120), st.integers(1, 60), st.sampled_from([8, 24, 64]), st.integers(0, 2**31))
def test_metering_exactness(n, c, d, seed):
    rng = np.random.default_rng(seed)
    store = build_store(rng.standard_normal((n, d)))
    query = FloatEmbedding(rng.standard_normal(d))
    hier = retrieve(store, query, RetrievalConfig(candidate_size=c, final_k=1))
    pure = retrieve(store, query, RetrievalConfig(candidate_size=c, final_k=1, mode="pure_int8"))
    if c < n:
        assert hier.ledger.dram_bits_read == n * (4 * d + 32) + c * (8 * d + 32)
    else:
        assert hier.ledger.dram_bits_read == n * (8 * d + 32)
    assert pure.ledger.dram_bits_read == n * (8 * d + 32)
    assert hier.ledger.sram_bits_written == hier.ledger.dram_bits_read - 32 * (
        hier.ledger.int4_docs + hier.ledger.int8_docs
    )


def test_result_size_and_errors(rng):
    store = build_store(rng.standard_normal((3, 8)))
    res = retrieve(store, FloatEmbedding(np.ones(8)), RetrievalConfig(final_k=10))
    assert len(res.doc_ids) == 3
    with pytest.raises(ValidationError):
        retrieve(store, FloatEmbedding(np.ones(9)), RetrievalConfig())
    with pytest.raises(ValidationError):
        retrieve(store, FloatEmbedding(np.zeros(8)), RetrievalConfig())


def test_stage1_int8_norm_option(rng):
    store = build_store(rng.standard_normal((100, 32)))
    query = FloatEmbedding(rng.standard_normal(32))
    res = retrieve(store, query, RetrievalConfig(candidate_size=20, final_k=3, stage1_norms="int8"))
    assert res.ledger.dram_bits_read == 100 * (4 * 32 + 32) + 20 * (8 * 32 + 32)
    assert len(res.candidates) == 20


def test_pure_int4_ledger(rng):
    store = build_store(rng.standard_normal((100, 32)))
    res = retrieve(store, FloatEmbedding(rng.standard_normal(32)), RetrievalConfig(mode="pure_int4", final_k=4))
    assert res.ledger.dram_bits_read == 100 * (4 * 32 + 32)
    assert res.ledger.int8_docs == 0 and len(res.doc_ids) == 4


def test_threads_do_not_change_results(rng):
    store = build_store(rng.standard_normal((300, 64)))
    queries = [FloatEmbedding(v, i) for i, v in enumerate(rng.standard_normal((20, 64)))]
    one = retrieve_many(store, queries, RetrievalConfig(), threads=1)
    many = retrieve_many(store, queries, RetrievalConfig(), threads=8)
    assert [r.as_dict() for r in one] == [r.as_dict() for r in many]


def test_threads_env_fallback(monkeypatch, rng):
    from bprag.pipeline import default_threads

    monkeypatch.setenv("BPRAG_THREADS", "6")
    assert default_threads() == 6
    monkeypatch.setenv("BPRAG_THREADS", "bogus")
    assert default_threads() == 1

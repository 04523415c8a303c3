"""Precision@k evaluation of the three retrieval modes on embedding datasets.

Datasets are three files: corpus embeddings and query embeddings (BPRG or
JSONL), plus a qrels TSV ``query_id<TAB>doc_id<TAB>relevance`` where any
relevance >= 1 counts as relevant.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .bitplanar import BitPlanarStore, build_store
from .cost import EnergyTable, energy_report
from .embedding import FloatEmbedding, ValidationError
from .formats import read_embeddings, write_bprg
from .pipeline import MODES, RetrievalConfig, retrieve_many


class DatasetError(ValidationError):
    pass


class MissingIdError(DatasetError):
    pass


class DimensionMismatchError(DatasetError):
    pass


class QrelsFormatError(DatasetError):
    pass


@dataclass
class Dataset:
    name: str
    doc_vectors: np.ndarray
    doc_ids: np.ndarray
    query_vectors: np.ndarray
    query_ids: np.ndarray
    qrels: dict[int, set[int]]

    def __post_init__(self):
        if self.doc_vectors.shape[1] != self.query_vectors.shape[1]:
            raise DimensionMismatchError(
                f"corpus dim {self.doc_vectors.shape[1]} != query dim {self.query_vectors.shape[1]}"
            )
        docs = set(self.doc_ids.tolist())
        queries = set(self.query_ids.tolist())
        for qid, rel in self.qrels.items():
            if qid not in queries:
                raise MissingIdError(f"qrels reference unknown query id {qid}")
            for d in rel:
                if d not in docs:
                    raise MissingIdError(f"qrels reference unknown doc id {d} (query {qid})")

    @property
    def dim(self) -> int:
        return self.doc_vectors.shape[1]

    def queries(self) -> list[FloatEmbedding]:
        return [FloatEmbedding(v, int(i)) for v, i in zip(self.query_vectors, self.query_ids)]

    def build_store(self) -> BitPlanarStore:
        return build_store(self.doc_vectors, self.doc_ids)


def read_qrels(path) -> dict[int, set[int]]:
    qrels: dict[int, set[int]] = {}
    with open(path, newline="") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise QrelsFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                qid, did, rel = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                if lineno == 1:
                    continue  # header row, e.g. "query-id corpus-id score"
                raise QrelsFormatError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
            qrels.setdefault(qid, set())
            if rel >= 1:
                qrels[qid].add(did)
    return qrels


def write_qrels(path, qrels: dict[int, set[int]]) -> None:
    with open(path, "w", newline="") as f:
        for qid in sorted(qrels):
            for did in sorted(qrels[qid]):
                f.write(f"{qid}\t{did}\t1\n")


def load_dataset(corpus_path, queries_path, qrels_path, name: str | None = None) -> Dataset:
    doc_vectors, doc_ids = read_embeddings(corpus_path)
    query_vectors, query_ids = read_embeddings(queries_path)
    qrels = read_qrels(qrels_path)
    name = name or os.path.splitext(os.path.basename(os.fspath(corpus_path)))[0]
    return Dataset(name, doc_vectors, doc_ids, query_vectors, query_ids, qrels)


def save_dataset(ds: Dataset, directory) -> tuple[str, str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = tuple(os.path.join(directory, n) for n in ("corpus.bprg", "queries.bprg", "qrels.tsv"))
    write_bprg(paths[0], ds.doc_vectors, ds.doc_ids)
    write_bprg(paths[1], ds.query_vectors, ds.query_ids)
    write_qrels(paths[2], ds.qrels)
    return paths


def generate_synthetic(n_docs: int, n_queries: int, dim: int = 512, noise: float = 0.5,
                       seed: int = 0, n_clusters: int | None = None, spread: float = 0.3,
                       name: str | None = None) -> Dataset:
    """Clustered unit-norm corpus; each query is a noisy copy of a distinct planted document.

    ``noise`` is the ratio of the query perturbation norm to the (unit) document
    norm; ``spread`` is the same ratio for documents around their cluster centre.
    """
    if not n_docs >= n_queries >= 1:
        raise ValidationError("need n_docs >= n_queries >= 1")
    rng = np.random.default_rng(seed)
    n_clusters = n_clusters or max(1, n_docs // 20)

    def unit(x):
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    centres = unit(rng.standard_normal((n_clusters, dim)))
    member = rng.integers(0, n_clusters, n_docs)
    docs = unit(centres[member] + spread * rng.standard_normal((n_docs, dim)) / np.sqrt(dim))
    planted = rng.choice(n_docs, n_queries, replace=False)
    queries = docs[planted] + noise * rng.standard_normal((n_queries, dim)) / np.sqrt(dim)
    queries = unit(queries)
    # float32-exact so a BPRG roundtrip is lossless
    docs = docs.astype(np.float32).astype(np.float64)
    queries = queries.astype(np.float32).astype(np.float64)
    qrels = {q: {int(planted[q])} for q in range(n_queries)}
    return Dataset(
        name or f"synthetic-n{n_docs}-q{n_queries}-d{dim}-noise{noise:g}-seed{seed}",
        docs, np.arange(n_docs), queries, np.arange(n_queries), qrels,
    )


def precision_at_k(rankings: dict[int, list[int]], qrels: dict[int, set[int]], k: int) -> float:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not rankings:
        raise ValidationError("no queries to evaluate")
    total = 0.0
    for qid, ranked in rankings.items():
        relevant = qrels.get(qid, set())
        total += len(set(ranked[:k]) & relevant) / k
    return total / len(rankings)


@dataclass
class EvalRun:
    dataset: str
    mode: str
    k: int
    hits: dict[int, int]
    p_at_k: float
    rankings: dict[int, list[int]] = field(repr=False)
    mean_ledger: dict = field(default_factory=dict)
    energy_uj_per_query: float = 0.0
    candidates: dict[int, list[int]] | None = field(default=None, repr=False)

    def row(self) -> dict:
        return {
            "dataset": self.dataset,
            "mode": self.mode,
            "k": self.k,
            "p_at_k": self.p_at_k,
            "energy_uj_per_query": self.energy_uj_per_query,
            "dram_bits": self.mean_ledger.get("dram_bits_read", 0.0),
            "sram_bits": self.mean_ledger.get("sram_bits_written", 0.0)
            + self.mean_ledger.get("sram_bits_read", 0.0),
            "pe_bits": self.mean_ledger.get("pe_bits_processed", 0.0),
        }


def evaluate_mode(ds: Dataset, store: BitPlanarStore, cfg: RetrievalConfig, k: int,
                  table: EnergyTable = EnergyTable(), threads: int | None = None) -> EvalRun:
    queries = ds.queries()
    results = retrieve_many(store, queries, cfg, threads)
    rankings = {q.id: r.doc_ids for q, r in zip(queries, results)}
    hits = {qid: len(set(ranked[:k]) & ds.qrels.get(qid, set())) for qid, ranked in rankings.items()}
    totals = results[0].ledger
    for r in results[1:]:
        totals = totals + r.ledger
    n = len(results)
    energy = energy_report(totals, table).total_j / n
    candidates = None
    if all(r.candidates is not None for r in results):
        candidates = {q.id: r.candidates.doc_ids for q, r in zip(queries, results)}
    return EvalRun(
        ds.name, cfg.mode, k, hits, precision_at_k(rankings, ds.qrels, k), rankings,
        {k_: v / n for k_, v in totals.as_dict().items()}, energy * 1e6, candidates,
    )


@dataclass
class ComparisonReport:
    dataset: str
    k: int
    runs: dict[str, EvalRun]
    candidate_miss_rate: float | None = None

    def as_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "k": self.k,
            "modes": [run.row() for run in self.runs.values()],
            "candidate_miss_rate": self.candidate_miss_rate,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["mode", "p_at_k", "energy_uj_per_query", "dram_bits", "sram_bits", "pe_bits"]
        w = csv.DictWriter(buf, cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for run in self.runs.values():
            w.writerow(run.row())
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"dataset: {self.dataset}   P@{self.k}",
                 f"{'mode':<14}{'P@' + str(self.k):>8}{'uJ/query':>12}{'DRAM bits':>14}"]
        for run in self.runs.values():
            row = run.row()
            lines.append(f"{run.mode:<14}{row['p_at_k']:>8.3f}{row['energy_uj_per_query']:>12.3f}"
                         f"{row['dram_bits']:>14.0f}")
        if self.candidate_miss_rate is not None:
            lines.append(f"queries with INT8 top-{self.k} outside stage-1 candidates: "
                         f"{self.candidate_miss_rate:.3f}")
        return "\n".join(lines)


def candidate_miss_rate(int8_run: EvalRun, hier_candidates: dict[int, list[int]], k: int) -> float:
    """Fraction of queries whose pure-INT8 top-k is not contained in the stage-1 candidates."""
    misses = sum(
        not set(int8_run.rankings[qid][:k]) <= set(cands) for qid, cands in hier_candidates.items()
    )
    return misses / len(hier_candidates)


def compare_modes(ds: Dataset, cfg: RetrievalConfig = RetrievalConfig(final_k=1), modes=MODES,
                  table: EnergyTable = EnergyTable(), threads: int | None = None,
                  store: BitPlanarStore | None = None) -> ComparisonReport:
    store = store or ds.build_store()
    k = cfg.final_k
    runs = {}
    for mode in modes:
        runs[mode] = evaluate_mode(ds, store, replace(cfg, mode=mode), k, table, threads)
    miss = None
    if "hierarchical" in runs and "pure_int8" in runs:
        cands = runs["hierarchical"].candidates
        # exhaustive candidate sets skip stage 1 and cannot miss
        miss = 0.0 if cands is None else candidate_miss_rate(runs["pure_int8"], cands, k)
    return ComparisonReport(ds.name, k, runs, miss)

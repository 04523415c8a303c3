"""``bprag`` command line: build, query, evaluate, simulate, synthesize.

Exit codes: 0 success, 1 domain error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import numpy as np

from .bitplanar import build_store, load_store, save_store
from .cost import (
    MB_SCENARIO,
    CycleModel,
    EnergyTable,
    TIERS,
    closed_form_ledger,
    curve_csv,
    energy_report,
    format_energy_table,
    latency_report,
    ledger_reductions,
    log_spaced,
    memory_reduction,
    reduction_curve,
)
from .embedding import INT8_MAX, FloatEmbedding, ValidationError
from .evaluation import compare_modes, generate_synthetic, load_dataset, save_dataset
from .formats import read_embeddings
from .pipeline import METRICS, MODES, RetrievalConfig, default_threads, retrieve, retrieve_many

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def load_schema(command: str) -> dict:
    """JSON schema for the ``--format json`` output of ``command``."""
    text = resources.files("bprag").joinpath("schemas", f"{command}.schema.json").read_text()
    return json.loads(text)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("chunk counts must be positive integers")
    return values


def _energy_override(text: str) -> tuple[str, float]:
    tier, sep, value = text.partition("=")
    if not sep or tier not in TIERS:
        raise argparse.ArgumentTypeError(f"expected TIER=PJ_PER_BIT with TIER in {TIERS}, got {text!r}")
    try:
        return tier, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad energy value in {text!r}") from None


def _add_energy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--energy", dest="energy_overrides", action="append", default=[],
                   type=_energy_override, metavar="TIER=PJ",
                   help="override a per-bit energy (tiers: %s)" % ", ".join(TIERS))
    p.add_argument("--clock-mhz", type=float, default=400.0)


def _add_retrieval_flags(p: argparse.ArgumentParser, k_default: int) -> None:
    p.add_argument("--k", type=_positive_int, default=k_default)
    p.add_argument("--candidates", type=_positive_int, default=50)
    p.add_argument("--metric", choices=METRICS, default="cosine")
    p.add_argument("--stage1-norms", choices=("int4", "int8"), default="int4")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $BPRAG_THREADS or 1)")


def _add_format(p: argparse.ArgumentParser, choices=("text", "json")) -> None:
    p.add_argument("--format", choices=choices, default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bprag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="quantize a corpus into a BPIX index")
    p.add_argument("corpus")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--dim", type=_positive_int, default=None, help="expected embedding dimension")
    p.add_argument("--scale-policy", choices=("corpus", "unit"), default="corpus",
                   help="corpus: max|x|/127 over the corpus; unit: 1/127 for |x| <= 1 embeddings")
    _add_format(p)

    p = sub.add_parser("query", help="retrieve top-k documents for each query embedding")
    p.add_argument("index")
    p.add_argument("query_file")
    p.add_argument("--mode", choices=MODES, default="hierarchical")
    _add_retrieval_flags(p, 5)
    _add_energy_flags(p)
    _add_format(p)

    p = sub.add_parser("evaluate", help="compare retrieval modes by Precision@k")
    p.add_argument("corpus")
    p.add_argument("queries")
    p.add_argument("qrels")
    p.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    _add_retrieval_flags(p, 1)
    _add_energy_flags(p)
    _add_format(p, ("text", "json", "csv"))

    p = sub.add_parser("simulate", help="memory/compute reduction curve and energy breakdown")
    p.add_argument("--n-chunks-list", type=_int_list, default=None,
                   help="comma-separated chunk counts (default: 100..10000 log-spaced plus 2048)")
    p.add_argument("--candidates", type=_positive_int, default=MB_SCENARIO["candidates"])
    p.add_argument("--dim", type=_positive_int, default=MB_SCENARIO["dim"])
    p.add_argument("--metric", choices=METRICS, default="cosine")
    p.add_argument("--verify", action="store_true",
                   help="also run real retrievals on random stores and compare ledgers")
    p.add_argument("--seed", type=int, default=0)
    _add_energy_flags(p)
    _add_format(p, ("text", "json", "csv"))

    p = sub.add_parser("synthesize", help="write a seeded planted-neighbour dataset")
    p.add_argument("out_dir")
    p.add_argument("--n-docs", type=_positive_int, default=1000)
    p.add_argument("--n-queries", type=_positive_int, default=100)
    p.add_argument("--dim", type=_positive_int, default=512)
    p.add_argument("--noise", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    _add_format(p)
    return parser


def _energy_table(args) -> EnergyTable:
    return EnergyTable().with_overrides(**dict(args.energy_overrides))


def _cycle_model(args) -> CycleModel:
    return CycleModel(clock_mhz=args.clock_mhz)


def _require_file(path: str) -> None:
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")


def _emit(out, args, payload: dict, text: str) -> None:
    if args.format == "json":
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        out.write(text.rstrip("\n") + "\n")


def cmd_build(args, out) -> int:
    _require_file(args.corpus)
    vectors, ids = read_embeddings(args.corpus)
    if args.dim is not None and vectors.shape[1] != args.dim:
        raise ValidationError(f"corpus dimension {vectors.shape[1]} != --dim {args.dim}")
    scale = None if args.scale_policy == "corpus" else 1.0 / INT8_MAX
    store = build_store(vectors, ids, scale)
    save_store(store, args.out)
    size = os.path.getsize(args.out)
    payload = {
        "index": args.out,
        "count": store.count,
        "dim": store.dim,
        "scale": store.scale,
        "file_bytes": size,
        "plane_bytes": int(store.planes.nbytes),
    }
    text = (f"wrote {args.out}: {store.count} documents, dim {store.dim}, "
            f"scale {store.scale:.9g}, {size} bytes ({store.planes.nbytes} plane bytes)")
    _emit(out, args, payload, text)
    return EXIT_OK


def cmd_query(args, out) -> int:
    _require_file(args.index)
    _require_file(args.query_file)
    store = load_store(args.index)
    vectors, qids = read_embeddings(args.query_file)
    queries = [FloatEmbedding(v, int(i)) for v, i in zip(vectors, qids)]
    cfg = RetrievalConfig(candidate_size=args.candidates, final_k=args.k, metric=args.metric,
                          mode=args.mode, stage1_norms=args.stage1_norms)
    model = _cycle_model(args)
    table = _energy_table(args)
    results = retrieve_many(store, queries, cfg, args.threads, model)
    records, blocks = [], []
    for q, r in zip(queries, results):
        energy = energy_report(r.ledger, table)
        latency = latency_report(r.ledger, model)
        records.append({"query_id": q.id, **r.as_dict(), "energy": energy.as_dict(),
                        "latency": latency.as_dict()})
        lines = [f"query {q.id}  mode={cfg.mode} metric={cfg.metric} k={cfg.final_k} "
                 f"candidates={cfg.candidate_size}",
                 f"{'rank':>4}  {'doc_id':>8}  {'dot':>10}  {'q_sq_norm':>10}  {'d_sq_norm':>10}"]
        for rank, s in enumerate(r.scores):
            lines.append(f"{rank:>4}  {s.doc_id:>8}  {s.dot:>10}  {s.q_sq_norm:>10}  {s.d_sq_norm:>10}")
        lines.append(format_energy_table(energy))
        lines.append(f"latency: {latency.cycles} cycles = {latency.seconds * 1e6:.3f} us "
                     f"at {model.clock_mhz:g} MHz; DRAM bits {r.ledger.dram_bits_read}")
        blocks.append("\n".join(lines))
    _emit(out, args, {"queries": records}, "\n\n".join(blocks))
    return EXIT_OK


def cmd_evaluate(args, out) -> int:
    for path in (args.corpus, args.queries, args.qrels):
        _require_file(path)
    ds = load_dataset(args.corpus, args.queries, args.qrels)
    cfg = RetrievalConfig(candidate_size=args.candidates, final_k=args.k, metric=args.metric,
                          stage1_norms=args.stage1_norms)
    modes = list(dict.fromkeys(args.modes))
    report = compare_modes(ds, cfg, modes, _energy_table(args), args.threads)
    if args.format == "csv":
        out.write(report.to_csv())
    else:
        _emit(out, args, report.as_dict(), report.to_text())
    return EXIT_OK


def _measured_ledgers(n: int, c: int, dim: int, metric: str, seed: int):
    rng = np.random.default_rng(seed)
    store = build_store(rng.standard_normal((n, dim)))
    query = FloatEmbedding(rng.standard_normal(dim))
    cfg = RetrievalConfig(candidate_size=c, final_k=1, metric=metric)
    hier = retrieve(store, query, cfg).ledger
    base = retrieve(store, query, RetrievalConfig(candidate_size=c, final_k=1, metric=metric,
                                                  mode="pure_int8")).ledger
    return hier, base


def cmd_simulate(args, out) -> int:
    n_values = args.n_chunks_list or sorted(set(log_spaced(100, 10000, 9)) | {MB_SCENARIO["n_chunks"]})
    c, dim = args.candidates, args.dim
    table = _energy_table(args)
    model = _cycle_model(args)
    curve = reduction_curve(n_values, c, dim)
    rows, text_blocks = [], []
    for (n, mem, comp) in curve:
        ledger = closed_form_ledger(n, c, dim, "hierarchical", args.metric)
        energy = energy_report(ledger, table)
        latency = latency_report(ledger, model)
        row = {
            "n_chunks": n,
            "memory_reduction": mem,
            "compute_reduction": comp,
            "memory_reduction_with_norms": float(memory_reduction(n, c, dim, include_norms=True)),
            "dram_bits": ledger.dram_bits_read,
            "energy": energy.as_dict(),
            "latency": latency.as_dict(),
        }
        block = [f"N={n}  C={c}  D={dim}  DRAM bits={ledger.dram_bits_read}  "
                 f"cycles={latency.cycles}", format_energy_table(energy)]
        if args.verify:
            hier, base = _measured_ledgers(n, c, dim, args.metric, args.seed)
            m_mem, m_comp = ledger_reductions(hier, base, include_norms=args.metric == "cosine")
            closed_base = closed_form_ledger(n, c, dim, "pure_int8", args.metric)
            c_mem, c_comp = ledger_reductions(ledger, closed_base, include_norms=args.metric == "cosine")
            row["verify"] = {
                "ledger_matches_closed_form": hier == ledger and base == closed_base,
                "measured_memory_reduction": float(m_mem),
                "measured_compute_reduction": float(m_comp),
                "closed_form_memory_reduction": float(c_mem),
                "closed_form_compute_reduction": float(c_comp),
                "exact_agreement": m_mem == c_mem and m_comp == c_comp,
            }
            block.append(f"verify: ledger == closed form: {row['verify']['ledger_matches_closed_form']}, "
                         f"memory {float(m_mem):.6f} vs {float(c_mem):.6f}, "
                         f"compute {float(m_comp):.6f} vs {float(c_comp):.6f}")
        rows.append(row)
        text_blocks.append("\n".join(block))
    if args.format == "csv":
        out.write(curve_csv(curve))
    else:
        payload = {"candidates": c, "dim": dim, "metric": args.metric, "rows": rows}
        _emit(out, args, payload, curve_csv(curve) + "\n" + "\n\n".join(text_blocks))
    return EXIT_OK


def cmd_synthesize(args, out) -> int:
    if args.n_queries > args.n_docs:
        raise ValidationError("--n-queries may not exceed --n-docs")
    ds = generate_synthetic(args.n_docs, args.n_queries, args.dim, args.noise, args.seed)
    paths = save_dataset(ds, args.out_dir)
    payload = dict(zip(("corpus", "queries", "qrels"), paths))
    _emit(out, args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))
    return EXIT_OK


COMMANDS = {
    "build": cmd_build,
    "query": cmd_query,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "synthesize": cmd_synthesize,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "threads", 1) is None:
        args.threads = default_threads()
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"bprag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"bprag: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (KeyError, IndexError, ValueError) as exc:
        print(f"bprag: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"bprag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

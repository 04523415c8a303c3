"""Energy and latency model driven by access-ledger counters.

Default per-bit energies are the post-layout figures for the 28 nm
accelerator (DRAM figure from the usual 40 pJ/bit off-chip estimate).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

from .bitplanar import MSB_PLANES, N_PLANES, NORM_BITS, AccessLedger

TIERS = ("dram", "sram", "pe", "simcalc", "rerank")
TIER_LABELS = {
    "dram": "DRAM",
    "sram": "SRAM",
    "pe": "PE",
    "simcalc": "Similarity Calculator",
    "rerank": "Rerank",
}

# widths charged to the similarity calculator and rerank comparator per scored document
SIMCALC_BITS_PER_DOC = 64
RERANK_BITS_PER_COMPARISON = 128

# 2048 docs x 512 INT8 coordinates = 1 MiB of embeddings
MB_SCENARIO = {"n_chunks": 2048, "dim": 512, "candidates": 50}


@dataclass(frozen=True)
class EnergyTable:
    dram_pj_per_bit: float = 40.0
    sram_pj_per_bit: float = 0.2
    pe_pj_per_bit: float = 0.0078
    simcalc_pj_per_bit: float = 0.0003
    rerank_pj_per_bit: float = 0.0001

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")

    def pj_per_bit(self, tier: str) -> float:
        return getattr(self, f"{tier}_pj_per_bit")

    def with_overrides(self, **overrides) -> "EnergyTable":
        merged = asdict(self)
        for key, value in overrides.items():
            name = key if key.endswith("_pj_per_bit") else f"{key}_pj_per_bit"
            if name not in merged:
                raise KeyError(f"unknown energy tier {key!r}")
            merged[name] = float(value)
        return EnergyTable(**merged)


def tier_bits(ledger: AccessLedger) -> dict[str, int]:
    return {
        "dram": ledger.dram_bits_read,
        "sram": ledger.sram_bits_written + ledger.sram_bits_read,
        "pe": ledger.pe_bits_processed,
        "simcalc": ledger.simcalc_bits,
        "rerank": ledger.rerank_bits,
    }


@dataclass
class EnergyReport:
    bits: dict
    pj_per_bit: dict
    energy_j: dict
    total_j: float
    proportion: dict

    def as_dict(self) -> dict:
        return {
            "tiers": [
                {
                    "module": TIER_LABELS[t],
                    "bits": self.bits[t],
                    "pj_per_bit": self.pj_per_bit[t],
                    "energy_j": self.energy_j[t],
                    "proportion": self.proportion[t],
                }
                for t in TIERS
            ],
            "total_j": self.total_j,
            "total_uj": self.total_j * 1e6,
        }


def energy_report(ledger: AccessLedger, table: EnergyTable = EnergyTable()) -> EnergyReport:
    bits = tier_bits(ledger)
    pj = {t: table.pj_per_bit(t) for t in TIERS}
    energy = {t: bits[t] * pj[t] * 1e-12 for t in TIERS}
    total = math.fsum(energy.values())
    proportion = {t: (energy[t] / total if total else 0.0) for t in TIERS}
    return EnergyReport(bits, pj, energy, total, proportion)


def _si_energy(joules: float) -> str:
    for unit, factor in (("mJ", 1e-3), ("uJ", 1e-6), ("nJ", 1e-9), ("pJ", 1e-12)):
        if abs(joules) >= factor:
            return f"{joules / factor:.4g} {unit}"
    return f"{joules / 1e-12:.4g} pJ"


def format_energy_table(report: EnergyReport) -> str:
    rows = [("Module", "pJ/bit", "Energy/Query", "Proportion")]
    for t in TIERS:
        rows.append((
            TIER_LABELS[t],
            f"{report.pj_per_bit[t]:g}",
            _si_energy(report.energy_j[t]),
            f"{100 * report.proportion[t]:.3f}%",
        ))
    rows.append(("Total", "", _si_energy(report.total_j), "100.000%"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


@dataclass(frozen=True)
class CycleModel:
    """Streaming model of the query-stationary array: 4 PEs x 128 lanes fed by
    four 128-bit dual-port buffers, two-stage adder pipeline per document."""

    n_pes: int = 4
    lanes_per_pe: int = 128
    n_buffers: int = 4
    buffer_width_bits: int = 128
    pipeline_stages: int = 2
    clock_mhz: float = 400.0
    rerank_cycles_per_insertion: int = 1

    def __post_init__(self):
        if not 200 <= self.clock_mhz <= 400:
            raise ValueError(f"clock {self.clock_mhz} MHz outside supported 200..400 MHz")

    @property
    def stream_bits_per_cycle(self) -> int:
        return self.n_buffers * self.buffer_width_bits

    def doc_cycles(self, payload_bits: int) -> int:
        return -(-payload_bits // self.stream_bits_per_cycle) + self.pipeline_stages


@dataclass
class LatencyReport:
    stream_cycles: int
    drain_cycles: int
    rerank_cycles: int
    clock_mhz: float

    @property
    def cycles(self) -> int:
        return self.stream_cycles + self.drain_cycles + self.rerank_cycles

    @property
    def seconds(self) -> float:
        return self.cycles / (self.clock_mhz * 1e6)

    def as_dict(self) -> dict:
        return {**asdict(self), "cycles": self.cycles, "seconds": self.seconds}


def latency_report(ledger: AccessLedger, model: CycleModel = CycleModel()) -> LatencyReport:
    """Closed-form latency from ledger totals.

    Matches the per-document pipeline accounting whenever each document's
    payload is a whole number of stream beats (D a multiple of 128).
    """
    stream = -(-ledger.sram_bits_written // model.stream_bits_per_cycle)
    drain = model.pipeline_stages * (ledger.int4_docs + ledger.int8_docs)
    rerank = model.rerank_cycles_per_insertion * ledger.int8_docs
    return LatencyReport(stream, drain, rerank, model.clock_mhz)


def closed_form_ledger(n: int, c: int, dim: int, mode: str = "hierarchical",
                       metric: str = "cosine") -> AccessLedger:
    """Ledger a single query would produce, without touching any data."""
    if mode == "pure_int4":
        n4, n8 = n, 0
    elif mode == "pure_int8" or c >= n:
        n4, n8 = 0, n
    else:
        n4, n8 = n, c
    payload = n4 * MSB_PLANES * dim + n8 * N_PLANES * dim
    norm_bits = NORM_BITS * (n4 + n8) if metric == "cosine" else 0
    scored = n4 + n8
    return AccessLedger(
        dram_bits_read=payload + norm_bits,
        sram_bits_written=payload,
        sram_bits_read=payload,
        pe_bits_processed=payload,
        simcalc_bits=scored * SIMCALC_BITS_PER_DOC,
        rerank_bits=scored * RERANK_BITS_PER_COMPARISON,
        int4_docs=n4,
        int8_docs=n8,
    )


def compute_units(ledger: AccessLedger) -> Fraction:
    """MAC work in 4x4-multiplier units (one 8x8 MAC = 4 units), from PE operand bits."""
    n4, n8 = ledger.int4_docs, ledger.int8_docs
    if n4 + n8 == 0:
        return Fraction(0)
    dim = Fraction(ledger.pe_bits_processed, MSB_PLANES * n4 + N_PLANES * n8)
    return dim * (n4 + 4 * n8)


def ledger_reductions(hier: AccessLedger, baseline: AccessLedger,
                      include_norms: bool = True) -> tuple[Fraction, Fraction]:
    """(memory, compute) reduction of ``hier`` relative to ``baseline``, exact."""
    if include_norms:
        mem_h, mem_b = hier.dram_bits_read, baseline.dram_bits_read
    else:
        mem_h, mem_b = hier.sram_bits_written, baseline.sram_bits_written
    memory = 1 - Fraction(mem_h, mem_b)
    compute = 1 - compute_units(hier) / compute_units(baseline)
    return memory, compute


def memory_reduction(n: int, c: int, dim: int, include_norms: bool = False) -> Fraction:
    if c >= n:
        return Fraction(0)
    norm = NORM_BITS if include_norms else 0
    hier = n * (MSB_PLANES * dim + norm) + c * (N_PLANES * dim + norm)
    base = n * (N_PLANES * dim + norm)
    return 1 - Fraction(hier, base)


def compute_reduction(n: int, c: int) -> Fraction:
    if c >= n:
        return Fraction(0)
    return 1 - (Fraction(n, 4) + c) / n


def reduction_curve(n_values, c: int = 50, dim: int = 512,
                    include_norms: bool = False) -> list[tuple[int, float, float]]:
    rows = []
    for n in n_values:
        if n < 1:
            raise ValueError(f"chunk count must be >= 1, got {n}")
        rows.append((
            int(n),
            float(memory_reduction(n, c, dim, include_norms)),
            float(compute_reduction(n, c)),
        ))
    return rows


def curve_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_chunks", "memory_reduction", "compute_reduction"])
    for n, mem, comp in rows:
        w.writerow([n, f"{mem:.6f}", f"{comp:.6f}"])
    return buf.getvalue()


def log_spaced(lo: int, hi: int, count: int) -> list[int]:
    if count == 1:
        return [lo]
    ratio = (hi / lo) ** (1 / (count - 1))
    return sorted({round(lo * ratio**i) for i in range(count)})

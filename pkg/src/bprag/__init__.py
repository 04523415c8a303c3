"""Two-stage bit-planar quantized retrieval with a metered memory-hierarchy cost model."""

from .bitplanar import (
    AccessLedger,
    BitPlanarBlock,
    BitPlanarStore,
    build_store,
    decode_full,
    decode_msb4,
    encode_block,
    load_store,
    save_store,
)
from .cost import (
    CycleModel,
    EnergyReport,
    EnergyTable,
    closed_form_ledger,
    energy_report,
    latency_report,
    reduction_curve,
)
from .embedding import (
    FloatEmbedding,
    NibbleEmbedding,
    NormRecord,
    QuantizedEmbedding,
    ValidationError,
    choose_scale,
    compute_norms,
    msb_nibble,
    quantize,
)
from .evaluation import Dataset, compare_modes, generate_synthetic, load_dataset, precision_at_k
from .pipeline import ChunkIdMap, RetrievalConfig, RetrievalResult, retrieve, retrieve_many, stage1_scan, stage2_rerank
from .similarity import ScoreFraction, TopK, compare_cosine, dot_int, score_mips, topk_insert

__version__ = "0.1.0"

"""Bit-planar document storage with metered plane reads.

Each document occupies a block of 8 plane rows, D bits wide.  Plane 0 holds
bit 7 (the two's-complement sign bit) of every coordinate, plane 7 holds
bit 0.  Reading planes 0..3 alone yields the signed MSB nibble.

Index file ``BPIX`` layout (all integers little-endian)::

    offset        size            field
    0             4               magic b"BPIX"
    4             2               version (u16, currently 1)
    6             4               dim D (u32)
    10            8               count N (u64)
    18            N*8*ceil(D/8)   plane rows, document-major, plane 0 first,
                                  bits packed MSB-first within each byte
    ...           N*8             norm table: (u32 sq_norm_int8, u32 sq_norm_int4)
    ...           N*8             id table: u64 per document
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, fields

import numpy as np

from .embedding import (
    NibbleEmbedding,
    NormRecord,
    QuantizedEmbedding,
    ValidationError,
    _check_dim,
    _frozen,
    choose_scale,
    msb_nibble_values,
    quantize_values,
)

N_PLANES = 8
MSB_PLANES = 4
NORM_BITS = 32

BPIX_MAGIC = b"BPIX"
BPIX_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_NORM_DTYPE = np.dtype([("int8", "<u4"), ("int4", "<u4")])


class StoreFormatError(ValidationError):
    pass


class BadMagicError(StoreFormatError):
    pass


class VersionMismatchError(StoreFormatError):
    pass


class TruncatedFileError(StoreFormatError):
    pass


@dataclass
class AccessLedger:
    """Per-tier bit counters for one retrieval session.

    ``int4_docs`` / ``int8_docs`` count documents scored at each precision;
    the cost model derives drain and rerank cycles from them.
    """

    dram_bits_read: int = 0
    sram_bits_written: int = 0
    sram_bits_read: int = 0
    pe_bits_processed: int = 0
    simcalc_bits: int = 0
    rerank_bits: int = 0
    int4_docs: int = 0
    int8_docs: int = 0

    def charge(self, **deltas: int) -> None:
        for name, delta in deltas.items():
            if delta < 0:
                raise ValueError(f"ledger counter {name} cannot decrease")
            setattr(self, name, getattr(self, name) + int(delta))

    def stream_payload(self, bits: int) -> None:
        """DRAM -> dual-port SRAM buffer -> PE: every payload bit is written then read once."""
        self.charge(dram_bits_read=bits, sram_bits_written=bits, sram_bits_read=bits)

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def snapshot(self) -> "AccessLedger":
        return AccessLedger(**self.as_dict())

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def scaled(self, factor: int) -> "AccessLedger":
        return AccessLedger(**{k: v * factor for k, v in self.as_dict().items()})

    def __add__(self, other: "AccessLedger") -> "AccessLedger":
        if not isinstance(other, AccessLedger):
            return NotImplemented
        a, b = self.as_dict(), other.as_dict()
        return AccessLedger(**{k: a[k] + b[k] for k in a})


def plane_bytes(dim: int) -> int:
    return (dim + 7) // 8


def _to_planes(values: np.ndarray) -> np.ndarray:
    """(..., D) int8 -> (..., 8, ceil(D/8)) packed planes."""
    raw = np.ascontiguousarray(values, dtype=np.int8).view(np.uint8)
    bits = np.unpackbits(raw[..., None], axis=-1)  # (..., D, 8), bit 7 first
    return np.packbits(np.swapaxes(bits, -1, -2), axis=-1)


def _unpack(planes: np.ndarray, dim: int) -> np.ndarray:
    return np.unpackbits(planes, axis=-1)[..., :dim].astype(np.int64)


def decode_planes(planes: np.ndarray, dim: int, n_planes: int = N_PLANES) -> np.ndarray:
    """Signed integers held in the leading ``n_planes`` planes (8 -> INT8, 4 -> MSB nibble)."""
    if n_planes not in (N_PLANES, MSB_PLANES):
        raise ValueError(f"can only decode 4 or 8 planes, not {n_planes}")
    bits = np.unpackbits(planes[..., :n_planes, :], axis=-1)[..., :dim]
    # plane p carries bit 7-p; reassemble two's-complement bytes, nibbles sit in the top half
    raw = np.zeros(bits.shape[:-2] + (dim,), dtype=np.uint8)
    for p in range(n_planes):
        raw |= bits[..., p, :] << (7 - p)
    values = raw.view(np.int8)
    if n_planes == MSB_PLANES:
        values = values >> 4
    return values.astype(np.int64)


@dataclass(frozen=True, eq=False)
class BitPlanarBlock:
    planes: np.ndarray
    dim: int
    doc_id: int = 0

    def __eq__(self, other):
        if not isinstance(other, BitPlanarBlock):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.doc_id == other.doc_id
            and np.array_equal(self.planes, other.planes)
        )

    def plane_bits(self, p: int) -> np.ndarray:
        return _unpack(self.planes[p], self.dim)


def encode_block(q: QuantizedEmbedding, dim: int | None = None) -> BitPlanarBlock:
    if dim is not None and q.dim != dim:
        raise ValidationError(f"embedding dimension {q.dim} != store dimension {dim}")
    return BitPlanarBlock(_frozen(_to_planes(q.values)), q.dim, q.id)


def decode_msb4(block: BitPlanarBlock, ledger: AccessLedger | None = None) -> NibbleEmbedding:
    if ledger is not None:
        ledger.stream_payload(MSB_PLANES * block.dim)
    return NibbleEmbedding(decode_planes(block.planes, block.dim, MSB_PLANES), block.doc_id)


def decode_full(
    block: BitPlanarBlock, ledger: AccessLedger | None = None, scale: float = 1.0
) -> QuantizedEmbedding:
    if ledger is not None:
        ledger.stream_payload(N_PLANES * block.dim)
    return QuantizedEmbedding(decode_planes(block.planes, block.dim), scale, block.doc_id)


class BitPlanarStore:
    """Immutable collection of bit-planar blocks addressed by root address.

    The root address of a document is its block index; ``ids[addr]`` maps it
    back to the document id.
    """

    def __init__(self, planes: np.ndarray, norms: np.ndarray, ids: np.ndarray, dim: int,
                 scale: float | None = None):
        _check_dim(dim)
        planes = np.ascontiguousarray(planes, dtype=np.uint8)
        norms = np.ascontiguousarray(norms, dtype=np.int64)
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        n = len(ids)
        if planes.shape != (n, N_PLANES, plane_bytes(dim)) or norms.shape != (n, 2):
            raise ValidationError("planes, norms and ids disagree on document count")
        self._addr = {int(i): a for a, i in enumerate(ids)}
        if len(self._addr) != n:
            raise ValidationError("duplicate document ids")
        self.planes = _frozen(planes)
        self.norms = _frozen(norms)
        self.ids = _frozen(ids)
        self.dim = int(dim)
        self.scale = scale

    @classmethod
    def from_quantized(cls, values: np.ndarray, ids=None, scale: float | None = None):
        values = np.asarray(values)
        if values.ndim != 2:
            raise ValidationError("expected a 2-D array of INT8 vectors")
        if values.size and np.abs(values.astype(np.int64)).max() > 127:
            raise ValidationError("INT8 values must lie in [-127, 127]")
        values = values.astype(np.int8)
        n, dim = values.shape
        ids = np.arange(n) if ids is None else np.asarray(ids)
        wide = values.astype(np.int64)
        nib = msb_nibble_values(values).astype(np.int64)
        norms = np.stack([(wide * wide).sum(1), (nib * nib).sum(1)], axis=1).reshape(n, 2)
        return cls(_to_planes(values).reshape(n, N_PLANES, plane_bytes(dim)), norms, ids, dim, scale)

    @classmethod
    def from_blocks(cls, blocks, norm_records):
        blocks = list(blocks)
        if not blocks:
            raise ValidationError("store needs at least one block")
        dim = blocks[0].dim
        if any(b.dim != dim for b in blocks):
            raise ValidationError("blocks disagree on dimension")
        norms = np.array([[r.sq_norm_int8, r.sq_norm_int4] for r in norm_records], dtype=np.int64)
        return cls(np.stack([b.planes for b in blocks]), norms, [b.doc_id for b in blocks], dim)

    @property
    def count(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return self.count

    def root_address(self, doc_id: int) -> int:
        try:
            return self._addr[int(doc_id)]
        except KeyError:
            raise KeyError(f"unknown document id {doc_id}") from None

    def _check_addr(self, addr) -> None:
        addr = np.asarray(addr)
        if addr.size and (addr.min() < 0 or addr.max() >= self.count):
            raise IndexError(f"root address out of range for store of {self.count} documents")

    def block(self, addr: int) -> BitPlanarBlock:
        self._check_addr(addr)
        return BitPlanarBlock(self.planes[addr], self.dim, int(self.ids[addr]))

    def norm_record(self, addr: int) -> NormRecord:
        self._check_addr(addr)
        return NormRecord(int(self.ids[addr]), int(self.norms[addr, 0]), int(self.norms[addr, 1]))

    def read_norm(self, addr: int, which: str = "int8", ledger: AccessLedger | None = None) -> int:
        col = {"int8": 0, "int4": 1}[which]
        self._check_addr(addr)
        if ledger is not None:
            ledger.charge(dram_bits_read=NORM_BITS)
        return int(self.norms[addr, col])

    # Batch reads below meter exactly what the per-block calls would.

    def read_msb4(self, addrs, ledger: AccessLedger | None = None) -> np.ndarray:
        addrs = np.asarray(addrs, dtype=np.int64)
        self._check_addr(addrs)
        if ledger is not None:
            ledger.stream_payload(len(addrs) * MSB_PLANES * self.dim)
        return decode_planes(self.planes[addrs], self.dim, MSB_PLANES)

    def read_full(self, addrs, ledger: AccessLedger | None = None) -> np.ndarray:
        addrs = np.asarray(addrs, dtype=np.int64)
        self._check_addr(addrs)
        if ledger is not None:
            ledger.stream_payload(len(addrs) * N_PLANES * self.dim)
        return decode_planes(self.planes[addrs], self.dim)

    def read_norms(self, addrs, which: str = "int8", ledger: AccessLedger | None = None) -> np.ndarray:
        col = {"int8": 0, "int4": 1}[which]
        addrs = np.asarray(addrs, dtype=np.int64)
        self._check_addr(addrs)
        if ledger is not None:
            ledger.charge(dram_bits_read=NORM_BITS * len(addrs))
        return self.norms[addrs, col]

    def __eq__(self, other):
        if not isinstance(other, BitPlanarStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.planes, other.planes)
            and np.array_equal(self.norms, other.norms)
            and np.array_equal(self.ids, other.ids)
        )


def build_store(vectors: np.ndarray, ids=None, scale: float | None = None) -> BitPlanarStore:
    """Quantize float vectors with one shared scale and lay them out bit-planar."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if scale is None:
        scale = choose_scale(vectors)
    return BitPlanarStore.from_quantized(quantize_values(vectors, scale), ids, scale)


def save_store(store: BitPlanarStore, path) -> None:
    norms = np.empty(store.count, dtype=_NORM_DTYPE)
    norms["int8"] = store.norms[:, 0]
    norms["int4"] = store.norms[:, 1]
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(BPIX_MAGIC, BPIX_VERSION, store.dim, store.count))
        f.write(store.planes.tobytes())
        f.write(norms.tobytes())
        f.write(store.ids.astype("<u8").tobytes())
    os.replace(tmp, path)


def load_store(path) -> BitPlanarStore:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, dim, count = _HEADER.unpack_from(data)
    if magic != BPIX_MAGIC:
        raise BadMagicError(f"{path}: not a BPIX index (magic {magic!r})")
    if version != BPIX_VERSION:
        raise VersionMismatchError(f"{path}: index version {version}, expected {BPIX_VERSION}")
    if not 1 <= dim <= 4096:
        raise StoreFormatError(f"{path}: corrupt header (dim={dim})")
    pb = plane_bytes(dim)
    plane_size = count * N_PLANES * pb
    expected = _HEADER.size + plane_size + count * _NORM_DTYPE.itemsize + count * 8
    if len(data) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise StoreFormatError(f"{path}: {len(data) - expected} trailing bytes")
    off = _HEADER.size
    planes = np.frombuffer(data, np.uint8, plane_size, off).reshape(count, N_PLANES, pb)
    off += plane_size
    norms = np.frombuffer(data, _NORM_DTYPE, count, off)
    off += count * _NORM_DTYPE.itemsize
    ids = np.frombuffer(data, "<u8", count, off)
    norm_arr = np.stack([norms["int8"], norms["int4"]], axis=1).astype(np.int64).reshape(count, 2)
    return BitPlanarStore(planes.copy(), norm_arr, ids.astype(np.int64), dim)

"""Embedding vectors, symmetric INT8 quantization and MSB-nibble extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_DIM = 512
MAX_DIM = 4096
INT8_MAX = 127


class ValidationError(ValueError):
    """Raised when an embedding or parameter violates its preconditions."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _check_dim(n: int) -> None:
    if n < 1 or n > MAX_DIM:
        raise ValidationError(f"dimension {n} outside supported range 1..{MAX_DIM}")


@dataclass(frozen=True, eq=False)
class FloatEmbedding:
    values: np.ndarray
    id: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        _check_dim(v.size)
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"embedding {self.id} has non-finite values")
        if self.id < 0:
            raise ValidationError(f"negative id {self.id}")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "id", int(self.id))

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class QuantizedEmbedding:
    values: np.ndarray
    scale: float
    id: int = 0

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.size and np.abs(raw.astype(np.int64)).max() > INT8_MAX:
            raise ValidationError("INT8 values must lie in [-127, 127]")
        v = raw.astype(np.int8).ravel()
        _check_dim(v.size)
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValidationError(f"scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "id", int(self.id))

    @property
    def dim(self) -> int:
        return self.values.size

    def dequantize(self) -> np.ndarray:
        return self.values.astype(np.float64) * self.scale

    def __eq__(self, other):
        if not isinstance(other, QuantizedEmbedding):
            return NotImplemented
        return (
            self.id == other.id
            and self.scale == other.scale
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class NibbleEmbedding:
    values: np.ndarray
    id: int = 0

    def __post_init__(self):
        v = np.asarray(self.values).astype(np.int8).ravel()
        if v.size and (v.min() < -8 or v.max() > 7):
            raise ValidationError("nibble values must lie in [-8, 7]")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "id", int(self.id))

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, NibbleEmbedding):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class NormRecord:
    id: int
    sq_norm_int8: int
    sq_norm_int4: int


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_values(values: np.ndarray, scale: float) -> np.ndarray:
    """Array form of :func:`quantize`; works on any shape."""
    if not (scale > 0 and np.isfinite(scale)):
        raise ValidationError(f"scale must be positive and finite, got {scale}")
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("cannot quantize non-finite values")
    q = round_half_away(values / scale)
    return np.clip(q, -INT8_MAX, INT8_MAX).astype(np.int8)


def quantize(v: FloatEmbedding, scale: float) -> QuantizedEmbedding:
    return QuantizedEmbedding(quantize_values(v.values, scale), scale, v.id)


def choose_scale(corpus) -> float:
    """Shared corpus scale: largest absolute coordinate over all vectors / 127.

    ``corpus`` may be a sequence of :class:`FloatEmbedding` or a 2-D array.
    """
    if isinstance(corpus, np.ndarray):
        arr = corpus
    else:
        corpus = list(corpus)
        if not corpus:
            raise ValidationError("cannot choose a scale for an empty corpus")
        arr = np.stack([np.asarray(getattr(e, "values", e), dtype=np.float64) for e in corpus])
    if arr.size == 0:
        raise ValidationError("cannot choose a scale for an empty corpus")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("corpus contains non-finite values")
    peak = float(np.abs(arr).max())
    if peak == 0.0:
        raise ValidationError("all-zero corpus: quantization scale undefined")
    return peak / INT8_MAX


def query_scale(v: FloatEmbedding) -> float:
    """Per-query scale; cosine and MIPS rankings are invariant to it."""
    return choose_scale(v.values[None, :])


def msb_nibble_values(values: np.ndarray) -> np.ndarray:
    # arithmetic shift == floor(x / 16) == integer held in bit-planes 7..4
    return np.right_shift(np.asarray(values, dtype=np.int8), 4)


def low_nibble_values(values: np.ndarray) -> np.ndarray:
    return np.bitwise_and(np.asarray(values, dtype=np.int16), 0x0F).astype(np.int8)


def msb_nibble(q: QuantizedEmbedding) -> NibbleEmbedding:
    return NibbleEmbedding(msb_nibble_values(q.values), q.id)


def compute_norms(q: QuantizedEmbedding) -> NormRecord:
    v = q.values.astype(np.int64)
    n = msb_nibble_values(q.values).astype(np.int64)
    return NormRecord(q.id, int(np.dot(v, v)), int(np.dot(n, n)))

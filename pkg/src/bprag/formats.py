"""Embedding container files.

``BPRG`` layout (all integers little-endian)::

    offset  size  field
    0       4     magic  b"BPRG"
    4       2     version (u16, currently 1)
    6       4     dim (u32)
    10      8     count (u64)
    18      2     dtype tag (u16, 0 = float32)
    20      ...   count * dim float32 values, row-major

An optional sidecar ``<path>.ids`` holds one u64 id per row; without it ids
default to ``0..count-1``.  JSONL files carry one ``{"id": .., "values": [..]}``
object per line.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .embedding import FloatEmbedding, ValidationError, _check_dim

BPRG_MAGIC = b"BPRG"
BPRG_VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sHIQH")


class EmbeddingFileError(ValidationError):
    pass


def ids_sidecar(path) -> str:
    return os.fspath(path) + ".ids"


def write_bprg(path, vectors: np.ndarray, ids=None) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise EmbeddingFileError("expected a 2-D array of vectors")
    count, dim = vectors.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(BPRG_MAGIC, BPRG_VERSION, dim, count, DTYPE_F32))
        f.write(vectors.tobytes(order="C"))
    if ids is not None:
        ids = np.asarray(ids, dtype="<u8")
        if ids.shape != (count,):
            raise EmbeddingFileError("id list length must equal vector count")
        with open(ids_sidecar(path), "wb") as f:
            f.write(ids.tobytes())


def read_bprg(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise EmbeddingFileError(f"{path}: truncated header")
    magic, version, dim, count, dtype = _HEADER.unpack_from(data)
    if magic != BPRG_MAGIC:
        raise EmbeddingFileError(f"{path}: bad magic {magic!r}")
    if version != BPRG_VERSION:
        raise EmbeddingFileError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise EmbeddingFileError(f"{path}: unsupported dtype tag {dtype}")
    _check_dim(dim)
    expected = _HEADER.size + 4 * dim * count
    if len(data) != expected:
        raise EmbeddingFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    vectors = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    sidecar = ids_sidecar(path)
    if os.path.exists(sidecar):
        with open(sidecar, "rb") as f:
            ids = np.frombuffer(f.read(), dtype="<u8")
        if ids.size != count:
            raise EmbeddingFileError(f"{sidecar}: {ids.size} ids for {count} vectors")
    else:
        ids = np.arange(count, dtype=np.uint64)
    return vectors.astype(np.float64), ids.astype(np.int64)


def write_jsonl(path, vectors: np.ndarray, ids=None) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    if ids is None:
        ids = range(len(vectors))
    with open(path, "w") as f:
        for i, v in zip(ids, vectors):
            f.write(json.dumps({"id": int(i), "values": v.tolist()}) + "\n")


def read_jsonl(path) -> tuple[np.ndarray, np.ndarray]:
    rows, ids = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ids.append(int(obj["id"]))
                rows.append([float(x) for x in obj["values"]])
            except (ValueError, KeyError, TypeError) as exc:
                raise EmbeddingFileError(f"{path}:{lineno}: malformed record ({exc})") from None
    if not rows:
        raise EmbeddingFileError(f"{path}: no embeddings")
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise EmbeddingFileError(f"{path}: inconsistent dimensions {sorted(dims)}")
    return np.array(rows, dtype=np.float64), np.array(ids, dtype=np.int64)


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a BPRG or JSONL file (sniffed by magic bytes)."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head == BPRG_MAGIC:
        vectors, ids = read_bprg(path)
    else:
        vectors, ids = read_jsonl(path)
    if not np.all(np.isfinite(vectors)):
        raise EmbeddingFileError(f"{path}: non-finite values")
    if len(set(ids.tolist())) != len(ids):
        raise EmbeddingFileError(f"{path}: duplicate ids")
    if (ids < 0).any():
        raise EmbeddingFileError(f"{path}: negative ids")
    return vectors, ids


def load_float_embeddings(path) -> list[FloatEmbedding]:
    vectors, ids = read_embeddings(path)
    return [FloatEmbedding(v, int(i)) for v, i in zip(vectors, ids)]

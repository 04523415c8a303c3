import json
import struct

import numpy as np
import pytest

from bprag.formats import (
    EmbeddingFileError,
    ids_sidecar,
    read_bprg,
    read_embeddings,
    read_jsonl,
    write_bprg,
    write_jsonl,
)


def test_bprg_roundtrip(tmp_path, rng):
    vectors = rng.standard_normal((7, 16)).astype(np.float32)
    path = tmp_path / "c.bprg"
    write_bprg(path, vectors)
    got, ids = read_bprg(path)
    assert np.array_equal(got, vectors.astype(np.float64))
    assert ids.tolist() == list(range(7))


def test_bprg_header_layout(tmp_path):
    path = tmp_path / "c.bprg"
    write_bprg(path, np.ones((3, 5)))
    raw = path.read_bytes()
    assert raw[:4] == b"BPRG"
    assert struct.unpack_from("<HIQH", raw, 4) == (1, 5, 3, 0)
    assert len(raw) == 20 + 3 * 5 * 4
    assert struct.unpack_from("<f", raw, 20)[0] == 1.0


def test_bprg_sidecar_ids(tmp_path):
    path = tmp_path / "c.bprg"
    write_bprg(path, np.zeros((3, 4)) + 1, ids=[10, 20, 30])
    assert (tmp_path / "c.bprg.ids").stat().st_size == 24
    _, ids = read_bprg(path)
    assert ids.tolist() == [10, 20, 30]


def test_bprg_truncated(tmp_path):
    path = tmp_path / "c.bprg"
    write_bprg(path, np.ones((3, 5)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(EmbeddingFileError, match="expected"):
        read_bprg(path)


def test_bprg_bad_magic(tmp_path):
    path = tmp_path / "c.bprg"
    path.write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(EmbeddingFileError, match="magic"):
        read_bprg(path)


def test_jsonl_roundtrip_and_sniffing(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, np.array([[1.0, 2.0], [3.0, -4.0]]), ids=[5, 6])
    vectors, ids = read_embeddings(path)
    assert vectors.tolist() == [[1.0, 2.0], [3.0, -4.0]]
    assert ids.tolist() == [5, 6]


def test_jsonl_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"id": 0, "values": [1, 2]}) + "\n" + json.dumps({"id": 1, "values": [1]}) + "\n")
    with pytest.raises(EmbeddingFileError, match="inconsistent"):
        read_jsonl(path)
    path.write_text("{not json}\n")
    with pytest.raises(EmbeddingFileError, match=":1:"):
        read_jsonl(path)


def test_duplicate_ids_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    write_jsonl(path, np.ones((2, 3)), ids=[1, 1])
    with pytest.raises(EmbeddingFileError, match="duplicate"):
        read_embeddings(path)


def test_sidecar_name():
    assert ids_sidecar("a/b.bprg") == "a/b.bprg.ids"

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genmetrics.embed_io import (
    EmbeddingError,
    EmbeddingSet,
    concat,
    load_embeddings,
    prefix,
    save_embeddings,
)


@pytest.fixture
def gauss():
    return EmbeddingSet(np.random.default_rng(0).standard_normal((100, 8)), label="real")


def test_npy_round_trip_small(tmp_path):
    path = tmp_path / "x.npy"
    emb = EmbeddingSet(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]))
    save_embeddings(emb, path)
    back = load_embeddings(path, "npy")
    assert back.shape == (3, 2)
    assert back.data.tolist() == [[0, 0], [1, 0], [3, 0]]
    assert back.dtype_origin == 64


def test_numpy_written_npy_is_readable(tmp_path):
    path = tmp_path / "x.npy"
    np.save(path, np.arange(6, dtype=np.float32).reshape(3, 2))
    emb = load_embeddings(path)
    assert emb.dtype_origin == 32
    assert emb.data.dtype == np.float64
    assert emb.data.tolist() == [[0, 1], [2, 3], [4, 5]]


@pytest.mark.parametrize("fmt", ["npy", "rawbin"])
def test_round_trip_bitwise(tmp_path, gauss, fmt):
    path = tmp_path / f"x.{fmt}"
    save_embeddings(gauss, path, fmt)
    back = load_embeddings(path, fmt, label="real")
    assert back.data.tobytes() == gauss.data.tobytes()
    assert back == gauss


@pytest.mark.parametrize("fmt", ["npy", "rawbin"])
def test_round_trip_scalar(tmp_path, fmt):
    emb = EmbeddingSet(np.array([[0.0]]))
    save_embeddings(emb, tmp_path / "z", fmt)
    assert load_embeddings(tmp_path / "z", fmt) == emb


def test_npy_magic(tmp_path, gauss):
    save_embeddings(gauss, tmp_path / "x.npy")
    raw = (tmp_path / "x.npy").read_bytes()
    assert raw[:6] == b"\x93NUMPY"
    assert raw[6:8] == b"\x01\x00"


def test_rawbin_header_layout(tmp_path, gauss):
    save_embeddings(gauss, tmp_path / "x.bin", "rawbin")
    raw = (tmp_path / "x.bin").read_bytes()
    assert struct.unpack("<4sIII", raw[:16]) == (b"GMEB", 100, 8, 8)
    assert len(raw) == 16 + 100 * 8 * 8


def test_rawbin_float32(tmp_path, gauss):
    save_embeddings(gauss, tmp_path / "x.bin", "rawbin", dtype_bits=32)
    back = load_embeddings(tmp_path / "x.bin", "rawbin")
    assert back.dtype_origin == 32
    np.testing.assert_array_equal(back.data, gauss.data.astype(np.float32).astype(np.float64))


def test_rawbin_large_seeded(tmp_path):
    data = np.random.default_rng(1234).standard_normal((10000, 64))
    save_embeddings(EmbeddingSet(data), tmp_path / "big.bin", "rawbin")
    back = load_embeddings(tmp_path / "big.bin", "rawbin")
    assert back.shape == (10000, 64)
    assert back.data.tobytes() == data.tobytes()


def test_nan_row_reported(tmp_path):
    data = np.zeros((10, 3))
    data[7, 1] = np.nan
    np.save(tmp_path / "nan.npy", data)
    with pytest.raises(EmbeddingError, match="non-finite value at row 7"):
        load_embeddings(tmp_path / "nan.npy")


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 20),
    d=st.integers(1, 6),
    data=st.data(),
    bad=st.sampled_from([np.nan, np.inf, -np.inf]),
)
def test_any_nonfinite_rejected(n, d, data, bad):
    row = data.draw(st.integers(0, n - 1))
    col = data.draw(st.integers(0, d - 1))
    arr = np.ones((n, d))
    arr[row, col] = bad
    with pytest.raises(EmbeddingError, match=f"non-finite value at row {row}$"):
        EmbeddingSet(arr)


@pytest.mark.parametrize(
    "payload, message",
    [
        (np.zeros(4), "2-D"),
        (np.zeros((2, 2, 2)), "2-D"),
        (np.zeros((2, 2), dtype=np.int64), "floating"),
        (np.zeros((2, 2), dtype=np.float16), "unsupported float dtype"),
        (np.asfortranarray(np.zeros((3, 2))), "fortran_order"),
        (np.zeros((2, 2), dtype=">f8"), "unsupported float dtype"),
    ],
)
def test_npy_rejects(tmp_path, payload, message):
    np.save(tmp_path / "bad.npy", payload)
    with pytest.raises(EmbeddingError, match=message):
        load_embeddings(tmp_path / "bad.npy")


def test_npy_garbage_header(tmp_path):
    (tmp_path / "bad.npy").write_bytes(b"not an npy file at all")
    with pytest.raises(EmbeddingError, match="malformed header"):
        load_embeddings(tmp_path / "bad.npy")


def test_npy_version_2_rejected(tmp_path):
    from numpy.lib import format as npformat

    with open(tmp_path / "v2.npy", "wb") as fh:
        npformat.write_array(fh, np.zeros((2, 2)), version=(2, 0))
    with pytest.raises(EmbeddingError, match="version"):
        load_embeddings(tmp_path / "v2.npy")


def test_truncated_payload(tmp_path, gauss):
    save_embeddings(gauss, tmp_path / "x.bin", "rawbin")
    raw = (tmp_path / "x.bin").read_bytes()
    (tmp_path / "x.bin").write_bytes(raw[:-8])
    with pytest.raises(EmbeddingError, match="truncated"):
        load_embeddings(tmp_path / "x.bin", "rawbin")


@pytest.mark.parametrize(
    "head",
    [b"GMEX" + struct.pack("<III", 1, 1, 8), b"GMEB" + struct.pack("<III", 1, 1, 3), b"GMEB"],
)
def test_rawbin_bad_header(tmp_path, head):
    (tmp_path / "x.bin").write_bytes(head + b"\0" * 8)
    with pytest.raises(EmbeddingError, match="malformed header"):
        load_embeddings(tmp_path / "x.bin", "rawbin")


def test_rows_keep_file_order(tmp_path):
    data = np.arange(40, dtype=np.float64).reshape(10, 4)
    np.save(tmp_path / "x.npy", data)
    emb = load_embeddings(tmp_path / "x.npy")
    for i in range(10):
        assert emb.data[i].tolist() == data[i].tolist()


def test_embedding_set_is_immutable(gauss):
    with pytest.raises(ValueError):
        gauss.data[0, 0] = 1.0


def test_invalid_shapes():
    with pytest.raises(EmbeddingError):
        EmbeddingSet(np.zeros((0, 3)))
    with pytest.raises(EmbeddingError):
        EmbeddingSet(np.zeros((3, 0)))


def test_concat_order():
    a = EmbeddingSet(np.arange(6.0).reshape(2, 3))
    b = EmbeddingSet(np.full((1, 3), 9.0))
    c = concat(a, b)
    assert c.shape == (3, 3)
    assert c.data.tolist() == [[0, 1, 2], [3, 4, 5], [9, 9, 9]]


def test_concat_dim_mismatch():
    with pytest.raises(EmbeddingError, match="dimension mismatch"):
        concat(EmbeddingSet(np.zeros((2, 3))), EmbeddingSet(np.zeros((2, 4))))


def test_concat_empty_rejected():
    a = EmbeddingSet(np.zeros((2, 3)))
    with pytest.raises(EmbeddingError):
        concat(a, EmbeddingSet(np.zeros((0, 3))))


def test_concat_outlier_row():
    rng = np.random.default_rng(5)
    base = EmbeddingSet(rng.standard_normal((10000, 64)))
    outlier = EmbeddingSet(-2.0 + rng.standard_normal((1, 64)))
    joined = concat(base, outlier)
    assert joined.shape == (10001, 64)
    assert joined.data[-1].tobytes() == outlier.data[0].tobytes()
    assert joined.data[:10000].tobytes() == base.data.tobytes()


def test_prefix():
    emb = EmbeddingSet(np.arange(10.0).reshape(5, 2))
    assert prefix(emb, 2).data.tolist() == [[0, 1], [2, 3]]
    assert prefix(emb, 50) is emb

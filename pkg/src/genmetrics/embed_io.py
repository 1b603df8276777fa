"""Loading, saving and validating embedding matrices.

Two on-disk formats are supported:

* ``npy``: NumPy format version 1.0, C order, 2-D, little-endian ``f4``/``f8``.
* ``rawbin``: a 16-byte little-endian header ``b"GMEB"``, ``u32 N``, ``u32 D``,
  ``u32 dtype`` (4 = float32, 8 = float64) followed by the row-major payload.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib import format as npformat

__all__ = [
    "EmbeddingError",
    "EmbeddingSet",
    "as_matrix",
    "concat",
    "load_embeddings",
    "prefix",
    "save_embeddings",
]

FORMATS = ("npy", "rawbin")

RAWBIN_MAGIC = b"GMEB"
_RAWBIN_HEADER = struct.Struct("<4sIII")
_RAWBIN_CODES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}
_NPY_DTYPES = {"<f4": 32, "<f8": 64}


class EmbeddingError(ValueError):
    """Raised for malformed embedding files or invalid matrices."""


def _check_finite(data: np.ndarray) -> None:
    bad = ~np.isfinite(data)
    if bad.any():
        row = int(np.flatnonzero(bad.any(axis=1))[0])
        raise EmbeddingError(f"non-finite value at row {row}")


@dataclass(frozen=True)
class EmbeddingSet:
    """An immutable N x D matrix of sample features.

    ``data`` is always stored as a read-only C-contiguous float64 array;
    ``dtype_origin`` records whether the source was 32- or 64-bit.
    """

    data: np.ndarray
    label: str = ""
    dtype_origin: int = 64
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise EmbeddingError(f"embeddings must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise EmbeddingError(f"embeddings need N >= 1 and D >= 1, got shape {arr.shape}")
        if arr.dtype.kind != "f":
            raise EmbeddingError(f"embeddings must be floating point, got dtype {arr.dtype}")
        if self.dtype_origin not in (32, 64):
            raise EmbeddingError(f"dtype_origin must be 32 or 64, got {self.dtype_origin}")
        arr = np.array(arr, dtype=np.float64, order="C", copy=True)
        _check_finite(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.label == other.label
            and self.dtype_origin == other.dtype_origin
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


def as_matrix(x) -> np.ndarray:
    """Return the float64 matrix behind an EmbeddingSet or array-like, validated."""
    if isinstance(x, EmbeddingSet):
        return x.data
    return EmbeddingSet(np.asarray(x, dtype=np.float64)).data


def _guess_format(path) -> str:
    return "npy" if str(path).endswith(".npy") else "rawbin"


def _read_npy(fh) -> tuple[np.ndarray, int]:
    try:
        version = npformat.read_magic(fh)
    except ValueError as exc:
        raise EmbeddingError(f"malformed header: {exc}") from None
    if version != (1, 0):
        raise EmbeddingError(f"malformed header: unsupported npy version {version}")
    try:
        shape, fortran_order, dtype = npformat.read_array_header_1_0(fh)
    except ValueError as exc:
        raise EmbeddingError(f"malformed header: {exc}") from None
    if fortran_order:
        raise EmbeddingError("malformed header: fortran_order arrays are not supported")
    if len(shape) != 2:
        raise EmbeddingError(f"embeddings must be 2-D, got shape {shape}")
    if dtype.kind != "f":
        raise EmbeddingError(f"embeddings must be floating point, got dtype {dtype.str}")
    if dtype.str not in _NPY_DTYPES:
        raise EmbeddingError(f"unsupported float dtype {dtype.str}; expected <f4 or <f8")
    count = shape[0] * shape[1]
    payload = fh.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise EmbeddingError(
            f"truncated payload: expected {count * dtype.itemsize} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape), _NPY_DTYPES[dtype.str]


def _read_rawbin(fh) -> tuple[np.ndarray, int]:
    head = fh.read(_RAWBIN_HEADER.size)
    if len(head) != _RAWBIN_HEADER.size:
        raise EmbeddingError("malformed header: file shorter than 16 bytes")
    magic, n, d, code = _RAWBIN_HEADER.unpack(head)
    if magic != RAWBIN_MAGIC:
        raise EmbeddingError(f"malformed header: bad magic {magic!r}")
    if code not in _RAWBIN_CODES:
        raise EmbeddingError(f"malformed header: unknown dtype code {code}")
    dtype = _RAWBIN_CODES[code]
    payload = fh.read(n * d * dtype.itemsize)
    if len(payload) != n * d * dtype.itemsize:
        raise EmbeddingError(
            f"truncated payload: expected {n * d * dtype.itemsize} bytes, got {len(payload)}"
        )
    if fh.read(1):
        raise EmbeddingError("trailing bytes after payload")
    return np.frombuffer(payload, dtype=dtype).reshape(n, d), 8 * dtype.itemsize


def load_embeddings(path, format: str | None = None, label: str = "") -> EmbeddingSet:
    """Read an embedding matrix from ``path``.

    ``format`` is ``"npy"`` or ``"rawbin"``; when omitted it is inferred from the
    file extension (``.npy`` means npy, anything else rawbin).
    """
    fmt = format or _guess_format(path)
    if fmt not in FORMATS:
        raise EmbeddingError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    reader = _read_npy if fmt == "npy" else _read_rawbin
    with open(path, "rb") as fh:
        data, bits = reader(fh)
    return EmbeddingSet(data, label=label, dtype_origin=bits, source=os.fspath(path))


def save_embeddings(emb: EmbeddingSet, path, format: str | None = None, dtype_bits: int = 64) -> None:
    """Write ``emb`` to ``path``; 64-bit output round-trips bitwise."""
    fmt = format or _guess_format(path)
    if fmt not in FORMATS:
        raise EmbeddingError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if dtype_bits not in (32, 64):
        raise EmbeddingError(f"dtype_bits must be 32 or 64, got {dtype_bits}")
    dtype = np.dtype("<f8" if dtype_bits == 64 else "<f4")
    payload = np.ascontiguousarray(emb.data, dtype=dtype)
    with open(path, "wb") as fh:
        if fmt == "npy":
            npformat.write_array_header_1_0(
                fh, {"descr": dtype.str, "fortran_order": False, "shape": payload.shape}
            )
        else:
            fh.write(_RAWBIN_HEADER.pack(RAWBIN_MAGIC, emb.n, emb.dim, dtype.itemsize))
        fh.write(payload.tobytes(order="C"))


def concat(a: EmbeddingSet, b: EmbeddingSet, label: str | None = None) -> EmbeddingSet:
    """Stack the rows of ``a`` then ``b``."""
    if a.dim != b.dim:
        raise EmbeddingError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return EmbeddingSet(
        np.vstack([a.data, b.data]),
        label=a.label if label is None else label,
        dtype_origin=min(a.dtype_origin, b.dtype_origin),
    )


def prefix(emb: EmbeddingSet, n: int) -> EmbeddingSet:
    """Deterministic subsample: the first ``n`` rows (all rows if ``n >= N``)."""
    if n < 1:
        raise EmbeddingError(f"prefix length must be >= 1, got {n}")
    if n >= emb.n:
        return emb
    return EmbeddingSet(emb.data[:n], label=emb.label, dtype_origin=emb.dtype_origin)

"""Versioned binary container for datasets and model checkpoints.

Layout: 4-byte magic b"LCFC", little-endian uint16 format version, two
reserved zero bytes, little-endian uint64 header length, UTF-8 JSON header,
then the raw array payload. The header records a kind tag, caller metadata,
and an array directory (name, shape, dtype, offset into the payload). Arrays
are stored as contiguous little-endian bytes, so a write/read cycle is
bit-exact and files are byte-identical for identical inputs: keys are sorted
and nothing time- or host-dependent is ever written.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError, UnsupportedVersionError

MAGIC = b"LCFC"
FORMAT_VERSION = 1

# On-disk dtype codes. Everything numeric is float64; split/attribute flags
# ride as signed bytes.
_DTYPES = {"<f8": np.dtype("<f8"), "|i1": np.dtype("|i1")}


def _dtype_code(arr):
    if arr.dtype == np.float64:
        return "<f8"
    if arr.dtype == np.int8:
        return "|i1"
    raise FormatError(f"unsupported array dtype {arr.dtype}")


def write_container(path, kind, meta, arrays):
    """Write named arrays plus JSON metadata to path.

    arrays is an ordered mapping name -> ndarray (float64 or int8). meta
    must be JSON-serializable. Returns the number of bytes written.
    """
    directory = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        code = _dtype_code(arr)
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        directory.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": code,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": directory},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    blob = b"".join(
        [MAGIC, struct.pack("<H", FORMAT_VERSION), b"\x00\x00", struct.pack("<Q", len(header)), header]
        + chunks
    )
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_container(path, expected_kind=None):
    """Read a container back as (kind, meta, arrays dict).

    Truncated or malformed files raise FormatError with the byte offset of
    the first problem; a newer format version raises UnsupportedVersionError.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError("bad magic, not a container file", offset=0)
    if len(blob) < 16:
        raise FormatError("truncated before header length", offset=len(blob))
    version = struct.unpack_from("<H", blob, 4)[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"format version {version} not supported (expected {FORMAT_VERSION})", offset=4
        )
    # Preamble layout: magic 0:4, version 4:6, reserved 6:8, header length 8:16.
    header_len = struct.unpack_from("<Q", blob, 8)[0]
    payload_start = 16 + header_len
    if len(blob) < payload_start:
        raise FormatError("truncated inside header", offset=len(blob))
    try:
        header = json.loads(blob[16:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}", offset=16) from exc
    for key in ("kind", "meta", "arrays"):
        if key not in header:
            raise FormatError(f"header missing {key!r} field", offset=16)
    if expected_kind is not None and header["kind"] != expected_kind:
        raise FormatError(
            f"container holds {header['kind']!r}, expected {expected_kind!r}", offset=16
        )
    arrays = {}
    for entry in header["arrays"]:
        code = entry["dtype"]
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code!r}", offset=16)
        start = payload_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise FormatError(
                f"array {entry['name']!r} extends past end of file", offset=len(blob)
            )
        arr = np.frombuffer(blob[start:end], dtype=_DTYPES[code]).reshape(entry["shape"])
        # Copy so callers get writable arrays detached from the file blob.
        arrays[entry["name"]] = arr.copy()
    return header["kind"], header["meta"], arrays

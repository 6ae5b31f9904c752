"""Versioned binary container for models and dataset caches.

Layout: 4 magic bytes, uint32 little-endian format version, uint64
little-endian header length, a UTF-8 JSON header (sorted keys), then the
raw bytes of each array in the order listed under ``header["arrays"]``.
Arrays are stored C-contiguous in their native dtype, so a write/read
round trip is bit-exact. The header carries only JSON-serializable
metadata; anything numeric of consequence travels as an array.

No timestamps are written anywhere: identical inputs produce identical
files byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CacheError

_HEADER_FIXED = 16  # magic + version + header length


def write_container(path, magic: bytes, version: int, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = dict(meta)
    header["arrays"] = entries
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(int(version).to_bytes(4, "little"))
        fh.write(len(payload).to_bytes(8, "little"))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def read_container(path, magic: bytes, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CacheError(f"cannot read container {path}: {exc}") from exc
    if len(raw) < _HEADER_FIXED or raw[:4] != magic:
        raise CacheError(f"{path} is not a {magic.decode('ascii', 'replace')} container")
    found = int.from_bytes(raw[4:8], "little")
    if found != version:
        raise CacheError(
            f"{path} has format version {found}, expected {version}; rebuild the file"
        )
    hlen = int.from_bytes(raw[8:16], "little")
    end = _HEADER_FIXED + hlen
    if end > len(raw):
        raise CacheError(f"{path} is truncated: header claims {hlen} bytes")
    try:
        header = json.loads(raw[_HEADER_FIXED:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheError(f"{path} has a corrupted header: {exc}") from exc
    arrays = {}
    offset = end
    for entry in header.pop("arrays", []):
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        if offset + nbytes > len(raw):
            raise CacheError(f"{path} is truncated in array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(
            raw[offset:offset + nbytes], dtype=dtype
        ).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CacheError(f"{path} has {len(raw) - offset} trailing bytes")
    return header, arrays

"""Versioned on-disk container for named arrays plus JSON metadata.

Layout: magic, format version, a JSON manifest (tensor names, dtypes,
shapes, offsets, payload checksum, user metadata), then the raw
little-endian payload.  The checksum is verified on load.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import CheckpointError

_MAGIC = b"MLAB"
_VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        blob = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str.lstrip("<>=|"),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    manifest = {
        "tensors": entries,
        "checksum": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not a tensor container")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    try:
        manifest = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest") from exc
    payload = raw[16 + header_len :]
    if hashlib.sha256(payload).hexdigest() != manifest["checksum"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    tensors = {}
    for entry in manifest["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        arr = np.frombuffer(payload[start : start + n], dtype=dtype)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(
            dtype.newbyteorder("="), copy=True
        )
    return tensors, manifest.get("meta", {})

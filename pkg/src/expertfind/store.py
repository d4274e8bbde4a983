"""Byte-stable binary container for named numpy arrays plus JSON metadata.

Layout: ``MAGIC`` | u32 format version | u64 header length | JSON header |
raw little-endian array bytes in header order. No timestamps are written, so
identical inputs give identical files.
"""
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EXFD"
VERSION = 1


def write_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def read_arrays(path) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not an expertfind array file")
    version, hlen = struct.unpack("<IQ", data[4:16])
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    header = json.loads(data[16:16 + hlen])
    base = 16 + hlen
    arrays = {}
    for e in header["arrays"]:
        start = base + e["offset"]
        buf = data[start:start + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return arrays, header["meta"]

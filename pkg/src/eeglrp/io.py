"""Versioned binary container shared by checkpoints, recordings and attributions.

Layout::

    8 bytes   magic  b"EEGLRP\\x00\\x01"
    4 bytes   little-endian uint32, length H of the header
    H bytes   UTF-8 JSON header: {"format_version", "kind", "meta", "tensors"}
    ...       raw tensor block, each tensor little-endian at its recorded offset

``tensors`` is an ordered list of ``{"name", "dtype", "shape", "offset",
"nbytes"}`` entries; ``dtype`` is ``"<f8"`` or ``"<f4"``. Headers are written
with sorted keys, so identical content gives identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"EEGLRP\x00\x01"
FORMAT_VERSION = 1
_DTYPES = {"<f8", "<f4"}


class ContainerError(ValueError):
    pass


def write_container(
    path: str | Path,
    kind: str,
    meta: Mapping[str, Any],
    tensors: Mapping[str, np.ndarray],
    dtype: str = "<f8",
) -> None:
    if dtype not in _DTYPES:
        raise ContainerError(f"unsupported dtype {dtype!r}")
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        entries.append(
            {"name": name, "dtype": dtype, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    header = {"format_version": FORMAT_VERSION, "kind": kind, "meta": dict(meta), "tensors": entries}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for raw in blobs:
            fh.write(raw)


def read_container(path: str | Path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Return ``(meta, tensors)``; tensors come back as float64 arrays."""
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: not an eeglrp container")
    (hlen,) = struct.unpack("<I", buf[len(MAGIC) : len(MAGIC) + 4])
    start = len(MAGIC) + 4
    header = json.loads(buf[start : start + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported format version {header.get('format_version')}")
    if kind is not None and header.get("kind") != kind:
        raise ContainerError(f"{path}: expected a {kind!r} container, found {header.get('kind')!r}")
    base = start + hlen
    tensors: dict[str, np.ndarray] = {}
    for e in header["tensors"]:
        if e["dtype"] not in _DTYPES:
            raise ContainerError(f"{path}: unsupported dtype {e['dtype']!r}")
        lo = base + e["offset"]
        arr = np.frombuffer(buf[lo : lo + e["nbytes"]], dtype=e["dtype"]).reshape(e["shape"])
        tensors[e["name"]] = arr.astype(np.float64)
    return header["meta"], tensors

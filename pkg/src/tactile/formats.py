"""On-disk formats: height maps, lookup tables, previews, CSV reports and JSON lines.

Binary formats are little-endian with a 4-byte magic and a version number.
FORMATS.md in the repository root documents every layout.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .calib import LookupTable
from .errors import InvalidInputError
from .recon import HeightMap

HEIGHT_MAGIC = b"THMP"
HEIGHT_VERSION = 1
_HEIGHT_HEADER = struct.Struct("<4sHHIIf")  # magic, version, flags, width, height, pixel_scale
HAS_VALID_MASK = 1

LOOKUP_MAGIC = b"TLUT"
LOOKUP_VERSION = 1
_LOOKUP_HEADER = struct.Struct("<4sHHII")  # magic, version, bins, n_presses, n_cells
_LOOKUP_RECORD = np.dtype([("key", "<u4"), ("count", "<u4"), ("n_sources", "<u4"), ("gx", "<f4"), ("gy", "<f4")])


def _read_exact(path) -> bytes:
    return Path(path).read_bytes()


# --------------------------------------------------------------------------- height maps

def height_map_bytes(hm: HeightMap) -> bytes:
    h, w = hm.z.shape
    flags = HAS_VALID_MASK if hm.valid is not None else 0
    out = [_HEIGHT_HEADER.pack(HEIGHT_MAGIC, HEIGHT_VERSION, flags, w, h, hm.pixel_scale),
           np.ascontiguousarray(hm.z, dtype="<f4").tobytes()]
    if hm.valid is not None:
        out.append(np.ascontiguousarray(hm.valid, dtype=np.uint8).tobytes())
    return b"".join(out)


def write_height_map(hm: HeightMap, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(height_map_bytes(hm))


def read_height_map(path) -> HeightMap:
    data = _read_exact(path)
    if len(data) < _HEIGHT_HEADER.size:
        raise InvalidInputError(f"{path}: truncated height-map header")
    magic, version, flags, w, h, scale = _HEIGHT_HEADER.unpack_from(data)
    if magic != HEIGHT_MAGIC:
        raise InvalidInputError(f"{path}: not a height-map file")
    if version != HEIGHT_VERSION:
        raise InvalidInputError(f"{path}: unsupported height-map version {version}")
    n = w * h
    off = _HEIGHT_HEADER.size
    need = off + 4 * n + (n if flags & HAS_VALID_MASK else 0)
    if len(data) != need:
        raise InvalidInputError(f"{path}: expected {need} bytes, found {len(data)}")
    z = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64).reshape(h, w)
    valid = None
    if flags & HAS_VALID_MASK:
        valid = np.frombuffer(data, dtype=np.uint8, count=n, offset=off + 4 * n).reshape(h, w).astype(bool)
    return HeightMap(z, float(scale), valid)


def write_height_preview(hm: HeightMap, path) -> None:
    """16-bit gray PNG; 0 is the lowest and 65535 the highest point."""
    from PIL import Image

    z = np.asarray(hm.z, dtype=np.float64)
    span = float(z.max() - z.min())
    scaled = np.zeros_like(z) if span <= 0 else (z - z.min()) / span
    arr = np.rint(scaled * 65535.0).astype(np.uint16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


# --------------------------------------------------------------------------- lookup tables

def lookup_bytes(table: LookupTable) -> bytes:
    if table.bins > 0xFFFF or table.bins ** 3 > 0xFFFFFFFF:
        raise InvalidInputError(f"bin count {table.bins} does not fit the lookup file format")
    rec = np.zeros(len(table), dtype=_LOOKUP_RECORD)
    rec["key"] = table.keys
    rec["count"] = table.counts
    rec["n_sources"] = table.n_sources
    rec["gx"] = table.grad[:, 0]
    rec["gy"] = table.grad[:, 1]
    return _LOOKUP_HEADER.pack(LOOKUP_MAGIC, LOOKUP_VERSION, table.bins, table.n_presses, len(table)) + rec.tobytes()


def write_lookup(table: LookupTable, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(lookup_bytes(table))


def read_lookup(path) -> LookupTable:
    data = _read_exact(path)
    if len(data) < _LOOKUP_HEADER.size:
        raise InvalidInputError(f"{path}: truncated lookup header")
    magic, version, bins, n_presses, n_cells = _LOOKUP_HEADER.unpack_from(data)
    if magic != LOOKUP_MAGIC:
        raise InvalidInputError(f"{path}: not a lookup-table file")
    if version != LOOKUP_VERSION:
        raise InvalidInputError(f"{path}: unsupported lookup version {version}")
    need = _LOOKUP_HEADER.size + n_cells * _LOOKUP_RECORD.itemsize
    if len(data) != need:
        raise InvalidInputError(f"{path}: expected {need} bytes, found {len(data)}")
    rec = np.frombuffer(data, dtype=_LOOKUP_RECORD, count=n_cells, offset=_LOOKUP_HEADER.size)
    if np.any(rec["key"] >= bins ** 3):
        raise InvalidInputError(f"{path}: cell key out of range for {bins} bins")
    grad = np.stack([rec["gx"], rec["gy"]], axis=1).astype(np.float64)
    return LookupTable(int(bins), rec["key"].astype(np.int64), grad, rec["count"].astype(np.int64),
                       rec["n_sources"].astype(np.int64), int(n_presses))


def lookup_json(table: LookupTable) -> str:
    cells = table.cell_coords()
    doc = {"format": "tactile-lookup", "version": LOOKUP_VERSION, "bins_per_channel": table.bins,
           "n_presses": table.n_presses, "delta_range": [-1.0, 1.0],
           "cells": [{"cell": [int(c) for c in cell], "count": int(n), "n_sources": int(s),
                      "gx": float(np.float32(g[0])), "gy": float(np.float32(g[1]))}
                     for cell, n, s, g in zip(cells, table.counts, table.n_sources, table.grad)]}
    return json.dumps(doc, separators=(",", ":")) + "\n"


# --------------------------------------------------------------------------- text outputs

def dumps_json(obj) -> str:
    """Pretty JSON with a trailing newline; key order is the insertion order of ``obj``."""
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_json(obj))


def write_jsonl(records: Iterable[dict], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, separators=(",", ":"), allow_nan=False))
            fh.write("\n")


def read_jsonl(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def fmt_float(x: Optional[float], digits: int = 6) -> str:
    if x is None or not np.isfinite(x):
        return "nan"
    return f"{float(x):.{digits}f}"


def write_csv(header: Sequence[str], rows: Iterable[Sequence], path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(v) if isinstance(v, float) else v for v in row])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

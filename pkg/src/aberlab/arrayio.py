"""On-disk formats: raw little-endian float32 blobs with JSON sidecars.

A stored object is a pair of files sharing a stem: <stem>.bin holds one or
more named arrays back to back (row major, little endian float32) and
<stem>.json describes shapes, axis order, units and provenance. Grayscale
images use 8-bit binary portable graymaps.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

FORMAT_VERSION = 1


def save_arrays(stem, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays as one float32 blob plus a JSON sidecar."""
    stem = Path(stem)
    index = []
    with open(stem.with_suffix(".bin"), "wb") as f:
        for name, arr in arrays.items():
            arr32 = np.ascontiguousarray(arr, dtype="<f4")
            index.append({"name": name, "shape": list(arr32.shape)})
            f.write(arr32.tobytes())
    sidecar = {
        "format_version": FORMAT_VERSION,
        "dtype": "<f4",
        "order": "C",
        "arrays": index,
    }
    if meta:
        sidecar["meta"] = meta
    with open(stem.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def load_arrays(stem) -> tuple[dict[str, np.ndarray], dict]:
    """Read back a blob written by save_arrays; arrays come out as float64."""
    stem = Path(stem)
    with open(stem.with_suffix(".json")) as f:
        sidecar = json.load(f)
    if sidecar.get("format_version") != FORMAT_VERSION:
        raise ValidationError("unsupported format version")
    arrays = {}
    raw = np.fromfile(stem.with_suffix(".bin"), dtype="<f4")
    offset = 0
    for entry in sidecar["arrays"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = (
            raw[offset : offset + size].astype(float).reshape(entry["shape"])
        )
        offset += size
    if offset != raw.size:
        raise ValidationError("blob size does not match the sidecar")
    return arrays, sidecar.get("meta", {})


def write_pgm(path, values: np.ndarray) -> None:
    """Write a 2-D uint8 array as a binary portable graymap (P5)."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValidationError("PGM image must be 2-D")
    values = np.clip(values, 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode())
        f.write(values.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit portable graymap (P5 or P2) into floats in [0, 1]."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if maxval > 255:
        raise ValidationError("only 8-bit graymaps are supported")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    elif magic == b"P2":
        pixels = np.array(data[pos:].split()[: width * height], dtype=np.uint8)
    else:
        raise ValidationError(f"not a portable graymap: {magic!r}")
    return pixels.reshape(height, width).astype(float) / maxval

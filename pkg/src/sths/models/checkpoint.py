"""Model checkpoints: a JSON header followed by one float64 blob.

File layout: 8-byte little-endian header length, UTF-8 JSON header, then the
concatenated arrays in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from sths.models.embedding import FittedEmbedding
from sths.models.generative import FittedGenerative

FORMAT_VERSION = 1
_KINDS = {"embedding": FittedEmbedding, "generative": FittedGenerative}


def save_model(model, path) -> Path:
    header, arrays = model.state()
    entries, offset, blobs = [], 0, []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.nbytes
        blobs.append(a.tobytes())
    header = {**header, "format_version": FORMAT_VERSION, "arrays": entries}
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)
    return path


def load_model(path):
    data = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", data[:8])
    header = json.loads(data[8 : 8 + n].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
    body = data[8 + n :]
    arrays = {}
    for e in header["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arrays[e["name"]] = np.frombuffer(body, dtype="<f8", count=count, offset=e["offset"]).reshape(e["shape"]).copy()
    return _KINDS[header["kind"]].from_state(header, arrays)

"""Self-describing checkpoint container and post-training quantization.

File layout: magic, 8-byte little-endian header length, JSON header, raw
parameter/buffer payload. The header carries the graph description, a
precision tag, and per-array (name, shape, dtype, offset) entries; arrays are
stored C-ordered little-endian, so a checkpoint is reconstructable without
any code-side shape knowledge.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .graph import LayerGraph, graph_from_description

MAGIC = b"JFCK1\n"
PRECISIONS = {"f32": np.float32, "f16": np.float16}


def _array_entries(graph: LayerGraph):
    for name, layer in graph._layer_items():
        for k, v in layer.params.items():
            yield f"{name}.{k}", "param", layer, k, v
        for k, v in layer.buffers.items():
            yield f"{name}.buffer.{k}", "buffer", layer, k, v


def save_graph(graph: LayerGraph, path, meta: dict | None = None,
               precision: str = "f32") -> bytes:
    """Serialize graph to ``path`` (or return bytes when path is None)."""
    if precision not in PRECISIONS:
        raise ValueError(f"unsupported precision {precision!r}")
    target = PRECISIONS[precision]
    entries = []
    payload = io.BytesIO()
    offset = 0
    for name, role, _layer, _k, arr in _array_entries(graph):
        if role == "param":
            out = arr.astype(target) if arr.dtype != target else arr
        else:
            out = arr.astype(np.float32)
        raw = np.ascontiguousarray(out).astype(out.dtype.newbyteorder("<")).tobytes()
        entries.append({"name": name, "role": role, "shape": list(arr.shape),
                        "dtype": str(out.dtype), "offset": offset, "nbytes": len(raw)})
        payload.write(raw)
        offset += len(raw)
    header = {
        "format": "jawfusion-checkpoint",
        "version": 1,
        "precision": precision,
        "meta": meta or {},
        "graph": graph.describe(),
        "arrays": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(len(blob).to_bytes(8, "little"))
    out.write(blob)
    out.write(payload.getvalue())
    data = out.getvalue()
    if path is not None:
        Path(path).write_bytes(data)
    return data


def load_graph(path_or_bytes, dtype=np.float32) -> tuple[LayerGraph, dict]:
    """Rebuild a graph plus its meta dict from a checkpoint."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        data = Path(path_or_bytes).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise ValueError("not a jawfusion checkpoint")
    hlen = int.from_bytes(data[len(MAGIC):len(MAGIC) + 8], "little")
    hstart = len(MAGIC) + 8
    header = json.loads(data[hstart:hstart + hlen].decode())
    payload = data[hstart + hlen:]

    graph = graph_from_description(header["graph"], dtype=dtype)
    arrays = {}
    for e in header["arrays"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
        arrays[e["name"]] = arr
    for name, role, layer, k, _old in _array_entries(graph):
        if name not in arrays:
            raise ValueError(f"checkpoint missing array {name}")
        if role == "param":
            layer.params[k] = arrays[name]
        else:
            layer.buffers[k] = arrays[name].astype(dtype)
    if graph.recurrent is not None:
        graph.recurrent._sync_cells()
    return graph, header.get("meta", {})


def clone_graph(graph: LayerGraph, meta: dict | None = None) -> LayerGraph:
    g, _ = load_graph(save_graph(graph, None, meta=meta))
    return g


def quantize_weights(graph: LayerGraph, precision: str = "f16") -> LayerGraph:
    """Return a copy whose parameters are stored at the target precision.

    Forward computation casts parameters back up at the point of use, so the
    structure, shapes and parameter count are unchanged; only storage width
    (and therefore rounding) differs. f32 -> f32 is the identity.
    """
    if precision not in PRECISIONS:
        raise ValueError(f"unsupported precision {precision!r}")
    data = save_graph(graph, None, precision=precision)
    g, _ = load_graph(data)
    return g

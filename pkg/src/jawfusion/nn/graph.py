"""Layer graph: parallel per-modality heads, optional BGRU trunk, dense stack.

The graph's native input is a batch of window sequences: for every modality a
(B, L, length, channels) array plus a (B, L) boolean mask. Heads run
time-distributed (the same parameters on every window), their flattened
outputs are combined into one feature vector per window, an optional BGRU
mixes information across the L windows, and a time-distributed dense stack
ends in a 5-way softmax.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    BGRU, ChannelNorm, Conv1D, Dense, Dropout, Flatten, Layer, MaxPool1D, Rescale,
)

LAYER_KINDS = {
    "rescale": lambda cfg: Rescale(cfg.get("scale", 1.0)),
    "channel_norm": lambda cfg: ChannelNorm(),
    "conv1d": lambda cfg: Conv1D(cfg["filters"], cfg["kernel"],
                                 cfg.get("activation", "relu"), cfg.get("bias", True)),
    "maxpool1d": lambda cfg: MaxPool1D(cfg["pool"]),
    "flatten": lambda cfg: Flatten(),
    "dropout": lambda cfg: Dropout(cfg["rate"]),
    "dense": lambda cfg: Dense(cfg["units"], cfg.get("activation", "relu"),
                               cfg.get("bias", True)),
    "bgru": lambda cfg: BGRU(cfg["hidden"]),
}


def layer_from_config(desc: dict) -> Layer:
    kind = desc["kind"]
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind](desc)


class HeadSpec:
    """One per-modality branch: which input it reads and its layer stack."""

    def __init__(self, input_key: str, layers: list[Layer]):
        self.input_key = input_key
        self.layers = layers


COMBINE_MODES = ("concat", "average", "max", "multiply")


class LayerGraph:
    """Assembled model: heads -> combine -> [BGRU] -> dense stack -> softmax(5)."""

    def __init__(self, heads: list[HeadSpec], recurrent: BGRU | None,
                 window_layers: list[Layer], combine: str = "concat",
                 reduce_heads: tuple[int, ...] = ()):
        if combine not in COMBINE_MODES:
            raise ValueError(f"unknown combine mode {combine!r}")
        if combine != "concat" and len(reduce_heads) < 2:
            raise ValueError("non-concat combination needs at least two reduced heads")
        self.heads = heads
        self.recurrent = recurrent
        self.window_layers = window_layers
        self.combine = combine
        self.reduce_heads = tuple(reduce_heads)
        self.in_shapes: dict[str, tuple] = {}
        self.seq_len = None
        self.dtype = np.float32
        self._built = False

    # ------------------------------------------------------------------ build
    def build(self, in_shapes: dict[str, tuple], seq_len: int, rng, dtype=np.float32):
        """Bind shapes and initialize parameters. in_shapes: key -> (length, channels)."""
        self.in_shapes = {k: tuple(v) for k, v in in_shapes.items()}
        self.seq_len = int(seq_len)
        self.dtype = dtype
        widths = []
        for head in self.heads:
            if head.input_key not in in_shapes:
                raise ValueError(f"head input {head.input_key!r} missing from in_shapes")
            shape = tuple(in_shapes[head.input_key])
            for layer in head.layers:
                shape = layer.build(shape, rng, dtype)
            if len(shape) != 1:
                raise ValueError(f"head {head.input_key!r} must end flattened, got {shape}")
            widths.append(shape[0])
        self.head_widths = widths

        if self.combine == "concat":
            feature_width = sum(widths)
        else:
            reduced = [widths[i] for i in self.reduce_heads]
            if len(set(reduced)) != 1:
                raise ValueError("reduced heads must share output width")
            feature_width = sum(w for i, w in enumerate(widths)
                                if i not in self.reduce_heads) + reduced[0]
        self.feature_width = feature_width

        if self.recurrent is not None:
            shape = self.recurrent.build((self.seq_len, feature_width), rng, dtype)
            width = shape[1]
        else:
            width = feature_width
        shape = (width,)
        for layer in self.window_layers:
            shape = layer.build(shape, rng, dtype)
        if shape != (5,):
            raise ValueError(f"graph must end in a 5-way output, got {shape}")
        last = self.window_layers[-1]
        if not (isinstance(last, Dense) and last.activation == "softmax"):
            raise ValueError("final layer must be a softmax dense layer")
        for layer in self.window_layers[:-1]:
            if isinstance(layer, Dense) and layer.activation == "softmax":
                raise ValueError("softmax is only allowed at the output layer")
        self._built = True
        return self

    # --------------------------------------------------------------- forward
    def _combine(self, feats: list[np.ndarray]):
        if self.combine == "concat":
            self._comb_cache = None
            return np.concatenate(feats, axis=1)
        red = [feats[i] for i in self.reduce_heads]
        stack = np.stack(red, axis=0)
        if self.combine == "average":
            merged = stack.mean(axis=0)
            cache = None
        elif self.combine == "max":
            arg = stack.argmax(axis=0)
            merged = np.take_along_axis(stack, arg[None], axis=0)[0]
            cache = arg
        else:  # multiply
            merged = stack.prod(axis=0)
            cache = stack
        self._comb_cache = cache
        keep = [f for i, f in enumerate(feats) if i not in self.reduce_heads]
        return np.concatenate(keep + [merged], axis=1)

    def _split_combined(self, d):
        """Inverse of _combine for the backward pass; returns per-head grads."""
        if self.combine == "concat":
            out = []
            ofs = 0
            for w in self.head_widths:
                out.append(d[:, ofs:ofs + w])
                ofs += w
            return out
        keep_idx = [i for i in range(len(self.heads)) if i not in self.reduce_heads]
        out = [None] * len(self.heads)
        ofs = 0
        for i in keep_idx:
            out[i] = d[:, ofs:ofs + self.head_widths[i]]
            ofs += self.head_widths[i]
        dm = d[:, ofs:]
        n = len(self.reduce_heads)
        if self.combine == "average":
            for i in self.reduce_heads:
                out[i] = dm / n
        elif self.combine == "max":
            arg = self._comb_cache
            for slot, i in enumerate(self.reduce_heads):
                out[i] = dm * (arg == slot)
        else:  # multiply
            stack = self._comb_cache
            prod = stack.prod(axis=0)
            for slot, i in enumerate(self.reduce_heads):
                base = stack[slot]
                with np.errstate(divide="ignore", invalid="ignore"):
                    others = np.where(base != 0, prod / base,
                                      np.prod(np.delete(stack, slot, axis=0), axis=0))
                out[i] = dm * others
        return out

    def forward(self, inputs: dict[str, np.ndarray], mask: np.ndarray,
                train: bool = False, rng=None) -> np.ndarray:
        """inputs: key -> (B, L, length, channels); mask: (B, L) -> (B, L, 5)."""
        if not self._built:
            raise RuntimeError("graph not built")
        B, L = mask.shape
        feats = []
        for head in self.heads:
            x = inputs[head.input_key]
            expect = self.in_shapes[head.input_key]
            if tuple(x.shape[2:]) != expect:
                raise ValueError(
                    f"input {head.input_key!r} frames {tuple(x.shape[2:])} do not match "
                    f"the spec'd window shape {expect}")
            x = np.ascontiguousarray(x, dtype=self.dtype).reshape((B * L,) + expect)
            for layer in head.layers:
                x = layer.forward(x, train=train, rng=rng)
            feats.append(x)
        x = self._combine(feats)
        if self.recurrent is not None:
            x = self.recurrent.forward(x.reshape(B, L, -1), train=train, rng=rng,
                                       mask=mask)
            x = x.reshape(B * L, -1)
        for layer in self.window_layers:
            x = layer.forward(x, train=train, rng=rng)
        out = x.reshape(B, L, 5)
        if not np.isfinite(out).all():
            raise FloatingPointError("non-finite values in forward pass")
        self._fwd_dims = (B, L)
        return out

    def backward(self, dprobs: np.ndarray) -> dict[str, np.ndarray]:
        """Backprop from d(loss)/d(probabilities); returns input gradients."""
        B, L = self._fwd_dims
        d = dprobs.reshape(B * L, 5).astype(self.dtype)
        for layer in reversed(self.window_layers):
            d = layer.backward(d)
        if self.recurrent is not None:
            d = self.recurrent.backward(d.reshape(B, L, -1))
            d = d.reshape(B * L, -1)
        dheads = self._split_combined(d)
        input_grads = {}
        for head, dh in zip(self.heads, dheads):
            for layer in reversed(head.layers):
                dh = layer.backward(dh)
            g = dh.reshape((B, L) + self.in_shapes[head.input_key])
            if head.input_key in input_grads:
                input_grads[head.input_key] = input_grads[head.input_key] + g
            else:
                input_grads[head.input_key] = g
        return input_grads

    # ------------------------------------------------------------ inventory
    def _layer_items(self):
        for hi, head in enumerate(self.heads):
            for li, layer in enumerate(head.layers):
                yield f"head{hi}_{head.input_key}.{li}_{layer.kind}", layer
        if self.recurrent is not None:
            yield "trunk.bgru", self.recurrent
        for li, layer in enumerate(self.window_layers):
            yield f"fnn.{li}_{layer.kind}", layer

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self._layer_items():
            for k, v in layer.params.items():
                out[f"{name}.{k}"] = v
        return out

    def set_parameters(self, values: dict[str, np.ndarray]):
        for name, layer in self._layer_items():
            for k in layer.params:
                full = f"{name}.{k}"
                if full in values:
                    layer.params[k] = np.asarray(values[full])
        if self.recurrent is not None:
            self.recurrent._sync_cells()

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self._layer_items():
            for k, v in layer.grads.items():
                out[f"{name}.{k}"] = v
        return out

    def count_params(self) -> int:
        """Sum of all weight and bias element counts (frozen stats excluded)."""
        return int(sum(layer.param_count() for _, layer in self._layer_items()))

    def count_flops(self, seq_len: int | None = None) -> int:
        """FLOPs for one forward pass of one input sequence of L windows.

        Per-window layers contribute flops() per window and the BGRU
        contributes its per-step cost, each multiplied by L.
        """
        L = self.seq_len if seq_len is None else int(seq_len)
        total = 0
        for _, layer in self._layer_items():
            total += layer.flops()
        return L * int(total)

    def param_payload_bytes(self) -> int:
        return int(sum(v.nbytes for v in self.parameters().values()))

    def summary(self, seq_len: int | None = None) -> str:
        L = self.seq_len if seq_len is None else int(seq_len)
        rows = [("layer", "output shape", "params", "flops/window")]
        for name, layer in self._layer_items():
            rows.append((name, str(layer.out_shape), f"{layer.param_count():,}",
                         f"{layer.flops():,}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.append("-" * len(lines[0]))
        lines.append(f"total params: {self.count_params():,}")
        lines.append(f"total flops (sequence of {L} windows): {self.count_flops(L):,}")
        return "\n".join(lines)

    def describe(self) -> dict:
        """Self-describing structure sufficient to rebuild the graph."""
        return {
            "in_shapes": {k: list(v) for k, v in self.in_shapes.items()},
            "seq_len": self.seq_len,
            "combine": self.combine,
            "reduce_heads": list(self.reduce_heads),
            "heads": [{"input": h.input_key,
                       "layers": [l.describe() for l in h.layers]} for h in self.heads],
            "recurrent": self.recurrent.describe() if self.recurrent else None,
            "window_layers": [l.describe() for l in self.window_layers],
        }


def graph_from_description(desc: dict, rng=None, dtype=np.float32) -> LayerGraph:
    """Rebuild an unbuilt-then-built graph from describe() output."""
    heads = [HeadSpec(h["input"], [layer_from_config(l) for l in h["layers"]])
             for h in desc["heads"]]
    recurrent = layer_from_config(desc["recurrent"]) if desc["recurrent"] else None
    window_layers = [layer_from_config(l) for l in desc["window_layers"]]
    graph = LayerGraph(heads, recurrent, window_layers,
                       combine=desc.get("combine", "concat"),
                       reduce_heads=tuple(desc.get("reduce_heads", ())))
    rng = rng if rng is not None else np.random.default_rng(0)
    graph.build({k: tuple(v) for k, v in desc["in_shapes"].items()},
                desc["seq_len"], rng, dtype)
    return graph

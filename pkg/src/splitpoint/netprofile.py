"""Layered network descriptions and their per-layer profiling curves.

An architecture is a chain of 1-D layers. Profiling turns it into three
sequences indexed by layer position (the input sits at position 0):

* cumulative client-side FLOPs per sample,
* activation size (scalars) at each layer output,
* cumulative client-side parameter count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LAYER_KINDS = ("conv1d", "pool1d", "global_avg_pool", "dropout", "fully_connected")

_INT64_MAX = 2**63 - 1


class ArchitectureError(ValueError):
    """Raised for malformed or shape-inconsistent architecture documents."""


@dataclass(frozen=True)
class FlopConvention:
    """How many FLOPs each layer output costs.

    Defaults: a multiply-add counts as 2 FLOPs for conv/dense layers, bias
    adds are ignored, pooling costs one FLOP per window element, and
    dropout and activation functions are free.
    """

    mac_flops: int = 2
    pool_flops_per_elem: int = 1
    gap_flops_per_elem: int = 1
    dropout_flops: int = 0
    activation_flops: int = 0
    count_bias: bool = False

    def key(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


DEFAULT_CONVENTION = FlopConvention()


@dataclass(frozen=True)
class LayerSpec:
    index: int
    kind: str
    input_len: int
    input_channels: int
    output_len: int
    output_channels: int
    kernel_size: int | None = None
    stride: int | None = None
    in_channels: int | None = None
    has_bias: bool = False
    activation: str | None = None
    name: str = ""

    @property
    def outputs(self) -> int:
        return self.output_len * self.output_channels


@dataclass(frozen=True)
class ArchitectureSpec:
    input_len: int
    input_channels: int
    layers: tuple[LayerSpec, ...]
    notes: tuple[str, ...] = ()

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def layer(self, index: int) -> LayerSpec:
        if not 1 <= index <= self.n_layers:
            raise IndexError(f"layer index {index} outside 1..{self.n_layers}")
        return self.layers[index - 1]

    def to_document(self) -> dict:
        """Canonical JSON-ready document; round-trips through parse_architecture."""
        out = []
        for ly in self.layers:
            d: dict = {"kind": ly.kind}
            if ly.name:
                d["name"] = ly.name
            if ly.kind in ("conv1d", "pool1d"):
                d["kernel"] = ly.kernel_size
                d["stride"] = ly.stride
            if ly.kind == "conv1d":
                d["out_channels"] = ly.output_channels
            if ly.kind == "fully_connected":
                d["out_features"] = ly.output_channels
            if ly.kind in ("conv1d", "fully_connected"):
                d["bias"] = ly.has_bias
            if ly.activation:
                d["activation"] = ly.activation
            d["output_len"] = ly.output_len
            d["output_channels"] = ly.output_channels
            out.append(d)
        return {"input": {"len": self.input_len, "channels": self.input_channels}, "layers": out}

    def digest(self) -> str:
        """Stable hash of the shape-relevant content (names and notes excluded)."""
        doc = self.to_document()
        for d in doc["layers"]:
            d.pop("name", None)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _positive_int(d: dict, key: str, where: str, default=None) -> int:
    v = d.get(key, default)
    if v is None:
        raise ArchitectureError(f"{where}: missing '{key}'")
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ArchitectureError(f"{where}: '{key}' must be a positive integer, got {v!r}")
    return v


def _window_len(length: int, kernel: int, stride: int, where: str) -> int:
    if kernel > length:
        raise ArchitectureError(f"{where}: kernel {kernel} longer than input length {length}")
    return (length - kernel) // stride + 1


def parse_architecture(doc: str | bytes | dict) -> ArchitectureSpec:
    """Validate an architecture document and resolve every layer's shape.

    ``doc`` is either the JSON text or an already-decoded mapping. Layers may
    state ``output_len``/``output_channels``/``in_channels``; stated values
    are checked against the shape chain rather than trusted.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ArchitectureError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ArchitectureError("architecture document must be a JSON object")
    inp = doc.get("input")
    if not isinstance(inp, dict):
        raise ArchitectureError("missing 'input' object")
    length = _positive_int(inp, "len", "input")
    channels = _positive_int(inp, "channels", "input")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ArchitectureError("'layers' must be a non-empty list")

    input_len, input_channels = length, channels
    layers = []
    for i, raw in enumerate(raw_layers, start=1):
        where = f"layer {i}"
        if not isinstance(raw, dict):
            raise ArchitectureError(f"{where}: expected an object")
        kind = raw.get("kind")
        if kind not in LAYER_KINDS:
            raise ArchitectureError(f"{where}: unknown layer kind {kind!r}")
        kernel = stride = in_ch = None
        bias = False
        if kind == "conv1d":
            kernel = _positive_int(raw, "kernel", where)
            stride = _positive_int(raw, "stride", where, default=1)
            out_ch = _positive_int(raw, "out_channels", where)
            in_ch = channels
            out_len = _window_len(length, kernel, stride, where)
            bias = bool(raw.get("bias", True))
        elif kind == "pool1d":
            kernel = _positive_int(raw, "kernel", where)
            stride = _positive_int(raw, "stride", where, default=kernel)
            out_ch = channels
            out_len = _window_len(length, kernel, stride, where)
        elif kind == "global_avg_pool":
            out_ch, out_len = channels, 1
        elif kind == "dropout":
            out_ch, out_len = channels, length
        else:  # fully_connected flattens its input
            out_ch = _positive_int(raw, "out_features", where)
            in_ch = length * channels
            out_len = 1
            bias = bool(raw.get("bias", True))

        for key, actual in (("output_len", out_len), ("output_channels", out_ch), ("in_channels", in_ch)):
            stated = raw.get(key)
            if stated is not None and stated != actual:
                raise ArchitectureError(f"{where} ({kind}): stated {key}={stated} but shape chain gives {actual}")

        layers.append(
            LayerSpec(
                index=i,
                kind=kind,
                input_len=length,
                input_channels=channels,
                output_len=out_len,
                output_channels=out_ch,
                kernel_size=kernel,
                stride=stride,
                in_channels=in_ch,
                has_bias=bias,
                activation=raw.get("activation"),
                name=str(raw.get("name", "")),
            )
        )
        length, channels = out_len, out_ch

    notes = doc.get("inferred", ())
    if isinstance(notes, str):
        notes = (notes,)
    return ArchitectureSpec(input_len, input_channels, tuple(layers), tuple(str(n) for n in notes))


def load_architecture(path: str | Path) -> ArchitectureSpec:
    return parse_architecture(Path(path).read_text())


def reference_architecture() -> ArchitectureSpec:
    """The 8-layer 1-D CNN shipped in ``data/reference_cnn.json``."""
    return load_architecture(Path(__file__).with_name("data") / "reference_cnn.json")


def layer_cost(layer: LayerSpec, convention: FlopConvention = DEFAULT_CONVENTION) -> tuple[int, int]:
    """Return ``(flops_per_sample, parameter_count)`` for one layer."""
    kind = layer.kind
    if kind == "conv1d":
        per_out = convention.mac_flops * layer.kernel_size * layer.in_channels
        params = layer.kernel_size * layer.in_channels * layer.output_channels
    elif kind == "fully_connected":
        per_out = convention.mac_flops * layer.in_channels
        params = layer.in_channels * layer.output_channels
    elif kind == "pool1d":
        per_out, params = convention.pool_flops_per_elem * layer.kernel_size, 0
    elif kind == "global_avg_pool":
        per_out, params = convention.gap_flops_per_elem * layer.input_len, 0
    elif kind == "dropout":
        per_out, params = convention.dropout_flops, 0
    else:
        raise ArchitectureError(f"unknown layer kind {kind!r}")

    if layer.has_bias:
        params += layer.output_channels
        if convention.count_bias:
            per_out += 1
    if layer.activation and layer.activation.lower() not in ("none", "linear"):
        per_out += convention.activation_flops
    return layer.outputs * per_out, params


@dataclass(frozen=True)
class NetworkProfile:
    """Profiling curves of an architecture.

    Every array has length ``n_layers + 1``; position 0 is the input layer
    (zero FLOPs, zero parameters, activation size of the raw sample), so
    ``cum_flops[i]`` is the client load when cutting after layer ``i``.
    """

    kinds: tuple[str, ...]
    layer_flops: np.ndarray
    layer_params: np.ndarray
    cum_flops: np.ndarray
    act_size: np.ndarray
    cum_params: np.ndarray
    scalar_bits: int = 32
    arch_digest: str = ""
    convention: FlopConvention = field(default=DEFAULT_CONVENTION)

    @property
    def n_layers(self) -> int:
        return len(self.kinds) - 1

    @property
    def total_flops(self) -> int:
        return int(self.cum_flops[-1])

    def server_flops(self, cut: int) -> int:
        return self.total_flops - int(self.cum_flops[cut])

    def rows(self) -> list[dict]:
        return [
            {
                "layer_index": i,
                "kind": self.kinds[i],
                "l_flops": int(self.layer_flops[i]),
                "L_k": int(self.cum_flops[i]),
                "N_k": int(self.act_size[i]),
                "N_p": int(self.layer_params[i]),
                "N_c": int(self.cum_params[i]),
            }
            for i in range(1, self.n_layers + 1)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=PROFILE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()


PROFILE_COLUMNS = ["layer_index", "kind", "l_flops", "L_k", "N_k", "N_p", "N_c"]


def _frozen(values: Iterable[int], what: str) -> np.ndarray:
    values = list(values)
    if any(v > _INT64_MAX for v in values):
        raise OverflowError(f"{what} exceeds 64-bit range; architecture is too large to profile")
    arr = np.array(values, dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _cumsum(values: Sequence[int]) -> list[int]:
    out, acc = [], 0
    for v in values:
        acc += v
        out.append(acc)
    return out


def build_profile(
    arch: ArchitectureSpec,
    convention: FlopConvention = DEFAULT_CONVENTION,
    scalar_bits: int = 32,
) -> NetworkProfile:
    if scalar_bits < 1:
        raise ValueError("scalar_bits must be positive")
    costs = [layer_cost(ly, convention) for ly in arch.layers]
    flops = [0] + [c[0] for c in costs]
    params = [0] + [c[1] for c in costs]
    acts = [arch.input_len * arch.input_channels] + [ly.outputs for ly in arch.layers]
    # cumulative sums on Python ints so overflow is detected, not wrapped
    return NetworkProfile(
        kinds=("input",) + tuple(ly.kind for ly in arch.layers),
        layer_flops=_frozen(flops, "layer FLOPs"),
        layer_params=_frozen(params, "layer parameters"),
        cum_flops=_frozen(_cumsum(flops), "cumulative FLOPs"),
        act_size=_frozen(acts, "activation size"),
        cum_params=_frozen(_cumsum(params), "cumulative parameters"),
        scalar_bits=scalar_bits,
        arch_digest=arch.digest(),
        convention=convention,
    )


def random_architecture(rng: np.random.Generator, n_layers: int) -> ArchitectureSpec:
    """Draw a shape-consistent 1-D CNN with ``n_layers`` layers (last one dense).

    Used to stress the cut-layer machinery on networks other than the
    shipped example.
    """
    if n_layers < 2:
        raise ValueError("need at least two layers")
    input_len = int(rng.integers(64, 1025))
    input_channels = int(rng.integers(1, 9))
    length = input_len
    layers: list[dict] = []
    for _ in range(n_layers - 1):
        choices = ["conv1d", "conv1d", "pool1d", "dropout"]
        if length > 1:
            choices.append("global_avg_pool")
        kind = str(rng.choice(choices))
        if kind in ("conv1d", "pool1d") and length < 2:
            kind = "dropout"
        if kind == "conv1d":
            k = int(rng.integers(1, min(9, length) + 1))
            out = int(rng.choice([8, 16, 32, 64, 128, 200, 256]))
            layers.append({"kind": kind, "kernel": k, "out_channels": out, "bias": bool(rng.random() < 0.8)})
            length = length - k + 1
        elif kind == "pool1d":
            k = int(rng.integers(2, min(8, length) + 1))
            layers.append({"kind": kind, "kernel": k})
            length = (length - k) // k + 1
        elif kind == "global_avg_pool":
            layers.append({"kind": kind})
            length = 1
        else:
            layers.append({"kind": kind})
    layers.append({"kind": "fully_connected", "out_features": int(rng.integers(2, 33))})
    return parse_architecture({"input": {"len": input_len, "channels": input_channels}, "layers": layers})

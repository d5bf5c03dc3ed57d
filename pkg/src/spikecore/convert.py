"""Conversion of layered models (conv / max-pool / fully connected) to networks.

Input cells become axons on an index grid filled row-major with the
channel outermost. Convolutions are unrolled by sliding the kernel over
that grid: every kernel weight yields one synapse per window position.
Max pooling becomes an OR over binary spikes: each window wires weight-1
synapses onto a binary neuron with threshold 0, which fires exactly when
at least one input of the previous step fired. Fully connected layers
wire the complete bipartite graph.

Weights are quantised per layer to symmetric signed 16-bit integers;
spiking-layer thresholds are scaled by the same per-layer factor.

Biases can be realised three ways: folded into thresholds
("threshold_shift", exact at every step but the first whenever a shifted
threshold goes negative), as an extra always-active input axon per layer
("bias_axon", the runner must activate it each step), or as a
self-firing binary neuron with threshold -1 per layer
("always_on_neuron").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeMismatch, SpikeCoreError
from .models import NOISE_OFF, WEIGHT_MAX, WEIGHT_MIN, NeuronModel, binary, lif
from .network import Key, Network, NetworkConfig, build_network
from .sim import Simulation

BIAS_STRATEGIES = ("threshold_shift", "bias_axon", "always_on_neuron")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward model."""

    kind: str  # "conv" | "maxpool" | "fc"
    out_channels: int | None = None
    kernel: tuple[int, int] | None = None
    stride: int = 1
    padding: int = 0
    out_units: int | None = None
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None


def conv(out_channels: int, kernel, weights, stride: int = 1, padding: int = 0, bias=None) -> LayerSpec:
    kh, kw = kernel
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 4 or w.shape[0] != out_channels or w.shape[2:] != (kh, kw):
        raise ShapeMismatch(f"conv weights shape {w.shape} does not match {out_channels} x in x {kh} x {kw}")
    b = None if bias is None else np.asarray(bias, dtype=np.float64)
    if b is not None and b.shape != (out_channels,):
        raise ShapeMismatch(f"conv bias shape {b.shape} does not match ({out_channels},)")
    return LayerSpec("conv", out_channels=out_channels, kernel=(kh, kw), stride=stride, padding=padding, weights=w, bias=b)


def maxpool(kernel, stride: int | None = None) -> LayerSpec:
    kh, kw = kernel
    return LayerSpec("maxpool", kernel=(kh, kw), stride=kh if stride is None else stride)


def fc(out_units: int, weights, bias=None) -> LayerSpec:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != out_units:
        raise ShapeMismatch(f"fc weights shape {w.shape} does not match ({out_units}, in)")
    b = None if bias is None else np.asarray(bias, dtype=np.float64)
    if b is not None and b.shape != (out_units,):
        raise ShapeMismatch(f"fc bias shape {b.shape} does not match ({out_units},)")
    return LayerSpec("fc", out_units=out_units, weights=w, bias=b)


@dataclass(frozen=True)
class ConvertOptions:
    """Conversion policy.

    `neuron_kind` picks the model of conv/fc neurons ("binary" or "lif");
    pool neurons are always binary with threshold 0. `threshold` is in
    pre-quantisation weight units and defaults to 0.0 for binary and 1.0
    for lif; it is scaled per layer together with the weights.
    """

    neuron_kind: str = "binary"
    threshold: float | None = None
    leak_shift: int = 63
    noise_shift: int = NOISE_OFF
    bias_strategy: str = "threshold_shift"
    quant_alpha: float | None = None
    config: NetworkConfig = field(default_factory=NetworkConfig)

    def base_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return 0.0 if self.neuron_kind == "binary" else 1.0


@dataclass
class StructuralReport:
    """Counts of the converted network.

    `params` counts unique layer parameters (kernel entries and weight
    matrix entries; biases and pool layers add none), matching how
    layered models are usually sized. `synapses` counts the unrolled
    connections actually present in the network.
    """

    axons: int
    neurons: int
    params: int
    synapses: int


@dataclass
class ConversionResult:
    network: Network
    report: StructuralReport
    scales: list[float]
    bias_axons: list[Key]
    grid: "AxonGrid"
    layer_keys: list[list[Key]]


class AxonGrid:
    """Input cells on a (channels, height, width) grid, channel outermost."""

    def __init__(self, shape: tuple[int, int, int]):
        c, h, w = shape
        self.shape = (c, h, w)
        self.num_axons = c * h * w
        self.keys = [f"a{i}" for i in range(self.num_axons)]

    def key(self, channel: int, row: int, col: int) -> str:
        c, h, w = self.shape
        return self.keys[channel * h * w + row * w + col]

    def active_keys(self, frame, threshold: float = 0.5) -> list[str]:
        """Keys of cells whose value exceeds `threshold`, ascending index."""
        arr = np.asarray(frame)
        if arr.shape != self.shape:
            raise ShapeMismatch(f"frame shape {arr.shape} does not match grid {self.shape}")
        idx = np.flatnonzero(arr.reshape(-1) > threshold)
        return [self.keys[i] for i in idx]


def binarize_input(frame, grid: AxonGrid, threshold: float = 0.5) -> list[str]:
    """Axon keys activated by a frame (strictly above `threshold`)."""
    return grid.active_keys(frame, threshold)


def bit_slice(frame, bits: int, total_bits: int = 8) -> np.ndarray:
    """Unsigned integer frame (C, H, W) to (C * bits, H, W) binary planes.

    Takes the top `bits` bits of each value, most significant plane
    first, so one grey channel becomes `bits` binary channels.
    """
    arr = np.asarray(frame)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected a (C, H, W) frame, got shape {arr.shape}")
    arr = arr.astype(np.int64)  # values are truncated to integers
    planes = []
    for c in range(arr.shape[0]):
        for b in range(bits):
            planes.append((arr[c] >> (total_bits - 1 - b)) & 1)
    return np.stack(planes).astype(np.uint8)


def quantize(weights, alpha: float | None = None) -> tuple[np.ndarray, float]:
    """Symmetric per-tensor quantisation to signed 16 bits.

    scale = 32767 / max|w| unless `alpha` supplies the scale directly.
    Values are rounded half to even and clamped. An all-zero tensor maps
    to zeros with scale 1.0 (documented convention, not an error).
    """
    w = np.asarray(weights, dtype=np.float64)
    if alpha is not None:
        scale = float(alpha)
    else:
        peak = float(np.abs(w).max()) if w.size else 0.0
        if peak == 0.0:
            return np.zeros(w.shape, dtype=np.int64), 1.0
        scale = WEIGHT_MAX / peak
    q = np.clip(np.rint(w * scale), WEIGHT_MIN, WEIGHT_MAX).astype(np.int64)
    return q, scale


@dataclass
class LayerMap:
    """Wiring produced for one layer: per-source synapse additions."""

    out_keys: list[str]
    out_shape: tuple[int, int, int] | None
    synapses: dict[Key, list[tuple[str, int]]]
    params: int


def _conv_output_hw(h: int, w: int, kernel, stride: int, padding: int) -> tuple[int, int]:
    kh, kw = kernel
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"kernel {kernel} with stride {stride} does not fit a {h}x{w} input")
    return oh, ow


def map_conv_layer(
    source_keys: list[Key],
    in_shape: tuple[int, int, int],
    weights_q: np.ndarray,
    stride: int,
    padding: int,
    prefix: str,
) -> LayerMap:
    """Unroll a convolution over the source index grid.

    `weights_q`: integer kernel, (out_channels, in_channels, kh, kw).
    Output neurons are keyed `{prefix}f{map}p{position}` and laid out on
    a (out_channels, oh, ow) grid, channel outermost, positions row-major.
    """
    c, h, w = in_shape
    if len(source_keys) != c * h * w:
        raise ShapeMismatch(f"{len(source_keys)} sources do not fill shape {in_shape}")
    out_c, in_c, kh, kw = weights_q.shape
    if in_c != c:
        raise ShapeMismatch(f"kernel expects {in_c} channels, input has {c}")
    oh, ow = _conv_output_hw(h, w, (kh, kw), stride, padding)

    # index grid of source positions; -1 marks padding cells
    grid = np.arange(c * h * w, dtype=np.int64).reshape(c, h, w)
    padded = np.full((c, h + 2 * padding, w + 2 * padding), -1, dtype=np.int64)
    padded[:, padding : padding + h, padding : padding + w] = grid

    synapses: dict[Key, list[tuple[str, int]]] = {}
    out_keys = [f"{prefix}f{m}p{p}" for m in range(out_c) for p in range(oh * ow)]
    kernels = [weights_q[m].reshape(-1).tolist() for m in range(out_c)]
    for oy in range(oh):
        for ox in range(ow):
            window = padded[:, oy * stride : oy * stride + kh, ox * stride : ox * stride + kw]
            flat = window.reshape(-1).tolist()
            pos = oy * ow + ox
            for m in range(out_c):
                post = out_keys[m * oh * ow + pos]
                kernel = kernels[m]
                for slot, src in enumerate(flat):
                    if src >= 0:
                        synapses.setdefault(source_keys[src], []).append((post, kernel[slot]))
    return LayerMap(out_keys, (out_c, oh, ow), synapses, out_c * in_c * kh * kw)


def map_pool_layer(
    source_keys: list[Key],
    in_shape: tuple[int, int, int],
    kernel: tuple[int, int],
    stride: int,
    prefix: str,
) -> LayerMap:
    """Max pooling over binary spikes: weight-1 fan-in to a threshold-0 unit.

    The pool neuron fires exactly when any window input fired on the
    previous step, which is the max of binary activations.
    """
    c, h, w = in_shape
    if len(source_keys) != c * h * w:
        raise ShapeMismatch(f"{len(source_keys)} sources do not fill shape {in_shape}")
    kh, kw = kernel
    oh, ow = _conv_output_hw(h, w, kernel, stride, 0)

    grid = np.arange(c * h * w, dtype=np.int64).reshape(c, h, w)
    synapses: dict[Key, list[tuple[str, int]]] = {}
    out_keys = [f"{prefix}f{m}p{p}" for m in range(c) for p in range(oh * ow)]
    for m in range(c):
        for oy in range(oh):
            for ox in range(ow):
                post = out_keys[m * oh * ow + oy * ow + ox]
                window = grid[m, oy * stride : oy * stride + kh, ox * stride : ox * stride + kw]
                for src in window.reshape(-1).tolist():
                    synapses.setdefault(source_keys[src], []).append((post, 1))
    return LayerMap(out_keys, (c, oh, ow), synapses, 0)


def map_fc_layer(source_keys: list[Key], weights_q: np.ndarray, prefix: str) -> LayerMap:
    """Complete bipartite wiring from the sources to `out` units."""
    out_units, in_units = weights_q.shape
    if in_units != len(source_keys):
        raise ShapeMismatch(f"weight matrix expects {in_units} inputs, layer has {len(source_keys)}")
    out_keys = [f"{prefix}u{u}" for u in range(out_units)]
    synapses: dict[Key, list[tuple[str, int]]] = {}
    cols = weights_q.T.tolist()
    for s, src in enumerate(source_keys):
        col = cols[s]
        synapses[src] = [(out_keys[u], col[u]) for u in range(out_units)]
    return LayerMap(out_keys, None, synapses, out_units * in_units)


def _quantize_bias(bias: np.ndarray | None, count: int, scale: float) -> list[int]:
    if bias is None:
        return [0] * count
    return [int(b) for b in np.rint(np.asarray(bias, dtype=np.float64) * scale).astype(np.int64)]


def convert_model(
    input_shape: tuple[int, int, int],
    layers: list[LayerSpec],
    options: ConvertOptions | None = None,
) -> ConversionResult:
    """Convert a layered model into a spiking network.

    The input grid becomes the axon layer; each layer's neurons are keyed
    by layer index, feature map and position; the last layer's neurons
    become the network outputs.
    """
    options = options or ConvertOptions()
    if options.neuron_kind not in ("binary", "lif"):
        raise SpikeCoreError(f"unknown neuron kind {options.neuron_kind!r}")
    if options.bias_strategy not in BIAS_STRATEGIES:
        raise SpikeCoreError(f"unknown bias strategy {options.bias_strategy!r}")

    grid = AxonGrid(input_shape)
    axon_syn: dict[Key, list] = {k: [] for k in grid.keys}
    neuron_entries: list[tuple[Key, tuple[list, NeuronModel]]] = []
    neuron_syn: dict[Key, list] = {}

    def attach(source: Key, additions: list[tuple[str, int]]) -> None:
        if source in axon_syn:
            axon_syn[source].extend(additions)
        else:
            neuron_syn[source].extend(additions)

    source_keys: list[Key] = list(grid.keys)
    shape: tuple[int, int, int] | None = grid.shape
    scales: list[float] = []
    bias_axons: list[Key] = []
    layer_keys: list[list[Key]] = []
    params = 0

    for li, layer in enumerate(layers, start=1):
        prefix = f"l{li}"
        if layer.kind == "conv":
            if shape is None:
                raise ShapeMismatch(f"layer {li}: convolution after a flat layer")
            q, scale = quantize(layer.weights, options.quant_alpha)
            lmap = map_conv_layer(source_keys, shape, q, layer.stride, layer.padding, prefix)
            per_neuron_bias = _quantize_bias(layer.bias, layer.out_channels, scale)
            bias_of = lambda i, n=lmap.out_shape[1] * lmap.out_shape[2]: per_neuron_bias[i // n]
        elif layer.kind == "fc":
            q, scale = quantize(layer.weights, options.quant_alpha)
            lmap = map_fc_layer(source_keys, q, prefix)
            per_neuron_bias = _quantize_bias(layer.bias, layer.out_units, scale)
            bias_of = lambda i: per_neuron_bias[i]
        elif layer.kind == "maxpool":
            if shape is None:
                raise ShapeMismatch(f"layer {li}: pooling after a flat layer")
            scale = 1.0
            lmap = map_pool_layer(source_keys, shape, layer.kernel, layer.stride, prefix)
            per_neuron_bias = [0] * len(lmap.out_keys)
            bias_of = lambda i: 0
        else:
            raise SpikeCoreError(f"unknown layer kind {layer.kind!r}")
        scales.append(scale)
        params += lmap.params

        if layer.kind == "maxpool":
            base_threshold = 0
            make_model = lambda th: binary(th, NOISE_OFF)
        else:
            base_threshold = int(np.rint(options.base_threshold() * scale))
            if options.neuron_kind == "binary":
                make_model = lambda th: binary(th, options.noise_shift)
            else:
                make_model = lambda th: lif(th, options.noise_shift, options.leak_shift)

        has_bias = any(b != 0 for b in per_neuron_bias)
        use_shift = options.bias_strategy == "threshold_shift" and layer.kind != "maxpool"
        for i, key in enumerate(lmap.out_keys):
            th = base_threshold - bias_of(i) if (has_bias and use_shift) else base_threshold
            neuron_syn[key] = []
            neuron_entries.append((key, (neuron_syn[key], make_model(th))))
        for source, additions in lmap.synapses.items():
            attach(source, additions)

        if has_bias and not use_shift:
            bias_syn = [
                (key, bias_of(i)) for i, key in enumerate(lmap.out_keys) if bias_of(i) != 0
            ]
            bias_key = f"b{li}"
            if options.bias_strategy == "bias_axon":
                axon_syn[bias_key] = bias_syn
                bias_axons.append(bias_key)
            else:  # always_on_neuron: fires every step since 0 > -1
                neuron_syn[bias_key] = bias_syn
                neuron_entries.append((bias_key, (neuron_syn[bias_key], binary(-1, NOISE_OFF))))

        source_keys = lmap.out_keys
        shape = lmap.out_shape
        layer_keys.append(lmap.out_keys)

    outputs = list(layer_keys[-1]) if layer_keys else []
    network = build_network(axon_syn, neuron_entries, outputs, options.config)
    report = StructuralReport(
        axons=network.num_axons,
        neurons=network.num_neurons,
        params=params,
        synapses=network.num_synapses(),
    )
    return ConversionResult(network, report, scales, bias_axons, grid, layer_keys)


def run_layered_inference(
    sim: Simulation,
    result: ConversionResult,
    active_keys: list[Key],
    steps: int | None = None,
    readout: str = "membrane",
    present: str = "once",
) -> tuple[int, np.ndarray]:
    """Present a frame and read out a class.

    `present="once"` activates the frame's axons on the first step and
    lets it propagate; `"every"` re-presents each step (rate coding).
    Readout is either final membrane potentials of the output layer or
    total output spike counts; returns (argmax index, score vector).
    Bias axons, when the conversion created them, are activated on every
    step automatically.
    """
    if readout not in ("membrane", "rate"):
        raise SpikeCoreError(f"unknown readout {readout!r}")
    if present not in ("once", "every"):
        raise SpikeCoreError(f"unknown presentation mode {present!r}")
    out_keys = result.layer_keys[-1]
    out_pos = {k: i for i, k in enumerate(out_keys)}
    if steps is None:
        steps = len(result.layer_keys)
    counts = np.zeros(len(out_keys), dtype=np.int64)
    for t in range(steps):
        inputs = list(active_keys) if (t == 0 or present == "every") else []
        inputs += result.bias_axons
        for key in sim.step(inputs):
            if key in out_pos:
                counts[out_pos[key]] += 1
    if readout == "rate":
        scores = counts
    else:
        scores = np.array(sim.read_membrane(out_keys), dtype=np.int64)
    return int(np.argmax(scores)), scores


def load_archive(path: str | Path) -> tuple[tuple[int, int, int], list[LayerSpec]]:
    """Read a tensor-archive directory (manifest.json plus raw tensors)."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError(f"{root} has no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"unreadable manifest: {exc}") from None
    if manifest.get("format") != "spikecore-model":
        raise FormatError("manifest is not a spikecore model archive")
    if manifest.get("version") != 1:
        raise FormatError(f"unsupported archive version {manifest.get('version')!r}")
    input_shape = tuple(manifest["input_shape"])
    if len(input_shape) != 3:
        raise FormatError("input_shape must be [channels, height, width]")

    def tensor(entry) -> np.ndarray | None:
        if entry is None:
            return None
        file = root / entry["file"]
        if not file.is_file():
            raise FormatError(f"archive tensor {entry['file']!r} is missing")
        data = np.fromfile(file, dtype=np.dtype(entry["dtype"]))
        shape = tuple(entry["shape"])
        if data.size != int(np.prod(shape)):
            raise FormatError(f"tensor {entry['file']!r} holds {data.size} values, expected shape {shape}")
        return data.reshape(shape).astype(np.float64)

    layers: list[LayerSpec] = []
    for i, obj in enumerate(manifest["layers"]):
        kind = obj.get("kind")
        if kind == "conv":
            layers.append(
                conv(
                    obj["out_channels"],
                    tuple(obj["kernel"]),
                    tensor(obj["weights"]),
                    stride=obj.get("stride", 1),
                    padding=obj.get("padding", 0),
                    bias=tensor(obj.get("bias")),
                )
            )
        elif kind == "maxpool":
            layers.append(maxpool(tuple(obj["kernel"]), obj.get("stride")))
        elif kind == "fc":
            layers.append(fc(obj["out_units"], tensor(obj["weights"]), bias=tensor(obj.get("bias"))))
        else:
            raise FormatError(f"layer {i}: unknown kind {kind!r}")
    return input_shape, layers


def save_archive(path: str | Path, input_shape: tuple[int, int, int], layers: list[LayerSpec]) -> None:
    """Write a tensor-archive directory consumable by `load_archive`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, layer in enumerate(layers):
        def dump(tag: str, arr: np.ndarray | None):
            if arr is None:
                return None
            fname = f"layer{i}.{tag}.bin"
            arr.astype("<f8").tofile(root / fname)
            return {"file": fname, "shape": list(arr.shape), "dtype": "<f8"}

        obj: dict = {"kind": layer.kind}
        if layer.kind == "conv":
            obj.update(
                out_channels=layer.out_channels,
                kernel=list(layer.kernel),
                stride=layer.stride,
                padding=layer.padding,
                weights=dump("w", layer.weights),
                bias=dump("b", layer.bias),
            )
        elif layer.kind == "maxpool":
            obj.update(kernel=list(layer.kernel), stride=layer.stride)
        else:
            obj.update(out_units=layer.out_units, weights=dump("w", layer.weights), bias=dump("b", layer.bias))
        entries.append(obj)
    manifest = {
        "format": "spikecore-model",
        "version": 1,
        "input_shape": list(input_shape),
        "layers": entries,
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=False) + "\n", encoding="utf-8"
    )

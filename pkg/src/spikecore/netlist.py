"""Netlist file format: a self-describing JSON document.

Schema (version 1):

    {
      "format": "spikecore-netlist",
      "version": 1,
      "config": {"max_fanout": 4096, "membrane_bits": 32},
      "models": {"m0": {"kind": "lif", "threshold": 3,
                        "noise_shift": -17, "leak_shift": 63},
                 "m1": {"kind": "binary", "threshold": 5,
                        "noise_shift": 2}},
      "axons":   [[key, [[target, weight], ...]], ...],
      "neurons": [[key, model_name, [[target, weight], ...]], ...],
      "outputs": [key, ...]
    }

Axon and neuron keys may be strings or integers; section entries are
pair lists rather than JSON objects so integer keys survive a round
trip. Binary models omit "leak_shift". Declaration order is preserved
and is what fixes the index assignment of a rebuilt network.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import FormatError
from .models import NeuronKind, NeuronModel
from .network import Network, NetworkConfig, build_network

FORMAT_NAME = "spikecore-netlist"
VERSION = 1


def _model_to_obj(model: NeuronModel) -> dict:
    obj = {
        "kind": model.kind.value,
        "threshold": model.threshold,
        "noise_shift": model.noise_shift,
    }
    if model.kind is NeuronKind.LIF:
        obj["leak_shift"] = model.leak_shift
    return obj


def _model_from_obj(name: str, obj) -> NeuronModel:
    if not isinstance(obj, dict):
        raise FormatError(f"model {name!r} must be an object")
    try:
        kind = NeuronKind(obj["kind"])
    except (KeyError, ValueError):
        raise FormatError(f"model {name!r} has an unknown kind") from None
    missing = {"threshold", "noise_shift"} - obj.keys()
    if missing:
        raise FormatError(f"model {name!r} lacks fields {sorted(missing)}")
    if kind is NeuronKind.LIF:
        return NeuronModel(kind, obj["threshold"], obj["noise_shift"], obj.get("leak_shift"))
    return NeuronModel(kind, obj["threshold"], obj["noise_shift"])


def dumps_network(net: Network) -> str:
    """Serialise; model names are generated in model index order."""
    names = {model: f"m{i}" for i, model in enumerate(net.symtab.models)}
    doc = {
        "format": FORMAT_NAME,
        "version": VERSION,
        "config": {
            "max_fanout": net.config.max_fanout,
            "membrane_bits": net.config.membrane_bits,
        },
        "models": {names[m]: _model_to_obj(m) for m in net.symtab.models},
        "axons": [[key, [[p, w] for p, w in syns]] for key, syns in net.axon_synapses.items()],
        "neurons": [
            [key, names[net.neuron_models[key]], [[p, w] for p, w in syns]]
            for key, syns in net.neuron_synapses.items()
        ],
        "outputs": list(net.outputs),
    }
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def loads_network(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"netlist is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise FormatError("not a spikecore netlist")
    if doc.get("version") != VERSION:
        raise FormatError(f"unsupported netlist version {doc.get('version')!r}")
    for section in ("models", "axons", "neurons", "outputs"):
        if section not in doc:
            raise FormatError(f"netlist lacks the {section!r} section")

    models = {name: _model_from_obj(name, obj) for name, obj in doc["models"].items()}

    def synapses(raw, where):
        out = []
        for item in raw:
            if not isinstance(item, list) or len(item) != 2:
                raise FormatError(f"{where}: synapse entries must be [target, weight] pairs")
            out.append((item[0], item[1]))
        return out

    axons = []
    for entry in doc["axons"]:
        if not isinstance(entry, list) or len(entry) != 2:
            raise FormatError("axon entries must be [key, synapses] pairs")
        key, syns = entry
        axons.append((key, synapses(syns, f"axon {key!r}")))
    neurons = []
    for entry in doc["neurons"]:
        if not isinstance(entry, list) or len(entry) != 3:
            raise FormatError("neuron entries must be [key, model, synapses] triples")
        key, model_name, syns = entry
        if model_name not in models:
            raise FormatError(f"neuron {key!r} names unknown model {model_name!r}")
        neurons.append((key, (synapses(syns, f"neuron {key!r}"), models[model_name])))

    cfg = doc.get("config", {})
    config = NetworkConfig(
        max_fanout=cfg.get("max_fanout", NetworkConfig.max_fanout),
        membrane_bits=cfg.get("membrane_bits", NetworkConfig.membrane_bits),
    )
    return build_network(axons, neurons, doc["outputs"], config)


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(dumps_network(net), encoding="utf-8")


def load_network(path: str | Path) -> Network:
    return loads_network(Path(path).read_text(encoding="utf-8"))

"""Network description: axons, neurons, synapses, outputs.

`build_network` validates a description once and assigns dense integer
indices. Axons are numbered in insertion order. Neurons are numbered
grouped by model (models ordered by first appearance, insertion order
within a group) so that compiled images can store model membership as
contiguous index ranges.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field

from .errors import (
    DanglingTarget,
    DuplicateKey,
    DuplicateSynapse,
    FanOutExceeded,
    NoSuchSynapse,
    SpikeCoreError,
    UnknownOutputKey,
    WeightOverflow,
)
from .models import WEIGHT_MAX, WEIGHT_MIN, NeuronModel

Key = str | int
Synapse = tuple[Key, int]

DEFAULT_FANOUT_CAP = 4096


@dataclass(frozen=True)
class NetworkConfig:
    """Build-time limits. `membrane_bits` sets the saturation bounds."""

    max_fanout: int = DEFAULT_FANOUT_CAP
    membrane_bits: int = 32


@dataclass
class SymbolTable:
    """Key/index maps shared by the simulator backends and the compiler."""

    axon_keys: list[Key]
    neuron_keys: list[Key]
    models: list[NeuronModel]
    neuron_model: list[int]
    model_groups: list[tuple[int, int]]
    axon_index: dict[Key, int] = field(default_factory=dict)
    neuron_index: dict[Key, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.axon_index:
            self.axon_index = {k: i for i, k in enumerate(self.axon_keys)}
        if not self.neuron_index:
            self.neuron_index = {k: i for i, k in enumerate(self.neuron_keys)}

    @property
    def num_axons(self) -> int:
        return len(self.axon_keys)

    @property
    def num_neurons(self) -> int:
        return len(self.neuron_keys)


class Network:
    """Validated network; immutable except through `set_weight`."""

    def __init__(
        self,
        axon_synapses: dict[Key, list[Synapse]],
        neuron_synapses: dict[Key, list[Synapse]],
        neuron_models: dict[Key, NeuronModel],
        outputs: list[Key],
        config: NetworkConfig,
        symtab: SymbolTable,
    ):
        self.axon_synapses = axon_synapses
        self.neuron_synapses = neuron_synapses
        self.neuron_models = neuron_models
        self.outputs = outputs
        self.config = config
        self.symtab = symtab
        self._weight: dict[tuple[bool, Key, Key], int] | None = None

    def _weights(self) -> dict[tuple[bool, Key, Key], int]:
        # built on first key-level access; large converted nets never need it
        if self._weight is None:
            table: dict[tuple[bool, Key, Key], int] = {}
            for pre, syns in self.axon_synapses.items():
                for post, w in syns:
                    table[(True, pre, post)] = w
            for pre, syns in self.neuron_synapses.items():
                for post, w in syns:
                    table[(False, pre, post)] = w
            self._weight = table
        return self._weight

    @property
    def num_axons(self) -> int:
        return self.symtab.num_axons

    @property
    def num_neurons(self) -> int:
        return self.symtab.num_neurons

    def num_synapses(self) -> int:
        return sum(len(s) for s in self.axon_synapses.values()) + sum(
            len(s) for s in self.neuron_synapses.values()
        )

    def source_is_axon(self, pre: Key) -> bool:
        """True for an axon key; raises NoSuchSynapse for unknown sources."""
        if pre in self.symtab.axon_index:
            return True
        if pre in self.symtab.neuron_index:
            return False
        raise NoSuchSynapse(f"unknown source key {pre!r}")

    def has_synapse(self, pre: Key, post: Key) -> bool:
        try:
            return (self.source_is_axon(pre), pre, post) in self._weights()
        except NoSuchSynapse:
            return False

    def get_weight(self, pre: Key, post: Key) -> int:
        is_axon = self.source_is_axon(pre)
        try:
            return self._weights()[(is_axon, pre, post)]
        except KeyError:
            raise NoSuchSynapse(f"no synapse from {pre!r} to {post!r}") from None

    def set_weight(self, pre: Key, post: Key, weight: int) -> None:
        """Rewrite an existing synapse weight; the topology never changes."""
        weight = _check_weight(pre, post, weight)
        is_axon = self.source_is_axon(pre)
        if (is_axon, pre, post) not in self._weights():
            raise NoSuchSynapse(f"no synapse from {pre!r} to {post!r}")
        self._weights()[(is_axon, pre, post)] = weight
        syns = self.axon_synapses[pre] if is_axon else self.neuron_synapses[pre]
        for i, (tgt, _) in enumerate(syns):
            if tgt == post:
                syns[i] = (post, weight)
                return

    def sorted_targets(self, pre: Key) -> list[tuple[int, int]]:
        """(target index, weight) pairs sorted ascending by target index."""
        if pre in self.symtab.axon_index:
            syns = self.axon_synapses[pre]
        else:
            syns = self.neuron_synapses[pre]
        idx = self.symtab.neuron_index
        return sorted((idx[post], w) for post, w in syns)

    def structurally_equal(self, other: "Network") -> bool:
        """Topology, weights, models, outputs and config agree.

        Synapse list order and key insertion order are representation
        details and do not participate; outputs compare as a set because
        the image format stores output designation as per-neuron flags.
        """
        if self.config != other.config:
            return False
        if set(self.axon_synapses) != set(other.axon_synapses):
            return False
        if set(self.neuron_synapses) != set(other.neuron_synapses):
            return False
        if self.neuron_models != other.neuron_models:
            return False
        if set(self.outputs) != set(other.outputs):
            return False
        for pre, syns in self.axon_synapses.items():
            if dict(syns) != dict(other.axon_synapses[pre]):
                return False
        for pre, syns in self.neuron_synapses.items():
            if dict(syns) != dict(other.neuron_synapses[pre]):
                return False
        return True


def _check_key(key: Key, where: str) -> Key:
    if not isinstance(key, (str, int)):
        raise SpikeCoreError(f"{where} key {key!r} must be a string or integer")
    return key


def _check_weight(pre: Key, post: Key, weight) -> int:
    try:
        weight = operator.index(weight)
    except TypeError:
        raise WeightOverflow(f"weight {weight!r} on ({pre!r}, {post!r}) is not an integer") from None
    if not WEIGHT_MIN <= weight <= WEIGHT_MAX:
        raise WeightOverflow(f"weight {weight} on ({pre!r}, {post!r}) outside signed 16-bit range")
    return weight


def _normalise_synapses(pre: Key, raw, cap: int) -> list[Synapse]:
    syns: list[Synapse] = []
    append = syns.append
    seen: set[Key] = set()
    add = seen.add
    for post, weight in raw:
        tp = type(post)
        if tp is not str and tp is not int:
            _check_key(post, "synapse target")
        if post in seen:
            raise DuplicateSynapse(f"duplicate synapse ({pre!r}, {post!r})")
        add(post)
        if type(weight) is int and WEIGHT_MIN <= weight <= WEIGHT_MAX:
            append((post, weight))
        else:
            append((post, _check_weight(pre, post, weight)))
    if len(syns) > cap:
        raise FanOutExceeded(f"source {pre!r} has fan-out {len(syns)} > cap {cap}")
    return syns


def tile_network(net: "Network", copies: int, joiner: str = ".") -> "Network":
    """Disjoint union of `copies` renamed instances of a network.

    Copy i of key k becomes f"c{i}{joiner}{k}". No synapse crosses
    copies, so spike counts, access counts and cycle counts all scale
    exactly linearly in the copy count; this is the substrate for the
    size-scaling study.
    """
    if copies < 1:
        raise SpikeCoreError(f"copy count must be >= 1, got {copies}")
    axons: dict[Key, list[Synapse]] = {}
    neurons: list[tuple[Key, tuple[list[Synapse], NeuronModel]]] = []
    outputs: list[Key] = []
    for i in range(copies):
        tag = f"c{i}{joiner}"
        for pre, syns in net.axon_synapses.items():
            axons[f"{tag}{pre}"] = [(f"{tag}{post}", w) for post, w in syns]
        for key, syns in net.neuron_synapses.items():
            renamed = [(f"{tag}{post}", w) for post, w in syns]
            neurons.append((f"{tag}{key}", (renamed, net.neuron_models[key])))
        outputs.extend(f"{tag}{key}" for key in net.outputs)
    return build_network(axons, neurons, outputs, net.config)


def build_network(
    axons,
    neurons,
    outputs,
    config: NetworkConfig | None = None,
) -> Network:
    """Validate a description and assign dense indices.

    `axons`: mapping or (key, synapse list) pairs; a synapse list holds
    (target neuron key, weight) pairs. `neurons`: mapping or pairs of
    key -> (synapse list, NeuronModel). `outputs`: neuron keys whose
    spikes the network reports.
    """
    config = config or NetworkConfig()

    axon_items = list(axons.items()) if isinstance(axons, dict) else [tuple(p) for p in axons]
    neuron_items = list(neurons.items()) if isinstance(neurons, dict) else [tuple(p) for p in neurons]

    axon_keys: list[Key] = []
    seen_axons: set[Key] = set()
    for key, _ in axon_items:
        _check_key(key, "axon")
        if key in seen_axons:
            raise DuplicateKey(f"axon key {key!r} declared twice")
        seen_axons.add(key)
        axon_keys.append(key)

    neuron_order: list[Key] = []
    neuron_models: dict[Key, NeuronModel] = {}
    raw_neuron_syn: dict[Key, object] = {}
    for key, (syns, model) in neuron_items:
        _check_key(key, "neuron")
        if key in neuron_models:
            raise DuplicateKey(f"neuron key {key!r} declared twice")
        if key in seen_axons:
            raise DuplicateKey(f"key {key!r} names both an axon and a neuron")
        if not isinstance(model, NeuronModel):
            raise SpikeCoreError(f"neuron {key!r} model must be a NeuronModel, got {type(model).__name__}")
        neuron_models[key] = model
        raw_neuron_syn[key] = syns
        neuron_order.append(key)

    axon_syn: dict[Key, list[Synapse]] = {}
    for key, syns in axon_items:
        axon_syn[key] = _normalise_synapses(key, syns, config.max_fanout)
    neuron_syn: dict[Key, list[Synapse]] = {}
    for key in neuron_order:
        neuron_syn[key] = _normalise_synapses(key, raw_neuron_syn[key], config.max_fanout)

    neuron_set = set(neuron_order)
    for pre, syns in list(axon_syn.items()) + list(neuron_syn.items()):
        for post, _ in syns:
            if post not in neuron_set:
                raise DanglingTarget(f"synapse from {pre!r} targets unknown neuron {post!r}")

    out_list: list[Key] = []
    seen_out: set[Key] = set()
    for key in outputs:
        if key not in neuron_set:
            raise UnknownOutputKey(f"output key {key!r} is not a neuron")
        if key not in seen_out:
            seen_out.add(key)
            out_list.append(key)

    # group neurons by model value, models ordered by first appearance
    models: list[NeuronModel] = []
    model_of: dict[NeuronModel, int] = {}
    for key in neuron_order:
        m = neuron_models[key]
        if m not in model_of:
            model_of[m] = len(models)
            models.append(m)
    position = {k: i for i, k in enumerate(neuron_order)}
    neuron_keys = sorted(
        neuron_order,
        key=lambda k: (model_of[neuron_models[k]], position[k]),
    )
    neuron_model_idx = [model_of[neuron_models[k]] for k in neuron_keys]
    groups: list[tuple[int, int]] = []
    start = 0
    for mi in range(len(models)):
        end = start
        while end < len(neuron_keys) and neuron_model_idx[end] == mi:
            end += 1
        groups.append((start, end))
        start = end

    symtab = SymbolTable(
        axon_keys=axon_keys,
        neuron_keys=neuron_keys,
        models=models,
        neuron_model=neuron_model_idx,
        model_groups=groups,
    )
    return Network(axon_syn, neuron_syn, neuron_models, out_list, config, symtab)

"""User-facing stepping interface over either backend.

Both backends implement identical semantics; `backend="oracle"` computes
over dense weight columns, `backend="engine"` reads weights out of a
compiled memory image and additionally counts HBM row accesses.
"""

from __future__ import annotations

import numpy as np

from . import hbm
from .engine import EngineBackend, StepCounters
from .errors import NoSuchSynapse, UnknownAxonKey, UnknownNeuronKey
from .hbm import HbmImage, compile_network
from .network import Key, Network
from .oracle import DenseWeights, oracle_step
from .state import ModelArrays, SimState


class Simulation:
    """Stateful stepping over a network.

    Construct from a Network (compiled on demand for the engine backend)
    or from a previously compiled image. Output spike keys are reported
    in ascending neuron index order.
    """

    def __init__(
        self,
        network: Network | None = None,
        backend: str = "oracle",
        seed: int = 0,
        image: HbmImage | None = None,
    ):
        if backend not in ("oracle", "engine"):
            raise ValueError(f"unknown backend {backend!r}")
        if network is None and image is None:
            raise ValueError("either a network or an image is required")
        self.backend_name = backend
        self.network = network
        self.image = image
        self.counters = StepCounters()

        if backend == "engine":
            if self.image is None:
                self.image = compile_network(network)
            self._engine = EngineBackend(self.image)
            self.symtab = self.image.symtab
            self._out_mask = self._engine.output_mask
            bits = self.image.config.membrane_bits
        else:
            if self.network is None:
                self.network = hbm.decompile(image)
            self._dense = DenseWeights.from_network(self.network)
            self._marrays = ModelArrays.from_symtab(self.network.symtab)
            self.symtab = self.network.symtab
            self._out_mask = np.zeros(self.symtab.num_neurons, dtype=bool)
            for key in self.network.outputs:
                self._out_mask[self.symtab.neuron_index[key]] = True
            bits = self.network.config.membrane_bits
        self._sat_min = -(1 << (bits - 1))
        self._sat_max = (1 << (bits - 1)) - 1
        self.state = SimState.fresh(self.symtab.num_axons, self.symtab.num_neurons, seed)

    def reset(self, seed: int | None = None) -> None:
        if seed is None:
            seed = self.state.rng.seed
        self.state = SimState.fresh(self.symtab.num_axons, self.symtab.num_neurons, seed)
        self.counters = StepCounters()

    def _input_indices(self, inputs) -> np.ndarray:
        idxs = set()
        for key in inputs:
            if key not in self.symtab.axon_index:
                raise UnknownAxonKey(f"input activates unknown axon {key!r}")
            idxs.add(self.symtab.axon_index[key])
        return np.array(sorted(idxs), dtype=np.int64)

    def step(self, inputs=(), membrane_potential: bool = False):
        """Advance one timestep with the given axon activations.

        Returns the keys of output neurons that spiked, or a
        (spikes, membrane vector copy) pair with `membrane_potential`.
        """
        input_arr = self._input_indices(inputs)
        if self.backend_name == "engine":
            fired, counters = self._engine.step(self.state, input_arr)
            self.counters.add(counters)
        else:
            fired = oracle_step(
                self._dense, self._marrays, self.state, input_arr, self._sat_min, self._sat_max
            )
        out = fired[self._out_mask[fired]]
        spikes = [self.symtab.neuron_keys[i] for i in out]
        if membrane_potential:
            return spikes, self.state.membrane.copy()
        return spikes

    def read_membrane(self, keys):
        """Membrane potentials for the given neuron keys."""
        out = []
        for key in keys:
            if key not in self.symtab.neuron_index:
                raise UnknownNeuronKey(f"unknown neuron {key!r}")
            out.append(int(self.state.membrane[self.symtab.neuron_index[key]]))
        return out

    def read_synapse(self, pre: Key, post: Key) -> int:
        """Current weight; the engine backend reads it out of the image."""
        if self.network is not None and not self.network.has_synapse(pre, post):
            raise NoSuchSynapse(f"no synapse from {pre!r} to {post!r}")
        if self.backend_name == "engine":
            return hbm.read_weight(self.image, pre, post, include_zero_weight=self.network is not None)
        return self.network.get_weight(pre, post)

    def write_synapse(self, pre: Key, post: Key, weight: int) -> None:
        """Rewrite an existing synapse weight; topology never changes."""
        if self.network is not None:
            self.network.set_weight(pre, post, weight)
            if self.backend_name == "oracle":
                is_axon = self.network.source_is_axon(pre)
                pre_idx = (
                    self.symtab.axon_index[pre] if is_axon else self.symtab.neuron_index[pre]
                )
                self._dense.write(is_axon, pre_idx, self.symtab.neuron_index[post], weight)
        if self.backend_name == "engine":
            hbm.patch_weight(
                self.image, pre, post, weight, include_zero_weight=self.network is not None
            )

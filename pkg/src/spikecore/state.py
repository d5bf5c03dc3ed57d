"""Mutable per-run state shared by the execution backends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import SymbolTable
from .models import NeuronKind
from .rng import SplitMix64


@dataclass
class ModelArrays:
    """Per-neuron model parameters in vector form (index order)."""

    threshold: np.ndarray
    noise_shift: np.ndarray
    leak_shift: np.ndarray
    is_binary: np.ndarray

    @classmethod
    def from_symtab(cls, symtab: SymbolTable) -> "ModelArrays":
        n = symtab.num_neurons
        threshold = np.zeros(n, dtype=np.int64)
        noise_shift = np.zeros(n, dtype=np.int64)
        leak_shift = np.zeros(n, dtype=np.int64)
        is_binary = np.zeros(n, dtype=bool)
        for i, mi in enumerate(symtab.neuron_model):
            model = symtab.models[mi]
            threshold[i] = model.threshold
            noise_shift[i] = model.noise_shift
            is_binary[i] = model.kind is NeuronKind.BINARY
            leak_shift[i] = 0 if model.leak_shift is None else model.leak_shift
        return cls(threshold, noise_shift, leak_shift, is_binary)

    @property
    def num_neurons(self) -> int:
        return self.threshold.shape[0]


@dataclass
class SimState:
    """Membrane potentials, last-step spike flags, time and RNG position."""

    membrane: np.ndarray
    fired_axons: np.ndarray
    fired_neurons: np.ndarray
    t: int
    rng: SplitMix64

    @classmethod
    def fresh(cls, num_axons: int, num_neurons: int, seed: int = 0) -> "SimState":
        return cls(
            membrane=np.zeros(num_neurons, dtype=np.int64),
            fired_axons=np.zeros(num_axons, dtype=bool),
            fired_neurons=np.zeros(num_neurons, dtype=bool),
            t=0,
            rng=SplitMix64(seed),
        )

    def clone(self) -> "SimState":
        return SimState(
            membrane=self.membrane.copy(),
            fired_axons=self.fired_axons.copy(),
            fired_neurons=self.fired_neurons.copy(),
            t=self.t,
            rng=self.rng.clone(),
        )

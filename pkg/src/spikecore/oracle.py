"""Dense reference backend.

Executes one timestep over the whole network with vector arithmetic. This
is the ground-truth implementation the event-driven engine is checked
against: both must produce bit-identical membranes and spikes for any
network and seed.

Synaptic integration applies one saturating add per (source, target) pair,
sources in ascending order (axons before neurons). Within a single source
the targets are distinct, so a vectorised clipped add over its column is
exactly the sequential result.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NoSuchSynapse
from .models import noise_block
from .network import Network
from .state import ModelArrays, SimState


class DenseWeights:
    """Synaptic weights as per-source index/weight columns.

    Logically the neurons x axons and neurons x neurons weight matrices;
    stored sparse by source column. The contract is value-exact integer
    arithmetic, not representation.
    """

    def __init__(self, num_axons: int, num_neurons: int):
        self.num_axons = num_axons
        self.num_neurons = num_neurons
        self.axon_posts: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * num_axons
        self.axon_weights: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * num_axons
        self.neuron_posts: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * num_neurons
        self.neuron_weights: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * num_neurons

    @classmethod
    def from_network(cls, net: Network) -> "DenseWeights":
        dense = cls(net.num_axons, net.num_neurons)
        for key, i in net.symtab.axon_index.items():
            pairs = net.sorted_targets(key)
            dense.axon_posts[i] = np.array([p for p, _ in pairs], dtype=np.int64)
            dense.axon_weights[i] = np.array([w for _, w in pairs], dtype=np.int64)
        for key, i in net.symtab.neuron_index.items():
            pairs = net.sorted_targets(key)
            dense.neuron_posts[i] = np.array([p for p, _ in pairs], dtype=np.int64)
            dense.neuron_weights[i] = np.array([w for _, w in pairs], dtype=np.int64)
        return dense

    def axon_matrix(self) -> np.ndarray:
        """Dense neurons x axons matrix (for tests and small networks)."""
        m = np.zeros((self.num_neurons, self.num_axons), dtype=np.int64)
        for j in range(self.num_axons):
            m[self.axon_posts[j], j] = self.axon_weights[j]
        return m

    def neuron_matrix(self) -> np.ndarray:
        m = np.zeros((self.num_neurons, self.num_neurons), dtype=np.int64)
        for j in range(self.num_neurons):
            m[self.neuron_posts[j], j] = self.neuron_weights[j]
        return m

    def write(self, is_axon: bool, pre: int, post: int, weight: int) -> None:
        posts = self.axon_posts[pre] if is_axon else self.neuron_posts[pre]
        weights = self.axon_weights[pre] if is_axon else self.neuron_weights[pre]
        hits = np.flatnonzero(posts == post)
        if hits.size == 0:
            raise NoSuchSynapse(f"no synapse from index {pre} to {post}")
        weights[hits[0]] = weight


def oracle_step(
    weights: DenseWeights,
    marrays: ModelArrays,
    state: SimState,
    input_axons: np.ndarray,
    sat_min: int,
    sat_max: int,
) -> np.ndarray:
    """Advance one timestep; returns the fired neuron indices (ascending).

    `input_axons` must be sorted unique axon indices. Noise draws are
    consumed for every neuron in index order, including neurons whose
    noise shift disables noise, so RNG streams stay aligned across
    backends and configurations.
    """
    n = marrays.num_neurons
    if state.membrane.shape[0] != n or weights.num_neurons != n:
        raise DimensionMismatch(
            f"state has {state.membrane.shape[0]} neurons, weights {weights.num_neurons}, models {n}"
        )
    if state.fired_axons.shape[0] != weights.num_axons:
        raise DimensionMismatch(
            f"state has {state.fired_axons.shape[0]} axons, weights {weights.num_axons}"
        )

    raws = state.rng.next_raw_block(n)
    noise = noise_block(raws, marrays.noise_shift)
    v = np.clip(state.membrane + noise, sat_min, sat_max)

    fired_mask = v > marrays.threshold
    v = np.where(fired_mask, 0, v)

    v = np.where(marrays.is_binary, 0, v - (v >> marrays.leak_shift))

    for j in input_axons:
        posts = weights.axon_posts[j]
        if posts.size:
            v[posts] = np.clip(v[posts] + weights.axon_weights[j], sat_min, sat_max)
    fired = np.flatnonzero(fired_mask)
    for j in fired:
        posts = weights.neuron_posts[j]
        if posts.size:
            v[posts] = np.clip(v[posts] + weights.neuron_weights[j], sat_min, sat_max)

    state.membrane = v
    state.fired_axons[:] = False
    state.fired_axons[input_axons] = True
    state.fired_neurons = fired_mask
    state.t += 1
    return fired

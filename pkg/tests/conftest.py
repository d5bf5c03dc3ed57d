"""Shared fixtures: the four-neuron demo network and random corpora."""

import numpy as np
import pytest

from spikecore import binary, build_network, lif


def example_network(noisy=False, config=None):
    """Two axons driving four neurons; outputs a and b.

    With noisy=True neuron d carries membrane noise (shift 2), otherwise
    every model runs noise-free so traces are exactly reproducible.
    """
    slow_leak = lif(3, -17, 63)
    fast_leak = lif(4, -17, 2)
    gate = binary(5, 2 if noisy else -17)
    axons = {"alpha": [("a", 3), ("c", 2)], "beta": [("b", 3)]}
    neurons = {
        "a": ([("b", 1), ("d", 2)], slow_leak),
        "b": ([], slow_leak),
        "c": ([], fast_leak),
        "d": ([("c", 1)], gate),
    }
    return build_network(axons, neurons, ["a", "b"], config)


# membranes of (a, b, c, d) after each step when alpha and beta fire every step
TRACE_EVERY_STEP = [
    ([], (3, 3, 2, 0)),
    ([], (6, 6, 4, 0)),
    (["a", "b"], (3, 4, 5, 2)),
    (["b"], (6, 3, 2, 0)),
    (["a"], (3, 7, 4, 2)),
]

# inputs on the first two steps only, then a silent step
TRACE_TWO_THEN_IDLE = [
    ([], (3, 3, 2, 0)),
    ([], (6, 6, 4, 0)),
    (["a", "b"], (0, 1, 3, 2)),
]


@pytest.fixture
def demo_net():
    return example_network()


@pytest.fixture
def noisy_net():
    return example_network(noisy=True)


def _nonzero_weight(rng):
    w = 0
    while w == 0:
        w = int(rng.integers(-32768, 32768))
    return w


def random_network(rng, num_axons=None, num_neurons=None, max_fanout=8, noisy=True):
    """Random well-formed network.

    Weights are nonzero on purpose: the image format cannot tell a
    zero-weight synapse from padding, so round-trip corpora avoid them.
    """
    if num_neurons is None:
        # log-uniform 4..512 keeps most nets small but exercises big ones
        num_neurons = int(np.exp(rng.uniform(np.log(4), np.log(512))))
    if num_axons is None:
        num_axons = int(rng.integers(1, max(2, num_neurons // 2)))
    models = [
        lif(int(rng.integers(1, 60)), -17, int(rng.integers(0, 8))),
        lif(int(rng.integers(1, 60)), int(rng.integers(-5, 3)) if noisy else -17, 63),
        binary(int(rng.integers(0, 40)), int(rng.integers(-8, 2)) if noisy else -17),
        binary(int(rng.integers(1, 20)), -17),
    ]
    axon_keys = [f"x{i}" for i in range(num_axons)]
    neuron_keys = [f"n{i}" for i in range(num_neurons)]

    def targets():
        k = int(rng.integers(0, max_fanout + 1))
        picks = rng.choice(num_neurons, size=min(k, num_neurons), replace=False)
        return [(neuron_keys[int(t)], _nonzero_weight(rng)) for t in picks]

    axons = {k: targets() for k in axon_keys}
    neurons = {
        k: (targets(), models[int(rng.integers(0, len(models)))]) for k in neuron_keys
    }
    n_out = int(rng.integers(1, num_neurons + 1))
    out_picks = rng.choice(num_neurons, size=n_out, replace=False)
    outputs = [neuron_keys[int(i)] for i in sorted(out_picks)]
    return build_network(axons, neurons, outputs)


def random_schedule(rng, axon_keys, steps, rate=0.3):
    sched = []
    for _ in range(steps):
        mask = rng.random(len(axon_keys)) < rate
        sched.append([axon_keys[int(i)] for i in np.flatnonzero(mask)])
    return sched

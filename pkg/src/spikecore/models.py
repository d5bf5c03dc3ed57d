"""Integer neuron arithmetic.

Per-timestep order for one neuron:

1. add a shifted-noise sample to the membrane potential,
2. compare strictly against the threshold; on a spike reset the potential to 0,
3. decay: leaky integrators subtract a power-of-two fraction, binary neurons
   clear to 0,
4. integrate the synaptic input of the step.

All membrane arithmetic saturates at the signed 32-bit bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import SpikeCoreError
from .rng import SplitMix64

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1
WEIGHT_MIN = -(1 << 15)
WEIGHT_MAX = (1 << 15) - 1

# Right shifts of 17 or more push the whole 17-bit draw out, so this
# noise_shift value (and anything below it) disables noise exactly.
NOISE_OFF = -17

NOISE_SHIFT_MIN = -32
NOISE_SHIFT_MAX = 31
LEAK_SHIFT_MAX = 63


class NeuronKind(str, Enum):
    LIF = "lif"
    BINARY = "binary"


@dataclass(frozen=True)
class NeuronModel:
    """Behavioural parameters shared by a group of neurons.

    `leak_shift` selects the decay fraction 2**-leak_shift for leaky
    integrators; 63 means effectively no decay for non-negative potentials.
    Binary neurons keep no potential across steps and take no leak_shift.
    """

    kind: NeuronKind
    threshold: int
    noise_shift: int = NOISE_OFF
    leak_shift: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NeuronKind(self.kind))
        if not INT32_MIN <= self.threshold <= INT32_MAX:
            raise SpikeCoreError(f"threshold {self.threshold} outside signed 32-bit range")
        if not NOISE_SHIFT_MIN <= self.noise_shift <= NOISE_SHIFT_MAX:
            raise SpikeCoreError(f"noise_shift {self.noise_shift} outside [-32, 31]")
        if self.kind is NeuronKind.LIF:
            if self.leak_shift is None:
                object.__setattr__(self, "leak_shift", LEAK_SHIFT_MAX)
            if not 0 <= self.leak_shift <= LEAK_SHIFT_MAX:
                raise SpikeCoreError(f"leak_shift {self.leak_shift} outside [0, 63]")
        else:
            # binary neurons clear every step; a leak setting is meaningless
            object.__setattr__(self, "leak_shift", None)


def lif(threshold: int, noise_shift: int = NOISE_OFF, leak_shift: int = LEAK_SHIFT_MAX) -> NeuronModel:
    return NeuronModel(NeuronKind.LIF, threshold, noise_shift, leak_shift)


def binary(threshold: int, noise_shift: int = NOISE_OFF) -> NeuronModel:
    return NeuronModel(NeuronKind.BINARY, threshold, noise_shift)


def sat32(value: int) -> int:
    if value > INT32_MAX:
        return INT32_MAX
    if value < INT32_MIN:
        return INT32_MIN
    return value


def noise_sample(noise_shift: int, rng: SplitMix64) -> int:
    """One shifted noise value; always consumes exactly one draw.

    The raw 17-bit draw gets its lowest bit forced to 1 before shifting, so
    a shift of 0 yields odd values only. Shifts of -17 and below return
    exactly 0 (the draw is still consumed to keep streams aligned).
    """
    raw = rng.next_raw()
    if noise_shift <= NOISE_OFF:
        return 0
    raw |= 1
    if noise_shift > 0:
        return raw << noise_shift
    if noise_shift < 0:
        return raw >> -noise_shift
    return raw


def noise_block(raws: np.ndarray, noise_shifts: np.ndarray) -> np.ndarray:
    """Vectorised noise_sample over per-neuron raw draws (int64 in, int64 out)."""
    vals = raws | 1
    out = np.zeros_like(vals)
    pos = noise_shifts > 0
    neg = (noise_shifts < 0) & (noise_shifts > NOISE_OFF)
    zero = noise_shifts == 0
    if pos.any():
        out[pos] = np.left_shift(vals[pos], noise_shifts[pos])
    if neg.any():
        out[neg] = np.right_shift(vals[neg], -noise_shifts[neg])
    if zero.any():
        out[zero] = vals[zero]
    return out


def threshold_and_reset(potential: int, threshold: int) -> tuple[bool, int]:
    """Strict comparison; a spike resets the potential to zero."""
    if potential > threshold:
        return True, 0
    return False, potential


def leak(potential: int, leak_shift: int) -> int:
    """potential - floor(potential / 2**leak_shift), floor toward -inf."""
    return potential - (potential >> leak_shift)


def step_neuron(
    model: NeuronModel,
    potential: int,
    synaptic_input: int,
    rng: SplitMix64,
) -> tuple[bool, int]:
    """Advance a single neuron one timestep and return (spiked, potential)."""
    v = sat32(potential + noise_sample(model.noise_shift, rng))
    spiked, v = threshold_and_reset(v, model.threshold)
    if model.kind is NeuronKind.LIF:
        v = leak(v, model.leak_shift)
    else:
        v = 0
    v = sat32(v + synaptic_input)
    return spiked, v

"""Single-neuron arithmetic: noise, threshold, leak, saturation."""

import numpy as np
import pytest

from spikecore import (
    NOISE_OFF,
    NeuronModel,
    SpikeCoreError,
    SplitMix64,
    binary,
    lif,
    noise_sample,
    sat32,
    step_neuron,
)
from spikecore.models import (
    INT32_MAX,
    INT32_MIN,
    leak,
    noise_block,
    threshold_and_reset,
)


class FixedRaw:
    """Stub random source returning preset raw draws."""

    def __init__(self, *values):
        self.values = list(values)
        self.calls = 0

    def next_raw(self):
        self.calls += 1
        return self.values.pop(0)


def test_noise_shift_values():
    # lsb is forced to 1 before shifting
    assert noise_sample(0, FixedRaw(4)) == 5
    assert noise_sample(2, FixedRaw(3)) == 12
    assert noise_sample(-1, FixedRaw(-6)) == -3
    assert noise_sample(1, FixedRaw(-6)) == -10
    assert noise_sample(-17, FixedRaw(12345)) == 0
    assert noise_sample(-32, FixedRaw(99)) == 0


def test_noise_always_consumes_a_draw():
    src = FixedRaw(1, 2, 3)
    noise_sample(-17, src)
    noise_sample(-20, src)
    noise_sample(0, src)
    assert src.calls == 3


def test_noise_zero_shift_is_odd_and_bounded():
    rng = SplitMix64(11)
    vals = [noise_sample(0, rng) for _ in range(4096)]
    assert all(v % 2 != 0 for v in vals)
    assert min(vals) >= -65535 and max(vals) <= 65535
    sigma = 65536 / np.sqrt(3)
    assert abs(np.mean(vals)) < 3 * sigma / np.sqrt(len(vals))


def test_noise_off_matches_deep_negative_shift():
    a = [noise_sample(-17, SplitMix64(s)) for s in range(20)]
    b = [noise_sample(-32, SplitMix64(s)) for s in range(20)]
    assert a == b == [0] * 20


def test_noise_block_matches_scalar_rules():
    rng = np.random.default_rng(5)
    raws = rng.integers(-65536, 65536, size=300).astype(np.int64)
    shifts = rng.integers(-32, 32, size=300).astype(np.int64)

    def scalar(raw, shift):
        if shift <= NOISE_OFF:
            return 0
        raw |= 1
        if shift > 0:
            return raw << shift
        if shift < 0:
            return raw >> -shift
        return raw

    got = noise_block(raws, shifts)
    want = [scalar(int(r), int(s)) for r, s in zip(raws, shifts)]
    assert got.tolist() == want


def test_threshold_is_strict():
    assert threshold_and_reset(3, 3) == (False, 3)
    assert threshold_and_reset(4, 3) == (True, 0)
    assert threshold_and_reset(0, -1) == (True, 0)
    assert threshold_and_reset(-5, 3) == (False, -5)


def test_leak_values():
    assert leak(8, 2) == 6
    assert leak(5, 63) == 5
    assert leak(-5, 63) == -4
    assert leak(2, 2) == 2
    assert leak(-8, 1) == -4
    assert leak(7, 0) == 0


def test_leak_never_grows_or_flips_sign():
    rng = np.random.default_rng(9)
    for _ in range(500):
        v = int(rng.integers(INT32_MIN, INT32_MAX + 1))
        shift = int(rng.integers(0, 64))
        out = leak(v, shift)
        assert abs(out) <= abs(v)
        assert out * v >= 0


def test_sat32_bounds():
    assert sat32(INT32_MAX + 5) == INT32_MAX
    assert sat32(INT32_MIN - 1) == INT32_MIN
    assert sat32(7) == 7


def test_step_neuron_lif():
    model = lif(3, -17, 63)
    spiked, v = step_neuron(model, 6, 2, SplitMix64(0))
    assert (spiked, v) == (True, 2)
    spiked, v = step_neuron(model, 3, 0, SplitMix64(0))
    assert (spiked, v) == (False, 3)


def test_step_neuron_binary_clears_membrane():
    model = binary(5, -17)
    spiked, v = step_neuron(model, 2, 3, SplitMix64(0))
    assert (spiked, v) == (False, 3)
    spiked, v = step_neuron(model, 9, 0, SplitMix64(0))
    assert (spiked, v) == (True, 0)


def test_step_neuron_saturates():
    model = lif(INT32_MAX, -17, 63)
    spiked, v = step_neuron(model, INT32_MAX - 1, 5, SplitMix64(0))
    assert (spiked, v) == (False, INT32_MAX)
    spiked, v = step_neuron(model, INT32_MIN + 1, -5, SplitMix64(0))
    assert (spiked, v) == (False, INT32_MIN)


def test_step_neuron_deterministic_per_seed():
    model = binary(5, 2)
    a = [step_neuron(model, 0, 1, SplitMix64(s)) for s in range(10)]
    b = [step_neuron(model, 0, 1, SplitMix64(s)) for s in range(10)]
    assert a == b


def test_model_validation():
    with pytest.raises(SpikeCoreError):
        lif(3, -33)
    with pytest.raises(SpikeCoreError):
        lif(3, 32)
    with pytest.raises(SpikeCoreError):
        lif(3, -17, 64)
    with pytest.raises(SpikeCoreError):
        lif(3, -17, -1)
    with pytest.raises(SpikeCoreError):
        lif(INT32_MAX + 1)
    with pytest.raises(SpikeCoreError):
        binary(INT32_MIN - 1)
    # binary neurons carry no leak parameter
    m = binary(5)
    assert m.leak_shift is None
    assert lif(5).leak_shift == 63


def test_models_hash_by_value():
    assert lif(3, -17, 63) == lif(3, -17, 63)
    assert len({lif(3), lif(3), binary(3)}) == 2
    assert isinstance(lif(1), NeuronModel)

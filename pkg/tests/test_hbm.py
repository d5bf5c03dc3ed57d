"""Memory image: placement, compile/decompile, verification, patching."""

import numpy as np
import pytest

from spikecore import (
    CapacityExceeded,
    CorruptImage,
    FormatError,
    NoSuchSynapse,
    WeightOverflow,
    build_network,
    compile_network,
    decompile,
    find_slot,
    image_from_bytes,
    lif,
    load_image,
    patch_weight,
    read_weight,
    verify_image,
)
from spikecore.hbm import (
    LANES,
    MAX_REGION_ROWS,
    encode_model,
    encode_pointer,
    encode_synapse,
    decode_model,
    decode_pointer,
    decode_synapse,
    place_source_synapses,
)
from spikecore.models import binary as binary_model
from conftest import example_network, random_network


def test_slot_encodings_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(200):
        post = int(rng.integers(0, 1 << 22))
        weight = int(rng.integers(-32768, 32768))
        flag = bool(rng.integers(0, 2))
        assert decode_synapse(encode_synapse(post, weight, flag)) == (True, flag, post, weight)
    for _ in range(50):
        base = int(rng.integers(0, 1 << 32))
        count = 2 * int(rng.integers(0, 1 << 11))
        assert decode_pointer(encode_pointer(base, count)) == (True, base, count)
    assert decode_pointer(0)[0] is False
    assert decode_synapse(0)[0] is False


def test_model_encoding_round_trip():
    from spikecore import NeuronModel

    models = [
        lif(3, -17, 63),
        lif(-5, 2, 0),
        lif((1 << 31) - 1, 31, 63),
        lif(-(1 << 31), -32, 1),
        binary_model(5, 2),
        binary_model(-1, -17),
    ]
    for m in models:
        back = decode_model(encode_model(m))
        assert isinstance(back, NeuronModel)
        assert back == m


def test_placement_collisions():
    # same lane three times -> three segments
    plan = place_source_synapses([(1, 9), (17, 8), (33, 7)])
    assert len(plan) == 3
    assert plan[0] == {1: (1, 9)}
    assert plan[1] == {1: (17, 8)}
    assert plan[2] == {1: (33, 7)}
    # sixteen distinct lanes share one segment
    plan = place_source_synapses([(i, 1) for i in range(16)])
    assert len(plan) == 1
    assert sorted(plan[0]) == list(range(16))
    # one collision -> two segments
    assert len(place_source_synapses([(0, 1), (16, 1)])) == 2


def test_placement_empty_source_is_full_placeholder_segment():
    plan = place_source_synapses([])
    assert len(plan) == 1
    assert plan[0] == {lane: (lane, 0) for lane in range(LANES)}


def test_demo_image_geometry(demo_net):
    image = compile_network(demo_net)
    g = image.geometry
    assert g.model_section == (0, 1)
    assert g.axon_ptr_section == (1, 3)
    assert g.neuron_ptr_section == (3, 5)
    assert g.synapse_section == (5, 17)
    assert g.total_rows == 17
    # every region in the demo net is a single segment
    for is_axon, count in ((True, 2), (False, 4)):
        for i in range(count):
            base, rows = image.pointer(is_axon, i)
            assert rows == 2
            assert 5 <= base < 17
    assert image.output_neuron_indices().tolist() == [0, 1]


def test_demo_verify_stats(demo_net):
    image = compile_network(demo_net)
    stats = verify_image(image)
    assert stats == {"segments": 6, "synapses": 6, "placeholders": 32, "flags": 2}


def test_output_flag_on_dedicated_segment():
    # output neuron with no inbound synapse gets a flag slot in its own region
    net = build_network({}, [("n", ([], lif(1)))], ["n"])
    image = compile_network(net)
    assert image.output_neuron_indices().tolist() == [0]
    back = decompile(image)
    assert back.outputs == ["n"]
    verify_image(image)


def test_round_trip_demo(demo_net):
    back = decompile(compile_network(demo_net))
    assert back.structurally_equal(demo_net)
    assert back.symtab.neuron_keys == demo_net.symtab.neuron_keys


def test_round_trip_random_corpus():
    rng = np.random.default_rng(1234)
    for _ in range(20):
        net = random_network(rng, num_neurons=int(rng.integers(2, 64)))
        image = compile_network(net)
        verify_image(image)
        assert decompile(image).structurally_equal(net)


def test_round_trip_two_layer_dense():
    # 784 -> 128 -> 10 dense stack, weights all nonzero
    rng = np.random.default_rng(9)
    hidden = [f"h{i}" for i in range(128)]
    outs = [f"o{i}" for i in range(10)]

    def w():
        v = 0
        while v == 0:
            v = int(rng.integers(-32768, 32768))
        return v

    axons = {f"a{i}": [(h, w()) for h in hidden] for i in range(784)}
    neurons = [(h, ([(o, w()) for o in outs], lif(40, -17, 63))) for h in hidden]
    neurons += [(o, ([], lif(40, -17, 63))) for o in outs]
    net = build_network(axons, neurons, outs)
    assert net.num_synapses() == 101632
    image = compile_network(net)
    # 128 targets spread over 16 lanes -> 8 segments = 16 rows per axon
    base, rows = image.pointer(True, 0)
    assert rows == 16
    stats = verify_image(image)
    assert stats["synapses"] == 101632
    back = decompile(image)
    assert back.structurally_equal(net)


def test_bytes_round_trip_and_determinism(tmp_path, demo_net):
    image = compile_network(demo_net)
    blob = image.tobytes()
    assert blob == compile_network(example_network()).tobytes()
    again = image_from_bytes(blob)
    assert np.array_equal(again.rows, image.rows)
    assert again.geometry == image.geometry
    assert again.symtab.neuron_keys == image.symtab.neuron_keys
    assert again.config == image.config

    path = tmp_path / "demo.img"
    image.save(path)
    loaded = load_image(path)
    assert np.array_equal(loaded.rows, image.rows)
    assert decompile(loaded).structurally_equal(demo_net)


def test_image_format_errors(demo_net):
    blob = compile_network(demo_net).tobytes()
    with pytest.raises(FormatError):
        image_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        image_from_bytes(blob[:40])
    with pytest.raises(FormatError):
        image_from_bytes(blob[:4] + (9).to_bytes(4, "little") + blob[8:])
    with pytest.raises(FormatError):
        image_from_bytes(blob[:-8])


def test_capacity_errors(demo_net):
    with pytest.raises(CapacityExceeded):
        compile_network(demo_net, capacity_rows=10)

    # one source hitting the same lane often enough to overflow the
    # 12-bit region row count: every 16th neuron index is lane 0
    collisions = MAX_REGION_ROWS // 2 + 1
    total = 16 * collisions
    neurons = [(f"n{i}", ([], lif(1))) for i in range(total)]
    targets = [(f"n{i}", 1) for i in range(0, total, 16)]
    from spikecore import NetworkConfig

    net = build_network(
        {"x": targets}, neurons, [], NetworkConfig(max_fanout=len(targets))
    )
    with pytest.raises(CapacityExceeded):
        compile_network(net)


def test_find_read_patch(demo_net):
    image = compile_network(demo_net)
    assert read_weight(image, "alpha", "c") == 2
    assert read_weight(image, "a", "d") == 2
    assert read_weight(image, "d", "c") == 1
    with pytest.raises(NoSuchSynapse):
        find_slot(image, "alpha", "b")
    with pytest.raises(NoSuchSynapse):
        find_slot(image, "ghost", "b")
    with pytest.raises(NoSuchSynapse):
        find_slot(image, "alpha", "ghost")

    before = image.rows.copy()
    patch_weight(image, "alpha", "c", -7)
    assert read_weight(image, "alpha", "c") == -7
    # exactly one slot changed
    assert (before != image.rows).sum() == 1
    with pytest.raises(WeightOverflow):
        patch_weight(image, "alpha", "c", 2**16)
    # patching preserves validity
    verify_image(image)
    assert decompile(image).get_weight("alpha", "c") == -7


def test_zero_weight_slots_look_like_placeholders():
    net = build_network(
        {"x": [("n", 0), ("m", 4)]},
        [("n", ([], lif(3))), ("m", ([], lif(3)))],
        [],
    )
    image = compile_network(net)
    with pytest.raises(NoSuchSynapse):
        find_slot(image, "x", "n")
    assert find_slot(image, "x", "n", include_zero_weight=True)
    assert read_weight(image, "x", "n", include_zero_weight=True) == 0
    # a decompiled image therefore drops the zero-weight synapse
    assert decompile(image).num_synapses() == 1


def test_corrupt_pointer_detected(demo_net):
    image = compile_network(demo_net)
    # invalidate axon 0's pointer
    image.rows[1, 0] = np.uint64(0)
    with pytest.raises(CorruptImage):
        verify_image(image)
    with pytest.raises(CorruptImage):
        decompile(image)


def test_corrupt_region_bounds(demo_net):
    image = compile_network(demo_net)
    image.rows[1, 0] = np.uint64(encode_pointer(0, 2))  # points at the model section
    with pytest.raises(CorruptImage):
        verify_image(image)


def test_overlapping_regions(demo_net):
    image = compile_network(demo_net)
    b0, _ = image.pointer(True, 0)
    image.rows[1, 1] = np.uint64(encode_pointer(b0, 2))  # beta reuses alpha's region
    with pytest.raises(CorruptImage):
        verify_image(image)
    with pytest.raises(CorruptImage):
        decompile(image)


def test_misaligned_slot(demo_net):
    image = compile_network(demo_net)
    base, _ = image.pointer(True, 0)
    # lane 5 slot claiming to target neuron 0
    image.rows[base, 5] = np.uint64(encode_synapse(0, 3))
    with pytest.raises(CorruptImage):
        verify_image(image)
    with pytest.raises(CorruptImage):
        decompile(image)


def test_nonzero_invalid_slot(demo_net):
    image = compile_network(demo_net)
    base, _ = image.pointer(True, 1)
    image.rows[base, 7] = np.uint64(12345)  # valid bit clear, payload nonzero
    with pytest.raises(CorruptImage):
        decompile(image)


def test_clone_isolates_rows(demo_net):
    image = compile_network(demo_net)
    other = image.clone()
    patch_weight(other, "alpha", "c", 9)
    assert read_weight(image, "alpha", "c") == 2
    assert read_weight(other, "alpha", "c") == 9

"""Routing-table memory image: layout, compiler, decompiler, file format.

The image models one core's HBM. Rows hold eight 64-bit slots; a segment
is 16 slots spanning two consecutive rows. Four sections, in row order:
neuron models, axon pointers, neuron pointers, synapses.

Pointers live at the slot position given by their source index (lane =
index mod 16, segment = index div 16 within their section). Each pointer
names a region of whole segments in the synapse section holding the
source's outgoing synapses. A synapse for target t may only occupy lane
t mod 16 of a segment, so a source needs as many segments as its worst
per-lane collision count. Sources with no synapses keep one segment of
16 zero-weight placeholder slots so that every pointer is valid.

Slot encodings (bit 0 = least significant), image format v1:

  synapse slot   bit 63 valid | bit 62 output_flag | bits 40..61
                 target index (22, unsigned) | bits 24..39 weight
                 (16, two's complement) | bits 0..23 reserved
  pointer slot   bit 63 valid | bits 31..62 base row (32, unsigned) |
                 bits 19..30 row count (12, unsigned, even) | reserved
  model slot     bit 63 valid | bit 62 kind (0 lif, 1 binary) |
                 bits 30..61 threshold (32, two's complement) |
                 bits 24..29 noise shift (6, two's complement) |
                 bits 18..23 leak shift (6, unsigned) | reserved

Placeholder slots target their own lane index and carry weight 0, so the
lane-alignment invariant holds for every valid slot in an image. Because
weight-0 slots are indistinguishable from placeholders by design, the
decompiler drops them; a zero-weight synapse therefore does not survive a
compile/decompile round trip (its effect on dynamics is nil either way).

File format v1: magic "SPKC", u32 version, u64 header length, JSON header
(capacity, section ranges, build config, key tables, model group ranges),
then the rows as little-endian u64. Writing is byte-deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityExceeded, CorruptImage, FormatError, NoSuchSynapse, WeightOverflow
from .models import NeuronKind, NeuronModel, WEIGHT_MAX, WEIGHT_MIN
from .network import Key, Network, NetworkConfig, SymbolTable, build_network

SLOT_BITS = 64
SLOTS_PER_ROW = 8
ROWS_PER_SEGMENT = 2
LANES = SLOTS_PER_ROW * ROWS_PER_SEGMENT  # 16

ROW_BYTES = SLOTS_PER_ROW * SLOT_BITS // 8

# 8 GiB of 64-byte rows
DEFAULT_CAPACITY_ROWS = (8 << 30) // ROW_BYTES

TARGET_BITS = 22
MAX_NEURONS = 1 << TARGET_BITS
ROW_COUNT_BITS = 12
MAX_REGION_ROWS = (1 << ROW_COUNT_BITS) - 2  # largest even 12-bit value
BASE_ROW_BITS = 32

MAGIC = b"SPKC"
IMAGE_VERSION = 1

_VALID_BIT = 1 << 63
_FLAG_BIT = 1 << 62


def encode_synapse(post: int, weight: int, output_flag: bool = False) -> int:
    word = _VALID_BIT | (post << 40) | ((weight & 0xFFFF) << 24)
    if output_flag:
        word |= _FLAG_BIT
    return word


def decode_synapse(word: int) -> tuple[bool, bool, int, int]:
    """(valid, output_flag, post, weight)."""
    valid = bool(word & _VALID_BIT)
    flag = bool(word & _FLAG_BIT)
    post = (word >> 40) & (MAX_NEURONS - 1)
    weight = ((word >> 24) & 0xFFFF ^ 0x8000) - 0x8000
    return valid, flag, post, weight


def encode_pointer(base_row: int, row_count: int) -> int:
    return _VALID_BIT | (base_row << 31) | (row_count << 19)


def decode_pointer(word: int) -> tuple[bool, int, int]:
    """(valid, base_row, row_count)."""
    valid = bool(word & _VALID_BIT)
    base = (word >> 31) & ((1 << BASE_ROW_BITS) - 1)
    count = (word >> 19) & ((1 << ROW_COUNT_BITS) - 1)
    return valid, base, count


def encode_model(model: NeuronModel) -> int:
    word = _VALID_BIT
    if model.kind is NeuronKind.BINARY:
        word |= _FLAG_BIT
    word |= (model.threshold & 0xFFFFFFFF) << 30
    word |= (model.noise_shift & 0x3F) << 24
    leak = 0 if model.leak_shift is None else model.leak_shift
    word |= (leak & 0x3F) << 18
    return word


def decode_model(word: int) -> NeuronModel:
    kind = NeuronKind.BINARY if word & _FLAG_BIT else NeuronKind.LIF
    threshold = ((word >> 30) & 0xFFFFFFFF ^ 0x80000000) - 0x80000000
    noise_shift = ((word >> 24) & 0x3F ^ 0x20) - 0x20
    leak = (word >> 18) & 0x3F
    if kind is NeuronKind.BINARY:
        return NeuronModel(kind, threshold, noise_shift)
    return NeuronModel(kind, threshold, noise_shift, leak)


@dataclass(frozen=True)
class HbmGeometry:
    """Section boundaries as [start, end) row ranges."""

    capacity_rows: int
    model_section: tuple[int, int]
    axon_ptr_section: tuple[int, int]
    neuron_ptr_section: tuple[int, int]
    synapse_section: tuple[int, int]

    @property
    def total_rows(self) -> int:
        return self.synapse_section[1]


def _pointer_position(section_start: int, index: int) -> tuple[int, int]:
    """Row and in-row slot of the pointer for a source index."""
    segment, lane = divmod(index, LANES)
    return section_start + ROWS_PER_SEGMENT * segment + lane // SLOTS_PER_ROW, lane % SLOTS_PER_ROW


@dataclass
class HbmImage:
    geometry: HbmGeometry
    rows: np.ndarray  # (total_rows, SLOTS_PER_ROW) uint64
    symtab: SymbolTable
    config: NetworkConfig

    @property
    def num_axons(self) -> int:
        return self.symtab.num_axons

    @property
    def num_neurons(self) -> int:
        return self.symtab.num_neurons

    def pointer(self, is_axon: bool, index: int) -> tuple[int, int]:
        """Decoded (base_row, row_count) for a source; raises on invalid."""
        section = self.geometry.axon_ptr_section if is_axon else self.geometry.neuron_ptr_section
        row, slot = _pointer_position(section[0], index)
        valid, base, count = decode_pointer(int(self.rows[row, slot]))
        if not valid:
            kind = "axon" if is_axon else "neuron"
            raise CorruptImage(f"{kind} pointer {index} is not valid")
        return base, count

    def output_neuron_indices(self) -> np.ndarray:
        """Ascending indices of neurons carrying an output flag."""
        start, end = self.geometry.synapse_section
        block = self.rows[start:end].reshape(-1)
        flagged = (block & np.uint64(_VALID_BIT)) != 0
        flagged &= (block & np.uint64(_FLAG_BIT)) != 0
        posts = (block[flagged] >> np.uint64(40)) & np.uint64(MAX_NEURONS - 1)
        return np.unique(posts.astype(np.int64))

    def tobytes(self) -> bytes:
        header = {
            "format": "spikecore-image",
            "version": IMAGE_VERSION,
            "capacity_rows": self.geometry.capacity_rows,
            "sections": {
                "model": list(self.geometry.model_section),
                "axon_ptr": list(self.geometry.axon_ptr_section),
                "neuron_ptr": list(self.geometry.neuron_ptr_section),
                "synapse": list(self.geometry.synapse_section),
            },
            "config": {
                "max_fanout": self.config.max_fanout,
                "membrane_bits": self.config.membrane_bits,
            },
            "axon_keys": self.symtab.axon_keys,
            "neuron_keys": self.symtab.neuron_keys,
            "model_groups": [list(g) for g in self.symtab.model_groups],
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        out = bytearray()
        out += MAGIC
        out += IMAGE_VERSION.to_bytes(4, "little")
        out += len(blob).to_bytes(8, "little")
        out += blob
        out += self.rows.astype("<u8").tobytes()
        return bytes(out)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.tobytes())

    def clone(self) -> "HbmImage":
        return HbmImage(self.geometry, self.rows.copy(), self.symtab, self.config)


def load_image(path: str | Path) -> HbmImage:
    return image_from_bytes(Path(path).read_bytes())


def image_from_bytes(data: bytes) -> HbmImage:
    if data[:4] != MAGIC:
        raise FormatError("not a spikecore image (bad magic)")
    version = int.from_bytes(data[4:8], "little")
    if version != IMAGE_VERSION:
        raise FormatError(f"unsupported image version {version}")
    hlen = int.from_bytes(data[8:16], "little")
    try:
        header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable image header: {exc}") from None
    sections = header["sections"]
    geometry = HbmGeometry(
        capacity_rows=header["capacity_rows"],
        model_section=tuple(sections["model"]),
        axon_ptr_section=tuple(sections["axon_ptr"]),
        neuron_ptr_section=tuple(sections["neuron_ptr"]),
        synapse_section=tuple(sections["synapse"]),
    )
    body = data[16 + hlen :]
    expected = geometry.total_rows * ROW_BYTES
    if len(body) != expected:
        raise FormatError(f"image body holds {len(body)} bytes, expected {expected}")
    rows = np.frombuffer(body, dtype="<u8").astype(np.uint64).reshape(-1, SLOTS_PER_ROW)

    groups = [tuple(g) for g in header["model_groups"]]
    models = []
    ms, _ = geometry.model_section
    for mi in range(len(groups)):
        row, slot = divmod(mi, SLOTS_PER_ROW)
        word = int(rows[ms + row, slot])
        if not word & _VALID_BIT:
            raise CorruptImage(f"model slot {mi} is not valid")
        models.append(decode_model(word))
    neuron_model = []
    for mi, (gs, ge) in enumerate(groups):
        neuron_model.extend([mi] * (ge - gs))
    neuron_keys = header["neuron_keys"]
    if len(neuron_model) != len(neuron_keys):
        raise CorruptImage("model group ranges do not cover the neuron index space")
    symtab = SymbolTable(
        axon_keys=header["axon_keys"],
        neuron_keys=neuron_keys,
        models=models,
        neuron_model=neuron_model,
        model_groups=groups,
    )
    config = NetworkConfig(
        max_fanout=header["config"]["max_fanout"],
        membrane_bits=header["config"]["membrane_bits"],
    )
    return HbmImage(geometry, rows, symtab, config)


def place_source_synapses(targets: list[tuple[int, int]]) -> list[dict[int, tuple[int, int]]]:
    """First-fit segment plan for one source.

    `targets`: (target index, weight) pairs sorted ascending. Returns a
    list of segments, each mapping lane -> (target, weight). Segment
    count equals the worst per-lane collision count. An empty target
    list yields one full placeholder segment (every lane valid, weight
    0, targeting its own lane index).
    """
    if not targets:
        return [{lane: (lane, 0) for lane in range(LANES)}]
    plan: list[dict[int, tuple[int, int]]] = []
    next_free = [0] * LANES
    for post, weight in targets:
        lane = post % LANES
        seg = next_free[lane]
        next_free[lane] = seg + 1
        while len(plan) <= seg:
            plan.append({})
        plan[seg][lane] = (post, weight)
    return plan


def compile_network(net: Network, capacity_rows: int = DEFAULT_CAPACITY_ROWS) -> HbmImage:
    """Lay a network out as a memory image.

    Deterministic: the same network always produces identical bytes.
    """
    symtab = net.symtab
    num_axons, num_neurons = symtab.num_axons, symtab.num_neurons
    if num_neurons > MAX_NEURONS:
        raise CapacityExceeded(f"{num_neurons} neurons exceed the {TARGET_BITS}-bit target index space")

    source_keys = list(symtab.axon_keys) + list(symtab.neuron_keys)
    plans = [place_source_synapses(net.sorted_targets(key)) for key in source_keys]

    # output designation: flag the first inbound slot in source order,
    # or append a dedicated flag segment to the neuron's own region
    first_slot: dict[int, tuple[int, int, int]] = {}
    for si, plan in enumerate(plans):
        for seg_idx, seg in enumerate(plan):
            for lane in sorted(seg):
                post, weight = seg[lane]
                if weight != 0 and post not in first_slot:
                    first_slot[post] = (si, seg_idx, lane)
    flags: dict[tuple[int, int, int], int] = {}
    for key in net.outputs:
        n = symtab.neuron_index[key]
        if n in first_slot:
            flags[first_slot[n]] = n
        else:
            plan = plans[num_axons + n]
            seg_idx = len(plan)
            plan.append({n % LANES: (n, 0)})
            flags[(num_axons + n, seg_idx, n % LANES)] = n

    model_rows = -(-len(symtab.models) // SLOTS_PER_ROW)
    axon_rows = ROWS_PER_SEGMENT * (-(-num_axons // LANES))
    neuron_rows = ROWS_PER_SEGMENT * (-(-num_neurons // LANES))
    region_rows = [ROWS_PER_SEGMENT * len(plan) for plan in plans]
    for key, rows_needed in zip(source_keys, region_rows):
        if rows_needed > MAX_REGION_ROWS:
            raise CapacityExceeded(
                f"source {key!r} needs {rows_needed} region rows; "
                f"the pointer row-count field holds at most {MAX_REGION_ROWS}"
            )
    synapse_rows = sum(region_rows)

    model_start = 0
    axon_start = model_start + model_rows
    neuron_start = axon_start + axon_rows
    synapse_start = neuron_start + neuron_rows
    total_rows = synapse_start + synapse_rows
    if total_rows > capacity_rows:
        raise CapacityExceeded(f"image needs {total_rows} rows, capacity is {capacity_rows}")
    if synapse_rows and (total_rows - 1) >= (1 << BASE_ROW_BITS):
        raise CapacityExceeded("synapse section exceeds the 32-bit row address space")

    geometry = HbmGeometry(
        capacity_rows=capacity_rows,
        model_section=(model_start, model_start + model_rows),
        axon_ptr_section=(axon_start, axon_start + axon_rows),
        neuron_ptr_section=(neuron_start, neuron_start + neuron_rows),
        synapse_section=(synapse_start, synapse_start + synapse_rows),
    )
    rows = np.zeros((total_rows, SLOTS_PER_ROW), dtype=np.uint64)

    for mi, model in enumerate(symtab.models):
        row, slot = divmod(mi, SLOTS_PER_ROW)
        rows[model_start + row, slot] = np.uint64(encode_model(model))

    base = synapse_start
    for si, plan in enumerate(plans):
        if si < num_axons:
            row, slot = _pointer_position(axon_start, si)
        else:
            row, slot = _pointer_position(neuron_start, si - num_axons)
        rows[row, slot] = np.uint64(encode_pointer(base, ROWS_PER_SEGMENT * len(plan)))
        for seg_idx, seg in enumerate(plan):
            for lane, (post, weight) in seg.items():
                flag = flags.get((si, seg_idx, lane)) == post
                r = base + ROWS_PER_SEGMENT * seg_idx + lane // SLOTS_PER_ROW
                rows[r, lane % SLOTS_PER_ROW] = np.uint64(encode_synapse(post, weight, flag))
        base += ROWS_PER_SEGMENT * len(plan)

    return HbmImage(geometry, rows, symtab, net.config)


def _scan_region(image: HbmImage, base: int, count: int):
    """Yield (row, slot, lane, word) for every slot of a region."""
    for seg in range(count // ROWS_PER_SEGMENT):
        for lane in range(LANES):
            row = base + ROWS_PER_SEGMENT * seg + lane // SLOTS_PER_ROW
            yield row, lane % SLOTS_PER_ROW, lane, int(image.rows[row, lane % SLOTS_PER_ROW])


def _check_region(image: HbmImage, what: str, base: int, count: int) -> None:
    lo, hi = image.geometry.synapse_section
    if count % ROWS_PER_SEGMENT:
        raise CorruptImage(f"{what}: region row count {count} is odd")
    if base < lo or base + count > hi:
        raise CorruptImage(f"{what}: region [{base}, {base + count}) outside the synapse section")


def decompile(image: HbmImage) -> Network:
    """Rebuild the network a compiled image describes.

    Zero-weight slots are placeholders or output-flag carriers, never
    synapses; see the module docstring.
    """
    symtab = image.symtab
    num_axons, num_neurons = symtab.num_axons, symtab.num_neurons

    regions: list[tuple[int, int, str]] = []
    outputs_idx: set[int] = set()

    def read_source(is_axon: bool, index: int, key: Key) -> list[tuple[Key, int]]:
        what = f"{'axon' if is_axon else 'neuron'} {key!r}"
        base, count = image.pointer(is_axon, index)
        _check_region(image, what, base, count)
        regions.append((base, base + count, what))
        syns: list[tuple[Key, int]] = []
        for _, _, lane, word in _scan_region(image, base, count):
            valid, flag, post, weight = decode_synapse(word)
            if not valid:
                if word:
                    raise CorruptImage(f"{what}: non-zero invalid slot")
                continue
            if post % LANES != lane:
                raise CorruptImage(f"{what}: slot in lane {lane} targets {post} (misaligned)")
            if post >= num_neurons and weight != 0:
                raise CorruptImage(f"{what}: slot targets index {post} of {num_neurons}")
            if flag:
                if post >= num_neurons:
                    raise CorruptImage(f"{what}: output flag on index {post} of {num_neurons}")
                outputs_idx.add(post)
            if weight != 0:
                syns.append((symtab.neuron_keys[post], weight))
        return syns

    axons = {key: read_source(True, i, key) for i, key in enumerate(symtab.axon_keys)}
    neuron_syn = {key: read_source(False, i, key) for i, key in enumerate(symtab.neuron_keys)}

    regions.sort()
    for (s1, e1, w1), (s2, e2, w2) in zip(regions, regions[1:]):
        if s2 < e1:
            raise CorruptImage(f"regions of {w1} and {w2} overlap")

    neurons = {
        key: (neuron_syn[key], symtab.models[symtab.neuron_model[i]])
        for i, key in enumerate(symtab.neuron_keys)
    }
    outputs = [symtab.neuron_keys[i] for i in sorted(outputs_idx)]
    return build_network(axons, neurons, outputs, image.config)


def verify_image(image: HbmImage) -> dict[str, int]:
    """Exhaustive structural check; raises CorruptImage on any violation.

    Checks lane alignment of every valid synapse slot, pairwise region
    disjointness, region bounds, row-count evenness, pointer validity for
    every source, and that no valid synapse slot lies outside all regions.
    Returns occupancy counts.
    """
    symtab = image.symtab
    covered = np.zeros(image.geometry.total_rows, dtype=bool)
    regions = []
    stats = {"segments": 0, "synapses": 0, "placeholders": 0, "flags": 0}
    for is_axon, keys in ((True, symtab.axon_keys), (False, symtab.neuron_keys)):
        for i, key in enumerate(keys):
            what = f"{'axon' if is_axon else 'neuron'} {key!r}"
            base, count = image.pointer(is_axon, i)
            _check_region(image, what, base, count)
            if covered[base : base + count].any():
                raise CorruptImage(f"{what}: region overlaps another region")
            covered[base : base + count] = True
            regions.append((base, count))
            stats["segments"] += count // ROWS_PER_SEGMENT
            for _, _, lane, word in _scan_region(image, base, count):
                valid, flag, post, weight = decode_synapse(word)
                if not valid:
                    continue
                if post % LANES != lane:
                    raise CorruptImage(f"{what}: lane {lane} slot targets {post} (misaligned)")
                if weight != 0:
                    stats["synapses"] += 1
                    if post >= symtab.num_neurons:
                        raise CorruptImage(f"{what}: slot targets index {post}")
                else:
                    stats["placeholders"] += 1
                if flag:
                    stats["flags"] += 1
    lo, hi = image.geometry.synapse_section
    block = image.rows[lo:hi].reshape(-1)
    valid_mask = (block & np.uint64(_VALID_BIT)) != 0
    row_valid = valid_mask.reshape(-1, SLOTS_PER_ROW).any(axis=1)
    stray = np.flatnonzero(row_valid & ~covered[lo:hi])
    if stray.size:
        raise CorruptImage(f"valid synapse slots outside every region at row {lo + int(stray[0])}")
    return stats


def find_slot(
    image: HbmImage,
    pre: Key,
    post: Key,
    include_zero_weight: bool = False,
) -> tuple[int, int]:
    """(row, slot) of the synapse from `pre` to `post`.

    Zero-weight slots are skipped unless `include_zero_weight`: without
    knowledge of the source network they are indistinguishable from
    placeholders. Raises NoSuchSynapse when no slot matches.
    """
    symtab = image.symtab
    if pre in symtab.axon_index:
        is_axon, pre_idx = True, symtab.axon_index[pre]
    elif pre in symtab.neuron_index:
        is_axon, pre_idx = False, symtab.neuron_index[pre]
    else:
        raise NoSuchSynapse(f"unknown source key {pre!r}")
    if post not in symtab.neuron_index:
        raise NoSuchSynapse(f"unknown target key {post!r}")
    post_idx = symtab.neuron_index[post]

    base, count = image.pointer(is_axon, pre_idx)
    lane = post_idx % LANES
    for seg in range(count // ROWS_PER_SEGMENT):
        row = base + ROWS_PER_SEGMENT * seg + lane // SLOTS_PER_ROW
        slot = lane % SLOTS_PER_ROW
        valid, _, tgt, weight = decode_synapse(int(image.rows[row, slot]))
        if not valid or tgt != post_idx:
            continue
        if weight == 0 and not include_zero_weight:
            continue
        return row, slot
    raise NoSuchSynapse(f"no synapse from {pre!r} to {post!r} in the image")


def read_weight(image: HbmImage, pre: Key, post: Key, include_zero_weight: bool = False) -> int:
    row, slot = find_slot(image, pre, post, include_zero_weight)
    return decode_synapse(int(image.rows[row, slot]))[3]


def patch_weight(image: HbmImage, pre: Key, post: Key, weight: int, include_zero_weight: bool = False) -> None:
    """Rewrite one synapse weight in place; only that slot's bytes change."""
    if not WEIGHT_MIN <= weight <= WEIGHT_MAX:
        raise WeightOverflow(f"weight {weight} outside signed 16-bit range")
    row, slot = find_slot(image, pre, post, include_zero_weight)
    word = int(image.rows[row, slot])
    word = (word & ~(0xFFFF << 24)) | ((weight & 0xFFFF) << 24)
    image.rows[row, slot] = np.uint64(word)

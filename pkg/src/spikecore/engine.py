"""Event-driven execution over a memory image, with access counting.

Each timestep runs two phases after the per-neuron update pass:

  phase 1  the pointers of every activated axon and every neuron that
           fired this step are fetched (axons first, then neurons, each
           group ascending by index); one pointer row read is counted
           per fired source,
  phase 2  each queued region's rows are read in queue order and every
           valid synapse accumulates its weight into the target membrane
           with a saturating add; the full region row count is counted
           whether or not slots are occupied.

The per-neuron update pass walks the index space in groups of 16 lanes,
which fixes the scan cost at ceil(N / 16) cycles per step; the update
itself is element-wise, so it is computed whole-vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, DimensionMismatch, IndexOutOfRange, UnknownAxonKey
from .hbm import LANES, MAX_NEURONS, ROWS_PER_SEGMENT, SLOTS_PER_ROW, HbmImage, _pointer_position, decode_pointer
from .models import noise_block
from .state import ModelArrays, SimState


@dataclass
class StepCounters:
    """Raw access counts; cycle and energy conversion happens in CostReport."""

    pointer_row_reads: int = 0
    synapse_row_reads: int = 0
    neuron_scan_cycles: int = 0

    def total_cycles(self, cycles_per_row: int = 1) -> int:
        return self.neuron_scan_cycles + cycles_per_row * (
            self.pointer_row_reads + self.synapse_row_reads
        )

    def hbm_accesses(self) -> int:
        return self.pointer_row_reads + self.synapse_row_reads

    def add(self, other: "StepCounters") -> None:
        self.pointer_row_reads += other.pointer_row_reads
        self.synapse_row_reads += other.synapse_row_reads
        self.neuron_scan_cycles += other.neuron_scan_cycles


@dataclass(frozen=True)
class CostConfig:
    """Scale factors applied to raw counts; defaults report the counts themselves."""

    energy_per_access: float = 1.0
    cycles_per_row: int = 1
    clock_period: float = 1.0


@dataclass
class CostReport:
    """Aggregated counters plus energy/latency estimates.

    energy = energy_per_access * (pointer + synapse row reads)
    latency = clock_period * (scan cycles + cycles_per_row * row reads)

    `blocks` carries one (steps, energy, latency) triple per inference
    block; means and standard deviations (population) are across blocks.
    """

    config: CostConfig
    totals: StepCounters
    per_step: list[StepCounters]
    blocks: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def energy_estimate(self) -> float:
        return self.config.energy_per_access * self.totals.hbm_accesses()

    @property
    def latency_estimate(self) -> float:
        return self.config.clock_period * self.totals.total_cycles(self.config.cycles_per_row)

    def _block_stats(self, values: list[float]) -> tuple[float, float]:
        if not values:
            return 0.0, 0.0
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return mean, math.sqrt(var)

    @property
    def energy_mean_sd(self) -> tuple[float, float]:
        return self._block_stats([e for _, e, _ in self.blocks])

    @property
    def latency_mean_sd(self) -> tuple[float, float]:
        return self._block_stats([l for _, _, l in self.blocks])


class EngineBackend:
    """Executes timesteps by reading pointers and synapses from an image."""

    def __init__(self, image: HbmImage):
        self.image = image
        self.marrays = ModelArrays.from_symtab(image.symtab)
        bits = image.config.membrane_bits
        self.sat_min = -(1 << (bits - 1))
        self.sat_max = (1 << (bits - 1)) - 1
        self.output_idx = image.output_neuron_indices()
        self.output_mask = np.zeros(image.num_neurons, dtype=bool)
        self.output_mask[self.output_idx] = True

    @property
    def num_neurons(self) -> int:
        return self.image.num_neurons

    @property
    def num_axons(self) -> int:
        return self.image.num_axons

    def _accumulate(self, v: np.ndarray, base: int, count: int) -> None:
        block = self.image.rows[base : base + count].reshape(-1)
        valid = (block >> np.uint64(63)) != 0
        weights = ((block >> np.uint64(24)) & np.uint64(0xFFFF)).astype(np.int64)
        weights = (weights ^ 0x8000) - 0x8000
        live = valid & (weights != 0)
        if not live.any():
            return
        posts = ((block >> np.uint64(40)) & np.uint64(MAX_NEURONS - 1)).astype(np.int64)
        posts = posts[live]
        if posts.size and int(posts.max()) >= v.shape[0]:
            raise IndexOutOfRange(
                f"synapse slot targets index {int(posts.max())} of {v.shape[0]}"
            )
        v[posts] = np.clip(v[posts] + weights[live], self.sat_min, self.sat_max)

    def step(self, state: SimState, input_axons: np.ndarray) -> tuple[np.ndarray, StepCounters]:
        """Advance one timestep; returns (fired neuron indices, counter delta).

        `input_axons` must be sorted unique axon indices.
        """
        n = self.num_neurons
        if state.membrane.shape[0] != n or state.fired_axons.shape[0] != self.num_axons:
            raise DimensionMismatch("state size does not match the image")
        counters = StepCounters(neuron_scan_cycles=-(-n // LANES))

        raws = state.rng.next_raw_block(n)
        noise = noise_block(raws, self.marrays.noise_shift)
        v = np.clip(state.membrane + noise, self.sat_min, self.sat_max)
        fired_mask = v > self.marrays.threshold
        v = np.where(fired_mask, 0, v)
        v = np.where(self.marrays.is_binary, 0, v - (v >> self.marrays.leak_shift))

        fired = np.flatnonzero(fired_mask)
        geom = self.image.geometry
        queue = [(geom.axon_ptr_section[0], int(j)) for j in input_axons]
        queue += [(geom.neuron_ptr_section[0], int(j)) for j in fired]
        for section_start, idx in queue:
            row, slot = _pointer_position(section_start, idx)
            valid, base, count = decode_pointer(int(self.image.rows[row, slot]))
            if not valid:
                raise IndexOutOfRange(f"fired source {idx} has an invalid pointer")
            counters.pointer_row_reads += 1
            counters.synapse_row_reads += count
            self._accumulate(v, base, count)

        state.membrane = v
        state.fired_axons[:] = False
        state.fired_axons[input_axons] = True
        state.fired_neurons = fired_mask
        state.t += 1
        return fired, counters


@dataclass
class RunResult:
    """Outcome of a batch engine run."""

    spikes: list[list]
    report: CostReport
    final_membrane: np.ndarray


def run(
    image: HbmImage,
    schedule: list[list],
    seed: int = 0,
    cost: CostConfig | None = None,
    block_lengths: list[int] | None = None,
    steps: int | None = None,
) -> RunResult:
    """Drive the engine over a schedule of per-step axon key lists.

    `steps` pads (with idle steps) or truncates the flattened schedule.
    `block_lengths` partitions the steps into inference blocks for the
    per-block energy/latency statistics; by default the whole run is one
    block.
    """
    cost = cost or CostConfig()
    backend = EngineBackend(image)
    symtab = image.symtab

    flat = [list(s) for s in schedule]
    if steps is not None:
        flat = flat[:steps] + [[] for _ in range(steps - len(flat))]
    if block_lengths is None:
        block_lengths = [len(flat)] if flat else []
    if sum(block_lengths) != len(flat):
        raise DimensionMismatch(
            f"block lengths sum to {sum(block_lengths)} but the schedule has {len(flat)} steps"
        )

    state = SimState.fresh(image.num_axons, image.num_neurons, seed)
    spikes: list[list] = []
    per_step: list[StepCounters] = []
    totals = StepCounters()
    for inputs in flat:
        idxs = set()
        for key in inputs:
            if key not in symtab.axon_index:
                raise UnknownAxonKey(f"schedule activates unknown axon {key!r}")
            idxs.add(symtab.axon_index[key])
        input_arr = np.array(sorted(idxs), dtype=np.int64)
        fired, counters = backend.step(state, input_arr)
        out = fired[backend.output_mask[fired]]
        spikes.append([symtab.neuron_keys[i] for i in out])
        per_step.append(counters)
        totals.add(counters)

    blocks: list[tuple[int, float, float]] = []
    pos = 0
    for length in block_lengths:
        agg = StepCounters()
        for c in per_step[pos : pos + length]:
            agg.add(c)
        pos += length
        blocks.append(
            (
                length,
                cost.energy_per_access * agg.hbm_accesses(),
                cost.clock_period * agg.total_cycles(cost.cycles_per_row),
            )
        )
    report = CostReport(config=cost, totals=totals, per_step=per_step, blocks=blocks)
    return RunResult(spikes=spikes, report=report, final_membrane=state.membrane.copy())


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float


def scaling_regression(points: list[tuple[float, float]]) -> RegressionFit:
    """Ordinary least squares over (x, y) pairs.

    Raises DegenerateInput for fewer than 3 points or constant x. With a
    perfect fit of constant y, r_squared is reported as 1.0.
    """
    if len(points) < 3:
        raise DegenerateInput(f"{len(points)} points; at least 3 required")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    dx = xs - xs.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateInput("all x values identical")
    slope = float(dx @ (ys - ys.mean())) / sxx
    intercept = float(ys.mean() - slope * xs.mean())
    resid = ys - (slope * xs + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RegressionFit(slope, intercept, r2)

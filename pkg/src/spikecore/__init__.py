"""Integer spiking network simulator with a memory-image execution engine.

The package models a single neuromorphic processing core: networks of
integer leaky-integrate-and-fire and binary neurons, compiled into a
banked-memory image of routing tables, executed either by a dense
reference simulator or by an event-driven engine that reads the image
row by row and counts every access for energy and latency estimates.
Layered models (conv / pool / fully connected) can be converted into
equivalent spiking networks.
"""

from .convert import (
    AxonGrid,
    ConversionResult,
    ConvertOptions,
    LayerSpec,
    StructuralReport,
    binarize_input,
    bit_slice,
    conv,
    convert_model,
    fc,
    load_archive,
    map_conv_layer,
    map_fc_layer,
    map_pool_layer,
    maxpool,
    quantize,
    run_layered_inference,
    save_archive,
)
from .engine import (
    CostConfig,
    CostReport,
    EngineBackend,
    RegressionFit,
    RunResult,
    StepCounters,
    run,
    scaling_regression,
)
from .errors import (
    CapacityExceeded,
    CompileError,
    CorruptImage,
    DanglingTarget,
    DegenerateInput,
    DimensionMismatch,
    DuplicateKey,
    DuplicateSynapse,
    FanOutExceeded,
    FormatError,
    IndexOutOfRange,
    NetworkError,
    NoSuchSynapse,
    ShapeMismatch,
    SpikeCoreError,
    UnknownAxonKey,
    UnknownNeuronKey,
    UnknownOutputKey,
    WeightOverflow,
)
from .hbm import (
    HbmGeometry,
    HbmImage,
    compile_network,
    decompile,
    find_slot,
    image_from_bytes,
    load_image,
    patch_weight,
    read_weight,
    verify_image,
)
from .models import (
    NOISE_OFF,
    WEIGHT_MAX,
    WEIGHT_MIN,
    NeuronKind,
    NeuronModel,
    binary,
    lif,
    noise_block,
    noise_sample,
    sat32,
    step_neuron,
)
from .netlist import dumps_network, load_network, loads_network, save_network
from .network import Network, NetworkConfig, SymbolTable, build_network, tile_network
from .oracle import DenseWeights, oracle_step
from .rng import SplitMix64
from .sim import Simulation
from .state import ModelArrays, SimState

__version__ = "0.1.0"

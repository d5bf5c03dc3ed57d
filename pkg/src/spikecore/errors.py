"""Exception types raised across the package."""


class SpikeCoreError(Exception):
    """Base class for all package errors."""


class NetworkError(SpikeCoreError):
    """Invalid network description or lookup."""


class DanglingTarget(NetworkError):
    """A synapse points at a key that names no neuron."""


class DuplicateKey(NetworkError):
    """A key is declared twice, or names both an axon and a neuron."""


class DuplicateSynapse(NetworkError):
    """The same (source, target) pair is listed more than once."""


class WeightOverflow(NetworkError):
    """A synapse weight or bias does not fit in signed 16 bits."""


class FanOutExceeded(NetworkError):
    """A source lists more targets than the configured fan-out cap."""


class UnknownOutputKey(NetworkError):
    """The outputs list names a key that is not a neuron."""


class UnknownAxonKey(NetworkError):
    """An input activation names a key that is not an axon."""


class UnknownNeuronKey(NetworkError):
    """A membrane read names a key that is not a neuron."""


class NoSuchSynapse(NetworkError):
    """The addressed (source, target) synapse does not exist."""


class CompileError(SpikeCoreError):
    """Network cannot be laid out as a memory image."""


class CapacityExceeded(CompileError):
    """The image would exceed row capacity or a pointer field range."""


class CorruptImage(CompileError):
    """A memory image violates a structural invariant."""


class IndexOutOfRange(CompileError):
    """A synapse slot targets a neuron index outside the network."""


class FormatError(SpikeCoreError):
    """A netlist, schedule, archive, or report file cannot be parsed."""


class ShapeMismatch(SpikeCoreError):
    """A tensor does not have the expected shape."""


class DimensionMismatch(SpikeCoreError):
    """Vector or matrix operands disagree in size."""


class DegenerateInput(SpikeCoreError):
    """A regression was given too few or collinear points."""

"""Typed errors raised across the package.

The CLI maps these onto exit codes: ConfigError and bad flags exit 2,
everything else here exits 1.
"""


class RhythmNetError(Exception):
    """Base class for all package errors."""


class ContractViolationError(RhythmNetError, ValueError):
    """A caller broke a documented precondition (shape, range, dtype)."""


class InvalidInputError(RhythmNetError, ValueError):
    """Input data is structurally unusable (empty signal, degenerate batch)."""


class ConfigError(RhythmNetError, ValueError):
    """A configuration object violates its own invariants."""


class StateError(RhythmNetError, RuntimeError):
    """An operation was called in the wrong lifecycle state."""


class NonFiniteGradientError(RhythmNetError, RuntimeError):
    """A gradient contained NaN/Inf; carries the offending parameter name."""

    def __init__(self, param_name: str):
        super().__init__(f"non-finite gradient in parameter {param_name!r}")
        self.param_name = param_name


class InvalidAnnotationError(RhythmNetError, ValueError):
    """Record annotations have a gap, overlap, or out-of-range segment."""


class SplitInfeasibleError(RhythmNetError, ValueError):
    """Patient-disjoint splitting is impossible (fewer than 2 patients)."""


class CheckpointError(RhythmNetError, RuntimeError):
    """Base for checkpoint file problems."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint bytes fail magic/CRC/structure checks; carries an offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedVersionError(CheckpointError):
    """Checkpoint format version is not supported by this build."""


class DatasetError(RhythmNetError, RuntimeError):
    """Base for dataset directory problems."""


class MissingFileError(DatasetError):
    """Manifest references a signal file that does not exist."""


class CorruptSignalError(DatasetError):
    """A signal file fails its CRC32 or length check."""


class SchemaError(DatasetError):
    """Manifest content does not match the dataset schema."""


class CoverageError(RhythmNetError, ValueError):
    """An annotator set does not cover every consensus record."""

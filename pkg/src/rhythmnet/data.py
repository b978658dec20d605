"""Data model for annotated single-lead ECG.

Records hold a raw signal at 200 Hz plus onset/offset rhythm segment
annotations that jointly cover the whole signal. Label grids carry one
rhythm class per model output position (one per `stride` input samples).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidAnnotationError, InvalidInputError

SAMPLE_RATE = 200
OUTPUT_STRIDE = 256
IQR_FLOOR = 1e-3


class RhythmClass(enum.IntEnum):
    """The 14 output classes, indexed alphabetically."""

    AFIB = 0
    AFL = 1
    AVB_TYPE2 = 2
    BIGEMINY = 3
    CHB = 4
    EAR = 5
    IVR = 6
    JUNCTIONAL = 7
    NOISE = 8
    SINUS = 9
    SVT = 10
    TRIGEMINY = 11
    VT = 12
    WENCKEBACH = 13

    @classmethod
    def from_name(cls, name: str) -> "RhythmClass":
        try:
            return cls[name]
        except KeyError:
            raise KeyError(f"unknown rhythm class {name!r}") from None


CLASS_NAMES = tuple(c.name for c in RhythmClass)
NUM_CLASSES = len(CLASS_NAMES)

# A label grid is an int64 array of RhythmClass values, one per output
# position of the network (stride defaults to 256 input samples).
LabelGrid = np.ndarray


@dataclass
class EcgRecord:
    """One annotated single-lead ECG strip.

    `annotations` is a list of (onset_sample, offset_sample, RhythmClass)
    segments, sorted, non-overlapping, and jointly covering [0, len).
    """

    record_id: str
    patient_id: str
    sample_rate: int
    samples: np.ndarray
    annotations: list[tuple[int, int, RhythmClass]] = field(default_factory=list)

    def validate(self) -> None:
        n = len(self.samples)
        if n == 0:
            raise InvalidInputError(f"record {self.record_id}: empty signal")
        cursor = 0
        for onset, offset, label in self.annotations:
            if onset != cursor:
                raise InvalidAnnotationError(
                    f"record {self.record_id}: gap or overlap at sample {cursor} "
                    f"(next segment starts at {onset})")
            if not 0 <= onset < offset <= n:
                raise InvalidAnnotationError(
                    f"record {self.record_id}: segment [{onset}, {offset}) out of "
                    f"range for length {n}")
            if not isinstance(label, RhythmClass):
                raise InvalidAnnotationError(
                    f"record {self.record_id}: bad label {label!r} at sample {onset}")
            cursor = offset
        if cursor != n:
            raise InvalidAnnotationError(
                f"record {self.record_id}: annotations stop at sample {cursor}, "
                f"signal has {n}")


def robust_normalize(samples: np.ndarray) -> np.ndarray:
    """Center on the median and scale by the interquartile range.

    Computes (x - median) / max(IQR, 1e-3) in float64 with linearly
    interpolated quartiles, returned as float32.
    """
    if len(samples) == 0:
        raise InvalidInputError("cannot normalize an empty signal")
    x = np.asarray(samples, dtype=np.float64)
    q1, median, q3 = np.percentile(x, [25.0, 50.0, 75.0])
    return ((x - median) / max(q3 - q1, IQR_FLOOR)).astype(np.float32)


def pad_to_stride(samples: np.ndarray, stride: int = OUTPUT_STRIDE) -> np.ndarray:
    """Right-pad with zeros to the next multiple of stride (6000 -> 6144)."""
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    n = len(samples)
    padded = -(-max(n, 1) // stride) * stride
    if padded == n:
        return samples
    out = np.zeros(padded, dtype=samples.dtype)
    out[:n] = samples
    return out


def annotations_to_grid(record: EcgRecord, stride: int = OUTPUT_STRIDE,
                        padded_len: int | None = None) -> LabelGrid:
    """Resample segment annotations onto the model's output grid.

    Each output position covers `stride` input samples and takes the class
    with maximal sample overlap; ties go to the segment with the earlier
    onset. Windows extending past the signal (zero padding) count the padding
    as the final segment's class.
    """
    record.validate()
    n = len(record.samples)
    if padded_len is None:
        padded_len = -(-n // stride) * stride
    if padded_len < n or padded_len % stride:
        raise InvalidInputError(
            f"padded_len {padded_len} incompatible with length {n}, stride {stride}")
    positions = padded_len // stride
    grid = np.empty(positions, dtype=np.int64)
    # extend the final segment over the padding
    last_onset, _, last_label = record.annotations[-1]
    segments = [(on, off, lab) for on, off, lab in record.annotations[:-1]]
    segments.append((last_onset, padded_len, last_label))
    for i in range(positions):
        lo, hi = i * stride, (i + 1) * stride
        best_overlap = -1
        best_label = None
        for onset, offset, label in segments:
            overlap = min(hi, offset) - max(lo, onset)
            if overlap > best_overlap:  # earlier onset wins ties
                best_overlap = overlap
                best_label = label
        grid[i] = int(best_label)
    return grid


def grid_to_names(grid: LabelGrid) -> list[str]:
    return [RhythmClass(int(i)).name for i in grid]

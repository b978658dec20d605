"""Dataset directory reader/writer.

Layout: `manifest.json` (UTF-8, schema below) next to one raw signal file
per record holding little-endian 32-bit floats.

Manifest schema:

    {
      "format_version": 1,
      "records": [
        {
          "record_id": str,
          "patient_id": str,
          "sample_rate": int,
          "length": int,
          "segments": [[onset, offset, label], ...],
          "signal_file": str,
          "crc32": int
        },
        ...
      ]
    }

`crc32` covers the signal file's bytes. read(write(x)) == x bit-exactly.
"""

from __future__ import annotations

import json
import os
import zlib
from pathlib import Path

import numpy as np

from .data import CLASS_NAMES, EcgRecord, RhythmClass
from .errors import CorruptSignalError, MissingFileError, SchemaError

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


def write_dataset(records: list[EcgRecord], directory: str | os.PathLike) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        rec.validate()
        data = np.ascontiguousarray(rec.samples, dtype="<f4").tobytes()
        signal_file = f"{rec.record_id}.f32"
        (directory / signal_file).write_bytes(data)
        entries.append({
            "record_id": rec.record_id,
            "patient_id": rec.patient_id,
            "sample_rate": rec.sample_rate,
            "length": len(rec.samples),
            "segments": [[int(on), int(off), label.name]
                         for on, off, label in rec.annotations],
            "signal_file": signal_file,
            "crc32": zlib.crc32(data),
        })
    manifest = {"format_version": FORMAT_VERSION, "records": entries}
    tmp = directory / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    os.replace(tmp, directory / MANIFEST_NAME)


def read_signal(path: str | os.PathLike, expected_crc: int | None = None,
                expected_length: int | None = None) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"signal file {path} does not exist")
    data = path.read_bytes()
    if expected_crc is not None and zlib.crc32(data) != expected_crc:
        raise CorruptSignalError(f"CRC32 mismatch for {path}")
    samples = np.frombuffer(data, dtype="<f4")
    if expected_length is not None and len(samples) != expected_length:
        raise CorruptSignalError(
            f"{path} holds {len(samples)} samples, manifest says {expected_length}")
    return samples.copy()


def read_dataset(directory: str | os.PathLike) -> list[EcgRecord]:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingFileError(f"no {MANIFEST_NAME} in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"manifest is not valid JSON: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise SchemaError(
            f"manifest format_version {manifest.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}")
    records = []
    for entry in manifest.get("records", []):
        try:
            segments = []
            for onset, offset, label in entry["segments"]:
                if label not in CLASS_NAMES:
                    raise SchemaError(f"unknown class name {label!r} in manifest")
                segments.append((int(onset), int(offset), RhythmClass[label]))
            rec = EcgRecord(
                record_id=entry["record_id"],
                patient_id=entry["patient_id"],
                sample_rate=int(entry["sample_rate"]),
                samples=read_signal(directory / entry["signal_file"],
                                    expected_crc=int(entry["crc32"]),
                                    expected_length=int(entry["length"])),
                annotations=segments,
            )
        except KeyError as e:
            raise SchemaError(f"manifest entry missing field {e}") from e
        rec.validate()
        records.append(rec)
    return records

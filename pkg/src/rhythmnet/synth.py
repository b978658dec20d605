"""Deterministic synthetic ECG corpus generator.

Each record is built from Gaussian-bump wave templates (P, QRS, T) riding on
an RR-interval process chosen per rhythm class: regular narrow-complex beats
with P waves for sinus rhythm, irregular RR with fibrillatory baseline for
AFIB, sawtooth atrial waves for AFL, wide complexes for the ventricular
rhythms (fast for VT, slow for IVR, split at the 100/min boundary),
independent P and QRS trains for complete heart block, dropped or
progressively delayed conduction for the second-degree blocks, and broadband
noise with no complexes for NOISE.

All randomness derives from (seed, record id), so per-record generation is
order-independent: parallel equals serial bit for bit. Records may contain
one transition between two classes with exact onset/offset annotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CLASS_NAMES, EcgRecord, RhythmClass, SAMPLE_RATE
from .errors import ConfigError
from .rng import derive

# beats-per-minute ranges per class; VT vs IVR split at the clinical
# 100/min delineation
BPM_RANGES: dict[str, tuple[float, float]] = {
    "SINUS": (60.0, 100.0),
    "EAR": (60.0, 100.0),
    "SVT": (150.0, 240.0),
    "VT": (120.0, 240.0),
    "IVR": (40.0, 90.0),
    "JUNCTIONAL": (40.0, 60.0),
    "BIGEMINY": (60.0, 80.0),
    "TRIGEMINY": (60.0, 80.0),
    "AVB_TYPE2": (60.0, 100.0),
    "WENCKEBACH": (60.0, 100.0),
    "CHB": (30.0, 45.0),      # ventricular escape rate; atrial runs faster
    "AFIB": (80.0, 133.0),    # mean ventricular response
    "AFL": (250.0, 350.0),    # atrial flutter rate; conducted 2:1 to 4:1
    "NOISE": (0.0, 0.0),
}


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for corpus generation; weights steer the class balance."""

    seed: int = 0
    records_per_class: int = 10
    duration_s: float = 30.0
    noise_level: float = 0.03
    classes: tuple[str, ...] = CLASS_NAMES
    class_weights: tuple[float, ...] | None = None
    transition_fraction: float = 0.25
    sample_rate: int = SAMPLE_RATE
    bpm_ranges: dict = field(default_factory=dict)  # per-class overrides

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be > 0")
        if self.records_per_class < 1:
            raise ConfigError("records_per_class must be >= 1")
        if not self.classes:
            raise ConfigError("need at least one class")
        for name in self.classes:
            if name not in CLASS_NAMES:
                raise ConfigError(f"unknown rhythm class {name!r}")
        if self.class_weights is not None:
            if len(self.class_weights) != len(self.classes):
                raise ConfigError("class_weights length must match classes")
            if any(w < 0 for w in self.class_weights):
                raise ConfigError("class_weights must be non-negative")
            if sum(self.class_weights) <= 0:
                raise ConfigError("class_weights must not all be zero")
        if not 0.0 <= self.transition_fraction <= 1.0:
            raise ConfigError("transition_fraction must be in [0, 1]")

    def weights(self) -> np.ndarray:
        if self.class_weights is None:
            w = np.ones(len(self.classes))
        else:
            w = np.asarray(self.class_weights, dtype=np.float64)
        return w / w.sum()

    def bpm_range(self, name: str) -> tuple[float, float]:
        return self.bpm_ranges.get(name, BPM_RANGES[name])


@dataclass(frozen=True)
class RecordSpec:
    """Pre-pass assignment of identity, class(es), and transition point."""

    record_id: str
    patient_id: str
    classes: tuple[str, ...]
    switch_frac: float | None = None


def plan_corpus(config: SynthConfig) -> list[RecordSpec]:
    """Draw per-record class/patient assignments from the main stream."""
    rng = derive(config.seed, "corpus-plan")
    total = config.records_per_class * len(config.classes)
    weights = config.weights()
    n_patients = max(2, total // 2)
    specs = []
    for i in range(total):
        primary = config.classes[int(rng.choice(len(config.classes), p=weights))]
        classes = (primary,)
        switch = None
        if len(config.classes) > 1 and rng.random() < config.transition_fraction:
            others = [c for c in config.classes if c != primary]
            w = np.array([weights[config.classes.index(c)] for c in others])
            if w.sum() > 0:
                second = others[int(rng.choice(len(others), p=w / w.sum()))]
                classes = (primary, second)
                switch = float(rng.uniform(0.35, 0.65))
        patient = int(rng.integers(0, n_patients))
        specs.append(RecordSpec(
            record_id=f"r{i:06d}",
            patient_id=f"p{patient:05d}",
            classes=classes,
            switch_frac=switch,
        ))
    return specs


# ---------------------------------------------------------------------------
# Waveform primitives
# ---------------------------------------------------------------------------

def _add_bumps(sig: np.ndarray, fs: int, times: np.ndarray, offset: float,
               width: float, amp) -> None:
    """Add a Gaussian bump of `width` seconds near each event time."""
    n = len(sig)
    amps = np.broadcast_to(amp, np.shape(times)) if np.ndim(amp) == 0 else amp
    half = int(4 * width * fs) + 1
    for t0, a in zip(np.atleast_1d(times), np.atleast_1d(amps)):
        center = (t0 + offset) * fs
        lo = max(0, int(center) - half)
        hi = min(n, int(center) + half + 1)
        if lo >= hi:
            continue
        k = np.arange(lo, hi)
        sig[lo:hi] += a * np.exp(-0.5 * ((k - center) / (width * fs)) ** 2)


def _narrow_qrs(sig, fs, times, rng):
    amp = rng.uniform(0.9, 1.4)
    _add_bumps(sig, fs, times, -0.028, 0.008, -0.12 * amp)
    _add_bumps(sig, fs, times, 0.0, 0.011, amp)
    _add_bumps(sig, fs, times, 0.028, 0.009, -0.22 * amp)
    return amp


def _wide_qrs(sig, fs, times, rng):
    amp = rng.uniform(1.0, 1.5)
    _add_bumps(sig, fs, times, 0.0, 0.038, amp)
    _add_bumps(sig, fs, times, 0.085, 0.045, -0.55 * amp)
    return amp


def _regular_times(rate_bpm, duration, rng, jitter_cv=0.03):
    rr = 60.0 / rate_bpm
    t = float(rng.uniform(0.08, min(rr, duration)))
    out = []
    while t < duration:
        out.append(t)
        t += rr * float(np.clip(1 + jitter_cv * rng.standard_normal(), 0.6, 1.4))
    return np.array(out)


def _p_waves(sig, fs, qrs_times, pr, rng, amp=None):
    if amp is None:
        amp = rng.uniform(0.1, 0.2)
    p_times = np.asarray(qrs_times) - pr
    p_times = p_times[p_times > 0]
    _add_bumps(sig, fs, p_times, 0.0, 0.024, amp)
    return p_times


def _t_waves(sig, fs, qrs_times, rng):
    _add_bumps(sig, fs, qrs_times, 0.30, 0.055, rng.uniform(0.2, 0.35))


def synthesize_rhythm(name: str, duration_s: float, rng: np.random.Generator,
                      sample_rate: int = SAMPLE_RATE, noise_level: float = 0.03,
                      bpm_range: tuple[float, float] | None = None):
    """Build one rhythm segment; returns (samples float32, events).

    `events` maps "p_times" and "qrs_times" to arrays of event seconds, the
    generator's own ground truth for rate-based checks.
    """
    fs = sample_rate
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    sig = np.zeros(n)
    lo, hi = bpm_range if bpm_range is not None else BPM_RANGES[name]
    p_times = np.array([])
    qrs = np.array([])

    if name == "SINUS" or name == "EAR":
        qrs = _regular_times(rng.uniform(lo, hi), duration_s, rng)
        _narrow_qrs(sig, fs, qrs, rng)
        p_amp = rng.uniform(-0.25, -0.12) if name == "EAR" else None
        p_times = _p_waves(sig, fs, qrs, rng.uniform(0.14, 0.18), rng, amp=p_amp)
        _t_waves(sig, fs, qrs, rng)

    elif name == "AFIB":
        mean_rr = 60.0 / rng.uniform(lo, hi)
        times, tt = [], float(rng.uniform(0.08, mean_rr))
        while tt < duration_s:
            times.append(tt)
            tt += mean_rr * float(rng.uniform(0.65, 1.45))  # CV ~ 0.2
        qrs = np.array(times)
        _narrow_qrs(sig, fs, qrs, rng)
        _t_waves(sig, fs, qrs, rng)
        for _ in range(4):  # fibrillatory baseline, 4.5-8.5 Hz wavelets
            sig += rng.uniform(0.02, 0.05) * np.sin(
                2 * np.pi * rng.uniform(4.5, 8.5) * t + rng.uniform(0, 2 * np.pi))

    elif name == "AFL":
        flutter = rng.uniform(lo, hi) / 60.0
        sig += rng.uniform(0.12, 0.2) * (
            2 * ((flutter * t + rng.uniform(0, 1)) % 1.0) - 1.0)
        k = int(rng.integers(2, 5))  # 2:1 to 4:1 conduction
        qrs = _regular_times(flutter * 60.0 / k, duration_s, rng, jitter_cv=0.01)
        _narrow_qrs(sig, fs, qrs, rng)

    elif name in ("SVT", "JUNCTIONAL"):
        qrs = _regular_times(rng.uniform(lo, hi), duration_s, rng)
        _narrow_qrs(sig, fs, qrs, rng)
        _t_waves(sig, fs, qrs, rng)

    elif name in ("VT", "IVR"):
        qrs = _regular_times(rng.uniform(lo, hi), duration_s, rng)
        _wide_qrs(sig, fs, qrs, rng)

    elif name in ("BIGEMINY", "TRIGEMINY"):
        period = 2 if name == "BIGEMINY" else 3
        rr = 60.0 / rng.uniform(lo, hi)
        coupling = rr * rng.uniform(0.45, 0.6)
        start = float(rng.uniform(0.08, rr))
        normals, ectopics = [], []
        g = start
        while g < duration_s:
            for j in range(period - 1):
                beat = g + j * rr
                if beat < duration_s:
                    normals.append(beat)
            ect = g + (period - 2) * rr + coupling
            if ect < duration_s:
                ectopics.append(ect)
            g += period * rr
        normals, ectopics = np.array(normals), np.array(ectopics)
        _narrow_qrs(sig, fs, normals, rng)
        _wide_qrs(sig, fs, ectopics, rng)
        p_times = _p_waves(sig, fs, normals, rng.uniform(0.14, 0.18), rng)
        _t_waves(sig, fs, normals, rng)
        qrs = np.sort(np.concatenate([normals, ectopics]))

    elif name == "CHB":
        q_rate = rng.uniform(lo, hi)
        p_rate = rng.uniform(max(60.0, 1.6 * q_rate), 100.0)
        qrs = _regular_times(q_rate, duration_s, rng, jitter_cv=0.02)
        p_times = _regular_times(p_rate, duration_s, rng, jitter_cv=0.02)
        _wide_qrs(sig, fs, qrs, rng)  # ventricular escape
        _add_bumps(sig, fs, p_times, 0.0, 0.024, rng.uniform(0.1, 0.2))

    elif name == "AVB_TYPE2":
        p_rate = rng.uniform(lo, hi)
        pr = rng.uniform(0.14, 0.2)  # constant PR until the dropped beat
        k = int(rng.integers(3, 6))
        p_times = _regular_times(p_rate, duration_s, rng, jitter_cv=0.02)
        conducted = np.array([p + pr for i, p in enumerate(p_times)
                              if i % k != k - 1 and p + pr < duration_s])
        _add_bumps(sig, fs, p_times, 0.0, 0.024, rng.uniform(0.1, 0.2))
        _narrow_qrs(sig, fs, conducted, rng)
        _t_waves(sig, fs, conducted, rng)
        qrs = conducted

    elif name == "WENCKEBACH":
        p_rate = rng.uniform(lo, hi)
        k = int(rng.integers(3, 6))
        step = rng.uniform(0.04, 0.06)  # PR stretches until a beat drops
        p_times = _regular_times(p_rate, duration_s, rng, jitter_cv=0.02)
        conducted = []
        for i, p in enumerate(p_times):
            j = i % k
            if j == k - 1:
                continue
            beat = p + 0.14 + j * step
            if beat < duration_s:
                conducted.append(beat)
        conducted = np.array(conducted)
        _add_bumps(sig, fs, p_times, 0.0, 0.024, rng.uniform(0.1, 0.2))
        _narrow_qrs(sig, fs, conducted, rng)
        _t_waves(sig, fs, conducted, rng)
        qrs = conducted

    elif name == "NOISE":
        drift = np.cumsum(rng.standard_normal(n))
        drift = drift / (np.abs(drift).max() + 1e-9) * rng.uniform(0.4, 0.9)
        sig += drift
        sig += rng.uniform(0.25, 0.6) * rng.standard_normal(n)
        sig += rng.uniform(0.2, 0.5) * np.sin(
            2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))

    else:
        raise ConfigError(f"no builder for rhythm class {name!r}")

    if name != "NOISE":
        sig *= rng.uniform(0.85, 1.2)  # per-segment amplitude variability
        sig += rng.uniform(0.03, 0.1) * np.sin(
            2 * np.pi * rng.uniform(0.1, 0.35) * t + rng.uniform(0, 2 * np.pi))
        sig += noise_level * rng.standard_normal(n)

    events = {"p_times": np.asarray(p_times, dtype=np.float64),
              "qrs_times": np.asarray(qrs, dtype=np.float64)}
    return sig.astype(np.float32), events


def generate_record(spec: RecordSpec, config: SynthConfig):
    """Synthesize one record from its spec; returns (EcgRecord, events)."""
    rng = derive(config.seed, "record", spec.record_id)
    fs = config.sample_rate
    n = int(round(config.duration_s * fs))
    if len(spec.classes) == 1:
        bounds = [(0, n, spec.classes[0])]
    else:
        cut = int(round(spec.switch_frac * n))
        cut = min(max(cut, 1), n - 1)
        bounds = [(0, cut, spec.classes[0]), (cut, n, spec.classes[1])]

    pieces = []
    events = {"p_times": [], "qrs_times": []}
    annotations = []
    for onset, offset, name in bounds:
        seg, ev = synthesize_rhythm(
            name, (offset - onset) / fs, rng, sample_rate=fs,
            noise_level=config.noise_level, bpm_range=config.bpm_range(name))
        seg = seg[: offset - onset]
        if len(seg) < offset - onset:  # rounding guard
            seg = np.pad(seg, (0, offset - onset - len(seg)))
        pieces.append(seg)
        events["p_times"].append(ev["p_times"] + onset / fs)
        events["qrs_times"].append(ev["qrs_times"] + onset / fs)
        annotations.append((onset, offset, RhythmClass[name]))

    record = EcgRecord(
        record_id=spec.record_id,
        patient_id=spec.patient_id,
        sample_rate=fs,
        samples=np.concatenate(pieces),
        annotations=annotations,
    )
    record.validate()
    merged = {k: np.concatenate(v) if v else np.array([]) for k, v in events.items()}
    return record, merged


def synth_generate(config: SynthConfig) -> list[EcgRecord]:
    """Generate the whole corpus; deterministic for a fixed config."""
    return [generate_record(spec, config)[0] for spec in plan_corpus(config)]


def synth_generate_with_events(config: SynthConfig):
    records, events = [], []
    for spec in plan_corpus(config):
        rec, ev = generate_record(spec, config)
        records.append(rec)
        events.append(ev)
    return records, events

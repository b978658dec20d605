"""Synthetic corpus generator tests: determinism, rhythm semantics, balance."""

import numpy as np
import pytest

from rhythmnet.data import RhythmClass
from rhythmnet.errors import ConfigError
from rhythmnet.synth import (SynthConfig, plan_corpus, synth_generate,
                             synth_generate_with_events)


def count_r_peaks(samples, fs=200, min_gap_s=0.25):
    """Threshold peak counter: local maxima above 60% of the signal max."""
    x = np.asarray(samples, dtype=np.float64)
    thresh = 0.6 * x.max()
    above = x > thresh
    peaks = []
    last = -10 * fs
    for i in range(1, len(x) - 1):
        if above[i] and x[i] >= x[i - 1] and x[i] > x[i + 1]:
            if i - last >= min_gap_s * fs:
                peaks.append(i)
                last = i
    return len(peaks)


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        cfg = SynthConfig(seed=123, records_per_class=3,
                          classes=("SINUS", "AFIB", "VT"))
        a = synth_generate(cfg)
        b = synth_generate(cfg)
        for ra, rb in zip(a, b):
            assert ra.record_id == rb.record_id
            assert ra.annotations == rb.annotations
            np.testing.assert_array_equal(ra.samples, rb.samples)

    def test_per_record_streams_are_order_independent(self):
        cfg = SynthConfig(seed=9, records_per_class=4, classes=("SINUS", "VT"))
        from rhythmnet.synth import generate_record
        specs = plan_corpus(cfg)
        forward_order = [generate_record(s, cfg)[0] for s in specs]
        reverse_order = [generate_record(s, cfg)[0] for s in reversed(specs)]
        for ra, rb in zip(forward_order, reversed(reverse_order)):
            np.testing.assert_array_equal(ra.samples, rb.samples)


class TestRhythmSemantics:
    def test_sinus_single_segment_and_peak_count(self):
        cfg = SynthConfig(seed=7, records_per_class=10, classes=("SINUS",),
                          duration_s=30.0)
        records = synth_generate(cfg)
        for rec in records:
            assert rec.annotations == [(0, 6000, RhythmClass.SINUS)]
            peaks = count_r_peaks(rec.samples)
            assert 30 <= peaks <= 50, f"{rec.record_id}: {peaks} peaks"

    def test_chb_atrial_rate_exceeds_ventricular(self):
        cfg = SynthConfig(seed=8, records_per_class=10, classes=("CHB",))
        _, events = synth_generate_with_events(cfg)
        for ev in events:
            ratio = len(ev["p_times"]) / len(ev["qrs_times"])
            assert ratio > 1.4, f"P/QRS rate ratio {ratio:.2f}"

    def test_afib_rr_irregularity(self):
        cfg = SynthConfig(seed=10, records_per_class=10, classes=("AFIB",))
        _, events = synth_generate_with_events(cfg)
        for ev in events:
            rr = np.diff(ev["qrs_times"])
            cv = rr.std() / rr.mean()
            assert cv > 0.15, f"AFIB coefficient of variation {cv:.3f}"

    def test_vt_faster_than_ivr(self):
        cfg = SynthConfig(seed=11, records_per_class=8, classes=("VT", "IVR"),
                          transition_fraction=0.0)
        records, events = synth_generate_with_events(cfg)
        for rec, ev in zip(records, events):
            rate = 60.0 * (len(ev["qrs_times"]) - 1) / (
                ev["qrs_times"][-1] - ev["qrs_times"][0])
            label = rec.annotations[0][2]
            if label == RhythmClass.VT:
                assert rate > 100.0
            else:
                assert rate < 100.0

    def test_wide_complex_classes_have_no_p_waves(self):
        cfg = SynthConfig(seed=12, records_per_class=3,
                          classes=("VT", "IVR", "JUNCTIONAL", "SVT", "AFIB"),
                          transition_fraction=0.0)
        _, events = synth_generate_with_events(cfg)
        for ev in events:
            assert len(ev["p_times"]) == 0

    def test_every_record_satisfies_segmentation_invariant(self):
        cfg = SynthConfig(seed=13, records_per_class=4)
        for rec in synth_generate(cfg):
            rec.validate()  # raises on any gap/overlap

    def test_transitions_have_exact_boundaries(self):
        cfg = SynthConfig(seed=14, records_per_class=30,
                          classes=("SINUS", "VT"), transition_fraction=1.0)
        records = synth_generate(cfg)
        with_transition = [r for r in records if len(r.annotations) == 2]
        assert with_transition, "transition_fraction=1 produced none"
        for rec in with_transition:
            (on0, off0, a), (on1, off1, b) = rec.annotations
            assert on0 == 0 and off0 == on1 and off1 == 6000
            assert a != b


class TestCorpusPlan:
    def test_class_balance_matches_weights(self):
        cfg = SynthConfig(seed=15, records_per_class=2500,
                          classes=("SINUS", "AFIB", "VT", "NOISE"),
                          class_weights=(0.5, 0.25, 0.15, 0.1))
        specs = plan_corpus(cfg)
        assert len(specs) == 10000
        counts = {c: 0 for c in cfg.classes}
        for s in specs:
            counts[s.classes[0]] += 1
        for name, weight in zip(cfg.classes, (0.5, 0.25, 0.15, 0.1)):
            assert abs(counts[name] / 10000 - weight) < 0.02

    def test_restricted_class_list(self):
        cfg = SynthConfig(seed=16, records_per_class=5,
                          classes=("SINUS", "AFIB", "VT", "NOISE"))
        records = synth_generate(cfg)
        seen = {lab.name for r in records for _, _, lab in r.annotations}
        assert seen <= {"SINUS", "AFIB", "VT", "NOISE"}

    def test_multiple_patients(self):
        specs = plan_corpus(SynthConfig(seed=17, records_per_class=10))
        assert len({s.patient_id for s in specs}) >= 2

    def test_bad_configs_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(duration_s=0)
        with pytest.raises(ConfigError):
            SynthConfig(classes=("SINUS", "NOPE"))
        with pytest.raises(ConfigError):
            SynthConfig(classes=("SINUS", "AFIB"), class_weights=(1.0,))
        with pytest.raises(ConfigError):
            SynthConfig(classes=("SINUS",), class_weights=(-1.0,))

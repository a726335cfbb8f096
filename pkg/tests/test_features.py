"""Tests for window features."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnase import features, preprocess, simulate
from gnnase.errors import EmptyWindow, NoSpectralContent, RecordingTooShort, ZeroPower
from gnnase.numerics import make_rng


def sine(freq, sample_rate, duration, amplitude=1.0):
    t = np.arange(round(sample_rate * duration)) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t)


class TestPeakAmplitude:
    def test_constant(self):
        assert features.peak_amplitude([2.5, 2.5, 2.5]) == 2.5

    def test_unit_sine_hits_crest(self):
        # 10000 samples over one period: sample 2500 sits exactly on the crest.
        x = sine(1.0, 10_000.0, 1.0)
        assert features.peak_amplitude(x) == pytest.approx(1.0, abs=1e-6)

    def test_all_negative_window_keeps_sign(self):
        assert features.peak_amplitude([-3.0, -1.0, -2.0]) == -1.0

    def test_absolute_variant(self):
        assert features.peak_amplitude([-3.0, -1.0, -2.0], absolute=True) == 3.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyWindow):
            features.peak_amplitude([])


class TestRms:
    def test_constant_gives_magnitude(self):
        assert features.rms([-2.0, -2.0]) == 2.0

    def test_unit_sine_whole_periods(self):
        x = sine(5.0, 1000.0, 1.0)
        assert features.rms(x) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)

    def test_hand_arithmetic(self):
        assert features.rms([3.0, 4.0]) == pytest.approx(np.sqrt(12.5))

    def test_empty_rejected(self):
        with pytest.raises(EmptyWindow):
            features.rms([])


class TestVariance:
    def test_constant_is_zero(self):
        assert features.variance([7.0, 7.0, 7.0]) == 0.0

    def test_hand_arithmetic(self):
        assert features.variance([1.0, 2.0, 3.0, 4.0]) == pytest.approx(1.25)

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=30, deadline=None)
    def test_identity_with_rms_and_mean(self, seed):
        x = make_rng(seed).normal(size=64)
        lhs = features.variance(x)
        rhs = features.rms(x) ** 2 - float(np.mean(x)) ** 2
        assert abs(lhs - rhs) < 1e-12


class TestDominantFrequency:
    def test_bin_aligned_tone(self):
        assert features.dominant_frequency(sine(50.0, 1000.0, 1.0), 1000.0) == 50.0

    def test_constant_has_no_content(self):
        with pytest.raises(NoSpectralContent):
            features.dominant_frequency(np.full(64, 3.0), 64.0)

    def test_larger_component_wins(self):
        x = sine(50.0, 1000.0, 1.0, 1.0) + sine(120.0, 1000.0, 1.0, 0.3)
        assert features.dominant_frequency(x, 1000.0) == 50.0

    def test_tie_breaks_low(self):
        # Impulse spectrum is exactly flat, so every non-DC bin ties.
        assert features.dominant_frequency([2.0, 0.0, 0.0, 0.0], 4.0) == 1.0

    def test_dc_excluded(self):
        x = sine(50.0, 1000.0, 1.0) + 100.0
        assert features.dominant_frequency(x, 1000.0) == 50.0


class TestSpectralEntropy:
    def test_pure_tone_is_zero(self):
        assert features.spectral_entropy(sine(50.0, 1000.0, 1.0)) == pytest.approx(0.0, abs=1e-9)

    def test_two_equal_bins_give_ln2(self):
        # Impulse of length 4: one-sided non-DC bins carry equal power.
        assert features.spectral_entropy([2.0, 0.0, 0.0, 0.0]) == pytest.approx(np.log(2.0))

    def test_white_noise_near_uniform(self):
        x = make_rng(17).normal(size=1024)
        h = features.spectral_entropy(x)
        assert abs(h - np.log(512.0)) <= 0.15 * np.log(512.0)

    def test_zero_signal_rejected(self):
        with pytest.raises(ZeroPower):
            features.spectral_entropy(np.zeros(16))


class TestExtractWindows:
    @staticmethod
    def recording(duration=0.5, sample_rate=2000.0):
        machine = simulate.MachineSpec(sample_rate=sample_rate, duration=duration)
        op = simulate.OperatingPoint.from_load(0.0)
        return simulate.synthesize(machine, op, simulate.FaultSpec(kind="healthy"), 30.0, 1)

    def test_window_count_formula(self):
        rec = self.recording(duration=0.5)  # L = 1000
        spec = features.WindowSpec(window_len=256, hop=128)
        assert len(features.extract_windows(rec, spec)) == 6

    def test_single_window_when_exact(self):
        rec = self.recording(duration=0.128)  # L = 256
        spec = features.WindowSpec(window_len=256, hop=128)
        out = features.extract_windows(rec, spec)
        assert len(out) == 1
        assert out[0].window_index == 0

    def test_dimension_with_and_without_frequency(self):
        rec = self.recording()
        spec = features.WindowSpec(window_len=256, hop=128)
        full = features.extract_windows(rec, spec)
        time_only = features.extract_windows(rec, spec, include_frequency=False)
        assert full[0].x.shape == (20,)
        assert time_only[0].x.shape == (12,)

    def test_too_short_rejected(self):
        rec = self.recording(duration=0.1)  # L = 200
        with pytest.raises(RecordingTooShort):
            features.extract_windows(rec, features.WindowSpec(window_len=256, hop=128))

    def test_deterministic(self):
        rec = self.recording()
        spec = features.WindowSpec(window_len=256, hop=128)
        a = features.extract_windows(rec, spec)
        b = features.extract_windows(rec, spec)
        for wa, wb in zip(a, b):
            assert np.array_equal(wa.x, wb.x)

    def test_feature_names_align_with_vector(self):
        names = features.feature_names()
        assert len(names) == 20
        assert names[0] == "phase_a_peak"
        assert names[4] == "phase_a_h_spec"
        assert names[-1] == "vibration_h_spec"
        short = features.feature_names(include_frequency=False)
        assert len(short) == 12
        assert all("f_dom" not in n and "h_spec" not in n for n in short)


class TestShiftAndScaleInvariance:
    def test_full_window_spectral_features_shift_invariant(self):
        x = sine(50.0, 1000.0, 1.0) + sine(120.0, 1000.0, 1.0, 0.4)
        shifted = preprocess.time_shift(x, 137)
        assert features.dominant_frequency(shifted, 1000.0) == features.dominant_frequency(x, 1000.0)
        assert features.spectral_entropy(shifted) == pytest.approx(
            features.spectral_entropy(x), abs=1e-9
        )
        assert features.rms(shifted) == pytest.approx(features.rms(x), abs=1e-9)
        assert features.variance(shifted) == pytest.approx(features.variance(x), abs=1e-9)

    def test_scale_maps_features_homogeneously(self):
        x = sine(50.0, 1000.0, 1.0) + 0.1 * make_rng(5).normal(size=1000)
        scaled = preprocess.amplitude_scale(x, 3.0)
        assert features.rms(scaled) == pytest.approx(3.0 * features.rms(x), rel=1e-12)
        assert features.variance(scaled) == pytest.approx(9.0 * features.variance(x), rel=1e-12)
        assert features.dominant_frequency(scaled, 1000.0) == features.dominant_frequency(x, 1000.0)
        assert features.spectral_entropy(scaled) == pytest.approx(
            features.spectral_entropy(x), abs=1e-9
        )


class TestStandardizer:
    def test_fit_transform_normalizes(self):
        rng = make_rng(8)
        vectors = [rng.normal(loc=5.0, scale=3.0, size=4) for _ in range(200)]
        std = features.Standardizer.fit(vectors)
        transformed = np.stack([std.transform(v) for v in vectors])
        assert np.mean(transformed, axis=0) == pytest.approx(np.zeros(4), abs=1e-9)
        assert np.std(transformed, axis=0) == pytest.approx(np.ones(4), abs=1e-9)

    def test_constant_dimension_does_not_blow_up(self):
        vectors = [np.array([1.0, float(i)]) for i in range(10)]
        std = features.Standardizer.fit(vectors)
        out = std.transform(np.array([1.0, 3.0]))
        assert np.all(np.isfinite(out))
        assert out[0] == 0.0

    def test_json_round_trip(self):
        std = features.Standardizer.fit([np.array([1.0, 2.0]), np.array([3.0, 4.0])])
        back = features.Standardizer.from_json(std.to_json())
        assert np.array_equal(back.mean, std.mean)
        assert np.array_equal(back.std, std.std)


class TestFeatureTableCsv:
    def test_round_trip(self, tmp_path):
        rec = TestExtractWindows.recording()
        spec = features.WindowSpec(window_len=256, hop=128)
        table = features.extract_windows(rec, spec)
        names = features.feature_names()
        path = tmp_path / "features.csv"
        features.save_feature_table(table, path, names)
        back, names_back = features.load_feature_table(path)
        assert names_back == names
        assert len(back) == len(table)
        for orig, loaded in zip(table, back):
            assert loaded.source == orig.source
            assert loaded.window_index == orig.window_index
            assert np.array_equal(loaded.x, orig.x)

import numpy as np
import pytest

from cohclass import coherence, sim
from cohclass.errors import ParameterError


class TestGenerateScene:
    def test_empty_spec(self):
        spec = sim.SceneSpec(width=32, height=24, background_gamma=0.7)
        phase, gamma = sim.generate_scene(spec)
        assert phase.shape == (24, 32)
        assert not phase.any()
        assert (gamma == 0.7).all()

    def test_bubble_produces_full_fringe_ring(self):
        # amplitude 2*pi at the center: the radial profile passes through
        # pi somewhere, so the wrapped phase jumps across the +-pi cut
        spec = sim.SceneSpec(
            width=129, height=129,
            bubbles=(sim.Bubble(64, 64, 20.0, 2 * np.pi),),
        )
        phase, _ = sim.generate_scene(spec)
        radial = phase[64, 64:]
        assert np.abs(np.diff(radial)).max() > np.pi

    def test_wrap_contract(self):
        spec = sim.SceneSpec(
            width=64, height=64,
            bubbles=(sim.Bubble(10, 50, 15.0, 5.7 * np.pi),),
            roads=(sim.Road(0, 0, 63, 63, 4.0, 2.9),),
            buildings=(sim.Building(5, 5, 25, 30, -3.0),),
        )
        phase, _ = sim.generate_scene(spec)
        assert phase.min() > -np.pi
        assert phase.max() <= np.pi

    def test_road_and_building_offsets_applied(self):
        spec = sim.SceneSpec(
            width=40, height=40,
            roads=(sim.Road(20, 0, 20, 39, 3.0, 1.0),),
            buildings=(sim.Building(0, 0, 5, 5, -1.5),),
        )
        phase, _ = sim.generate_scene(spec)
        assert phase[20, 10] == pytest.approx(1.0)
        assert phase[2, 2] == pytest.approx(-1.5)
        assert phase[30, 30] == 0.0

    def test_gamma_regions(self):
        spec = sim.SceneSpec(
            width=40, height=40,
            coherence_regions=(
                sim.GammaRect(0, 0, 10, 10, 0.2),
                sim.GammaBlob(30.0, 30.0, 5.0, 0.4),
            ),
            background_gamma=0.9,
        )
        _, gamma = sim.generate_scene(spec)
        assert gamma[5, 5] == 0.2
        assert gamma[30, 30] == 0.4
        assert gamma[20, 20] == 0.9

    def test_geometry_bounds_checked(self):
        bad = sim.SceneSpec(width=20, height=20, bubbles=(sim.Bubble(50, 5, 3, 1.0),))
        with pytest.raises(ParameterError):
            sim.generate_scene(bad)
        bad = sim.SceneSpec(
            width=20, height=20, coherence_regions=(sim.GammaRect(0, 0, 30, 5, 0.5),)
        )
        with pytest.raises(ParameterError):
            sim.generate_scene(bad)
        bad = sim.SceneSpec(
            width=20, height=20, coherence_regions=(sim.GammaRect(0, 0, 5, 5, 1.5),)
        )
        with pytest.raises(ParameterError):
            sim.generate_scene(bad)


class TestSynthesize:
    def test_full_coherence_is_noiseless(self):
        rng = np.random.default_rng(0)
        phase = rng.uniform(-np.pi, np.pi, (16, 16))
        z = sim.synthesize_interferogram(phase, np.ones_like(phase), seed=1)
        assert np.allclose(z, np.exp(1j * phase).astype(np.complex64), atol=1e-6)

    def test_zero_coherence_null_distribution(self):
        rng = np.random.default_rng(1)
        phase = rng.uniform(-np.pi, np.pi, (750, 750))
        z = sim.synthesize_interferogram(phase, np.zeros_like(phase), seed=2)
        coh = coherence.estimate_coherence(z, np.exp(1j * phase), 7)
        values = coh[3:-3:7, 3:-3:7]
        assert values.size >= 1e4
        assert values.mean() == pytest.approx(0.13, abs=0.02)

    def test_partial_coherence_calibration(self):
        rng = np.random.default_rng(2)
        phase = rng.uniform(-np.pi, np.pi, (750, 750))
        for gamma in (0.2, 0.5, 0.8):
            z = sim.synthesize_interferogram(phase, np.full(phase.shape, gamma), seed=3)
            coh = coherence.estimate_coherence(z, np.exp(1j * phase), 7)
            values = coh[3:-3:7, 3:-3:7]
            assert values.size >= 1e4
            assert values.mean() == pytest.approx(gamma, abs=0.05)

    def test_unit_expected_power(self):
        rng = np.random.default_rng(3)
        phase = rng.uniform(-np.pi, np.pi, (300, 300))
        for gamma in (0.0, 0.5, 0.9):
            z = sim.synthesize_interferogram(phase, np.full(phase.shape, gamma), seed=4)
            power = float(np.mean(np.abs(z.astype(np.complex128)) ** 2))
            assert power == pytest.approx(1.0, rel=0.02)

    def test_deterministic_per_seed(self):
        phase = np.zeros((8, 8))
        gamma = np.full((8, 8), 0.5)
        a = sim.synthesize_interferogram(phase, gamma, seed=9)
        b = sim.synthesize_interferogram(phase, gamma, seed=9)
        c = sim.synthesize_interferogram(phase, gamma, seed=10)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_gamma_out_of_range(self):
        with pytest.raises(ParameterError):
            sim.synthesize_interferogram(np.zeros((4, 4)), np.full((4, 4), 1.2), 0)


class TestTruthMask:
    def test_threshold_inclusive(self):
        gamma = np.array([[0.59, 0.6], [0.61, 0.0]])
        assert sim.truth_mask(gamma).tolist() == [[0, 1], [1, 0]]

    def test_consistent_in_samples(self):
        sample = sim.generate_dataset(1, 96, seed=5)[0]
        assert np.array_equal(
            sample.truth_mask, (sample.gamma_true >= 0.6).astype(np.uint8)
        )


class TestGenerateDataset:
    def test_deterministic(self):
        a = sim.generate_dataset(3, 64, seed=7)
        b = sim.generate_dataset(3, 64, seed=7)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.noisy, sb.noisy)
            assert np.array_equal(sa.gamma_true, sb.gamma_true)
            assert sa.spec == sb.spec

    def test_samples_differ_across_indices(self):
        a, b = sim.generate_dataset(2, 64, seed=8)
        assert not np.array_equal(a.noisy, b.noisy)

    def test_desk_scale_knob(self):
        samples = sim.generate_dataset(2, 64, seed=9)
        for s in samples:
            assert s.clean.shape == (64, 64)
            assert s.clean.dtype == np.complex64
            assert s.noisy.dtype == np.complex64
            assert s.gamma_true.dtype == np.float32
            assert np.isin(s.truth_mask, (0, 1)).all()

    def test_blob_coverage_range(self):
        # documented default: low-coherence blobs cover 20..50% of the area
        samples = sim.generate_dataset(6, 128, seed=10)
        fractions = [1.0 - s.truth_mask.mean() for s in samples]
        assert all(f > 0.02 for f in fractions)
        assert np.mean(fractions) < 0.6

    def test_needs_positive_count(self):
        with pytest.raises(ParameterError):
            sim.generate_dataset(0, 64, seed=0)


class TestSampleIo:
    def test_save_load_roundtrip(self, tmp_path):
        sample = sim.generate_dataset(1, 48, seed=11)[0]
        sim.save_sample(sample, tmp_path / "s0")
        assert (tmp_path / "s0" / "manifest.json").exists()
        back = sim.load_sample(tmp_path / "s0")
        assert np.array_equal(back.clean, sample.clean)
        assert np.array_equal(back.noisy, sample.noisy)
        assert np.array_equal(back.gamma_true, sample.gamma_true)
        assert np.array_equal(back.truth_mask, sample.truth_mask)
        assert back.spec == sample.spec

    def test_rerender_from_manifest_spec(self, tmp_path):
        sample = sim.generate_dataset(1, 48, seed=12)[0]
        sim.save_sample(sample, tmp_path / "s0")
        spec = sim.load_sample(tmp_path / "s0").spec
        again = sim.render_sample(spec)
        assert np.array_equal(again.noisy, sample.noisy)

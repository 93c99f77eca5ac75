"""Tests for the synthetic dataset generator."""

import numpy as np
import pytest

from deep_envelope.synthetic import make_synthetic


class TestMakeSynthetic:
    """Test cases for make_synthetic."""

    def test_default_shape(self):
        """Test 40 subjects x 20 segments x 10 features with 8 noise positions."""
        data = make_synthetic()
        ds = data.dataset

        assert ds.n_subjects == 40
        assert ds.segment_counts == (20,) * 40
        assert ds.d == 10
        assert len(data.noise_positions) == 8
        assert list(data.noise_positions) == sorted(data.noise_positions)
        assert data.signal_features == (0, 1, 2, 3, 4)

    def test_balanced_classes(self):
        """Test both classes get half the subjects."""
        ds = make_synthetic().dataset

        assert int(ds.labels.sum()) == 20

    def test_ids(self):
        """Test ids are zero-padded and unique."""
        ds = make_synthetic().dataset

        assert ds.subject_ids[0] == "S01"
        assert ds.subject_ids[-1] == "S40"

    def test_seeded(self):
        """Test one seed gives identical data and another seed does not."""
        a = make_synthetic(seed=7).dataset
        b = make_synthetic(seed=7).dataset
        c = make_synthetic(seed=8).dataset

        for x, y in zip(a.envelopes, b.envelopes):
            assert x.segments.tobytes() == y.segments.tobytes()
        assert not np.array_equal(a.envelopes[0].segments, c.envelopes[0].segments)

    def test_signal_separates_classes(self):
        """Test signal positions differ in class mean while noise positions do not."""
        data = make_synthetic(n_subjects=1000, seed=1)
        ds = data.dataset
        cube = np.stack([env.segments for env in ds.envelopes])
        gap = cube[ds.labels == 1].mean(axis=0) - cube[ds.labels == 0].mean(axis=0)
        signal = [j for j in range(20) if j not in data.noise_positions]

        assert np.all(gap[signal, :5] > 0.4)
        assert np.all(np.abs(gap[list(data.noise_positions), :5]) < 0.4)

    def test_noise_positions_lean_to_class_one(self):
        """Test class-0 segments at noise positions sit on the class-1 side."""
        data = make_synthetic()
        ds = data.dataset
        cube = np.stack([env.segments for env in ds.envelopes])[ds.labels == 0]
        noise = list(data.noise_positions)
        signal = [j for j in range(20) if j not in noise]

        assert cube[:, noise, :5].mean() > 0.2
        assert cube[:, signal, :5].mean() < -0.2

    def test_invalid_arguments(self):
        """Test impossible layouts are rejected."""
        with pytest.raises(ValueError):
            make_synthetic(segments=5, signal_positions=6)
        with pytest.raises(ValueError):
            make_synthetic(n_subjects=3)

"""Tests for folds, metrics and the experiment runner."""

import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from deep_envelope.config import RunConfig, load_config
from deep_envelope.dataset import Dataset, Envelope
from deep_envelope.errors import FoldError, PipelineError
from deep_envelope.evaluation import (
    ConfusionCounts,
    CvScheme,
    format_percent,
    make_folds,
    metrics,
    run_experiment,
    run_fold,
)
from deep_envelope.reporting import render_report
from deep_envelope.synthetic import make_synthetic


@pytest.fixture
def forty():
    """Forty balanced subjects, small envelopes."""
    return make_synthetic(
        n_subjects=40, segments=4, features=2, signal_positions=3, signal_features=2, seed=1
    ).dataset


@pytest.fixture
def small():
    """Twelve subjects, eight segments, four features."""
    return make_synthetic(n_subjects=12, segments=8, features=4, signal_positions=6, seed=3).dataset


@pytest.fixture
def small_cfg():
    """Two deep layers over the small dataset: counts [6, 5, 4]."""
    return RunConfig(initial_cutoff=2, deep_layers=2, keep_rule="fraction:0.5", seed=3)


class TestMakeFolds:
    """Test cases for make_folds."""

    def test_loso(self, forty):
        """Test one fold per subject, each leaving exactly that subject out."""
        folds = make_folds(forty, CvScheme.LOSO)

        assert len(folds) == 40
        assert [f.test_ids for f in folds] == [(s,) for s in forty.subject_ids]
        assert all(len(f.train_ids) == 39 for f in folds)

    def test_holdout_is_stratified(self, forty):
        """Test a 0.3 holdout puts 12 subjects in test, 6 per class."""
        folds = make_folds(forty, "holdout", holdout_fraction=0.3, seed=4)

        (fold,) = folds.folds
        assert len(fold.test_ids) == 12
        test_labels = forty.subset(fold.test_ids).labels
        assert int(test_labels.sum()) == 6
        assert set(fold.train_ids).isdisjoint(fold.test_ids)

    def test_kfold_partitions_subjects(self, forty):
        """Test ten folds of four subjects cover every subject once."""
        folds = make_folds(forty, "kfold", k=10, seed=2)

        tested = [s for f in folds for s in f.test_ids]
        assert len(folds) == 10
        assert all(len(f.test_ids) == 4 for f in folds)
        assert sorted(tested) == sorted(forty.subject_ids)
        for f in folds:
            assert set(f.train_ids).isdisjoint(f.test_ids)

    def test_kfold_is_stratified(self, forty):
        """Test each of ten folds over 20 + 20 subjects tests two of each class."""
        folds = make_folds(forty, "kfold", k=10, seed=2)

        for f in folds:
            assert int(forty.subset(f.test_ids).labels.sum()) == 2

    def test_holdout_size_rounds_down(self, small):
        """Test 0.3 of twelve subjects puts three in the test side."""
        (fold,) = make_folds(small, "holdout", holdout_fraction=0.3, seed=1).folds

        assert len(fold.test_ids) == 3
        assert len(fold.train_ids) == 9
        assert len(set(small.subset(fold.train_ids).labels.tolist())) == 2

    def test_seeded(self, forty):
        """Test the same seed gives the same folds."""
        assert make_folds(forty, "kfold", k=5, seed=9) == make_folds(forty, "kfold", k=5, seed=9)

    def test_loso_with_lone_positive(self):
        """Test leaving out the only positive subject is rejected."""
        rng = np.random.default_rng(0)
        ds = Dataset(
            tuple(Envelope(f"s{i}", int(i == 0), rng.normal(size=(3, 2))) for i in range(5))
        )

        with pytest.raises(FoldError, match="cannot satisfy class presence"):
            make_folds(ds, CvScheme.LOSO)

    def test_kfold_k_too_large(self, small):
        """Test k above the subject count is rejected."""
        with pytest.raises(FoldError):
            make_folds(small, "kfold", k=13)


class TestMetrics:
    """Test cases for metrics and format_percent."""

    def test_reference_confusion(self):
        """Test tp=19 fn=1 tn=17 fp=3 gives 90.00 / 95.00 / 85.00."""
        m = metrics(ConfusionCounts(tp=19, fp=3, tn=17, fn=1))

        assert format_percent(m.acc) == "90.00"
        assert format_percent(m.sen) == "95.00"
        assert format_percent(m.spe) == "85.00"
        assert m.undefined == ()

    def test_mcc_matches_direct_formula(self):
        """Test MCC on 1000 random confusion matrices."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            tp, fp, tn, fn = (int(v) for v in rng.integers(0, 50, size=4))
            if tp + fp + tn + fn == 0:
                continue
            den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
            expected = 0.0 if den == 0 else (tp * tn - fp * fn) / math.sqrt(den)

            assert metrics(ConfusionCounts(tp, fp, tn, fn)).mcc == expected

    def test_counts_from_predictions(self):
        """Test each cell of the confusion table is counted."""
        counts = ConfusionCounts.from_predictions([1, 1, 0, 0, 1, 0], [1, 0, 0, 1, 1, 0])

        assert counts == ConfusionCounts(tp=2, fp=1, tn=2, fn=1)

    def test_perfect_prediction(self):
        """Test tp=20 tn=20 gives ACC 100 and MCC 1."""
        m = metrics(ConfusionCounts(tp=20, fp=0, tn=20, fn=0))

        assert m.acc == 100.0
        assert m.mcc == 1.0

    def test_one_class_predictions_flag_mcc(self):
        """Test an all-positive prediction column zeroes and flags MCC."""
        m = metrics(ConfusionCounts.from_predictions([0, 1, 1, 0], [1, 1, 1, 1]))

        assert m.mcc == 0.0
        assert "mcc" in m.undefined
        assert m.spe == 0.0

    def test_missing_class_flags_sensitivity(self):
        """Test no positive subjects leaves SEN undefined."""
        m = metrics(ConfusionCounts(tp=0, fp=1, tn=3, fn=0))

        assert m.sen == 0.0
        assert "sen" in m.undefined

    def test_accuracy_identity(self):
        """Test ACC*(P+N) equals SEN*P + SPE*N."""
        rng = np.random.default_rng(1)
        for _ in range(200):
            tp, fp, tn, fn = (int(v) for v in rng.integers(1, 30, size=4))
            m = metrics(ConfusionCounts(tp, fp, tn, fn))
            P, N = tp + fn, tn + fp

            assert m.acc * (P + N) == pytest.approx(m.sen * P + m.spe * N, rel=1e-12)

    def test_format_percent_rounds_half_up(self):
        """Test decimal half-up rounding of the printed value."""
        assert format_percent(2.675) == "2.68"
        assert format_percent(0.125) == "0.13"
        assert format_percent(0.5, 4) == "0.5000"


class TestRunExperiment:
    """Test cases for run_fold and run_experiment."""

    def test_shapes(self, small, small_cfg):
        """Test one label row per subject and one column per layer."""
        result = run_experiment(small, small_cfg)

        assert result.subject_ids == small.subject_ids
        assert result.labels.e.shape == (12, 3)
        assert result.labels.layer_names == ("original", "layer1", "layer2")
        assert result.layer_counts == (6, 5, 4)
        assert result.fused_metrics.counts.total == 12
        assert result.baseline_metrics.counts.total == 12
        assert len(result.outcomes) == 12

    def test_fuse_original_off(self, small):
        """Test layer 0 can be left out of the fusion matrix."""
        cfg = RunConfig(initial_cutoff=2, deep_layers=2, fuse_original=False, seed=3)

        result = run_experiment(small, cfg)

        assert result.fused_columns == ("layer1", "layer2")
        assert result.fusion.weights.beta.shape == (2,)

    def test_deterministic_report(self, small, small_cfg):
        """Test two runs render byte-identical reports."""
        first = render_report(run_experiment(small, small_cfg))
        second = render_report(run_experiment(small, small_cfg))

        assert first == second

    def test_workers_do_not_change_results(self, small, small_cfg):
        """Test threaded folds match the sequential run."""
        sequential = run_experiment(small, small_cfg)
        threaded = run_experiment(small, small_cfg.model_copy(update={"workers": 2}))

        assert_array_equal(sequential.labels.e, threaded.labels.e)
        assert_array_equal(sequential.fusion.predictions, threaded.fusion.predictions)

    def test_training_side_ignores_test_subject(self, small, small_cfg):
        """Test scrambling the held-out envelope leaves every training-side fit unchanged."""
        fold = make_folds(small, CvScheme.LOSO).folds[0]
        held_out = fold.test_ids[0]
        rng = np.random.default_rng(99)
        scrambled = small.with_segments(
            [
                rng.normal(scale=50.0, size=env.segments.shape)
                if env.subject_id == held_out
                else env.segments
                for env in small.envelopes
            ]
        )

        clean = run_fold(small, fold, small_cfg)
        dirty = run_fold(scrambled, fold, small_cfg)

        for a, b in zip(clean.space.provenance, dirty.space.provenance):
            assert a.removed_positions == b.removed_positions
        for a, b in zip(clean.selections, dirty.selections):
            assert a.kept_feature_indices == b.kept_feature_indices
            assert_array_equal(a.weights.weights, b.weights.weights)
        assert clean.training_accuracy == dirty.training_accuracy

    def test_failure_names_fold_and_stage(self, small, small_cfg):
        """Test a module error is reported with its fold and stage."""
        fold = make_folds(small, CvScheme.LOSO).folds[0]
        held_out = fold.test_ids[0]
        short = small.with_segments(
            [
                env.segments[:3] if env.subject_id == held_out else env.segments
                for env in small.envelopes
            ]
        )

        with pytest.raises(PipelineError, match="fold 0 stage transform") as excinfo:
            run_fold(short, fold, small_cfg)
        assert excinfo.value.code == "ragged_envelopes"

    @pytest.mark.slow
    def test_synthetic_benchmark(self):
        """Test the default synthetic run beats the raw-segment baseline and reaches 85%."""
        data = make_synthetic()
        cfg = load_config(preset="synth")

        result = run_experiment(data.dataset, cfg)

        assert result.fused_metrics.acc >= result.baseline_metrics.acc
        assert result.fused_metrics.acc >= 85.0

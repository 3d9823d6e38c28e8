"""Tests for model, hyperparameter and report files."""

import json

import numpy as np
import pytest

from voxpath.errors import DataError, ModelFormatError, StorageError
from voxpath.models import GbtHyperparams, MetricReport, PipelineOptions, ProposedHyperparams
from voxpath.services.persistence import load_hyperparams, load_model, save_hyperparams, save_model
from voxpath.services.pipeline import cross_validate, train_pipeline
from voxpath.services.reports import COLUMNS, render_table, write_report

SVM_HP = ProposedHyperparams(rf_trees=10, svm_C=2.0, gamma_raw=-1.0)
GBT_HP = GbtHyperparams(n_estimators=5, max_depth=2, learning_rate=0.2, rf_trees=10)


class TestModelFile:
    """Tests for trained pipeline files."""

    @pytest.mark.parametrize("hp", [SVM_HP, GBT_HP])
    def test_reloaded_model_predicts_the_same(self, tmp_path, separable_table, rng, hp):
        """A saved pipeline predicts identically after loading."""
        pipeline = train_pipeline(separable_table.X, separable_table.y, hp, seed=3)
        path = tmp_path / "model.json"
        save_model(pipeline, path, separable_table.mfcc_config, separable_table.feature_config)
        loaded, model_file = load_model(path)
        probe = separable_table.X + 0.5 * rng.standard_normal(separable_table.X.shape)
        assert np.array_equal(loaded.predict(probe), pipeline.predict(probe))
        assert np.array_equal(loaded.mask, pipeline.mask)
        assert loaded.fingerprint == pipeline.fingerprint
        assert model_file.d == 2

    def test_memorizes_training_rows(self, tmp_path, separable_table):
        """A reloaded model labels its own separable training rows correctly."""
        pipeline = train_pipeline(separable_table.X, separable_table.y, SVM_HP, seed=1)
        path = tmp_path / "model.json"
        save_model(pipeline, path, separable_table.mfcc_config, separable_table.feature_config)
        loaded, _ = load_model(path)
        assert np.array_equal(loaded.predict(separable_table.X), separable_table.y)

    def test_standardizer_saved(self, tmp_path, separable_table):
        """z-score parameters travel with the model."""
        options = PipelineOptions(standardize=True)
        pipeline = train_pipeline(separable_table.X, separable_table.y, SVM_HP, seed=0, options=options)
        path = tmp_path / "model.json"
        save_model(pipeline, path, separable_table.mfcc_config, separable_table.feature_config)
        loaded, _ = load_model(path)
        assert np.array_equal(loaded.mean, pipeline.mean)
        assert np.array_equal(loaded.predict(separable_table.X), pipeline.predict(separable_table.X))

    def test_version_mismatch(self, tmp_path, separable_table):
        """A different format version is a model-format error."""
        pipeline = train_pipeline(separable_table.X, separable_table.y, SVM_HP, seed=0)
        path = tmp_path / "model.json"
        save_model(pipeline, path, separable_table.mfcc_config, separable_table.feature_config)
        data = json.loads(path.read_text())
        data["format_version"] = 2
        path.write_text(json.dumps(data))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_not_a_model(self, tmp_path):
        """Unrelated JSON is a data error."""
        path = tmp_path / "model.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(DataError):
            load_model(path)

    def test_missing_file(self, tmp_path):
        """Missing files are I/O errors."""
        with pytest.raises(StorageError):
            load_model(tmp_path / "absent.json")


class TestHyperparamsFile:
    """Tests for tuned hyperparameter files."""

    def test_kind_survives(self, tmp_path):
        """The model family is restored from the discriminator."""
        save_hyperparams(GBT_HP, tmp_path / "hp.json", tune_seed=17, eval_seed=7, fallback=True)
        loaded = load_hyperparams(tmp_path / "hp.json")
        assert loaded.hyperparams == GBT_HP
        assert loaded.fallback
        assert (loaded.tune_seed, loaded.eval_seed) == (17, 7)


class TestReports:
    """Tests for report rendering."""

    def test_table_columns(self):
        """The header carries the five metric columns."""
        report = MetricReport(sensitivity=1.0, specificity=0.5, uar=0.75, weighted=0.8)
        table = render_table({"Proposed (RF + SVM)": report})
        header = table.splitlines()[0]
        assert all(column in header for column in COLUMNS)
        assert "0.8000" in table

    def test_report_files_reproducible(self, tmp_path, separable_table):
        """Identical runs write identical report bytes."""
        hp = ProposedHyperparams(rf_trees=10)
        for name in ("a", "b"):
            report = cross_validate(separable_table, hp, k=4, seed=5)
            write_report(tmp_path / f"{name}.json", "Proposed (RF + SVM)", report, {"seed": 5})
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.json.txt").read_bytes() == (tmp_path / "b.json.txt").read_bytes()
        payload = json.loads((tmp_path / "a.json").read_text())
        assert len(payload["metrics"]["folds"]) == 4

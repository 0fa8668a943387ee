import json
import os

import numpy as np
import pytest

import utils.ml_pipeline as ml_pipeline
from utils.config import ExperimentConfig
from utils.data_generator import generate_synthetic
from utils.data_loader import kfold, standardize
from utils.errors import DataError, TrainingDivergedError
from utils.fingerprint import fingerprint_array
from utils.ml_pipeline import (FitProvenance, grid_search_lr, run_experiment, summarise,
                               sweep_fineness)
from utils.survival_core import discretize_labels, km_quantile_grid


@pytest.fixture
def small_dataset():
    dataset, _ = generate_synthetic(120, 3, seed=5)
    return dataset


def _config(tmp_path, **overrides):
    settings = dict(model='linear-ph', mode='pooled', global_rounds=5, local_rounds=1, folds=2,
                    lr=0.01, time_steps=5, batch_size=64, brier_points=20, hidden_sizes=(4,),
                    out=str(tmp_path / "report.json"))
    settings.update(overrides)
    return ExperimentConfig(**settings)


class TestRunExperiment:
    def test_pooled_report(self, tmp_path, small_dataset):
        cfg = _config(tmp_path)
        report = run_experiment(cfg, dataset=small_dataset)

        assert len(report.folds) == 2
        assert np.isfinite(report.summary['c_index_mean'])
        assert np.isfinite(report.summary['ibs_std'])
        assert report.summary['effective_steps'] == [fold.grid['m'] for fold in report.folds]
        with open(cfg.out, encoding="utf-8") as handle:
            saved = json.load(handle)
        assert saved['config']['model'] == 'linear-ph'
        assert saved['dataset']['size'] == 120
        assert not os.path.exists(str(tmp_path / "report.rounds.jsonl"))

    def test_report_is_reproducible(self, tmp_path, small_dataset):
        cfg = _config(tmp_path, model='nn-nonph')
        first = run_experiment(cfg, dataset=small_dataset, write=False)
        second = run_experiment(cfg, dataset=small_dataset, write=False)
        assert first.to_json(include_wall_clock=False) == second.to_json(include_wall_clock=False)

    def test_federated_round_log(self, tmp_path, small_dataset):
        cfg = _config(tmp_path, mode='iid', centres=3, global_rounds=4)
        report = run_experiment(cfg, dataset=small_dataset)

        lines = (tmp_path / "report.rounds.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == cfg.folds * cfg.global_rounds
        assert {json.loads(line)['fold'] for line in lines} == {0, 1}
        assert all(len(fold.centres) == 3 for fold in report.folds)

    def test_fit_steps_see_training_rows_only(self, tmp_path, small_dataset):
        cfg = _config(tmp_path, lr=None, lr_grid=True, global_rounds=2)
        report = run_experiment(cfg, dataset=small_dataset, write=False)
        for fold, split in zip(report.folds, kfold(small_dataset, cfg.folds, cfg.seed)):
            train_ids = small_dataset.subset(split.train_indices).row_ids
            test_ids = small_dataset.subset(split.test_indices).row_ids
            assert set(fold.fit_inputs) == {'standardize', 'time_grid', 'lr_search', 'training'}
            for step in fold.fit_inputs.values():
                assert step['fingerprint'] == fingerprint_array(train_ids)
                assert step['fingerprint'] != fold.test_fingerprint
                assert step['rows'] == len(train_ids)
            assert fold.test_fingerprint == fingerprint_array(test_ids)
            assert fold.train_size + fold.test_size == len(small_dataset)

    def test_held_out_rows_reaching_a_fit_step_are_refused(self, tmp_path, small_dataset,
                                                          monkeypatch):
        def leaky_split(dataset, split):
            return dataset, dataset.subset(split.test_indices)

        monkeypatch.setattr(ml_pipeline, 'split_fold', leaky_split)
        with pytest.raises(DataError, match="held-out rows") as excinfo:
            run_experiment(_config(tmp_path), dataset=small_dataset, write=False)
        assert excinfo.value.context['step'] == 'standardize'
        assert excinfo.value.context['fold'] == 0

    def test_zero_signal_data_scores_near_half(self, tmp_path):
        dataset, _ = generate_synthetic(600, 1, seed=21, signal=0.0)
        cfg = _config(tmp_path, global_rounds=10, lr=0.01)
        report = run_experiment(cfg, dataset=dataset, write=False)
        assert report.summary['c_index_mean'] == pytest.approx(0.5, abs=0.08)

    def test_saves_fold_models(self, tmp_path, small_dataset):
        cfg = _config(tmp_path, save_models=True)
        run_experiment(cfg, dataset=small_dataset)
        saved = sorted(os.listdir(tmp_path / "report_models"))
        assert saved == ['fold_0.model.json', 'fold_1.model.json']

    def test_fold_errors_carry_the_fold(self, tmp_path, small_dataset):
        cfg = _config(tmp_path, model='nn-nonph')
        features = small_dataset.features.copy()
        features[0, 0] = np.nan
        broken = type(small_dataset)(features=features, times=small_dataset.times,
                                     events=small_dataset.events,
                                     feature_names=small_dataset.feature_names)
        with pytest.raises(TrainingDivergedError) as excinfo:
            run_experiment(cfg, dataset=broken, write=False)
        assert 'fold' in excinfo.value.context


class TestGridSearch:
    @pytest.fixture
    def problem(self, small_dataset):
        train, _ = standardize(small_dataset)
        grid = km_quantile_grid(train.times, train.events, 4)
        return train, discretize_labels(train, grid), grid

    def test_evaluates_every_grid_point(self, tmp_path, problem):
        train, labels, grid = problem
        cfg = _config(tmp_path, lr=None, lr_grid=True)
        chosen, losses = grid_search_lr(train, labels, grid, cfg)
        assert len(losses) == 5
        assert chosen in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
        finite = {key: loss for key, loss in losses.items() if loss is not None}
        assert losses[repr(chosen)] == min(finite.values())

    def test_deterministic(self, tmp_path, problem):
        train, labels, grid = problem
        cfg = _config(tmp_path, lr=None, lr_grid=True)
        assert grid_search_lr(train, labels, grid, cfg) == grid_search_lr(train, labels, grid, cfg)

    def test_diverging_candidate_is_excluded(self, tmp_path, problem, monkeypatch):
        train, labels, grid = problem
        original = ml_pipeline.train_pooled

        def poisoned(model, X, labels, epochs, learning_rate, **kwargs):
            trained = original(model, X, labels, epochs, learning_rate, **kwargs)
            if learning_rate == 1e3:
                trained.set_parameters({name: np.full_like(value, np.nan)
                                        for name, value in trained.params.items()})
            return trained

        monkeypatch.setattr(ml_pipeline, 'train_pooled', poisoned)
        cfg = _config(tmp_path, lr=None, lr_grid=True)
        chosen, losses = grid_search_lr(train, labels, grid, cfg, lr_grid=(1e-2, 1e3))
        assert chosen == 1e-2
        assert losses[repr(1e3)] is None

    def test_all_candidates_diverge(self, tmp_path, problem, monkeypatch):
        train, labels, grid = problem

        def always_diverges(model, X, labels, epochs, learning_rate, **kwargs):
            raise TrainingDivergedError("non-finite parameters", learning_rate=learning_rate)

        monkeypatch.setattr(ml_pipeline, 'train_pooled', always_diverges)
        cfg = _config(tmp_path, lr=None, lr_grid=True)
        with pytest.raises(TrainingDivergedError, match="all learning-rate"):
            grid_search_lr(train, labels, grid, cfg)

    def test_candidates_train_pooled_in_federated_folds(self, tmp_path, small_dataset,
                                                         monkeypatch):
        calls = []
        original = ml_pipeline.train_pooled

        def counting(model, X, labels, epochs, learning_rate, **kwargs):
            calls.append((len(X), learning_rate))
            return original(model, X, labels, epochs, learning_rate, **kwargs)

        monkeypatch.setattr(ml_pipeline, 'train_pooled', counting)
        cfg = _config(tmp_path, mode='iid', centres=2, lr=None, lr_grid=True, global_rounds=2,
                      folds=2)
        report = run_experiment(cfg, dataset=small_dataset, write=False)
        assert len(calls) == cfg.folds * 5
        # 80% of the 60 training rows in each fold
        assert {rows for rows, _ in calls} == {48}
        assert all(len(fold.centres) == 2 for fold in report.folds)


class TestFitProvenance:
    def test_records_each_step(self, small_dataset):
        held_out = small_dataset.subset(np.arange(10))
        fit_rows = small_dataset.subset(np.arange(10, 40))
        provenance = FitProvenance(held_out, fold=3)
        assert provenance.record('time_grid', fit_rows) is fit_rows
        expected = {'rows': 30, 'fingerprint': fingerprint_array(fit_rows.row_ids)}
        assert provenance.steps == {'time_grid': expected}

    def test_overlap_names_step_and_rows(self, small_dataset):
        provenance = FitProvenance(small_dataset.subset([4, 5]), fold=1)
        with pytest.raises(DataError) as excinfo:
            provenance.record('training', small_dataset.subset(np.arange(5)))
        assert excinfo.value.context == {'step': 'training', 'fold': 1, 'rows': [4]}
        assert provenance.steps == {}


def test_summary_uses_population_std():
    class Fold:
        def __init__(self, c_index, ibs):
            self.metrics = {'c_index': c_index, 'integrated_brier': ibs}
            self.learning_rate = 0.01
            self.grid = {'m': 5}

    summary = summarise([Fold(0.6, 0.2), Fold(0.8, 0.1), Fold(None, 0.3)])
    assert summary['c_index_mean'] == pytest.approx(0.7)
    assert summary['c_index_std'] == pytest.approx(0.1)
    assert summary['ibs_std'] == pytest.approx(np.std([0.2, 0.1, 0.3]))
    assert summary['rebased']['c_index_mean'] == 70.0


def test_sweep_table(tmp_path, small_dataset):
    cfg = _config(tmp_path, global_rounds=20, local_rounds=5)
    reports, table = sweep_fineness(cfg, [3, 5], models=['linear-ph', 'nn-ph'],
                                    modes=['pooled', 'iid'], dataset=small_dataset,
                                    table_path=str(tmp_path / "sweep.csv"))
    assert len(reports) == len(table) == 8
    assert list(table.columns) == ml_pipeline.SWEEP_COLUMNS
    assert set(table['rounds']) == {'100/1'}
    assert all(report.config['global_rounds'] == 100 for report in reports)
    assert (tmp_path / "sweep.csv").exists()
    assert (tmp_path / "report_m3_linear-ph_pooled.json").exists()

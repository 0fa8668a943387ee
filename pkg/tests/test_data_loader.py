import numpy as np
import pytest

from utils.data_loader import (Dataset, apply_standardization, kfold, load_csv, split_fold,
                               standardize, train_test_split)
from utils.errors import DataError

CSV = "age,size,time,event\n61.0,2.5,120.0,1\n45.5,1.0,300.0,0\n70.0,3.0,15.5,1\n"


def _dataset(n, p=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(features=rng.normal(size=(n, p)), times=rng.uniform(1, 100, size=n),
                   events=rng.uniform(size=n) < 0.6, feature_names=[f"f{j}" for j in range(p)])


class TestLoadCsv:
    def test_loads_records_in_order(self, write_csv):
        dataset = load_csv(write_csv(CSV), "time", "event")

        assert len(dataset) == 3
        assert dataset.feature_names == ["age", "size"]
        np.testing.assert_array_equal(dataset.times, [120.0, 300.0, 15.5])
        np.testing.assert_array_equal(dataset.events, [True, False, True])
        np.testing.assert_array_equal(dataset.features[1], [45.5, 1.0])
        record = dataset.records[2]
        assert record.time == 15.5 and record.event is True

    def test_summary(self, write_csv):
        summary = load_csv(write_csv(CSV), "time", "event").summary()
        assert summary["size"] == 3
        assert summary["features"] == 2
        assert summary["prop_censored"] == pytest.approx(1 / 3)
        assert summary["last_event"] == 120.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="missing file"):
            load_csv(str(tmp_path / "nope.csv"), "time", "event")

    def test_missing_column(self, write_csv):
        with pytest.raises(DataError) as excinfo:
            load_csv(write_csv(CSV), "duration", "event")
        assert excinfo.value.context["column"] == "duration"

    def test_header_only_is_empty(self, write_csv):
        with pytest.raises(DataError, match="empty dataset"):
            load_csv(write_csv("age,time,event\n"), "time", "event")

    def test_negative_time_names_the_row(self, write_csv):
        text = "age,time,event\n50,10,1\n51,-1,0\n"
        with pytest.raises(DataError, match="negative time") as excinfo:
            load_csv(write_csv(text), "time", "event")
        assert excinfo.value.context["row"] == 3
        assert excinfo.value.context["column"] == "time"

    def test_non_numeric_cell(self, write_csv):
        text = "age,time,event\n50,10,1\nold,12,0\n"
        with pytest.raises(DataError, match="non-numeric") as excinfo:
            load_csv(write_csv(text), "time", "event")
        assert excinfo.value.context["row"] == 3
        assert excinfo.value.context["column"] == "age"

    def test_missing_value_rejected(self, write_csv):
        text = "age,time,event\n50,10,1\n,12,0\n"
        with pytest.raises(DataError, match="missing value"):
            load_csv(write_csv(text), "time", "event")

    def test_event_outside_zero_one(self, write_csv):
        text = "age,time,event\n50,10,2\n"
        with pytest.raises(DataError, match="event value") as excinfo:
            load_csv(write_csv(text), "time", "event")
        assert excinfo.value.context["row"] == 2

    def test_cells_parse_to_the_nearest_double(self, write_csv):
        cells = ["748.04396021822936", "0.1", "2.675", "1e-7"]
        text = "x,time,event\n" + "".join(f"{c},{i + 1},1\n" for i, c in enumerate(cells))
        dataset = load_csv(write_csv(text), "time", "event")
        assert dataset.features[:, 0].tolist() == [float(c) for c in cells]


class TestStandardize:
    def test_two_point_column(self):
        dataset = Dataset(features=np.array([[0.0], [2.0]]), times=np.array([1.0, 2.0]),
                          events=np.array([True, False]), feature_names=["x"])
        standardized, stats = standardize(dataset)
        np.testing.assert_allclose(standardized.features[:, 0], [-1.0, 1.0])
        assert stats.mean[0] == 1.0 and stats.scale[0] == 1.0

    def test_constant_column_maps_to_zero(self):
        dataset = Dataset(features=np.array([[5.0], [5.0], [5.0]]), times=np.ones(3),
                          events=np.ones(3, dtype=bool), feature_names=["x"])
        standardized, _ = standardize(dataset)
        np.testing.assert_array_equal(standardized.features[:, 0], [0.0, 0.0, 0.0])

    def test_train_stats_applied_to_test(self):
        train, test = _dataset(30, seed=1), _dataset(10, seed=2)
        _, stats = standardize(train)
        applied = apply_standardization(test, stats)
        for i in range(len(test)):
            for j in range(test.num_features):
                expected = (test.features[i, j] - stats.mean[j]) / stats.scale[j]
                assert applied.features[i, j] == pytest.approx(expected, rel=1e-12)

    def test_round_trip(self):
        dataset = _dataset(50, p=3)
        standardized, stats = standardize(dataset)
        np.testing.assert_allclose(stats.invert(standardized.features), dataset.features,
                                   rtol=1e-9)

    def test_refuses_double_standardization(self):
        standardized, _ = standardize(_dataset(5))
        with pytest.raises(DataError):
            standardize(standardized)


class TestSplits:
    def test_test_size_rounds_to_nearest(self):
        train, test = train_test_split(_dataset(1904), 0.2, seed=0)
        assert len(test) == 381 and len(train) == 1523

    def test_smallest_case(self):
        train, test = train_test_split(_dataset(5), 0.2, seed=0)
        assert len(test) == 1 and len(train) == 4

    def test_deterministic(self):
        first = train_test_split(_dataset(40), 0.2, seed=3)
        second = train_test_split(_dataset(40), 0.2, seed=3)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(DataError):
            train_test_split(_dataset(10), fraction, seed=0)

    def test_kfold_exact_division(self):
        folds = kfold(_dataset(10), 5, seed=0)
        assert [len(f.test_indices) for f in folds] == [2, 2, 2, 2, 2]

    def test_kfold_remainder(self):
        folds = kfold(_dataset(11), 5, seed=0)
        assert sorted(len(f.test_indices) for f in folds) == [2, 2, 2, 2, 3]

    def test_kfold_partition(self):
        n = 23
        folds = kfold(_dataset(n), 4, seed=9)
        tests = np.concatenate([f.test_indices for f in folds])
        np.testing.assert_array_equal(np.sort(tests), np.arange(n))
        for fold in folds:
            assert not set(fold.train_indices) & set(fold.test_indices)
            assert len(fold.train_indices) + len(fold.test_indices) == n

    @pytest.mark.parametrize("k", [1, 12])
    def test_kfold_out_of_range(self, k):
        with pytest.raises(DataError):
            kfold(_dataset(11), k, seed=0)


class TestRowIds:
    def test_default_ids_follow_row_order(self):
        np.testing.assert_array_equal(_dataset(6).row_ids, np.arange(6))

    def test_subset_keeps_source_ids(self):
        sub = _dataset(10).subset([7, 2, 4]).subset([2, 0])
        np.testing.assert_array_equal(sub.row_ids, [4, 7])

    def test_mismatched_ids(self):
        with pytest.raises(DataError, match="row ids"):
            Dataset(features=np.zeros((3, 1)), times=np.ones(3), events=np.ones(3, dtype=bool),
                    feature_names=["x"], row_ids=np.arange(2))

    def test_split_fold_separates_rows(self):
        dataset = _dataset(17)
        for split in kfold(dataset, 3, seed=5):
            fit_rows, held_out = split_fold(dataset, split)
            assert not set(fit_rows.row_ids) & set(held_out.row_ids)
            np.testing.assert_array_equal(held_out.features, dataset.features[split.test_indices])

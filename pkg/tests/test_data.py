import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixcraft.data import (
    Dataset,
    LabeledDataset,
    extract_class_column,
    load_csv,
    round_half_up,
    save_csv,
    split,
)
from mixcraft.errors import ClassTooSmall, ParseError, RaggedRows


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2
    assert round_half_up(2.5) == 3  # plain round() would give 2
    assert round_half_up(-0.6) == -1
    assert round_half_up(3.0) == 3


class TestLoadCsv:
    def test_basic(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,4\n5,6\n")
        ds = load_csv(p)
        assert (ds.n, ds.d) == (3, 2)
        assert np.allclose(ds.values, [[1, 2], [3, 4], [5, 6]])

    def test_row_order_preserved(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("9,9\n1,1\n")
        assert np.allclose(load_csv(p).values[0], [9, 9])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(ParseError):
            load_csv(p)

    def test_header_skipped(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("x,y\n1,2\n3,4\n")
        ds = load_csv(p, has_header=True)
        assert ds.n == 2

    def test_ragged_rows(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(RaggedRows):
            load_csv(p)

    def test_parse_error_carries_position(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("1,2\n3,oops\n")
        with pytest.raises(ParseError) as exc:
            load_csv(p)
        assert exc.value.row == 1
        assert exc.value.col == 1

    def test_round_trip_with_save(self, tmp_path):
        p = tmp_path / "rt.csv"
        vals = np.array([[1.25, -3.5e-7], [2.0, 4.0]])
        save_csv(p, vals)
        assert np.array_equal(load_csv(p).values, vals)


class TestLabels:
    def test_contiguity_enforced(self):
        ds = Dataset(np.zeros((3, 1)) + [[1.0], [2.0], [3.0]])
        with pytest.raises(ParseError):
            LabeledDataset(ds, [1, 3, 4])

    def test_extract_class_column(self):
        ds = Dataset([[1.0, 10.0], [2.0, 20.0], [1.0, 30.0]])
        lab = extract_class_column(ds, 0)
        assert lab.s == 2
        assert np.allclose(lab.data.values[:, 0], [10, 20, 30])


class TestSplit:
    def _labelled(self, counts, rng):
        rows, labels = [], []
        for i, c in enumerate(counts, start=1):
            rows.append(rng.normal(size=(c, 2)) + 10 * i)
            labels.append(np.full(c, i))
        return LabeledDataset(Dataset(np.vstack(rows)), np.concatenate(labels))

    def test_single_class_counts(self):
        lab = self._labelled([10], np.random.default_rng(0))
        res = split(lab, 0.6, np.random.default_rng(1))
        assert res.train[0].data.n == 6
        assert res.test.n == 4

    def test_two_classes_stratified(self):
        lab = self._labelled([5, 5], np.random.default_rng(0))
        res = split(lab, 0.6, np.random.default_rng(1))
        train = res.train[0]
        assert train.data.n == 6
        assert res.test.n == 4
        assert np.sum(train.labels == 1) == 3
        assert np.sum(train.labels == 2) == 3

    def test_partition_is_exact(self):
        def sorted_rows(a):
            return a[np.lexsort(a.T[::-1])]

        lab = self._labelled([7, 9, 4], np.random.default_rng(0))
        res = split(lab, 0.37, np.random.default_rng(2))
        merged = np.vstack([res.train[0].data.values, res.test.values])
        assert np.array_equal(sorted_rows(lab.data.values), sorted_rows(merged))

    def test_deterministic_given_seed(self):
        lab = self._labelled([8, 8], np.random.default_rng(0))
        a = split(lab, 0.5, np.random.default_rng(3))
        b = split(lab, 0.5, np.random.default_rng(3))
        assert np.array_equal(a.train[0].data.values, b.train[0].data.values)
        assert np.array_equal(a.test_labels, b.test_labels)

    def test_class_too_small(self):
        lab = self._labelled([5], np.random.default_rng(0))
        one = LabeledDataset(Dataset(lab.data.values[:1]), [1])
        with pytest.raises(ClassTooSmall):
            split(one, 0.5, np.random.default_rng(0))

    def test_degenerate_side_rejected(self):
        lab = self._labelled([2], np.random.default_rng(0))
        with pytest.raises(ValueError):
            split(lab, 0.75, np.random.default_rng(0))  # test side would be empty

    @given(
        st.lists(st.integers(2, 40), min_size=1, max_size=5),
        st.floats(0.05, 0.95),
        st.integers(0, 1000),
    )
    @settings(max_examples=40, deadline=None)
    def test_per_class_train_counts(self, counts, p, seed):
        lab = self._labelled(counts, np.random.default_rng(0))
        try:
            res = split(lab, p, np.random.default_rng(seed))
        except ValueError:
            sizes = [round_half_up(p * c) for c in counts]
            assert any(s == 0 or s == c for s, c in zip(sizes, counts))
            return
        train = res.train[0]
        for i, c in enumerate(counts, start=1):
            assert np.sum(train.labels == i) == round_half_up(p * c)
        assert train.data.n + res.test.n == sum(counts)

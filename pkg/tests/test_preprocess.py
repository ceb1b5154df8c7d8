import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixcraft.data import Dataset
from mixcraft.errors import (
    DegenerateRange,
    DuplicatePointsExceedK,
    EmptySelection,
    InvalidBracket,
)
from mixcraft.preprocess import (
    auto_grid,
    build_histogram,
    global_mode,
    golden_section_refine,
    knn_density,
    knn_thumb,
    log10_rule,
    parzen_density,
    rootn_rule,
    sturges_rule,
)


class TestRules:
    def test_sturges(self):
        assert sturges_rule(1) == 1
        assert sturges_rule(1024) == 11
        assert sturges_rule(50000) == 17  # 1 + 15.61, half-up

    def test_log10(self):
        assert log10_rule(50000) == 47  # 10 * 4.699
        assert log10_rule(1) == 1

    def test_rootn(self):
        assert rootn_rule(50000) == 447  # 2 * 223.6
        assert rootn_rule(1) == 2

    def test_knn_thumb(self):
        assert knn_thumb(100) == 10
        assert knn_thumb(50000) == 224  # sqrt = 223.6
        assert knn_thumb(2) == 1  # sqrt(2) rounds down

    def test_auto_grid_spans_rules(self):
        grid = auto_grid(50000, "histogram")
        assert grid[0] == sturges_rule(50000)
        assert grid[-1] == rootn_rule(50000)
        assert all(b > a for a, b in zip(grid, grid[1:]))
        assert len(grid) == 10


class TestHistogram:
    def test_hand_binned_example(self):
        ds = Dataset(np.array([[0.1], [0.4], [0.6], [0.9]]))
        grid = build_histogram(ds, 2, ymin=[0.0], ymax=[1.0])
        assert grid.m == 2
        assert np.allclose(grid.positions.ravel(), [0.25, 0.75])
        assert np.array_equal(grid.counts, [2, 2])
        # f = 2 / (4 * 0.5)
        assert np.allclose(grid.densities, [1.0, 1.0])

    def test_identical_points_single_bin(self):
        ds = Dataset(np.ones((7, 2)))
        with pytest.raises(DegenerateRange):
            build_histogram(ds, 3)

    def test_identical_points_with_bounds(self):
        ds = Dataset(np.ones((7, 2)))
        grid = build_histogram(ds, 3, ymin=[0.0, 0.0], ymax=[2.0, 2.0])
        assert grid.m == 1
        assert grid.counts[0] == 7

    def test_mass_conservation(self):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(500, 2)))
        grid = build_histogram(ds, 8)
        assert grid.counts.sum() == 500
        total = grid.densities.sum() * np.prod(grid.widths) * grid.n
        assert total == pytest.approx(500.0)

    def test_top_edge_folds_into_last_bin(self):
        ds = Dataset(np.array([[0.0], [1.0]]))
        grid = build_histogram(ds, 4)
        assert grid.indices.max() == 3

    def test_occupied_bins_bounded(self):
        rng = np.random.default_rng(1)
        ds = Dataset(rng.normal(size=(60, 3)))
        grid = build_histogram(ds, 5)
        assert grid.m <= min(5**3, 60)

    def test_supplied_bounds_widened_by_data(self):
        ds = Dataset(np.array([[-2.0], [3.0]]))
        grid = build_histogram(ds, 2, ymin=[0.0], ymax=[1.0])
        assert grid.lower[0] == -2.0
        assert grid.upper[0] == 3.0

    def test_origin_anchors_edges(self):
        ds = Dataset(np.array([[0.3], [0.9], [1.7]]))
        grid = build_histogram(ds, 2, y0=[0.0])
        # h = (1.7 - 0.3) / 2 = 0.7; edges at 0.0 + k * 0.7
        frac = (grid.origin[0] - 0.0) / grid.widths[0]
        assert frac == pytest.approx(round(frac))

    @given(st.integers(1, 12), st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_every_observation_lands_in_one_bin(self, v, seed):
        rng = np.random.default_rng(seed)
        ds = Dataset(rng.uniform(-3, 5, size=(rng.integers(2, 80), 2)))
        grid = build_histogram(ds, v)
        assert grid.counts.sum() == ds.n
        assert grid.counts.min() >= 1


class TestParzen:
    def test_single_point(self):
        ds = Dataset(np.array([[1.0, 2.0]]))
        with pytest.raises(DegenerateRange):
            parzen_density(ds, 3)

    def test_two_coincident_points(self):
        ds = Dataset(np.array([[0.0], [0.0]]))
        pts = parzen_density(ds, 2, ymin=[-1.0], ymax=[1.0])
        # h = 1; both windows hold the pair: f = 2 / (2 * 1) = 1 / h
        assert np.allclose(pts.densities, [1.0, 1.0])

    def test_window_membership(self):
        ds = Dataset(np.array([[0.0], [0.0], [1.0]]))
        pts = parzen_density(ds, 1)
        # h = 1: the pair at 0 shares a window, the point at 1 sits alone
        assert np.allclose(pts.densities, [2 / 3, 2 / 3, 1 / 3])

    def test_isolated_points(self):
        # spacing wider than h: every window holds only its own point
        ds = Dataset(np.array([[0.0], [1.0], [2.0]]))
        pts = parzen_density(ds, 4)  # h = 0.5
        assert np.allclose(pts.densities, 1.0 / (3 * 0.5))

    def test_self_count_lower_bound(self):
        rng = np.random.default_rng(3)
        ds = Dataset(rng.normal(size=(40, 2)))
        pts = parzen_density(ds, 6)
        floor = 1.0 / (ds.n * np.prod(pts.widths))
        assert np.all(pts.densities >= floor - 1e-15)


class TestKnn:
    def test_hand_distance_example(self):
        ds = Dataset(np.array([[0.0], [1.0], [2.0]]))
        pts = knn_density(ds, 2)
        # at the middle point the 2nd neighbour is 1 away; V = 2 * 1
        # (range rescale cancels after mapping the volume back)
        assert pts.densities[1] == pytest.approx(1.0 / 3.0)

    def test_k_equals_n_covers_sample(self):
        ds = Dataset(np.array([[0.0], [1.0], [4.0]]))
        pts = knn_density(ds, 3)
        # the farthest point from each observation sets its ball
        assert pts.densities[0] < pts.densities[1]

    def test_duplicates_error(self):
        ds = Dataset(np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]))
        with pytest.raises(DuplicatePointsExceedK):
            knn_density(ds, 3)

    def test_density_decreases_with_radius(self):
        ds = Dataset(np.array([[0.0], [0.1], [0.2], [5.0]]))
        pts = knn_density(ds, 2)
        assert pts.densities[3] < pts.densities[1]


class TestGlobalMode:
    def test_max_frequency_wins(self):
        ds = Dataset(np.concatenate([np.zeros(3), np.ones(5) * 2, np.ones(2) * 4]).reshape(-1, 1))
        grid = build_histogram(ds, 3, ymin=[0.0], ymax=[4.5])
        mode = global_mode(grid)
        assert mode.frequency == 5

    def test_ties_take_lowest_index(self):
        ds = Dataset(np.array([[0.1], [0.9]]))
        grid = build_histogram(ds, 2)
        mode = global_mode(grid)
        assert mode.index == 0

    def test_masking_reveals_runner_up(self):
        ds = Dataset(np.concatenate([np.zeros(3), np.ones(5) * 2]).reshape(-1, 1))
        grid = build_histogram(ds, 2, ymin=[-0.5], ymax=[2.5])
        first = global_mode(grid)
        mask = np.ones(grid.m, dtype=bool)
        mask[first.index] = False
        second = global_mode(grid, mask)
        assert second.index != first.index
        assert second.frequency == 3

    def test_empty_selection(self):
        ds = Dataset(np.array([[0.0], [1.0]]))
        grid = build_histogram(ds, 2)
        with pytest.raises(EmptySelection):
            global_mode(grid, np.zeros(grid.m, dtype=bool))


class TestGoldenSection:
    def test_quadratic_oracle(self):
        calls = []

        def ic(v):
            calls.append(v)
            return (v - 46) ** 2

        best, value = golden_section_refine((20, 40, 60), ic)
        assert best == 46
        assert value == 0
        assert len(calls) <= 12
        assert all(20 <= v <= 60 for v in calls)

    def test_width_two_returns_mid(self):
        best, value = golden_section_refine((4, 5, 6), lambda v: (v - 5) ** 2)
        assert best == 5
        assert value == 0

    def test_constant_breaks_ties_low(self):
        best, value = golden_section_refine((10, 15, 20), lambda v: 7.0)
        assert value == 7.0
        assert 10 <= best <= 20

    def test_invalid_bracket(self):
        with pytest.raises(InvalidBracket):
            golden_section_refine((10, 15, 20), lambda v: v)  # increasing: mid > low

    @given(st.integers(5, 60), st.integers(0, 200))
    @settings(max_examples=40, deadline=None)
    def test_finds_unimodal_minimum(self, target, seed):
        rng = np.random.default_rng(seed)
        lo = max(1, target - rng.integers(3, 30))
        hi = target + rng.integers(3, 30)
        calls = []

        def ic(v):
            calls.append(v)
            return abs(v - target) * 2.0

        best, _ = golden_section_refine((lo, target, hi), ic)
        assert best == target
        assert all(lo <= v <= hi for v in calls)
        assert len(calls) <= 3 + 2 * math.ceil(math.log(max(hi - lo, 2)) / math.log(1.618)) + 3

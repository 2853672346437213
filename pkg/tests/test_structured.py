import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmehr.ingest import Demographics, TimedEvent
from mmehr.structured import (
    DEFAULT_VARIABLES,
    PanelEntry,
    RangeTableError,
    SeriesPanel,
    StructuredConfig,
    TrainStats,
    VariableRangeTable,
    compute_train_stats,
    demographics_dim,
    encode_demographics,
    featurize_stay,
    fixed_interval_aggregate,
    forward_impute,
    remove_outliers,
)
from oracles import bin_mean_table, forward_fill_scan


def ev(offset, var, value, stay=1):
    return TimedEvent(stay_id=stay, offset_hours=offset, variable_id=var, value=value)


def entry_values(panel, var):
    return [e.value for e in panel.series[var]]


def entry_flags(panel, var):
    return [e.observed for e in panel.series[var]]


class TestPanel:
    def test_from_events_sorts_by_offset(self):
        panel = SeriesPanel.from_events(
            [ev(5.0, "heart_rate", 90.0), ev(1.0, "heart_rate", 80.0), ev(3.0, "sbp", 120.0)]
        )
        assert [e.offset_hours for e in panel.series["heart_rate"]] == [1.0, 5.0]
        assert entry_values(panel, "heart_rate") == [80.0, 90.0]
        assert all(entry_flags(panel, "heart_rate"))

    def test_observed_values_skips_masked_entries(self):
        panel = SeriesPanel(
            {"sbp": [PanelEntry(0.0, 100.0, True), PanelEntry(1.0, 95.0, False)]}
        )
        assert panel.observed_values("sbp") == [100.0]
        assert panel.observed_values("missing_var") == []


class TestOutliers:
    def test_bounds_are_inclusive(self):
        ranges = VariableRangeTable({"heart_rate": (40.0, 200.0)})
        panel = SeriesPanel.from_events(
            [
                ev(0.0, "heart_rate", 40.0),
                ev(1.0, "heart_rate", 200.0),
                ev(2.0, "heart_rate", 39.9),
                ev(3.0, "heart_rate", 200.1),
            ]
        )
        cleaned, removed = remove_outliers(panel, ranges)
        assert removed == 2
        assert entry_values(cleaned, "heart_rate") == [40.0, 200.0, None, None]
        assert entry_flags(cleaned, "heart_rate") == [True, True, False, False]

    def test_unranged_variable_passes_through_with_warning(self):
        ranges = VariableRangeTable({"heart_rate": (40.0, 200.0)})
        panel = SeriesPanel.from_events([ev(0.0, "novel_var", 1e9)])
        with pytest.warns(UserWarning, match="novel_var"):
            cleaned, removed = remove_outliers(panel, ranges)
        assert removed == 0
        assert entry_values(cleaned, "novel_var") == [1e9]

    def test_range_table_rejects_inverted_bounds(self):
        with pytest.raises(RangeTableError):
            VariableRangeTable({"sbp": (100.0, 50.0)})

    def test_range_table_round_trip(self, tmp_path):
        table = VariableRangeTable.default()
        path = tmp_path / "ranges.csv"
        table.save(path)
        again = VariableRangeTable.load(path)
        assert again.ranges == table.ranges


class TestForwardImpute:
    def test_matches_backward_scan_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = int(rng.integers(1, 25))
            raw = [
                None if rng.random() < 0.4 else float(np.round(rng.normal(), 3))
                for _ in range(n)
            ]
            panel = SeriesPanel(
                {"v": [PanelEntry(float(i), x, x is not None) for i, x in enumerate(raw)]}
            )
            filled = forward_impute(panel)
            assert entry_values(filled, "v") == forward_fill_scan(raw)

    def test_mask_and_offsets_untouched(self):
        panel = SeriesPanel(
            {
                "v": [
                    PanelEntry(0.5, 7.0, True),
                    PanelEntry(1.5, None, False),
                    PanelEntry(2.5, 9.0, True),
                ]
            }
        )
        filled = forward_impute(panel)
        assert entry_flags(filled, "v") == [True, False, True]
        assert [e.offset_hours for e in filled.series["v"]] == [0.5, 1.5, 2.5]
        assert entry_values(filled, "v") == [7.0, 7.0, 9.0]

    def test_leading_gap_stays_empty(self):
        panel = SeriesPanel({"v": [PanelEntry(0.0, None, False), PanelEntry(1.0, 3.0, True)]})
        filled = forward_impute(panel)
        assert entry_values(filled, "v") == [None, 3.0]

    @given(st.lists(st.one_of(st.none(), st.floats(-100, 100)), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_idempotent_and_preserves_observations(self, raw):
        panel = SeriesPanel(
            {"v": [PanelEntry(float(i), x, x is not None) for i, x in enumerate(raw)]}
        )
        once = forward_impute(panel)
        twice = forward_impute(once)
        assert entry_values(once, "v") == entry_values(twice, "v")
        assert entry_flags(once, "v") == [x is not None for x in raw]
        # observed entries keep their original values
        for orig, out in zip(raw, entry_values(once, "v")):
            if orig is not None:
                assert out == orig


class TestAggregation:
    def test_observed_bins_match_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            n = int(rng.integers(0, 60))
            triples = [
                (float(rng.uniform(-2, 30)), float(np.round(rng.normal(80, 10), 2)), True)
                for _ in range(n)
            ]
            panel = SeriesPanel(
                {"v": [PanelEntry(t, val, obs) for t, val, obs in sorted(triples)]}
            )
            grid = fixed_interval_aggregate(panel, variables=("v",), variable_means={"v": 55.5})
            expected = bin_mean_table(triples, 1.0, 24.0)
            for b, want in enumerate(expected):
                if want is not None:
                    assert grid.mask[0, b] == 1
                    assert grid.values[0, b] == pytest.approx(want, abs=1e-12)
                else:
                    assert grid.mask[0, b] == 0

    def test_fill_chain_forward_then_mean(self):
        panel = SeriesPanel(
            {"v": [PanelEntry(2.5, 10.0, True), PanelEntry(2.6, 20.0, True)]}
        )
        grid = fixed_interval_aggregate(
            panel, variables=("v",), horizon_hours=6.0, variable_means={"v": 99.0}
        )
        # bins 0-1 precede any observation: training mean
        assert grid.values[0, :2].tolist() == [99.0, 99.0]
        # bin 2 averages the two observations
        assert grid.values[0, 2] == pytest.approx(15.0)
        # bins 3-5 forward fill from bin 2
        assert grid.values[0, 3:].tolist() == [15.0, 15.0, 15.0]
        assert grid.mask[0].tolist() == [0, 0, 1, 0, 0, 0]

    def test_no_mean_falls_back_to_zero(self):
        grid = fixed_interval_aggregate(SeriesPanel({}), variables=("v",), horizon_hours=3.0)
        assert grid.values[0].tolist() == [0.0, 0.0, 0.0]
        assert grid.mask[0].tolist() == [0, 0, 0]

    def test_imputed_values_do_not_enter_bin_means(self):
        # second entry carries a value from imputation but observed=False
        panel = SeriesPanel(
            {"v": [PanelEntry(0.2, 10.0, True), PanelEntry(0.8, 10.0, False)]}
        )
        grid = fixed_interval_aggregate(panel, variables=("v",), horizon_hours=2.0)
        assert grid.values[0, 0] == 10.0
        assert grid.mask[0, 0] == 1
        # imputation before aggregation must not change the grid at all
        grid2 = fixed_interval_aggregate(
            forward_impute(panel), variables=("v",), horizon_hours=2.0
        )
        assert np.array_equal(grid.values, grid2.values)
        assert np.array_equal(grid.mask, grid2.mask)

    def test_events_outside_window_ignored(self):
        panel = SeriesPanel(
            {
                "v": [
                    PanelEntry(-0.1, 1.0, True),
                    PanelEntry(24.0, 2.0, True),
                    PanelEntry(23.99, 3.0, True),
                ]
            }
        )
        grid = fixed_interval_aggregate(panel, variables=("v",))
        assert grid.mask[0].sum() == 1
        assert grid.values[0, 23] == 3.0

    def test_bad_horizon_rejected(self):
        with pytest.raises(ValueError):
            fixed_interval_aggregate(SeriesPanel({}), variables=("v",), bin_hours=5.0, horizon_hours=24.0)

    def test_flatten_is_variable_major(self):
        panel = SeriesPanel(
            {
                "a": [PanelEntry(0.5, 1.0, True)],
                "b": [PanelEntry(1.5, 2.0, True)],
            }
        )
        grid = fixed_interval_aggregate(panel, variables=("a", "b"), horizon_hours=2.0)
        flat = grid.flatten()
        assert flat.shape == (4,)
        for vi in range(2):
            for h in range(2):
                assert flat[vi * 2 + h] == grid.values[vi, h]

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_event_order_irrelevant(self, seed):
        rng = np.random.default_rng(seed)
        events = [
            ev(float(rng.uniform(0, 24)), "heart_rate", float(rng.normal(80, 5)))
            for _ in range(int(rng.integers(1, 40)))
        ]
        shuffled = list(events)
        rng.shuffle(shuffled)
        g1 = fixed_interval_aggregate(SeriesPanel.from_events(events), variables=("heart_rate",))
        g2 = fixed_interval_aggregate(SeriesPanel.from_events(shuffled), variables=("heart_rate",))
        assert np.array_equal(g1.values, g2.values)
        assert np.array_equal(g1.mask, g2.mask)


class TestTrainStats:
    def test_means_match_hand_average(self, master):
        stays = master.stays[:20]
        stats = compute_train_stats(stays)
        ranges = VariableRangeTable.default()
        for var in ("heart_rate", "sbp"):
            values = []
            for s in stays:
                panel, _ = remove_outliers(SeriesPanel.from_events(s.vitals), ranges)
                values.extend(panel.observed_values(var))
            if values:
                assert stats.variable_means[var] == pytest.approx(np.mean(values))
        assert stats.n_train == 20

    def test_round_trip(self, tmp_path, master):
        stats = compute_train_stats(master.stays[:10])
        path = tmp_path / "stats.json"
        stats.save(path)
        again = TrainStats.load(path)
        assert again == stats

    def test_vocab_sorted(self, master):
        stats = compute_train_stats(master.stays)
        assert list(stats.gender_vocab) == sorted(stats.gender_vocab)
        assert list(stats.race_vocab) == sorted(stats.race_vocab)


class TestDemographics:
    def make_stats(self):
        return TrainStats(
            variable_means={},
            age_mean=60.0,
            age_std=10.0,
            gender_vocab=("F", "M"),
            race_vocab=("Black", "White"),
            n_train=50,
        )

    def test_layout_and_standardization(self):
        stats = self.make_stats()
        demo = Demographics(age_years=70.0, gender="F", race="WHITE")
        vec = encode_demographics(demo, stats)
        assert len(vec) == demographics_dim(stats) == 1 + 3 + 3
        assert vec[0] == pytest.approx(1.0)  # (70-60)/10
        assert vec[1:4].tolist() == [1.0, 0.0, 0.0]  # F, M, unknown
        assert vec[4:7].tolist() == [0.0, 1.0, 0.0]  # Black, White, unknown

    def test_unknown_category_hits_unknown_slot(self):
        stats = self.make_stats()
        demo = Demographics(age_years=60.0, gender="X", race="MARTIAN")
        vec = encode_demographics(demo, stats)
        assert vec[3] == 1.0  # gender unknown
        assert vec[6] == 1.0  # race maps to Other, not in vocab

    def test_zero_std_warns_and_emits_zero(self):
        stats = TrainStats({}, 60.0, 0.0, ("F",), ("White",), 1)
        with pytest.warns(UserWarning):
            vec = encode_demographics(Demographics(80.0, "F", "WHITE"), stats)
        assert vec[0] == 0.0


class TestFeaturize:
    def test_default_dimension_is_13_by_24(self, master):
        stats = compute_train_stats(master.stays)
        assert len(DEFAULT_VARIABLES) == 13
        assert StructuredConfig().grid_dim() == 312
        vec = featurize_stay(master.stays[0], stats)
        assert vec.shape == (312,)

    def test_all_stays_same_length(self, master):
        stats = compute_train_stats(master.stays)
        config = StructuredConfig(include_demographics=True)
        dims = {featurize_stay(s, stats, config).shape for s in master.stays[:15]}
        assert dims == {(312 + demographics_dim(stats),)}

    def test_deterministic(self, master):
        stats = compute_train_stats(master.stays)
        a = featurize_stay(master.stays[0], stats)
        b = featurize_stay(master.stays[0], stats)
        assert np.array_equal(a, b)

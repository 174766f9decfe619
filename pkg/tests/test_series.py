import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tedecomp.errors import ConfigurationError, DegenerateChannelError, ParseError, SizeError
from tedecomp.series import (
    BINARY,
    CONTINUOUS,
    MultiSeries,
    SplitSpec,
    load_csv,
    make_windows,
    sample_batch,
    save_csv,
    split,
    zscore,
)


def binary_series(T, C=3, seed=0):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 2, size=(T, C)).astype(float)
    return MultiSeries(tuple(f"ch{i}" for i in range(C)), (BINARY,) * C, values)


class TestMultiSeries:
    def test_rejects_non_binary_in_binary_channel(self):
        with pytest.raises(ConfigurationError):
            MultiSeries(("a",), (BINARY,), np.array([[0.5]]))

    def test_values_are_read_only(self):
        s = binary_series(10)
        with pytest.raises(ValueError):
            s.values[0, 0] = 1.0

    def test_channel_index(self):
        s = binary_series(10)
        assert s.channel_index("ch1") == 1
        with pytest.raises(ConfigurationError):
            s.channel_index("nope")


class TestMakeWindows:
    def test_t7_tau3_has_two_anchors(self):
        windows = make_windows(binary_series(7), [0], [1], (), tau=3)
        assert [w.anchor for w in windows] == [3, 4]

    def test_too_short_raises(self):
        with pytest.raises(SizeError):
            make_windows(binary_series(6), [0], [1], (), tau=3)

    def test_window_count_matches_exhaustive_scan(self):
        T, tau = 10**4, 3
        windows = make_windows(binary_series(T), [0], [1], (), tau=tau)
        expected = sum(1 for t in range(T) if tau <= t <= T - tau)
        assert len(windows) == expected == 9995

    def test_overlapping_channels_rejected(self):
        with pytest.raises(ConfigurationError):
            make_windows(binary_series(20), [0, 1], [1], (), tau=3)

    def test_slices_match_convention(self):
        s = binary_series(30, seed=3)
        for w in make_windows(s, [0], [1, 2], (), tau=4):
            t = w.anchor
            np.testing.assert_array_equal(w.x_past, s.values[t - 4 : t, [0]])
            np.testing.assert_array_equal(w.y_past, s.values[t - 4 : t, [1, 2]])
            np.testing.assert_array_equal(w.y_future, s.values[t : t + 4, [1, 2]])

    @given(tau=st.integers(1, 4), T=st.integers(9, 60))
    @settings(max_examples=30, deadline=None)
    def test_past_future_concatenation_is_contiguous(self, tau, T):
        s = binary_series(T, seed=tau)
        for w in make_windows(s, [0], [1], (), tau=tau):
            joined = np.concatenate([w.y_past, w.y_future])
            np.testing.assert_array_equal(
                joined, s.values[w.anchor - tau : w.anchor + tau, [1]]
            )

    def test_pure_function(self):
        s = binary_series(50)
        a = make_windows(s, [0], [1], (), tau=3)
        b = make_windows(s, [0], [1], (), tau=3)
        assert [w.anchor for w in a] == [w.anchor for w in b]
        for wa, wb in zip(a, b):
            np.testing.assert_array_equal(wa.x_past, wb.x_past)


class TestSplit:
    def test_fraction_one_rejected(self):
        with pytest.raises(ConfigurationError):
            SplitSpec(1.0)

    def test_contiguous_split_drops_straddlers(self):
        windows = make_windows(binary_series(107), [0], [1], (), tau=3)
        assert len(windows) == 102
        train, val = split(windows, SplitSpec(0.8))
        boundary = windows[int(0.8 * 102)].anchor
        assert all(w.anchor + 3 <= boundary for w in train)
        assert all(w.anchor - 3 >= boundary for w in val)
        assert max(w.anchor for w in train) < min(w.anchor for w in val)

    def test_counts_match_exhaustive_enumeration(self):
        T, tau = 10**4, 3
        windows = make_windows(binary_series(T), [0], [1], (), tau=tau)
        train, val = split(windows, SplitSpec(0.9))
        boundary = windows[int(0.9 * len(windows))].anchor
        n_train = sum(1 for t in range(tau, T - tau + 1) if t + tau <= boundary)
        n_val = sum(1 for t in range(tau, T - tau + 1) if t - tau >= boundary)
        assert (len(train), len(val)) == (n_train, n_val)

    def test_empty_input_raises(self):
        with pytest.raises(SizeError):
            split([], SplitSpec(0.5))


class TestSampleBatch:
    def test_batch_size(self):
        windows = make_windows(binary_series(10**4), [0], [1], (), tau=3)
        batch = sample_batch(windows, 128, np.random.default_rng(0))
        assert len(batch) == 128

    def test_single_window_set(self):
        windows = make_windows(binary_series(7), [0], [1], (), tau=3)[:1]
        assert sample_batch(windows, 1, np.random.default_rng(0))[0] is windows[0]

    def test_deterministic_given_seed(self):
        windows = make_windows(binary_series(200), [0], [1], (), tau=3)
        a = sample_batch(windows, 32, np.random.default_rng(7))
        b = sample_batch(windows, 32, np.random.default_rng(7))
        assert [w.anchor for w in a] == [w.anchor for w in b]


class TestCsv:
    def test_small_round_trip(self, tmp_path):
        s = binary_series(5, C=3)
        path = tmp_path / "s.csv"
        save_csv(s, path)
        loaded = load_csv(path)
        assert loaded.T == 5 and loaded.C == 3
        assert loaded == s

    def test_long_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(5)
        values = np.column_stack(
            [rng.integers(0, 2, 10**4).astype(float), rng.standard_normal(10**4)]
        )
        s = MultiSeries(("b", "c"), (BINARY, CONTINUOUS), values)
        path = tmp_path / "s.csv"
        save_csv(s, path)
        assert np.array_equal(load_csv(path).values, s.values)

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,0\n1\n")
        with pytest.raises(ParseError, match="line 3"):
            load_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,x\n")
        with pytest.raises(ParseError, match="line 2"):
            load_csv(path)


class TestZscore:
    def test_constant_channel_raises(self):
        s = MultiSeries(("c",), (CONTINUOUS,), np.ones((10, 1)))
        with pytest.raises(DegenerateChannelError):
            zscore(s)

    def test_two_point_channel(self):
        s = MultiSeries(("c",), (CONTINUOUS,), np.array([[0.0], [2.0]]))
        np.testing.assert_allclose(zscore(s).values[:, 0], [-1.0, 1.0])

    def test_gaussian_channel_standardized(self):
        rng = np.random.default_rng(0)
        s = MultiSeries(("c",), (CONTINUOUS,), rng.normal(3.0, 2.0, (5000, 1)))
        z = zscore(s)
        assert abs(z.values[:, 0].mean()) < 1e-9
        assert abs(z.values[:, 0].var() - 1.0) < 1e-9

    def test_binary_untouched(self):
        values = np.column_stack([np.array([0.0, 1.0, 1.0, 0.0]), np.arange(4.0)])
        s = MultiSeries(("b", "c"), (BINARY, CONTINUOUS), values)
        np.testing.assert_array_equal(zscore(s).values[:, 0], values[:, 0])

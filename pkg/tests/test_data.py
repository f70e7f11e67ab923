"""Data pipeline: CSV ingestion, splitting, normalization, windowing."""

from datetime import date
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stockbench.data import (
    MinMaxNormalizer,
    PriceSeries,
    chronological_split,
    load_csv,
    make_windows,
    prepare_cell_data,
    synth_series,
    write_csv,
)
from stockbench.errors import ContractError, DataError

FIXTURE = Path(__file__).resolve().parent.parent / "data" / "sp500.csv"


def _write(tmp_path, text, name="series.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# -- load_csv -------------------------------------------------------------------


def test_load_small_fixture(tmp_path):
    p = _write(tmp_path, "date,close\n2020-01-01,10.0\n2020-01-02,11.5\n2020-01-03,9.25\n")
    s = load_csv(p)
    assert len(s) == 3
    assert s.dates[0] == date(2020, 1, 1)
    np.testing.assert_array_equal(s.closes, [10.0, 11.5, 9.25])


def test_negative_close_names_line(tmp_path):
    p = _write(tmp_path, "date,close\n2020-01-01,10.0\n2020-01-02,-5\n")
    with pytest.raises(DataError, match=r":3:"):
        load_csv(p)


def test_malformed_row_names_line(tmp_path):
    p = _write(tmp_path, "date,close\n2020-01-01,10.0\n2020-01-02\n")
    with pytest.raises(DataError, match=r":3:"):
        load_csv(p)


def test_bad_date_rejected(tmp_path):
    p = _write(tmp_path, "date,close\n01/02/2020,10.0\n")
    with pytest.raises(DataError, match="ISO"):
        load_csv(p)


def test_out_of_order_rejected_not_sorted(tmp_path):
    p = _write(tmp_path, "date,close\n2020-01-02,10.0\n2020-01-01,11.0\n")
    with pytest.raises(DataError, match="sorted"):
        load_csv(p)


def test_duplicate_date_rejected(tmp_path):
    p = _write(tmp_path, "date,close\n2020-01-01,10.0\n2020-01-01,11.0\n")
    with pytest.raises(DataError):
        load_csv(p)


def test_wrong_header_rejected(tmp_path):
    p = _write(tmp_path, "day,price\n2020-01-01,10.0\n")
    with pytest.raises(DataError, match="header"):
        load_csv(p)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "absent.csv")


def test_bundled_sp500_fixture_summary_statistics():
    s = load_csv(FIXTURE)
    assert len(s) == 2286
    assert s.closes.mean() == pytest.approx(3251.59, abs=0.5)
    assert s.closes.min() == pytest.approx(1829.08, abs=0.01)
    assert s.closes.max() == pytest.approx(5321.41, abs=0.01)
    assert s.dates[0] == date(2015, 5, 1)
    assert s.dates[-1] == date(2024, 5, 8)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    series = synth_series("random_walk", 50, seed=3)
    out = tmp_path / "roundtrip.csv"
    write_csv(series, out)
    again = load_csv(out)
    assert again.dates == series.dates
    assert again.closes.tobytes() == series.closes.tobytes()


# -- chronological split -----------------------------------------------------------


def test_split_ten_points():
    s = synth_series("random_walk", 10, seed=0)
    train, test = chronological_split(s)
    assert len(train) == 7 and len(test) == 3


def test_split_fixture_counts():
    s = load_csv(FIXTURE)
    train, test = chronological_split(s)
    assert len(train) == 1600 and len(test) == 686


def test_split_preserves_order_and_content():
    s = synth_series("random_walk", 101, seed=1)
    train, test = chronological_split(s)
    assert train.dates[-1] < test.dates[0]
    np.testing.assert_array_equal(np.concatenate([train.closes, test.closes]), s.closes)


def test_split_too_short():
    with pytest.raises(ContractError):
        chronological_split(synth_series("constant", 9))


# -- normalizer ---------------------------------------------------------------------


def test_minmax_endpoints():
    norm = MinMaxNormalizer().fit([2.0, 4.0, 10.0])
    assert norm.transform(2.0) == 0.0
    assert norm.transform(10.0) == 1.0


def test_minmax_round_trip():
    rng = np.random.default_rng(2)
    norm = MinMaxNormalizer().fit(rng.uniform(10, 500, size=100))
    x = rng.uniform(-100, 1000, size=1000)
    np.testing.assert_allclose(norm.inverse_transform(norm.transform(x)), x, atol=1e-12)


def test_minmax_constant_series_rejected():
    with pytest.raises(ContractError, match="degenerate"):
        MinMaxNormalizer().fit([5.0, 5.0, 5.0])


def test_minmax_train_split_maps_into_unit_interval():
    s = load_csv(FIXTURE)
    train, _ = chronological_split(s)
    mapped = MinMaxNormalizer().fit(train.closes).transform(train.closes)
    assert mapped.min() == 0.0 and mapped.max() == 1.0
    assert ((0.0 <= mapped) & (mapped <= 1.0)).all()


# -- windowing ----------------------------------------------------------------------


def test_window_count_formula():
    ds = make_windows(np.arange(20.0), 5, 1)
    assert len(ds) == 15


def test_window_too_short_errors_with_requirement():
    with pytest.raises(ContractError, match="10"):
        make_windows(np.arange(6.0), 5, 5)


@pytest.mark.parametrize("w", [5, 10, 15])
@pytest.mark.parametrize("h", [1, 5, 10])
def test_window_layout_matches_index_oracle(w, h):
    values = np.random.default_rng(4).normal(size=64)
    ds = make_windows(values, w, h)
    assert len(ds) == 64 - w - h + 1
    for i in range(len(ds)):
        np.testing.assert_array_equal(ds.inputs[i], values[i : i + w])
        np.testing.assert_array_equal(ds.targets[i], values[i + w : i + w + h])


@given(
    n=st.integers(min_value=50, max_value=200),
    w=st.sampled_from([5, 10, 15]),
    h=st.sampled_from([1, 5, 10]),
)
@settings(max_examples=60, deadline=None)
def test_window_count_formula_property(n, w, h):
    ds = make_windows(np.arange(float(n)), w, h)
    assert len(ds) == n - w - h + 1


def test_no_leakage_between_train_and_test_windows():
    s = synth_series("random_walk", 200, seed=5)
    train_ds, test_ds, _ = prepare_cell_data(s, window=10, horizon=5)
    # last source index any training window touches
    last_train_source = (len(train_ds) - 1) + 10 + 5 - 1
    assert last_train_source < 140  # train split is 140 points
    # first test target source index, in whole-series coordinates
    first_test_target = test_ds.start_index + 10
    assert first_test_target > last_train_source


def test_windowed_target_dates_track_first_target_step():
    s = synth_series("constant", 30, seed=0)
    ds = make_windows(s.closes, 5, 2, dates=s.dates)
    assert len(ds.target_dates) == len(ds)
    assert ds.target_dates[0] == s.dates[5]
    assert ds.target_dates[-1] == s.dates[len(s) - 2]


# -- synthetic series -----------------------------------------------------------------


def test_constant_series():
    s = synth_series("constant", 5)
    np.testing.assert_array_equal(s.closes, [100.0] * 5)


def test_sine_trend_starts_at_level():
    assert synth_series("sine_trend", 3).closes[0] == 100.0


def test_random_walk_deterministic_under_seed():
    a = synth_series("random_walk", 100, seed=9)
    b = synth_series("random_walk", 100, seed=9)
    assert a.closes.tobytes() == b.closes.tobytes()
    c = synth_series("random_walk", 100, seed=10)
    assert a.closes.tobytes() != c.closes.tobytes()


def test_unknown_kind_rejected():
    with pytest.raises(ContractError):
        synth_series("brownian", 10)


def test_price_series_validation():
    with pytest.raises(DataError):
        PriceSeries([date(2020, 1, 2), date(2020, 1, 1)], np.array([1.0, 2.0]))
    with pytest.raises(DataError):
        PriceSeries([date(2020, 1, 1)], np.array([-1.0]))

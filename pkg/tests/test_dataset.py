import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stitchgen.dataset import (SeriesDataset, condition_to_mask, format_condition, load_csv, make_windows,
                               merge_windows, parse_condition, random_mask, split_by_root, union_masks,
                               window_count, window_starts, write_csv)
from stitchgen.synthetic import calendar_sines, entity_amplitude, make_data


@pytest.fixture(scope="module")
def cal():
    return calendar_sines()


def test_small_csv_shape(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("Year,Hour,load\n2018,1,0.5\n2018,2,0.7\n2019,1,0.1\n")
    d = load_csv(p, ["Year", "Hour"], ["load"])
    assert (d.M, d.L, d.C) == (3, 2, 1)
    assert d.metadata[0] == ["2018", "2018", "2019"]


def test_empty_cell_names_row_and_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("Year,load\n2018,0.5\n2018,\n")
    with pytest.raises(ValueError, match=r":3: .*'load'"):
        load_csv(p, ["Year"], ["load"])


def test_missing_column_and_ragged_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("Year,load\n2018,0.5,9\n")
    with pytest.raises(ValueError, match="missing"):
        load_csv(p, ["Year"], ["watts"])
    with pytest.raises(ValueError, match="ragged"):
        load_csv(p, ["Year"], ["load"])


def test_synthetic_file_round_trips(tmp_path, cal):
    p = tmp_path / "cal.csv"
    write_csv(cal, p)
    back = load_csv(p, cal.metadata_columns, cal.channel_columns)
    assert back.metadata == cal.metadata
    np.testing.assert_array_equal(back.signals, cal.signals)


def test_generator_shape_and_determinism(cal):
    assert (cal.M, cal.L, cal.C) == (1080, 3, 2)
    np.testing.assert_array_equal(cal.signals, calendar_sines().signals)
    assert not np.array_equal(cal.signals, calendar_sines(seed=1).signals)


def test_entity_amplitude_matches_closed_form():
    d = calendar_sines(noise=0.05)
    ent = np.asarray(d.metadata[0])
    for e, name in enumerate("ABC"):
        x = d.signals[ent == name, 0]
        # mean square of A sin(.) + A/2 sin(.) over full periods is A^2 (1/2 + 1/8)
        want = entity_amplitude(e) ** 2 * (0.5 + 0.125) + 0.05 ** 2
        assert np.mean(x ** 2) == pytest.approx(want, rel=0.05)


def test_other_kind_and_length():
    d = make_data("ar1-hierarchy", length=100)
    assert d.M == 100 and d.L == 3
    with pytest.raises(ValueError):
        make_data("nope")


# -- splitting ---------------------------------------------------------------

def test_split_one_brand_is_a_third(cal):
    train, test = split_by_root(cal, "C")
    assert test.M == cal.M // 3 and train.M + test.M == cal.M
    assert set(test.metadata[0]) == {"C"}


def test_split_degenerate():
    d = SeriesDataset([["a", "a"]], np.zeros((2, 1)), ["root"], ["x"])
    with pytest.raises(ValueError, match="empty"):
        split_by_root(d, "a")
    with pytest.raises(ValueError, match="not found"):
        split_by_root(d, "b")


# -- conditions and masks -------------------------------------------------------

def test_parse_condition():
    assert parse_condition("(2018, *, *, 6)") == ("2018", None, None, "6")
    assert parse_condition("C,∗,15") == ("C", None, "15")
    assert format_condition(("2018", None)) == "(2018, *)"
    with pytest.raises(ValueError):
        parse_condition("(2018,,6)")


def test_all_wildcards_masks_everything(cal):
    assert condition_to_mask(cal, (None, None, None)).sum() == cal.M


def test_table_style_b_condition():
    years = ["2018"] * 48 + ["2017"] * 24
    hours = [str(h) for h in range(24)] * 3
    d = SeriesDataset([years, ["x"] * 72, ["y"] * 72, hours], np.zeros((72, 1)),
                      ["Year", "A", "B", "Hour"], ["v"])
    m = condition_to_mask(d, parse_condition("(2018, *, *, 6)"))
    want = [int(y == "2018" and h == "6") for y, h in zip(years, hours)]
    assert m.tolist() == want and m.sum() == 2


def test_day_condition_one_row_per_brand_month(cal):
    m = condition_to_mask(cal, (None, None, "15"))
    rows = [i for i in range(cal.M) if cal.metadata[2][i] == "15"]
    assert np.flatnonzero(m).tolist() == rows
    assert len(rows) == 3 * 12


def test_numeric_values_compare_numerically(cal):
    np.testing.assert_array_equal(condition_to_mask(cal, ("A", "03", None)),
                                  condition_to_mask(cal, ("A", "3", None)))


def test_unknown_value_gives_empty_mask(cal, caplog):
    m = condition_to_mask(cal, ("Z", None, None))
    assert m.sum() == 0
    assert "not present" in caplog.text


def test_union_equals_disjunction(cal):
    a = condition_to_mask(cal, ("A", None, "5"))
    b = condition_to_mask(cal, (None, "2", None))
    want = [int((cal.metadata[0][i] == "A" and cal.metadata[2][i] == "5") or cal.metadata[1][i] == "2")
            for i in range(cal.M)]
    assert union_masks(a, b).tolist() == want


def test_random_mask_counts():
    assert random_mask(10, 0.0, 1).sum() == 0
    assert random_mask(10, 1.0, 1).sum() == 10
    m = random_mask(100, 0.5, 7)
    assert m.sum() == 50
    np.testing.assert_array_equal(m, random_mask(100, 0.5, 7))
    with pytest.raises(ValueError):
        random_mask(10, 1.5, 0)


# -- windows ------------------------------------------------------------------

def test_window_examples():
    np.testing.assert_array_equal(window_starts(30, 10, 5), [0, 5, 10, 15, 20])
    s = window_starts(33, 10, 5)
    assert len(s) == 6 and s[-1] == 23


def test_stride_equal_width_has_no_overlap():
    x = np.arange(40.0)[:, None]
    ws = make_windows(x, None, np.zeros(40), 10, 10)
    assert ws.J == 4
    assert all(ws.overlap(j)[0] == 0 for j in range(1, ws.J))


def test_window_errors():
    with pytest.raises(ValueError):
        window_starts(5, 10, 1)
    with pytest.raises(ValueError):
        window_starts(50, 10, 11)
    with pytest.raises(ValueError):
        window_starts(50, 10, 0)


def test_overlap_of_clamped_window():
    ws = make_windows(np.zeros((33, 1)), None, np.zeros(33), 10, 5)
    assert ws.overlap(5) == (7, 3)
    assert ws.overlap(1) == (5, 5)
    assert ws.overlap(0) == (0, 0)


@settings(max_examples=100, deadline=None)
@given(M=st.integers(1, 120), data=st.data())
def test_windows_then_merge_is_identity(M, data):
    w = data.draw(st.integers(1, M))
    s = data.draw(st.integers(1, w))
    rng = np.random.default_rng(M * 1000 + w * 10 + s)
    x = rng.normal(size=(M, 2))
    ws = make_windows(x, None, np.ones(M), w, s)
    assert ws.J == math.ceil((M - w) / s) + 1 == window_count(M, w, s)
    covered = np.zeros(M, dtype=int)
    for st_ in ws.starts:
        covered[st_:st_ + w] += 1
    assert covered.min() >= 1
    for rule in ("first", "last"):
        np.testing.assert_array_equal(merge_windows(ws.x, ws.starts, M, rule), x)


def test_single_window_merge():
    x = np.random.default_rng(0).normal(size=(12, 3))
    ws = make_windows(x, None, np.zeros(12), 12, 4)
    assert ws.J == 1
    np.testing.assert_array_equal(merge_windows(ws.x, ws.starts, 12), x)


def test_last_writer_oracle():
    rng = np.random.default_rng(5)
    M, w, s = 47, 10, 3
    starts = window_starts(M, w, s)
    W = rng.normal(size=(len(starts), w, 2))
    out = merge_windows(W, starts, M, rule="last")
    for i in range(M):
        j = max(k for k, st_ in enumerate(starts) if st_ <= i < st_ + w)
        np.testing.assert_array_equal(out[i], W[j, i - starts[j]])


def test_first_writer_oracle():
    rng = np.random.default_rng(6)
    M, w, s = 47, 10, 3
    starts = window_starts(M, w, s)
    W = rng.normal(size=(len(starts), w, 2))
    out = merge_windows(W, starts, M, rule="first")
    for i in range(M):
        j = min(k for k, st_ in enumerate(starts) if st_ <= i < st_ + w)
        np.testing.assert_array_equal(out[i], W[j, i - starts[j]])


def test_merge_rejects_bad_inputs():
    with pytest.raises(ValueError):
        merge_windows(np.zeros((2, 4, 1)), np.array([0, 4]), 9)
    with pytest.raises(ValueError):
        merge_windows(np.zeros((2, 4, 1)), np.array([0, 4]), 8, rule="mean")


def test_per_channel_mask_expands():
    x = np.zeros((20, 2))
    ws = make_windows(x, None, np.ones(20), 8, 4)
    assert ws.m.shape == (ws.J, 8, 2) and ws.m.min() == 1
    with pytest.raises(ValueError):
        make_windows(x, None, np.ones(19), 8, 4)

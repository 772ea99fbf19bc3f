import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmmap.metrics import (
    MetricsFrame,
    aggregate_series,
    bandwidth_per_agent,
    consolidation_coverage,
    histogram_median,
    map_accuracy,
    median_iqr,
    nodeid_hash_histograms,
    observation_coverage,
    read_trace,
    write_trace,
)


def _frame(step, sizes, acc=0.5, ids=(1, 2), hashes=()):
    return MetricsFrame(step, 0.25, 0.125, acc, sum(sizes), 1.5, [1, 0], [3, 0], list(sizes), list(ids), list(hashes))


def test_coverages():
    assert observation_coverage([1, 1, 2], 4) == 0.5
    assert consolidation_coverage([], 4) == 0.0
    assert observation_coverage([1], 0) == 0.0


def test_map_accuracy():
    assert map_accuracy([]) is None
    assert map_accuracy([(1, 1), (2, 3), (4, 4), (5, 5)]) == 0.75


def test_bandwidth_is_bytes_per_second_per_agent():
    frames = [_frame(t, [100, 50]) for t in range(10)]
    bw = bandwidth_per_agent(frames, dt=0.1, window=5)
    assert bw["mean"] == pytest.approx(750.0)
    assert bw["spread"] == pytest.approx(250.0)
    assert bw["series"] == [(0, pytest.approx(750.0)), (5, pytest.approx(750.0))]
    assert bandwidth_per_agent([], 0.1)["mean"] == 0.0


def test_histograms():
    frames = [_frame(0, [1], ids=(3, 3), hashes=(5,)), _frame(1, [1], ids=(1, 3), hashes=(0, 5))]
    nid, rho = nodeid_hash_histograms(frames)
    assert nid == {1: 1, 3: 3} and rho == {0: 1, 5: 2}
    assert histogram_median(nid) == 3.0
    assert math.isnan(histogram_median({}))


def test_median_iqr_skips_missing():
    assert median_iqr([1.0, None, 3.0, float("nan"), 2.0]) == (2.0, 1.5, 2.5)
    assert all(math.isnan(v) for v in median_iqr([None]))


def test_aggregate_truncates_to_shortest_run():
    agg = aggregate_series([[1.0, 2.0, 3.0], [3.0, 4.0]])
    assert [m for m, _, _ in agg] == [2.0, 3.0]
    assert aggregate_series([]) == []


def test_trace_round_trip(tmp_path):
    frames = [_frame(0, [10, 0], acc=None), _frame(1, [8, 44], hashes=(5, 65, 0))]
    path = tmp_path / "trace.csv"
    write_trace(frames, path)
    back = read_trace(path)
    assert back == frames
    assert back[0].stored_total == 3


def test_trace_with_missing_columns_is_rejected(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("step,observed_coverage\n0,0.1\n")
    with pytest.raises(ValueError):
        read_trace(path)


@given(st.lists(st.tuples(st.integers(1, 13), st.integers(1, 13)), max_size=50))
def test_accuracy_is_a_ratio(pairs):
    acc = map_accuracy(pairs)
    assert acc is None if not pairs else 0.0 <= acc <= 1.0

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frontalnav.metrics import (
    MetricReport,
    aggregate,
    dtw,
    episode_report,
    navigation_error,
    ndtw,
    spl,
    success,
    trajectory_length,
)


def dp_oracle(p, r):
    """Textbook O(n*m) recursion written with plain lists."""
    n, m = len(p), len(r)
    inf = float("inf")
    table = [[inf] * (m + 1) for _ in range(n + 1)]
    table[0][0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            c = math.dist(p[i - 1], r[j - 1])
            table[i][j] = c + min(table[i - 1][j - 1], table[i - 1][j], table[i][j - 1])
    return table[n][m]


def test_navigation_error():
    assert navigation_error((1, 2), (1, 2)) == 0
    assert navigation_error((3, 4), (0, 0)) == 5.0


@settings(max_examples=100)
@given(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
def test_navigation_error_hypot(a, b):
    assert navigation_error(a, b) == math.hypot(a[0] - b[0], a[1] - b[1])


@pytest.mark.parametrize("ne,want", [(2.9, 1), (3.0, 1), (3.1, 0)])
def test_success_boundary(ne, want):
    assert success(ne, 3.0) == want


def test_trajectory_length():
    assert trajectory_length([(0, 0)]) == 0
    assert trajectory_length([(0, 0), (2, 0)]) == 2.0
    rng = np.random.default_rng(3)
    pts = rng.uniform(-5, 5, (20, 2))
    assert trajectory_length(pts) == pytest.approx(sum(math.dist(a, b) for a, b in zip(pts, pts[1:])), abs=1e-12)


def test_spl_spot_values():
    assert spl(1, 10, 10) == 1.0
    assert spl(0, 10, 10) == 0.0
    assert spl(0, 7, 3) == 0.0
    assert spl(1, 10, 20) == 0.5
    assert spl(1, 10, 5) == 1.0


def test_ndtw_identity_and_single_point():
    path = [(0, 0), (1, 0), (2, 1)]
    assert ndtw(path, path, 3.0) == 1.0
    assert ndtw([(0, 0)], [(0, 2)], 3.0) == pytest.approx(math.exp(-2 / 3), abs=1e-15)


def test_ndtw_random_six_by_eight():
    rng = np.random.default_rng(0)
    p, r = rng.uniform(0, 10, (6, 2)), rng.uniform(0, 10, (8, 2))
    assert abs(dtw(p, r) - dp_oracle(p.tolist(), r.tolist())) < 1e-12
    assert abs(ndtw(p, r, 3.0) - math.exp(-dp_oracle(p.tolist(), r.tolist()) / (8 * 3.0))) < 1e-12


def test_ndtw_empty_rejected():
    with pytest.raises(ValueError):
        ndtw([], [(0, 0)])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_ndtw_bounded(n, m, seed):
    rng = np.random.default_rng(seed)
    v = ndtw(rng.uniform(0, 5, (n, 2)), rng.uniform(0, 5, (m, 2)), 3.0)
    assert 0 < v <= 1


def test_episode_report_and_aggregate():
    good = episode_report("a", [(0, 0), (10, 0)], (10, 0), 3.0, 10.0, [(0, 0), (10, 0)])
    assert (good.TL, good.NE, good.success, good.SPL, good.nDTW) == (10.0, 0.0, 1, 1.0, 1.0)
    bad = episode_report("b", [(0, 0), (0, 4)], (10, 0), 3.0, 10.0)
    assert bad.success == 0 and bad.SPL == 0.0 and bad.nDTW is None
    agg = aggregate([good, bad])
    assert agg["SR"] == 50.0 and agg["SPL"] == 0.5 and agg["nDTW"] == 1.0
    assert agg["TL"] == 7.0


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_report_json_round_trip():
    r = MetricReport("x", 1.0, 2.0, 1, 0.5, None)
    assert MetricReport(**r.to_json()) == r

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhocbf.dynamics import ControlInput, EgoState
from dhocbf.errors import ValidationError
from dhocbf.metrics import (
    ade,
    displacement,
    fde,
    metric_report,
    min_distance_series,
    success_rate,
    trace_min_distance,
)
from dhocbf.simulator import ObstacleRecord, TraceRecord

xy = st.tuples(st.floats(-100, 100), st.floats(-100, 100))
paths = st.lists(xy, min_size=2, max_size=30)


def make_trace(distances, positions=None):
    """Trace with one obstacle whose surface distance follows ``distances``."""
    positions = positions or [(float(i), 0.0) for i in range(len(distances))]
    zero = ControlInput(0.0, 0.0)
    out = []
    for i, (d, (x, y)) in enumerate(zip(distances, positions)):
        obs = () if d is None else (ObstacleRecord(d, 1.0, 0.0, 0.0),)
        out.append(TraceRecord(0.1 * i, EgoState(x, y, 0.0, 0.0), zero, zero, obs, "optimal"))
    return out


def test_ade_examples():
    a = [(0, 0), (1, 1), (2, 2)]
    assert ade(a, a) == 0.0
    assert ade(a, [(x + 1, y) for x, y in a]) == 1.0
    ten = [(float(i), 0.0) for i in range(10)]
    eight = [(float(i), 1.0 if i < 4 else 3.0) for i in range(8)]
    assert ade(ten, eight) == 2.0


def test_fde_examples():
    a = [(0, 0), (1, 0), (2, 0)]
    assert fde(a, a) == 0.0
    assert fde(a, [(0, 0), (1, 0), (5, 4)]) == 5.0
    pinned = [(0, 0), (1, 3), (2, 0)]
    assert fde(a, pinned) == 0.0
    assert fde(a, pinned, penultimate=True) == 3.0


def test_metric_errors():
    with pytest.raises(ValidationError):
        ade([], [(0, 0)])
    with pytest.raises(ValidationError):
        fde([(0, 0)], [(0, 0)], penultimate=True)
    with pytest.raises(ValidationError):
        success_rate([])
    with pytest.raises(ValidationError):
        min_distance_series([])


def test_success_rate_fixtures():
    clean1 = make_trace([3.0, 2.0, 1.0])
    clean2 = make_trace([5.0, 0.5, 4.0])
    crash = make_trace([2.0, -0.1, 1.0])
    assert success_rate([clean1, clean2, crash]) == pytest.approx(0.6667, abs=1e-4)
    assert success_rate([clean1, clean2, crash]) == 2 / 3
    assert success_rate([clean1, clean2]) == 1.0
    touch = make_trace([1.0, 0.0])
    assert success_rate([touch]) == 0.0
    assert success_rate([clean1, clean2, crash], collision_margin=0.75) == 1 / 3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.floats(-2, 5), min_size=1, max_size=10), min_size=1, max_size=5), st.floats(-1, 3), st.floats(-1, 3))
def test_success_rate_monotone(dist_lists, m1, m2):
    traces = [make_trace(d) for d in dist_lists]
    lo, hi = sorted((m1, m2))
    assert success_rate(traces, hi) <= success_rate(traces, lo)
    assert 0.0 <= success_rate(traces, lo) <= 1.0


def test_min_distance_series():
    tr = make_trace([2.0, 2.0, 2.0])
    assert [d for _, d in min_distance_series(tr)] == [2.0, 2.0, 2.0]
    empty = make_trace([None, None])
    assert all(math.isinf(d) for _, d in min_distance_series(empty))


@settings(max_examples=200, deadline=None)
@given(paths, paths)
def test_symmetry_and_bounds(a, b):
    assert ade(a, b) == ade(b, a)
    assert fde(a, b) == fde(b, a)
    d = displacement(a, b)
    assert ade(a, b) <= d.max() + 1e-12
    assert fde(a, b) in d


def test_report_aggregates():
    ref = [(float(i), 0.0) for i in range(4)]
    t1 = make_trace([3, 2, 1, 2], [(x, 1.0) for x, _ in ref])
    t2 = make_trace([3, -1, 1, 2], [(x, 3.0) for x, _ in ref])
    rep = metric_report([t1, t2], [ref, ref])
    assert rep.ade == 2.0 and rep.fde == 2.0 and rep.fde_penultimate == 2.0
    assert rep.var_ade == 1.0 and rep.var_fde == 1.0
    assert rep.sr == 0.5 and rep.n_runs == 2
    assert rep.min_distance == -1.0
    assert rep.min_distance == min(trace_min_distance(t) for t in (t1, t2))
    assert np.isclose(rep.min_distance, min(min(d for _, d in min_distance_series(t)) for t in (t1, t2)))
    with pytest.raises(ValidationError):
        metric_report([t1], [ref, ref])

import json

import numpy as np
import pytest

from asynag.cournot import CournotGame, generate_instance
from asynag.engine import TimingModel, run_simulation
from asynag.stepsize import StepsizeSchedule
from asynag.topology import make_topology
from asynag.trace import EventTrace, TraceFormatError


@pytest.fixture(scope="module")
def trace():
    game = CournotGame(generate_instance(4, 2, 1))
    res = run_simulation(game, make_topology("star", 4), TimingModel(), StepsizeSchedule("constant", 0.01),
                         horizon=100_000, seed=0, record=True)
    return res.trace


def test_round_trip_is_exact(trace, tmp_path):
    path = tmp_path / "t.jsonl"
    trace.save(path)
    back = EventTrace.load(path)
    assert back.dumps() == trace.dumps()
    for a, b in zip(trace.X, back.X):
        np.testing.assert_array_equal(a, b)
    assert back.pending == trace.pending
    assert back.out == trace.out


def test_every_sent_message_is_accounted_for(trace):
    table = trace.messages()
    assert set(table) == set(trace.sent_messages())


def test_times_strictly_increase(trace):
    assert np.all(np.diff(trace.times) > 0)
    assert all(trace.active)


def _lines(trace):
    return trace.dumps().splitlines()


def test_bad_json_reports_line(trace):
    lines = _lines(trace)
    lines[4] = lines[4][:-5]
    with pytest.raises(TraceFormatError) as info:
        EventTrace.loads("\n".join(lines))
    assert info.value.lineno == 5
    assert "line 5" in str(info.value)


def test_out_of_order_event_reports_line(trace):
    lines = _lines(trace)
    lines[3], lines[4] = lines[4], lines[3]
    with pytest.raises(TraceFormatError) as info:
        EventTrace.loads("\n".join(lines))
    assert info.value.lineno == 4


def test_wrong_shape_reports_line(trace):
    lines = _lines(trace)
    row = json.loads(lines[6])
    row[3] = row[3][:-1]
    lines[6] = json.dumps(row)
    with pytest.raises(TraceFormatError) as info:
        EventTrace.loads("\n".join(lines))
    assert info.value.lineno == 7


def test_header_checks():
    with pytest.raises(TraceFormatError):
        EventTrace.loads("")
    with pytest.raises(TraceFormatError):
        EventTrace.loads('{"format": "other"}\n')
    with pytest.raises(TraceFormatError):
        EventTrace.loads('{"format": "asynag-trace", "version": 99}\n')
    with pytest.raises(TraceFormatError):
        EventTrace.loads('{"format": "asynag-trace", "version": 1, "n": 1, "p": 1, "edges": []}\n')

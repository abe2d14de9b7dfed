import json

import numpy as np
import pytest

from asynag.campaign import (
    ExperimentConfig,
    crossing_time,
    gap_metric,
    mean_on_grid,
    run_campaign,
    verify_run,
)
from asynag.game import ConfigurationError
from asynag.trace import EventTrace

SMALL = """
# tiny campaign
n = 4
L = 2
instance_seed = 3
topology = cycle
rho0 = 0.03
horizon_us = 300000
runs = 3
grid_points = 11
trace_runs = 1
"""


def test_config_parsing_and_overrides():
    cfg = ExperimentConfig.from_text(SMALL, ["scheme=nonadaptive", "runs = 2"])
    assert (cfg.n, cfg.L, cfg.topology, cfg.scheme, cfg.runs) == (4, 2, "cycle", "nonadaptive", 2)
    assert cfg.traced_runs() == (1,)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg


@pytest.mark.parametrize("text, msg", [
    ("bogus = 1", "unknown config keys: bogus"),
    ("n = 2.5", "bad value for n"),
    ("scheme = eager", "unknown scheme"),
    ("topology = torus", "torus"),
    ("just words", "line 1"),
    ("runs = 0", "runs"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigurationError, match=msg):
        ExperimentConfig.from_text(text)


def test_gap_metric_examples():
    assert gap_metric([2.0, 4.0], [2.0, 4.0]) == 0.0
    assert gap_metric([0.0, 0.0], [2.0, 4.0]) == 1.0
    assert gap_metric([2.0, 8.0], [2.0, 4.0]) == 1.0
    with pytest.raises(ValueError):
        gap_metric([1.0], [0.0])


def test_mean_on_grid_and_crossing():
    grid = np.array([0, 10, 20, 30])
    curves = [(np.array([0, 30]), np.array([1.0, 0.0])), (np.array([0, 15, 30]), np.array([1.0, 0.5, 0.0]))]
    mean = mean_on_grid(curves, grid)
    np.testing.assert_allclose(mean, [1.0, (2 / 3 + 2 / 3) / 2, (1 / 3 + 1 / 3) / 2, 0.0])
    assert crossing_time(grid, mean, 0.5) == 20.0
    assert crossing_time(grid, mean, -1.0) is None


def test_campaign_outputs_are_reproducible(tmp_path):
    cfg = ExperimentConfig.from_text(SMALL)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    res = run_campaign(cfg, a)
    run_campaign(cfg, b)
    run_campaign(cfg, c, workers=2)
    assert not res.failed
    for name in ("config.txt", "runs.csv", "aggregate.csv", "summary.txt", "trace_run1.jsonl"):
        text = (a / name).read_bytes()
        assert text == (b / name).read_bytes()
        assert text == (c / name).read_bytes()
    agg = (a / "aggregate.csv").read_text().splitlines()
    assert agg[0] == "sim_time_us,mean_gap" and len(agg) == 12
    runs = (a / "runs.csv").read_text().splitlines()
    assert runs[0] == "run_id,sim_time_us,k,gap,consensus_residual"
    assert {line.split(",")[0] for line in runs[1:]} == {"0", "1", "2"}
    # the mean gap decreases over the run
    gaps = [float(line.split(",")[1]) for line in agg[1:]]
    assert gaps[-1] < gaps[0]


def test_different_seeds_give_different_runs():
    cfg = ExperimentConfig.from_text(SMALL)
    assert cfg.run_seed(0) != cfg.run_seed(1)
    other = ExperimentConfig.from_text(SMALL, ["base_seed=1"])
    assert other.run_seed(0) != cfg.run_seed(0)


@pytest.fixture(scope="module")
def saved_trace(tmp_path_factory):
    out = tmp_path_factory.mktemp("camp")
    cfg = ExperimentConfig.from_text(SMALL, ["runs=2", "scheme=aggressive"])
    run_campaign(cfg, out)
    return out / "trace_run1.jsonl"


@pytest.fixture(scope="module")
def saved_sync_trace(tmp_path_factory):
    out = tmp_path_factory.mktemp("sync")
    cfg = ExperimentConfig.from_text(SMALL, ["runs=2", "scheme=synchronous", "horizon_us=600000"])
    run_campaign(cfg, out)
    return out / "trace_run1.jsonl"


def test_verify_passes_on_fresh_traces(saved_trace, saved_sync_trace):
    rep = verify_run(saved_trace)
    assert rep.ok, rep.to_text()
    assert rep.to_text().endswith("overall: PASS\n")
    rep = verify_run(saved_sync_trace)
    assert rep.ok, rep.to_text()
    assert "PASS matches direct synchronous iteration" in rep.to_text()


def test_verify_flags_corrupted_weight(saved_trace):
    tr = EventTrace.load(saved_trace)
    k = tr.num_events // 2
    i = tr.active[k][0]
    tr.Y[k + 1] = tr.Y[k + 1].copy()
    tr.Y[k + 1][i] *= 1.5
    rep = verify_run(tr)
    assert not rep.ok
    assert "FAIL weight conservation" in rep.to_text()


def test_verify_flags_moved_idle_player(saved_trace):
    tr = EventTrace.load(saved_trace)
    k = next(k for k, a in enumerate(tr.active) if len(a) < tr.n)
    idle = next(i for i in range(tr.n) if i not in tr.active[k])
    tr.X[k + 1] = tr.X[k + 1].copy()
    tr.X[k + 1][idle] += 1.0
    rep = verify_run(tr)
    assert "FAIL idle players unchanged" in rep.to_text()


def test_trace_header_records_instance(saved_trace):
    head = json.loads(saved_trace.read_text().splitlines()[0])
    assert "instance" in head and head["scheme"] == "aggressive"

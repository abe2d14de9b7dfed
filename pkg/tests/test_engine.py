import numpy as np
import pytest

from asynag import augmented
from asynag.campaign import synchronous_reference_error
from asynag.cournot import CournotGame, generate_instance, solve_ne
from asynag.engine import (
    InvariantViolation,
    ScriptedTiming,
    TimingModel,
    TimingSampler,
    run_simulation,
    timing_sample,
)
from asynag.game import ConfigurationError, QuadraticGame, project
from asynag.stepsize import StepsizeSchedule
from asynag.topology import delay_constants, from_edges, make_topology

RHO = StepsizeSchedule("constant", 0.01)


def _run(n=5, topo="log", scheme="aggressive", horizon=200_000, seed=1, rho=RHO, **kw):
    params = generate_instance(n, 2, 3)
    game = CournotGame(params)
    return game, run_simulation(game, make_topology(topo, n), TimingModel(), rho, scheme,
                                horizon=horizon, seed=seed, record=True, **kw)


def test_truncation_window_respected():
    tm = TimingModel(comp_min_us=100, comp_max_us=100_000, delay_min_us=100, delay_max_us=100_000)
    rng = np.random.default_rng(0)
    for kind, mean in (("comp", 20.0), ("delay", 5.0), ("comp", 0.05)):
        s = timing_sample(tm, kind, mean, rng, 20_000)
        assert s.dtype.kind == "i"
        assert s.min() >= 100 and s.max() <= 100_000


def test_untruncated_delay_mean():
    s = timing_sample(TimingModel(truncate=False), "delay", 5.0, np.random.default_rng(7), 100_000)
    assert abs(s.mean() - 5000.0) <= 0.02 * 5000.0


def test_computation_mean_law_and_determinism():
    tm = TimingModel()
    a = TimingSampler(tm, 6, np.random.SeedSequence(3))
    b = TimingSampler(tm, 6, np.random.SeedSequence(3))
    assert np.all(a.means_ms >= tm.comp_base_ms)
    np.testing.assert_array_equal(a.means_ms, b.means_ms)
    assert [a.computation(2) for _ in range(50)] == [b.computation(2) for _ in range(50)]
    assert [a.delay(1, 3) for _ in range(50)] == [b.delay(1, 3) for _ in range(50)]


def test_same_seed_same_trace_different_seed_differs():
    _, r1 = _run(seed=4)
    _, r2 = _run(seed=4)
    _, r3 = _run(seed=5)
    assert r1.trace.dumps() == r2.trace.dumps()
    assert r1.trace.dumps() != r3.trace.dumps()


def test_single_player_is_projected_gradient_descent():
    params = generate_instance(1, 2, 8)
    game = CournotGame(params)
    rho = StepsizeSchedule("constant", 0.05)
    res = run_simulation(game, make_topology("cycle", 1), TimingModel(), rho, "nonadaptive",
                         horizon=3_000_000, seed=0, record=True)
    tr = res.trace
    x = tr.X[0][0].copy()
    for k in range(tr.num_events):
        np.testing.assert_allclose(tr.Z[k + 1][0], x, atol=1e-12)
        x = project(game.action_set(0), x - 0.05 * game.grad(0, x, x))
        np.testing.assert_allclose(tr.X[k + 1][0], x, atol=1e-9)
    np.testing.assert_allclose(res.x, solve_ne(params), atol=1e-6)


def test_frozen_actions_reach_average_consensus_on_cycle():
    game = QuadraticGame(np.random.default_rng(0).uniform(-5, 5, size=(3, 2)))
    x0 = np.array([[1.0, -2.0], [4.0, 0.5], [-3.0, 3.0]])
    res = run_simulation(game, make_topology("cycle", 3), TimingModel(), RHO, "aggressive",
                         horizon=2_000_000, seed=2, x0=x0, freeze_actions=True)
    assert np.max(np.abs(res.z - x0.mean(axis=0))) <= 1e-9


@pytest.mark.parametrize("scheme", ["aggressive", "nonadaptive", "synchronous"])
@pytest.mark.parametrize("topo", ["cycle", "star", "complete"])
def test_mass_and_weight_conserved(scheme, topo):
    _, res = _run(topo=topo, scheme=scheme)
    m, w = augmented.conservation_errors(res.trace)
    assert m <= 1e-9
    assert w <= 1e-12


def test_weights_positive_and_above_mixing_floor():
    game, res = _run(n=3, topo="cycle", horizon=300_000)
    tr = res.trace
    t = tr.header["timing"]
    _, _, b = delay_constants(3, t["tau"], t["tau_lo"], t["tau_hi"])
    y = np.array(tr.Y)
    assert y.min() > 0
    assert y.min() >= 3.0 ** (-3 * b)


def _payload_counters(tr):
    table = {}
    for k, items in enumerate(tr.consumed):
        for j, r, s in items:
            table.setdefault((k, r), []).append(int(tr.L[s + 1][j]))
    return table


@pytest.mark.parametrize("scheme", ["aggressive", "nonadaptive"])
def test_counter_rules_and_stepsizes(scheme):
    rho = StepsizeSchedule("power", 0.3, 0.8)
    _, res = _run(topo="star", scheme=scheme, rho=rho, horizon=150_000)
    tr = res.trace
    payloads = _payload_counters(tr)
    checked = 0
    for k, (act, alphas) in enumerate(zip(tr.active, tr.alpha)):
        for i, a in zip(act, alphas):
            old, new = int(tr.L[k][i]), int(tr.L[k + 1][i])
            if scheme == "aggressive":
                assert new == max(payloads[(k, i)] + [old]) + 1
                assert a == pytest.approx(sum(rho(t) for t in range(old, new)), rel=1e-13)
            else:
                assert new == old + 1
                assert a == rho(old)
            checked += 1
    assert checked > 50
    assert np.all(np.diff(np.array(tr.L), axis=0) >= 0)


def test_aggressive_lagging_player_accrues_window():
    # player 1 lags: it hears counter 3 from player 0 while its own counter is 0
    game = QuadraticGame([[0.0], [0.0]])
    timing = ScriptedTiming([[10, 20, 30, 40], [50]], default_delay=1)
    res = run_simulation(game, make_topology("complete", 2), timing, StepsizeSchedule("constant", 0.1),
                         "aggressive", horizon=100, seed=0, record=True, x0=[[1.0], [2.0]])
    tr = res.trace
    k = tr.active.index((1,))
    assert tr.L[k][1] == 0 and tr.L[k + 1][1] == 5
    assert tr.alpha[k][0] == pytest.approx(0.5)


def test_synchronous_matches_matrix_iteration():
    game, res = _run(n=6, topo="log", scheme="synchronous", horizon=2_000_000)
    assert res.trace.num_events > 20
    assert synchronous_reference_error(res.trace, game) <= 1e-12


def test_early_stop_on_quiet_players():
    game = QuadraticGame(np.zeros((3, 1)))
    res = run_simulation(game, make_topology("complete", 3), TimingModel(), RHO, "aggressive",
                         horizon=50_000_000, seed=0, x0=[[1.0], [2.0], [3.0]],
                         freeze_actions=True, stop_eps=1e-6)
    assert res.stopped_early
    assert res.t_end < 50_000_000


def test_observer_sees_state_at_sample_times():
    game = QuadraticGame(np.zeros((3, 1)))
    seen = []
    res = run_simulation(game, make_topology("cycle", 3), TimingModel(), RHO, "aggressive",
                         horizon=200_000, seed=3, record=True, x0=[[0.0], [3.0], [6.0]],
                         observer=lambda t, k, X, Z: seen.append((t, k, Z.copy())),
                         sample_times=[0, 50_000, 200_000])
    tr = res.trace
    assert [s[0] for s in seen] == [0, 50_000, 200_000]
    for t, k, Z in seen:
        assert all(tt <= t for tt in tr.times[:k])
        assert k == tr.num_events or tr.times[k] > t
        np.testing.assert_array_equal(Z, tr.Z[k])


def test_weight_underflow_is_fatal():
    game = QuadraticGame(np.zeros((2, 1)))
    timing = ScriptedTiming([list(range(1, 1200)), []])
    with pytest.raises(InvariantViolation):
        run_simulation(game, make_topology("complete", 2), timing, RHO, "aggressive",
                       horizon=5000, seed=0, freeze_actions=True)


def test_configuration_errors():
    game = QuadraticGame(np.zeros((3, 1)))
    g = make_topology("cycle", 3)
    with pytest.raises(ConfigurationError):
        run_simulation(game, g, TimingModel(), RHO, "eager")
    with pytest.raises(ConfigurationError):
        run_simulation(game, g, TimingModel(), RHO, horizon=0)
    with pytest.raises(ConfigurationError):
        run_simulation(game, from_edges(3, [(1, 2), (2, 3)]), TimingModel(), RHO)
    with pytest.raises(ConfigurationError):
        run_simulation(game, make_topology("cycle", 4), TimingModel(), RHO)
    with pytest.raises(ConfigurationError):
        TimingModel(comp_min_us=0)

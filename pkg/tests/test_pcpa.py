import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asynag.campaign import gap_metric
from asynag.cournot import CournotGame, generate_instance, solve_ne
from asynag.engine import TimingModel, run_simulation
from asynag.game import vi_residual
from asynag.pcpa import (
    ConstantPerturbation,
    ContractViolation,
    HarmonicPerturbation,
    Schedule,
    ZeroPerturbation,
    pcpa_run,
    prefix_minima,
    round_robin,
    schedule_from_trace,
    validate_schedule,
)
from asynag.stepsize import StepsizeSchedule
from asynag.topology import delay_constants, make_topology

DECAY = StepsizeSchedule("power", 0.5, 0.6)


def test_round_robin_window_is_n():
    rep = validate_schedule(round_robin(5, 100))
    assert rep.sigma1 == 5
    assert rep.sigma2 == 1
    assert rep.ok


def test_starved_player_is_reported():
    players = [0, 1, 0, 1, 0, 1, 2]
    sched = Schedule(3, players, [1] * len(players))
    rep = validate_schedule(sched, sigma1=3, sigma2=10)
    assert not rep.ok
    assert any("player 2 absent from steps 0..5" in v for v in rep.violations)
    assert rep.sigma1 == 7


def test_counter_spread_violation():
    sched = Schedule(2, [0, 0, 0, 1], [1, 1, 1, 1])
    rep = validate_schedule(sched, sigma2=2)
    assert rep.sigma2 == 3
    assert any("counter spread 3 > 2" in v for v in rep.violations)


def test_schedule_rejects_bad_input():
    with pytest.raises(ValueError):
        Schedule(2, [0, 2], [1, 1])
    with pytest.raises(ValueError):
        Schedule(2, [0, 1], [1, 0])


def test_single_player_reaches_monopoly_output():
    params = generate_instance(1, 2, 3)
    game = CournotGame(params)
    x_star = solve_ne(params)
    res = pcpa_run(game, round_robin(1, 4000), DECAY, None, 4000, np.zeros((1, game.p)))
    assert gap_metric(res.x, x_star) < 1e-6


def test_only_the_scheduled_player_moves(cournot_small):
    params, game, _ = cournot_small
    x0 = game.random_feasible(np.random.default_rng(0))
    sched = round_robin(game.n, 30)
    seen = []
    res = pcpa_run(game, sched, DECAY, HarmonicPerturbation(2.0), 30, x0,
                   callback=lambda k, x: seen.append(x.copy()))
    prev = np.asarray(x0, dtype=float).reshape(game.n, game.p)
    for k, x in enumerate(seen):
        others = np.arange(game.n) != sched.players[k]
        np.testing.assert_array_equal(x[others], prev[others])
        assert game.feasible(x)
        prev = x
    np.testing.assert_array_equal(res.X[-1], res.x)


def test_infeasible_start_is_rejected(cournot_small):
    _, game, _ = cournot_small
    with pytest.raises(ContractViolation):
        pcpa_run(game, round_robin(game.n, 3), DECAY, None, 3, -np.ones((game.n, game.p)))


def test_zero_perturbation_converges(cournot_small):
    params, game, x_star = cournot_small
    res = pcpa_run(game, round_robin(game.n, 20_000), DECAY, ZeroPerturbation(), 20_000,
                   np.zeros((game.n, game.p)), record_every=1000)
    assert gap_metric(res.x, x_star) < 1e-4
    assert res.certificate.ok
    assert np.all(res.certificate.partial_sums == 0)


def test_harmonic_perturbation_is_summable(cournot_small):
    params, game, x_star = cournot_small
    res = pcpa_run(game, round_robin(game.n, 20_000), DECAY, HarmonicPerturbation(5.0), 20_000,
                   np.zeros((game.n, game.p)), record_every=1000)
    assert res.certificate.ok
    assert gap_metric(res.x, x_star) < 1e-2


def test_constant_perturbation_leaves_a_bias(cournot_small):
    params, game, x_star = cournot_small
    res = pcpa_run(game, round_robin(game.n, 20_000), DECAY, ConstantPerturbation(5.0), 20_000,
                   np.zeros((game.n, game.p)), record_every=1000)
    assert not res.certificate.ok
    assert vi_residual(game, res.x, 0.1) > 1e-3
    assert gap_metric(res.x, x_star) > 1e-3


def test_engine_trace_is_a_perturbed_coordinate_run():
    params = generate_instance(4, 2, 5)
    game = CournotGame(params)
    rho = StepsizeSchedule("constant", 0.02)
    timing = TimingModel()
    sim = run_simulation(game, make_topology("log", 4), timing, rho, "aggressive",
                         horizon=200_000, seed=3, record=True)
    tr = sim.trace
    sched, eps, x0, event_of = schedule_from_trace(tr, game)
    assert len(sched) == sum(len(a) for a in tr.active)
    res = pcpa_run(game, sched, rho, eps, len(sched), x0)
    # the state after the last step of each event equals the engine state
    last_step = {int(k): s for s, k in enumerate(event_of)}
    for k, s in last_step.items():
        np.testing.assert_allclose(res.X[s + 1], tr.X[k + 1], rtol=1e-12, atol=1e-12)



@pytest.mark.parametrize("n, topo", [(4, "log"), (8, "cycle"), (8, "complete"), (20, "star")])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_trace_schedules_respect_window_and_counter_bounds(n, topo, seed):
    game = CournotGame(generate_instance(n, 2, 5))
    tr = run_simulation(game, make_topology(topo, n), TimingModel(), StepsizeSchedule("constant", 0.005),
                        "aggressive", horizon=500_000, seed=seed, record=True).trace
    sched, *_ = schedule_from_trace(tr, game)
    t = tr.header["timing"]
    b1, _, b = delay_constants(n, t["tau"], t["tau_lo"], t["tau_hi"])
    rep = validate_schedule(sched, sigma1=b1, sigma2=n * b + 1)
    assert rep.ok, rep.violations[:3]


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=50))
@settings(max_examples=100, deadline=None)
def test_prefix_minima_are_strict_running_minima(seq):
    idx = prefix_minima(seq)
    assert idx[0] == 0
    best = seq[0]
    expect = [0]
    for k in range(1, len(seq)):
        if seq[k] < best:
            best = seq[k]
            expect.append(k)
    assert list(idx) == expect


def test_pcpa_text_output(cournot_small):
    _, game, _ = cournot_small
    res = pcpa_run(game, round_robin(game.n, 6), DECAY, None, 6, np.zeros((game.n, game.p)))
    lines = res.to_text().splitlines()
    assert len(lines) == 1 + 7
    assert '"columns": ["k", "t_us", "active", "x", "l", "alpha"]' in lines[0]
    assert lines[2].startswith("[0, 1, [0], ")

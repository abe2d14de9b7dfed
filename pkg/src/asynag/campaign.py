"""Monte-Carlo experiment campaigns and the trace verification battery."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import augmented
from .cournot import CournotGame, CournotParams, generate_instance, solve_ne
from .engine import SCHEMES, InvariantViolation, TimingModel, run_simulation, synchronous_push_sum
from .game import ConfigurationError
from .stepsize import StepsizeSchedule
from .topology import from_edges, make_topology
from .trace import EventTrace


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a campaign's output.

    Text form is one ``key = value`` per line; ``#`` starts a comment.
    Keys:

    n, L, instance_seed, cap
        Cournot instance (players, markets, generator seed, capacity).
    topology
        cycle, star, log or complete.
    scheme
        aggressive, nonadaptive or synchronous.
    rho_kind, rho0, rho_gamma
        ``constant``: ``rho0``; ``power``: ``rho0 / (1 + t)**rho_gamma``.
    comp_base_ms, comp_sigma_ms
        Player ``i`` computes in ``exp(mean comp_base_ms + |N(0, comp_sigma_ms^2)|)`` ms.
    delay_mean_ms
        Mean of the exponential link delay.
    comp_min_us, comp_max_us, delay_min_us, delay_max_us
        Clipping windows, integer microseconds.
    horizon_us
        Simulated time per run.
    runs, base_seed
        Number of runs; run ``r`` is seeded by ``SeedSequence([base_seed, r])``.
    grid_points
        Samples on the common time grid ``[0, horizon_us]``.
    trace_runs
        Comma-separated run ids whose full event trace is saved (empty: none).
    """

    n: int = 20
    L: int = 10
    instance_seed: int = 1
    cap: float = 500.0
    topology: str = "log"
    scheme: str = "aggressive"
    rho_kind: str = "constant"
    rho0: float = 0.006
    rho_gamma: float = 1.0
    comp_base_ms: float = 1.0
    comp_sigma_ms: float = 5.0
    delay_mean_ms: float = 5.0
    comp_min_us: int = 5_000
    comp_max_us: int = 20_000
    delay_min_us: int = 100
    delay_max_us: int = 20_000
    horizon_us: int = 20_000_000
    runs: int = 50
    base_seed: int = 0
    grid_points: int = 201
    trace_runs: str = ""

    def __post_init__(self):
        if self.n < 1 or self.L < 1:
            raise ConfigurationError("n and L must be positive")
        if self.runs < 1:
            raise ConfigurationError("runs must be positive")
        if self.grid_points < 2:
            raise ConfigurationError("grid_points must be at least 2")
        if self.horizon_us <= 0:
            raise ConfigurationError("horizon_us must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        self.timing()
        self.stepsize()
        make_topology(self.topology, self.n)
        self.traced_runs()

    # --- derived objects ----------------------------------------------------

    def timing(self) -> TimingModel:
        return TimingModel(
            comp_base_ms=self.comp_base_ms, comp_sigma_ms=self.comp_sigma_ms,
            delay_mean_ms=self.delay_mean_ms, comp_min_us=self.comp_min_us,
            comp_max_us=self.comp_max_us, delay_min_us=self.delay_min_us,
            delay_max_us=self.delay_max_us,
        )

    def stepsize(self) -> StepsizeSchedule:
        return StepsizeSchedule(self.rho_kind, self.rho0, self.rho_gamma)

    def instance(self) -> CournotParams:
        return generate_instance(self.n, self.L, self.instance_seed, self.cap)

    def grid(self) -> np.ndarray:
        return np.rint(np.linspace(0, self.horizon_us, self.grid_points)).astype(np.int64)

    def run_seed(self, run_id: int) -> int:
        ss = np.random.SeedSequence([self.base_seed, run_id])
        return int(ss.generate_state(1, dtype=np.uint32)[0])

    def traced_runs(self) -> Tuple[int, ...]:
        parts = [p.strip() for p in self.trace_runs.split(",") if p.strip()]
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            raise ConfigurationError(f"trace_runs must list integers, got {self.trace_runs!r}") from None

    # --- text form ------------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str, overrides: Sequence[str] = ()) -> "ExperimentConfig":
        values: Dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"config line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
        for item in overrides:
            if "=" not in item:
                raise ConfigurationError(f"override {item!r}: expected KEY=VALUE")
            key, val = (s.strip() for s in item.split("=", 1))
            values[key] = val
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> "ExperimentConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(fields))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, val in values.items():
            kind = type(fields[key].default)
            try:
                if kind is int:
                    num = float(val)
                    if not num.is_integer():
                        raise ValueError
                    kwargs[key] = int(num)
                elif kind is float:
                    kwargs[key] = float(val)
                else:
                    kwargs[key] = str(val)
            except ValueError:
                raise ConfigurationError(f"bad value for {key}: {val!r}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path, overrides: Sequence[str] = ()) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), overrides)


def gap_metric(x, x_star) -> float:
    """``||x - x*||_inf / ||x*||_inf``."""
    x_star = np.asarray(x_star, dtype=float)
    scale = float(np.max(np.abs(x_star))) if x_star.size else 0.0
    if not scale > 0:
        raise ValueError("gap undefined: reference point is zero")
    return float(np.max(np.abs(np.asarray(x, dtype=float) - x_star))) / scale


@dataclass
class RunOutcome:
    run_id: int
    seed: int
    times: np.ndarray
    events: np.ndarray
    gaps: np.ndarray
    residuals: np.ndarray
    error: Optional[str] = None
    trace_text: Optional[str] = None


def _run_one(cfg: ExperimentConfig, params: CournotParams, x_star: np.ndarray, run_id: int) -> RunOutcome:
    game = CournotGame(params)
    graph = make_topology(cfg.topology, cfg.n)
    grid = cfg.grid()
    seed = cfg.run_seed(run_id)
    rows: List[Tuple[int, int, float, float]] = []

    def observe(t, k, X, Z):
        res = float(np.max(np.linalg.norm(Z - X.mean(axis=0), axis=1)))
        rows.append((int(t), int(k), gap_metric(X, x_star), res))

    keep = run_id in cfg.traced_runs()
    header = {"instance": params.to_text(), "topology": cfg.topology}
    try:
        res = run_simulation(game, graph, cfg.timing(), cfg.stepsize(), cfg.scheme,
                             horizon=cfg.horizon_us, seed=seed, observer=observe,
                             sample_times=grid, record=keep, header=header)
    except InvariantViolation as exc:
        return RunOutcome(run_id, seed, np.array([]), np.array([]), np.array([]), np.array([]), str(exc))
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return RunOutcome(run_id, seed, arr[:, 0], arr[:, 1].astype(np.int64), arr[:, 2], arr[:, 3],
                      None, res.trace.dumps() if keep else None)


def mean_on_grid(curves: Sequence[Tuple[np.ndarray, np.ndarray]], grid: np.ndarray) -> np.ndarray:
    """Average of piecewise-linear curves ``(t, value)`` evaluated on ``grid``."""
    if not curves:
        return np.full(grid.shape, np.nan)
    stacked = np.array([np.interp(grid, t, v) for t, v in curves])
    return stacked.mean(axis=0)


def crossing_time(grid, values, level: float) -> Optional[float]:
    """First grid time with ``values < level``, ``None`` if never."""
    idx = np.flatnonzero(np.asarray(values) < level)
    return float(grid[idx[0]]) if idx.size else None


@dataclass
class CampaignResult:
    config: ExperimentConfig
    x_star: np.ndarray
    grid: np.ndarray
    mean_gap: np.ndarray
    outcomes: List[RunOutcome] = field(default_factory=list)

    @property
    def failed(self) -> List[RunOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def crossing(self, level: float) -> Optional[float]:
        return crossing_time(self.grid, self.mean_gap, level)


def _fmt(v) -> str:
    return f"{v:.12g}"


def run_campaign(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> CampaignResult:
    """Run ``cfg.runs`` simulations and write ``runs.csv``, ``aggregate.csv`` and ``summary.txt``.

    The equilibrium is solved once. Runs are independent and may execute in
    ``workers`` processes; results are merged in run-id order so the output
    does not depend on scheduling.
    """
    params = cfg.instance()
    x_star = solve_ne(params)
    ids = list(range(cfg.runs))
    if workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, [cfg] * len(ids), [params] * len(ids),
                                     [x_star] * len(ids), ids))
    else:
        outcomes = [_run_one(cfg, params, x_star, r) for r in ids]
    outcomes.sort(key=lambda o: o.run_id)
    grid = cfg.grid()
    good = [(o.times, o.gaps) for o in outcomes if o.error is None]
    result = CampaignResult(cfg, x_star, grid, mean_on_grid(good, grid), outcomes)
    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result


def write_outputs(result: CampaignResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(result.config.to_text())
    lines = ["run_id,sim_time_us,k,gap,consensus_residual"]
    for o in result.outcomes:
        for t, k, g, r in zip(o.times, o.events, o.gaps, o.residuals):
            lines.append(f"{o.run_id},{int(t)},{int(k)},{_fmt(g)},{_fmt(r)}")
    (out / "runs.csv").write_text("\n".join(lines) + "\n")
    lines = ["sim_time_us,mean_gap"]
    lines += [f"{int(t)},{_fmt(g)}" for t, g in zip(result.grid, result.mean_gap)]
    (out / "aggregate.csv").write_text("\n".join(lines) + "\n")
    summary = [
        f"runs: {len(result.outcomes)}, failed: {len(result.failed)}",
        f"final mean gap: {_fmt(result.mean_gap[-1])}",
    ]
    for level in (1e-2, 1e-3):
        t = result.crossing(level)
        summary.append(f"first time mean gap < {level:g}: {'never' if t is None else f'{int(t)} us'}")
    for o in result.failed:
        summary.append(f"run {o.run_id} FAILED: {o.error}")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    for o in result.outcomes:
        if o.trace_text is not None:
            (out / f"trace_run{o.run_id}.jsonl").write_text(o.trace_text)


# --- verification battery -------------------------------------------------------


@dataclass
class VerifyReport:
    lines: List[str]
    ok: bool

    def to_text(self) -> str:
        return "\n".join(self.lines + [f"overall: {'PASS' if self.ok else 'FAIL'}"]) + "\n"


def game_from_trace(trace: EventTrace) -> Optional[CournotGame]:
    text = trace.header.get("instance")
    return CournotGame(CournotParams.from_text(text)) if text else None


def verify_run(trace, mass_tol: float = 1e-9, weight_tol: float = 1e-12,
               equiv_tol: float = 1e-12) -> VerifyReport:
    """Run every trace-level check on ``trace`` (an :class:`EventTrace` or a path)."""
    if not isinstance(trace, EventTrace):
        trace = EventTrace.load(trace)
    lines: List[str] = []
    ok = True

    def check(name, passed, detail=""):
        nonlocal ok
        ok = ok and passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}{': ' + detail if detail else ''}")

    if trace.num_events == 0:
        check("trace has events", False)
        return VerifyReport(lines, ok)

    times = np.array(trace.times)
    check("event times strictly increasing", bool(np.all(np.diff(times) > 0)))
    check("every event activates a player", all(len(a) > 0 for a in trace.active))

    m_err, w_err = augmented.conservation_errors(trace)
    check("mass conservation", m_err <= mass_tol, f"relative error {m_err:.3e} (tol {mass_tol:g})")
    check("weight conservation", w_err <= weight_tol, f"absolute error {w_err:.3e} (tol {weight_tol:g})")

    idle = augmented.idle_consistency_errors(trace)
    check("idle players unchanged", not idle, idle[0] if idle else "")

    ymin = float(np.min(np.array(trace.Y)))
    check("weights positive", ymin > 0, f"min y {ymin:.3e}")

    b = augmented.compute_b_from_trace(trace)
    col, diag = augmented.check_matrices(trace, b)
    check("augmented matrices column-stochastic", col <= 1e-15, f"max column-sum error {col:.3e}")
    check("augmented diagonal positive for players", diag)

    game = game_from_trace(trace)
    if game is None and not trace.header.get("frozen", False):
        check("augmented replay", False, "trace header carries no game instance")
    else:
        rep = augmented.equivalence_report(trace, game, tol=equiv_tol, b=b)
        check("augmented replay equivalence", rep.ok,
              ", ".join(f"{q} {v:.2e}" for q, v in rep.max_dev.items())
              + ("" if rep.ok else f"; first divergence {rep.first_divergence}"))

    if "timing" in trace.header:
        dr = augmented.check_delay_bounds(trace)
        check("activation/staleness/counter bounds", dr.ok,
              f"gap {dr.activation_gap}/{dr.b1}, staleness {dr.staleness}/{dr.b}, "
              f"spread {dr.counter_spread}/{dr.nb}, jump {dr.counter_jump}/{dr.nb + 1}")

    if trace.header.get("scheme") == "synchronous" and (game is not None or trace.header.get("frozen")):
        err = synchronous_reference_error(trace, game)
        check("matches direct synchronous iteration", err <= equiv_tol, f"max deviation {err:.3e}")
    return VerifyReport(lines, ok)


def synchronous_reference_error(trace: EventTrace, game) -> float:
    """Largest relative deviation between a synchronous trace and the matrix-form iteration."""
    rho = StepsizeSchedule(**trace.header["rho"])
    graph = from_edges(trace.n, [(i + 1, j + 1) for i, o in enumerate(trace.out) for j in o if i != j])
    frozen = bool(trace.header.get("frozen", False))
    xs, zs, ys = synchronous_push_sum(game, graph, trace.X[0], rho, trace.num_events, frozen)
    worst = 0.0
    for k in range(trace.num_events):
        for a, b in ((xs[k], trace.X[k + 1]), (zs[k], trace.Z[k + 1]), (ys[k], trace.Y[k + 1])):
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))))
    return worst

"""Compare the compiled and numpy kernels on the operations the engine calls most.

    python benchmarks/bench_kernels.py [--repeat N]

Each backend is imported in a fresh interpreter so the selection logic in
``asynag.kernels`` is exercised exactly as in normal use.
"""

import argparse
import json
import os
import subprocess
import sys

SNIPPET = r"""
import json, timeit
import numpy as np
from asynag import kernels
from asynag.cournot import generate_instance, CournotGame
from asynag.engine import TimingModel, run_simulation
from asynag.stepsize import StepsizeSchedule
from asynag.topology import make_topology

rng = np.random.default_rng(0)
p = 20
lo, hi = np.zeros(p), np.full(p, 500.0)
a = np.tile([1.0, -1.0], p // 2)
vs = [rng.uniform(-200, 800, p) for _ in range(256)]
params = generate_instance(20, 10, 1)
game = CournotGame(params)
x = game.random_feasible(rng)
z = x.mean(axis=0)
repeat = REPEAT

def proj():
    for v in vs:
        kernels.project_box_hyperplane(v, lo, hi, a)

def step():
    for i in range(20):
        game.local_step(i, x[i], z, 0.01)

def sim():
    run_simulation(game, make_topology("log", 20), TimingModel(), StepsizeSchedule("constant", 0.006),
                   horizon=1_000_000, seed=1)

out = {"backend": kernels.BACKEND}
out["projection_us"] = min(timeit.repeat(proj, number=1, repeat=repeat)) / len(vs) * 1e6
out["local_step_us"] = min(timeit.repeat(step, number=1, repeat=repeat)) / 20 * 1e6
out["simulation_1s_s"] = min(timeit.repeat(sim, number=1, repeat=max(1, repeat // 5)))
print(json.dumps(out))
"""


def run(pure: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("ASYNAG_PURE_PYTHON", None)
    if pure:
        env["ASYNAG_PURE_PYTHON"] = "1"
    code = SNIPPET.replace("REPEAT", str(repeat))
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    args = ap.parse_args()
    rows = [run(False, args.repeat), run(True, args.repeat)]
    print(f"{'backend':<8} {'projection (us)':>16} {'local step (us)':>16} {'1 s of n=20 log (s)':>20}")
    for r in rows:
        print(f"{r['backend']:<8} {r['projection_us']:>16.2f} {r['local_step_us']:>16.2f} {r['simulation_1s_s']:>20.3f}")
    if rows[0]["backend"] == rows[1]["backend"]:
        print("note: compiled extension not built; both rows use the numpy kernels")
    else:
        base = rows[1]
        fast = rows[0]
        print(f"speed-up: projection x{base['projection_us'] / fast['projection_us']:.1f}, "
              f"local step x{base['local_step_us'] / fast['local_step_us']:.1f}, "
              f"simulation x{base['simulation_1s_s'] / fast['simulation_1s_s']:.1f}")


if __name__ == "__main__":
    main()

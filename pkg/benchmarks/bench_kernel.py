"""Time the compiled RK4 kernel against the pure-Python twin.

    python3 benchmarks/bench_kernel.py --t-end 0.2 --repeat 3
"""
import argparse
import time

import numpy as np

from hacsim.controller import HacParams
from hacsim.plant import CoiParams, InfiniteBus, PlantParams
from hacsim.sim import Scenario, compiled_available, integrate
from hacsim.analysis import solve_equilibrium


def scenario(grid_kind: str, t_end: float) -> Scenario:
    pp = PlantParams.table1()
    grid = CoiParams.table1(pp) if grid_kind == "coi" else InfiniteBus()
    eq = solve_equilibrium(pp, HacParams.table1(pp), grid)
    x0 = eq.x_stable * 1.02
    x0[0] = 0.8
    return Scenario(eq.pp, eq.hp, tuple(x0), t_end, grid=eq.grid)


def best_of(sc: Scenario, backend: str, repeat: int):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        tr = integrate(sc, backend)
        times.append(time.perf_counter() - t0)
    return min(times), tr


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--t-end", type=float, default=0.2, help="simulated seconds per run")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--grid", choices=["ib", "coi"], default="ib")
    args = parser.parse_args()

    sc = scenario(args.grid, args.t_end)
    n = sc.n_steps
    print(f"{args.grid}: {n} RK4 steps of {sc.dt * 1e6:.0f} us")
    results = {}
    backends = ["python"] + (["cython"] if compiled_available() else [])
    for name in backends:
        wall, tr = best_of(sc, name, args.repeat)
        results[name] = (wall, tr)
        print(f"  {name:7s} {wall:9.4f} s   {wall / n * 1e6:8.3f} us/step")
    if len(results) == 2:
        (wp, tp), (wc, tc) = results["python"], results["cython"]
        same = np.array_equal(tp.states, tc.states)
        print(f"  speedup {wp / wc:.1f}x, trajectories bit-identical: {same}")
    else:
        print("  compiled kernel not built; only the Python twin was timed")


if __name__ == "__main__":
    main()

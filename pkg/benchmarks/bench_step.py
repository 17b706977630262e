"""Time step() with the compiled kernel against the pure-Python fallback.

    python3 benchmarks/bench_step.py [--K 500] [--t 2.0]

Both backends consume the same random stream, so the event logs are also
compared for equality.
"""
import argparse
import time

import numpy as np

from randgas import dynamics


def bench(backend, cfg, t_sim):
    rng = dynamics.realization_rng(cfg.seed, 0)
    state = dynamics.init_state(cfg, rng)
    events = []
    n = 0
    t0 = time.perf_counter()
    while state.time < t_sim - 1e-12:
        state = dynamics.step(state, min(cfg.dt_max, t_sim - state.time), cfg.contact, rng,
                              energy=cfg.energy_E, events=events, backend=backend)
        n += 1
    return time.perf_counter() - t0, n, events, state


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--K", type=int, default=500)
    ap.add_argument("--t", type=float, default=2.0, help="simulated time")
    ap.add_argument("--phi", type=float, default=0.02)
    args = ap.parse_args()
    cfg = dynamics.SimConfig.from_dict(dict(K=args.K, volume_fraction=args.phi, theta=1.0, t_end=args.t, seed=3))
    rows = {}
    for backend in ("compiled", "python"):
        try:
            rows[backend] = bench(backend, cfg, args.t)
        except RuntimeError as exc:
            print(f"{backend:9s} unavailable: {exc}")
    for name, (wall, n, ev, _) in rows.items():
        print(f"{name:9s} {wall:8.3f} s  {n} steps  {1e6 * wall / n:9.1f} us/step  {len(ev)} events")
    if len(rows) == 2:
        a, b = rows["compiled"], rows["python"]
        same = a[2] == b[2] and np.array_equal(a[3].velocities, b[3].velocities)
        print(f"speedup {b[0] / a[0]:.1f}x, identical trajectories: {same}")


if __name__ == "__main__":
    main()

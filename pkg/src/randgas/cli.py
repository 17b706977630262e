"""randgas command line: simulate, analyze, verify-moments, hydro.

Exit codes: 0 success, 1 runtime or acceptance failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from . import dynamics, hydro, moments, statistics
from .geometry import Box3, ContactParams
from .io import ConfigError, Manifest, load_config, read_table, write_json, write_jsonl, write_table

log = logging.getLogger("randgas")

SNAPSHOT_COLUMNS = ["realization", "time", "particle", "x", "y", "z", "vx", "vy", "vz"]
EVENT_COLUMNS = ["t", "i", "j", "nx", "ny", "nz"]


def _setup_logging():
    level = os.environ.get("RANDGAS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _output_dir(args, cfg, default):
    out = Path(args.output or cfg.get("output") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg, default=0):
    return int(args.seed) if args.seed is not None else int(cfg.get("seed", default))


def _threads(args, cfg):
    if args.threads is not None:
        return max(1, int(args.threads))
    return max(1, int(cfg.get("threads", os.cpu_count() or 1)))


# ----------------------------------------------------------------- simulate

def _sim_section(cfg):
    sim = dict(cfg.get("simulation", {}))
    if not sim:
        raise ConfigError("config needs a 'simulation' section")
    return sim


class _SnapshotFactory:
    """Picklable observer factory for worker processes."""

    def __init__(self, interval, t_start):
        self.interval, self.t_start = interval, t_start

    def __call__(self):
        return [dynamics.SnapshotRecorder(self.interval, self.t_start)]


def cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    if args.preset:
        cfg = {**SIM_PRESETS[args.preset], **cfg}
    sim = _sim_section(cfg)
    seed = _seed(args, cfg, sim.get("seed", 0))
    sim["seed"] = seed
    try:
        sc = dynamics.SimConfig.from_dict(sim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulation config: {exc}") from exc
    interval = float(cfg.get("snapshot_interval", sc.t_end if sc.t_end > 0 else 1.0))
    t_start = float(cfg.get("snapshot_start", 0.0))
    record_events = bool(cfg.get("record_events", True))
    out = _output_dir(args, cfg, "randgas-simulate")
    resolved = {**cfg, "simulation": sim}
    man = Manifest("simulate", args.config, seed, out, resolved)

    records = dynamics.run_ensemble(sc, _SnapshotFactory(interval, t_start), threads=_threads(args, cfg),
                                    record_events=record_events)
    man.add(write_json(out / "simulation.json", {"config": resolved, "box": list(sc.box.side_lengths),
                                                 "energy_E": sc.energy_E, "dt_max": sc.dt_max}, man.digest))
    meta = []
    for rec in records:
        r = rec.realization
        snap = rec.observers["snapshots"]
        rows = []
        for t, x, v in zip(snap["times"], snap["positions"], snap["velocities"]):
            K = len(x)
            rows.append(np.column_stack([np.full(K, r), np.full(K, t), np.arange(K), x, v]))
        data = np.vstack(rows) if rows else np.empty((0, len(SNAPSHOT_COLUMNS)))
        man.add(write_table(out / f"snapshots_r{r:04d}.csv", SNAPSHOT_COLUMNS, data, man.digest))
        if record_events:
            ev = np.array(rec.events) if rec.events else np.empty((0, len(EVENT_COLUMNS)))
            man.add(write_table(out / f"events_r{r:04d}.csv", EVENT_COLUMNS, ev, man.digest))
        m = rec.metadata()
        m.pop("wall_time")
        meta.append(m)
        log.info("realization %d: %d events, energy drift %.2e", r, rec.event_count, rec.final_E_drift)
    man.add(write_jsonl(out / "runs.jsonl", [json.dumps(m, sort_keys=True) for m in meta], man.digest))
    man.write()
    print(f"simulate: {len(records)} realization(s), {sum(m['event_count'] for m in meta)} events -> {out}")
    return 0


SIM_PRESETS = {
    "smoke": {
        "seed": 1,
        "simulation": {"K": 64, "volume_fraction": 0.02, "sigma": 1.0, "alpha": 0.1, "lambda": 1.0,
                       "theta": 1.0, "t_end": 4.0, "ensemble_size": 2},
        "snapshot_interval": 1.0,
    },
}


# ------------------------------------------------------------------ analyze

def _load_snapshots(snap_dir: Path):
    files = sorted(snap_dir.glob("snapshots_r*.csv"))
    meta_path = snap_dir / "simulation.json"
    if not files or not meta_path.is_file():
        raise ConfigError(f"no snapshots found in {snap_dir}")
    meta = json.loads(meta_path.read_text())
    times, pos, vel = [], [], []
    for f in files:
        cols, a = read_table(f)
        if a.size == 0:
            continue
        for t in np.unique(a[:, 1]):
            rows = a[a[:, 1] == t]
            rows = rows[np.argsort(rows[:, 2])]
            times.append(t)
            pos.append(rows[:, 3:6])
            vel.append(rows[:, 6:9])
    if not times:
        raise ConfigError(f"snapshot files in {snap_dir} are empty")
    return meta, np.array(times), np.array(pos), np.array(vel)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    snap_dir = Path(args.snapshots or cfg.get("snapshot_dir", ""))
    if not snap_dir.is_dir():
        raise ConfigError(f"snapshot directory not found: {snap_dir}")
    meta, times, pos, vel = _load_snapshots(snap_dir)
    sim = meta["config"]["simulation"]
    p = ContactParams(sigma=float(sim.get("sigma", 1.0)), alpha=float(sim.get("alpha", 0.1)),
                      lam=float(sim.get("lambda", sim.get("lam", 1.0))), rho_sp=float(sim.get("rho_sp", 1.0)))
    box = Box3(tuple(meta["box"]))
    burn = float(cfg.get("burn_in", 0.0))
    keep = times >= burn - 1e-12
    if not np.any(keep):
        raise ConfigError("burn_in removes every snapshot")
    out = _output_dir(args, cfg, "randgas-analyze")
    seed = _seed(args, cfg, meta["config"].get("seed", 0))
    man = Manifest("analyze", args.config, seed, out, {**cfg, "snapshot_dir": str(snap_dir)})
    theta = 2.0 * meta["energy_E"] / (3.0 * pos.shape[1])

    g = statistics.pair_correlation(pos[keep], p, r_max=float(cfg.get("r_max", 2.0 * p.sigma)),
                                    n_bins=int(cfg.get("n_bins", 64)), box=box)
    man.add(write_table(out / "pair_correlation.csv", ["r", "g", "stderr"],
                        np.column_stack([g.r_mid, g.g_values, g.stderr()]), man.digest))

    rows = []
    for t in np.unique(times):
        m = times == t
        v = vel[m]
        ks = statistics.maxwellian_distance(v, theta)
        kl, se, n = statistics.velocity_kl_estimate(v, theta)
        rows.append((t, ks, statistics.ks_critical(n, 0.01), kl, se, n))
    man.add(write_table(out / "maxwellian.csv", ["time", "ks", "ks_crit_1pct", "kl", "kl_stderr", "n"],
                        np.array(rows), man.digest))
    window = cfg.get("kl_window")
    if window:
        tm, kl, se, n = statistics.windowed_kl(times, vel, float(window), theta)
        man.add(write_table(out / "kl_windows.csv", ["t_mid", "kl", "stderr", "n"],
                            np.column_stack([tm, kl, se, n]), man.digest))

    ov = statistics.overlap_ratio(pos[keep], p, box=box, n_blocks=int(cfg.get("n_blocks", 10)),
                                  level=float(cfg.get("level", 0.95)))
    pooled = vel[keep]
    summary = {
        "overlap_ratio": ov.ratio, "ci_low": ov.ci_low, "ci_high": ov.ci_high, "stderr": ov.stderr,
        "wide": ov.wide, "expected": math.exp(-p.lam), "contains_expected": ov.contains(math.exp(-p.lam)),
        "n_snapshots": int(keep.sum()), "ks_pooled": statistics.maxwellian_distance(pooled, theta),
        "ks_critical_1pct": statistics.ks_critical(pooled.size, 0.01),
    }
    man.add(write_json(out / "overlap.json", summary, man.digest))
    man.write()
    print(f"analyze: overlap ratio {ov.ratio:.4f} [{ov.ci_low:.4f}, {ov.ci_high:.4f}], "
          f"expected e^-lambda = {math.exp(-p.lam):.4f}")
    return 0


# ----------------------------------------------------------- verify-moments

def cmd_verify_moments(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    if args.preset:
        cfg = {**MOMENT_PRESETS[args.preset], **cfg}
    seed = _seed(args, cfg)
    n = int(float(cfg.get("n_samples", 10_000_000)))
    ids = cfg.get("identities", list(moments.IDENTITIES))
    tol = float(cfg.get("tolerance", 0.01))
    sampler = cfg.get("sampler", "rqmc")
    scale = float(cfg.get("test_mode", {}).get("corrupt_closed_form", 1.0))
    rho_sp = float(cfg.get("rho_sp", 1.0))
    points = []
    for s in cfg.get("point_seeds", [0, 1, 2]):
        points.append((f"seed{s}", moments.random_point(np.random.default_rng(int(s)), rho_sp=rho_sp)))
    for k, d in enumerate(cfg.get("points", [])):
        try:
            points.append((f"point{k}", moments.HydroPoint.from_dict(d)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid point {k}: {exc}") from exc
    if not points:
        raise ConfigError("no points to verify")
    out = _output_dir(args, cfg, "randgas-moments")
    man = Manifest("verify-moments", args.config, seed, out, cfg)
    lines, ok = [], True
    for r, (label, pt) in enumerate(points):
        rng = dynamics.realization_rng(seed, r)
        try:
            reps = moments.verify_identities(pt, n, rng, ids=ids, sampler=sampler,
                                             closed_scale=scale, tolerance=tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for rep in reps:
            ok &= rep.passed
            lines.append(rep.to_json(point=label))
            print(f"{label} {rep.identity_id}: rel_err={rep.rel_err:.2e} {'PASS' if rep.passed else 'FAIL'}")
        if cfg.get("invariants", False):
            inv = moments.collision_invariant_integrals(pt, n, dynamics.realization_rng(seed, r, 1), sampler)
            for name, (mc, se) in inv.items():
                if name.startswith("control"):
                    continue
                good = abs(mc) <= 3 * se
                ok &= good
                lines.append(json.dumps({"point": label, "invariant": name, "value": float(mc),
                                         "stderr": float(se), "passed": bool(good)}))
    man.add(write_jsonl(out / "moment_reports.jsonl", lines, man.digest))
    man.write(status="pass" if ok else "fail")
    return 0 if ok else 1


MOMENT_PRESETS = {
    "quick": {"n_samples": 1_000_000, "point_seeds": [0], "tolerance": 0.05},
    "full": {"n_samples": 10_000_000, "point_seeds": [0, 1, 2], "invariants": True},
}


# -------------------------------------------------------------------- hydro

def _hydro_state(cfg):
    name = cfg.get("preset")
    opts = {k: cfg[k] for k in ("rho_sp", "sigma", "bc", "dense", "R_star") if k in cfg}
    if name:
        st = hydro.preset(name, n_cells=cfg.get("n_cells"), **opts)
        if "dx" in cfg:
            st = st.copy(dx=float(cfg["dx"]))
        return st
    if "table" in cfg:
        cols, a = read_table(cfg["table"])
        idx = {c: k for k, c in enumerate(cols)}
        missing = {"rho", "u", "theta"} - set(idx)
        if missing:
            raise ConfigError(f"initial table lacks columns {sorted(missing)}")
        n = len(a)
        dx = float(cfg.get("dx", 1.0 / n))
        w = a[:, idx["w"]] if "w" in idx else None
        return hydro.HydroState1D(n, dx, a[:, idx["rho"]], a[:, idx["u"]], a[:, idx["theta"]], w=w, **opts)
    raise ConfigError("hydro config needs 'preset' or 'table'")


def cmd_hydro(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    if args.preset:
        cfg["preset"] = args.preset
    try:
        state = _hydro_state(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid hydro config: {exc}") from exc
    default_t = 0.2 if str(cfg.get("preset", "")).startswith("sod") else 0.1
    t_end = float(cfg.get("t_end", default_t))
    cfl = float(cfg.get("cfl", 0.5))
    model = cfg.get("model", "ns" if state.sigma > 0 else "euler")
    limiter = cfg.get("limiter", "minmod")
    limiter = None if limiter in (None, "none") else limiter
    times = sorted(float(t) for t in cfg.get("output_times", [t_end]))
    out = _output_dir(args, cfg, "randgas-hydro")
    man = Manifest("hydro", args.config, _seed(args, cfg), out, cfg)
    cols = ["x", "rho", "u", "theta", "p", "w"]

    def snap(s, k):
        data = np.column_stack([s.x, s.rho, s.u, s.theta, s.pressure, s.w])
        man.add(write_table(out / f"snapshot_{k:03d}.csv", cols, data, man.digest, [f"time {s.time:.17g}"]))

    snap(state, 0)
    summary = {"preset": cfg.get("preset"), "n_cells": state.n_cells, "totals_initial": state.totals()}
    s = state
    for k, t in enumerate(times, start=1):
        s = hydro.advance(s, t, cfl=cfl, model=model, limiter=limiter)
        snap(s, k)
    summary["totals_final"] = s.totals()
    summary["time"] = s.time
    if cfg.get("preset") == "sod-dilute":
        ref = hydro.riemann_exact_dilute(hydro.SOD_LEFT, hydro.SOD_RIGHT, s.time, s.x)[0]
        summary["l1_rho"] = hydro.l1_error(s, ref)
        print(f"hydro: sod-dilute L1(rho) = {summary['l1_rho']:.4e} at t = {s.time:g}")
    man.add(write_json(out / "summary.json", summary, man.digest))
    man.write()
    print(f"hydro: {cfg.get('preset') or 'table'} advanced to t = {s.time:g} -> {out}")
    return 0


# --------------------------------------------------------------------- main

def build_parser():
    ap = argparse.ArgumentParser(prog="randgas", description="Random hard-sphere gas toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, preset_choices=None):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--output", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
        p.add_argument("--preset", choices=preset_choices, help="built-in configuration")

    p = sub.add_parser("simulate", help="run a particle ensemble")
    common(p, sorted(SIM_PRESETS))
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("analyze", help="statistics of saved snapshots")
    common(p)
    p.add_argument("snapshots", nargs="?", help="directory written by simulate")
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("verify-moments", help="Monte-Carlo check of the collision-moment identities")
    common(p, sorted(MOMENT_PRESETS))
    p.set_defaults(func=cmd_verify_moments)
    p = sub.add_parser("hydro", help="1-D Enskog-Euler / Navier-Stokes run")
    common(p, ["uniform", "sod-dilute", "sod-dense", "acoustic-pulse", "shear-wave"])
    p.set_defaults(func=cmd_hydro)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"randgas: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"randgas: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

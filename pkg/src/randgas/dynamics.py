"""Stochastic K-sphere gas: free flight plus point-process triggered collisions.

Each pair (i, j) carries a jump intensity

    h = lam * Theta(approaching) * delta_{alpha sigma}(|x_i - x_j| - sigma) * closing speed

and jumps are generated by thinning against the bound 2 lam delta(0) sqrt(E),
which holds because |v_i - v_j| <= 2 sqrt(E) for any pair. An accepted jump
replaces the pair velocities by collide_coords().
"""
from __future__ import annotations

import logging
import math
import os
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py
from .geometry import Box3, ContactParams, min_image, mollifier, mollifier_constant, mollifier_peak

log = logging.getLogger(__name__)

try:
    if os.environ.get("RANDGAS_BACKEND", "").lower() == "python":
        raise ImportError("python backend requested")
    from . import _kernel as _compiled
except ImportError:
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def get_kernel(backend=None):
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        return _compiled
    if backend == "python":
        return _kernel_py
    raise ValueError(f"unknown backend {backend!r}")


@dataclass
class ParticleSet:
    positions: np.ndarray
    velocities: np.ndarray
    box: Box3
    time: float = 0.0

    @property
    def K(self):
        return self.positions.shape[0]

    @property
    def energy(self):
        return 0.5 * float(np.sum(self.velocities**2))

    @property
    def momentum(self):
        return self.velocities.sum(axis=0)

    def copy(self):
        return ParticleSet(self.positions.copy(), self.velocities.copy(), self.box, self.time)


@dataclass
class SimConfig:
    K: int
    contact: ContactParams
    box: Box3
    energy_E: float
    dt_max: float
    t_end: float
    seed: int = 0
    ensemble_size: int = 1
    velocity_init: str = "gaussian"

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if not self.energy_E > 0:
            raise ValueError("energy_E must be positive")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be at least 1")
        if self.velocity_init not in ("gaussian", "two_speed"):
            raise ValueError(f"unknown velocity_init {self.velocity_init!r}")
        self.contact.check_box(self.box)
        limit = dt_limit(self.contact, self.energy_E)
        if self.dt_max > limit * (1 + 1e-12):
            raise ValueError(f"dt_max={self.dt_max} exceeds alpha*sigma/(2 sqrt(E)) = {limit}")
        rc = candidate_radius(self.contact, self.energy_E, self.dt_max)
        if rc >= min(self.box.side_lengths) / 2:
            raise ValueError("box too small for the contact candidate radius")

    @property
    def theta(self):
        return 2.0 * self.energy_E / (3.0 * self.K)

    @classmethod
    def from_dict(cls, d):
        """Build from a flat mapping.

        Accepts either `box` (side or three sides) or `volume_fraction`, and
        either `energy_E` or `theta`. A missing dt_max defaults to the limit.
        """
        d = dict(d)
        contact = ContactParams(
            sigma=float(d.pop("sigma", 1.0)),
            alpha=float(d.pop("alpha", 0.1)),
            lam=float(d.pop("lambda", d.pop("lam", 1.0))),
            rho_sp=float(d.pop("rho_sp", 1.0)),
        )
        K = int(d.pop("K"))
        if "volume_fraction" in d:
            phi = float(d.pop("volume_fraction"))
            side = (K * math.pi * contact.sigma**3 / (6.0 * phi)) ** (1.0 / 3.0)
            box = Box3.cube(side)
        else:
            b = d.pop("box")
            box = Box3.cube(float(b)) if np.ndim(b) == 0 else Box3(tuple(b))
        if "theta" in d:
            E = 1.5 * K * float(d.pop("theta"))
        else:
            E = float(d.pop("energy_E"))
        dt_max = d.pop("dt_max", None)
        dt_max = dt_limit(contact, E) if dt_max is None else float(dt_max)
        return cls(
            K=K,
            contact=contact,
            box=box,
            energy_E=E,
            dt_max=dt_max,
            t_end=float(d.pop("t_end", 0.0)),
            seed=int(d.pop("seed", 0)),
            ensemble_size=int(d.pop("ensemble_size", 1)),
            velocity_init=str(d.pop("velocity_init", "gaussian")),
        )


@dataclass(frozen=True)
class PairEvent:
    i: int
    j: int
    intensity: float
    bound: float

    def __post_init__(self):
        if self.intensity > self.bound:
            raise ValueError("intensity above thinning bound")


def dt_limit(p: ContactParams, E):
    """Largest step for which no pair crosses a contact zone unresolved."""
    return p.alpha * p.sigma / (2.0 * math.sqrt(E))


def candidate_radius(p: ContactParams, E, dt):
    return p.r_outer + 2.0 * math.sqrt(E) * dt


def intensity_bound(p: ContactParams, E):
    """2 lam delta(0) sqrt(E), valid for every pair at total energy E."""
    return 2.0 * p.lam * mollifier_peak(p.width) * math.sqrt(E)


def pair_intensity(xi, xj, vi, vj, p: ContactParams, box: Box3 | None = None):
    """Jump intensity of the pair (vectorized over leading axes)."""
    xi, xj, vi, vj = (np.asarray(a, dtype=float) for a in (xi, xj, vi, vj))
    d = min_image(xi, xj, box) if box is not None else xi - xj
    r = np.sqrt(np.sum(d * d, axis=-1))
    rel = vj - vi
    with np.errstate(invalid="ignore", divide="ignore"):
        closing = np.where(r > 0, np.sum(d * rel, axis=-1) / np.where(r > 0, r, 1.0), 0.0)
    h = p.lam * mollifier(r - p.sigma, p.width) * np.maximum(closing, 0.0)
    return h if np.ndim(h) else float(h)


def realization_rng(seed, realization=0, block=None):
    """Stream splitting rule: command seed -> realization index -> block index."""
    key = (int(realization),) if block is None else (int(realization), int(block))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def init_state(cfg: SimConfig, rng) -> ParticleSet:
    """Uniform positions; velocities shifted to zero momentum and scaled to energy E."""
    K = cfg.K
    pos = rng.random((K, 3)) * cfg.box.sides
    if cfg.velocity_init == "two_speed":
        v = rng.standard_normal((K, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
    else:
        v = rng.standard_normal((K, 3))
    v -= v.mean(axis=0)
    v *= math.sqrt(2.0 * cfg.energy_E / np.sum(v * v))
    return ParticleSet(np.ascontiguousarray(pos), np.ascontiguousarray(v), cfg.box, 0.0)


@dataclass
class StepStats:
    n_steps: int = 0
    n_candidates: int = 0
    n_proposals: int = 0
    max_bound_ratio: float = 0.0

    def add(self, nc, npr, ratio):
        self.n_steps += 1
        self.n_candidates += nc
        self.n_proposals += npr
        self.max_bound_ratio = max(self.max_bound_ratio, ratio)


def step(state: ParticleSet, dt, p: ContactParams, rng, *, energy=None, events=None,
         stats: StepStats | None = None, backend=None) -> ParticleSet:
    """Advance by dt: free flight with thinned pair jumps inside the step.

    `energy` fixes the E used for the thinning bound (defaults to the state's
    own energy). Accepted jumps are appended to `events` as
    (t, i, j, nx, ny, nz) when a list is passed.
    """
    E = state.energy if energy is None else float(energy)
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if E > 0 and dt > dt_limit(p, E) * (1 + 1e-12):
        raise ValueError("dt exceeds alpha*sigma/(2 sqrt(E))")
    out = state.copy()
    if dt == 0:
        return out
    kern = get_kernel(backend)
    bound = intensity_bound(p, E)
    rcut = candidate_radius(p, E, dt)
    if rcut >= min(state.box.side_lengths) / 2:
        raise ValueError("box too small for the candidate radius")
    ev, nc, npr, ratio = kern.step_kernel(
        out.positions, out.velocities, state.box.side_lengths, p.sigma, p.alpha, p.lam,
        mollifier_constant(), bound, rcut, float(dt), float(state.time), rng,
    )
    out.time = state.time + dt
    if events is not None:
        events.extend(ev)
    if stats is not None:
        stats.add(nc, npr, ratio)
    return out


class Observer:
    """Called at t = 0, interval, 2*interval, ... up to t_end."""

    name = "observer"

    def __init__(self, interval):
        if not interval > 0:
            raise ValueError("observer interval must be positive")
        self.interval = float(interval)

    def __call__(self, state: ParticleSet):
        raise NotImplementedError

    def result(self):
        return None


class SnapshotRecorder(Observer):
    """Keeps copies of positions and velocities from t_start on."""

    name = "snapshots"

    def __init__(self, interval, t_start=0.0):
        super().__init__(interval)
        self.t_start = t_start
        self.times, self.positions, self.velocities = [], [], []

    def __call__(self, state):
        if state.time + 1e-12 < self.t_start:
            return
        self.times.append(state.time)
        self.positions.append(state.positions.copy())
        self.velocities.append(state.velocities.copy())

    def result(self):
        return {
            "times": np.array(self.times),
            "positions": np.array(self.positions),
            "velocities": np.array(self.velocities),
        }


@dataclass
class RunRecord:
    seed: int
    realization: int
    K: int
    lam: float
    alpha: float
    sigma: float
    event_count: int
    final_E_drift: float
    momentum_drift: float
    wall_time: float
    n_steps: int
    n_proposals: int
    max_bound_ratio: float
    final_state: ParticleSet | None = None
    events: list | None = None
    observers: dict = field(default_factory=dict)

    def metadata(self):
        return {
            "seed": self.seed,
            "realization": self.realization,
            "K": self.K,
            "lambda": self.lam,
            "alpha": self.alpha,
            "sigma": self.sigma,
            "event_count": self.event_count,
            "final_E_drift": self.final_E_drift,
            "momentum_drift": self.momentum_drift,
            "n_steps": self.n_steps,
            "n_proposals": self.n_proposals,
            "max_bound_ratio": self.max_bound_ratio,
            "wall_time": self.wall_time,
        }


def run(cfg: SimConfig, observers=(), realization=0, record_events=True, backend=None) -> RunRecord:
    """Advance one realization from t=0 to t_end."""
    t0 = _time.perf_counter()
    rng = realization_rng(cfg.seed, realization)
    state = init_state(cfg, rng)
    E = cfg.energy_E
    events = [] if record_events else None
    stats = StepStats()
    n_events = 0
    obs = list(observers)
    counts = [0] * len(obs)

    def due(k):
        return counts[k] * obs[k].interval

    for k, o in enumerate(obs):
        o(state)
        counts[k] = 1
    while state.time < cfg.t_end:
        t_next = cfg.t_end
        for k in range(len(obs)):
            t_next = min(t_next, due(k))
        dt = min(cfg.dt_max, t_next - state.time)
        buf = []
        state = step(state, dt, cfg.contact, rng, energy=E, events=buf, stats=stats, backend=backend)
        n_events += len(buf)
        if events is not None:
            events.extend(buf)
        if t_next - state.time <= 1e-12 * max(1.0, t_next):
            state.time = t_next
        for k, o in enumerate(obs):
            while due(k) <= state.time + 1e-12 * max(1.0, state.time) and due(k) <= cfg.t_end:
                o(state)
                counts[k] += 1
    e_drift = abs(state.energy - E) / E
    p_drift = float(np.max(np.abs(state.momentum)))
    return RunRecord(
        seed=cfg.seed,
        realization=realization,
        K=cfg.K,
        lam=cfg.contact.lam,
        alpha=cfg.contact.alpha,
        sigma=cfg.contact.sigma,
        event_count=n_events,
        final_E_drift=e_drift,
        momentum_drift=p_drift,
        wall_time=_time.perf_counter() - t0,
        n_steps=stats.n_steps,
        n_proposals=stats.n_proposals,
        max_bound_ratio=stats.max_bound_ratio,
        final_state=state,
        events=events,
        observers={o.name: o.result() for o in obs},
    )


def _run_task(args):
    cfg, factory, r, record_events, backend = args
    observers = factory() if factory is not None else ()
    return run(cfg, observers, realization=r, record_events=record_events, backend=backend)


def run_ensemble(cfg: SimConfig, observer_factory=None, threads=1, record_events=True, backend=None):
    """Run cfg.ensemble_size independent realizations.

    Realization r always uses stream (seed, r), so results do not depend on
    the number of workers. observer_factory must be picklable for threads > 1.
    """
    tasks = [(cfg, observer_factory, r, record_events, backend) for r in range(cfg.ensemble_size)]
    if threads <= 1 or len(tasks) == 1:
        return [_run_task(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_run_task, tasks))


@dataclass
class PassThroughResult:
    lam: float
    n_trials: int
    first_jump: np.ndarray  # per pair, nan when the pair passed through
    s0: float

    @property
    def n_pass(self):
        return int(np.sum(np.isnan(self.first_jump)))

    @property
    def fraction(self):
        return self.n_pass / self.n_trials

    @property
    def binomial_se(self):
        q = math.exp(-self.lam)
        return math.sqrt(q * (1 - q) / self.n_trials)


def pass_through_trials(lam, n_trials, rng, sigma=1.0, alpha=0.1, backend=None) -> PassThroughResult:
    """Head-on pairs driven through the whole inward half of the contact zone.

    Pairs sit in separate lattice cells, far enough apart that only partners
    are candidates, and move with velocities (+1, 0, 0) and (-1, 0, 0). The
    thinning bound uses the pair energy 1, which bounds every relative speed.
    Returns the time of the first jump of each pair (nan if none).
    """
    p = ContactParams(sigma=sigma, alpha=alpha, lam=lam)
    E = 1.0
    dt = dt_limit(p, E)
    cell = 4.0 * sigma
    m = int(math.ceil(n_trials ** (1.0 / 3.0)))
    idx = np.arange(n_trials)
    corner = np.column_stack([idx % m, (idx // m) % m, idx // (m * m)]) * cell
    s0 = p.r_outer + 0.25 * p.width
    a = corner + np.array([sigma, 0.5 * cell, 0.5 * cell])
    b = a + np.array([s0, 0.0, 0.0])
    pos = np.empty((2 * n_trials, 3))
    pos[0::2], pos[1::2] = a, b
    vel = np.zeros_like(pos)
    vel[0::2, 0], vel[1::2, 0] = 1.0, -1.0
    state = ParticleSet(pos, vel, Box3.cube(m * cell), 0.0)
    # stop once separation is sigma/2: past the inner edge, before the centres meet
    t_end = (s0 - 0.5 * sigma) / 2.0
    events = []
    while state.time < t_end - 1e-12:
        state = step(state, min(dt, t_end - state.time), p, rng, energy=E, events=events, backend=backend)
    first = np.full(n_trials, np.nan)
    for t, i, j, *_ in events:
        k = min(i, j) // 2
        if max(i, j) != 2 * k + 1:
            raise RuntimeError("jump between particles of different pairs")
        if np.isnan(first[k]):
            first[k] = t
    return PassThroughResult(lam, n_trials, first, s0)


def first_jump_oracle(lam, n, rng, sigma=1.0, alpha=0.1, s0=None):
    """Inverse-compensator sampling of the head-on first jump time.

    With closing speed 2 the compensator is lam * (1 - H(r(t) - sigma)),
    r(t) = s0 - 2t, so an Exp(1) draw e < lam gives H(r - sigma) = 1 - e/lam.
    Returns times, nan where the pair passes through.
    """
    from scipy.optimize import brentq

    from .geometry import mollifier_cdf

    p = ContactParams(sigma=sigma, alpha=alpha, lam=lam)
    s0 = p.r_outer + 0.25 * p.width if s0 is None else s0
    e = rng.exponential(size=n)
    out = np.full(n, np.nan)
    a = p.width
    for k in np.flatnonzero(e < lam):
        target = 1.0 - e[k] / lam
        z = brentq(lambda x: mollifier_cdf(x, a) - target, -a, a, xtol=1e-14)
        out[k] = (s0 - (sigma + z)) / 2.0
    return out

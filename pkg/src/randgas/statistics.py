"""Observables over simulation snapshots and a few exact checks.

Snapshots are passed either as ParticleSet objects or as plain arrays:
velocities with shape (n_snap, K, 3) and positions likewise.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import stats as sps
from scipy.spatial import cKDTree

from .geometry import ContactParams

log = logging.getLogger(__name__)

JEFFREYS = 0.5
KL_EDGES = np.concatenate([[-np.inf], np.linspace(-4.0, 4.0, 41), [np.inf]])


def _velocities(states):
    if isinstance(states, np.ndarray):
        v = states
    else:
        states = list(states)
        if states and hasattr(states[0], "velocities"):
            v = np.array([s.velocities for s in states])
        else:
            v = np.asarray(states, dtype=float)
    if v.ndim == 2:
        v = v[None]
    return v


def _positions(states):
    if isinstance(states, np.ndarray):
        x = states
    else:
        states = list(states)
        x = np.array([s.positions for s in states]) if hasattr(states[0], "positions") else np.asarray(states)
    if x.ndim == 2:
        x = x[None]
    return x


def temperature(state) -> float:
    """2E/(3K) with E the kinetic energy. Zero velocities give 0 with a warning."""
    v = state.velocities if hasattr(state, "velocities") else np.asarray(state, dtype=float)
    K = v.shape[0]
    if K < 2:
        raise ValueError("temperature needs at least two particles")
    E = 0.5 * float(np.sum(v * v))
    if E == 0:
        log.warning("all velocities are zero; temperature is degenerate")
    return 2.0 * E / (3.0 * K)


@dataclass
class Histogram1D:
    edges: np.ndarray
    counts: np.ndarray
    weight_total: float

    @classmethod
    def empty(cls, edges):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        return cls(edges, np.zeros(len(edges) - 1), 0.0)

    def fill(self, x, weights=None):
        c, _ = np.histogram(np.ravel(x), bins=self.edges, weights=weights)
        self.counts = self.counts + c
        self.weight_total = float(self.counts.sum())
        return self

    def merge(self, other: "Histogram1D"):
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge histograms with different edges")
        return Histogram1D(self.edges.copy(), self.counts + other.counts, self.weight_total + other.weight_total)


def maxwellian_distance(states, theta=None) -> float:
    """KS distance between pooled velocity components and normal(0, theta)."""
    v = _velocities(states)
    if v.size == 0:
        raise ValueError("empty ensemble")
    if theta is None:
        theta = np.mean([temperature(s) for s in v])
    return float(sps.kstest(v.ravel(), sps.norm(scale=math.sqrt(theta)).cdf).statistic)


def ks_critical(n, level=0.01) -> float:
    """Critical one-sample KS distance for n samples."""
    return float(sps.kstwo.isf(level, int(n)))


@dataclass
class PairCorrelation:
    r_edges: np.ndarray
    g_values: np.ndarray
    counts: np.ndarray
    expected: np.ndarray

    @property
    def r_mid(self):
        return 0.5 * (self.r_edges[1:] + self.r_edges[:-1])

    def stderr(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, np.sqrt(self.counts) / self.expected, np.nan)


def _pair_counts(pos, sides, r_edges):
    """Cumulative pair counts within each radius of r_edges for one snapshot."""
    wrapped = pos - sides * np.floor(pos / sides)
    wrapped[wrapped >= sides] = 0.0
    tree = cKDTree(wrapped, boxsize=sides)
    cum = tree.count_neighbors(tree, r_edges).astype(float)
    return (cum - len(pos)) / 2.0


def _sides(states, box=None):
    if box is not None:
        return np.asarray(box.sides if hasattr(box, "sides") else box, dtype=float)
    first = states[0] if not isinstance(states, np.ndarray) else None
    if first is None or not hasattr(first, "box"):
        raise ValueError("box is required when passing raw arrays")
    return first.box.sides


def pair_correlation(states, p: ContactParams, r_max=None, n_bins=64, box=None) -> PairCorrelation:
    """Radial distribution function with exact sphere-shell volumes (r_max <= L/2)."""
    sides = _sides(states, box)
    r_max = 2.0 * p.sigma if r_max is None else float(r_max)
    if r_max > sides.min() / 2:
        raise ValueError("r_max must not exceed half the smallest box side")
    x = _positions(states)
    n_snap, K = x.shape[:2]
    edges = np.linspace(0.0, r_max, n_bins + 1)
    counts = np.zeros(n_bins)
    for pos in x:
        counts += np.diff(_pair_counts(pos, sides, edges))
    shell = 4.0 / 3.0 * math.pi * np.diff(edges**3)
    density = K * (K - 1) / 2.0 / float(np.prod(sides))
    expected = n_snap * density * shell
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(counts > 0, counts / expected, np.nan)
    return PairCorrelation(edges, g, counts, expected)


@dataclass
class OverlapEstimate:
    ratio: float
    ci_low: float
    ci_high: float
    stderr: float
    n_overlap: float
    n_contact_free: float
    wide: bool

    def contains(self, value):
        return self.ci_low <= value <= self.ci_high


def overlap_ratio(states, p: ContactParams, box=None, n_blocks=10, level=0.95, min_counts=100) -> OverlapEstimate:
    """Pair density in [0.5 sigma, sigma(1-alpha)] over that in [sigma(1+alpha), 1.5 sigma].

    The confidence interval comes from a jackknife over contiguous blocks of
    snapshots, so time correlation between snapshots is respected. Too few
    pairs or blocks sets the `wide` flag.
    """
    sides = _sides(states, box)
    x = _positions(states)
    s = p.sigma
    edges = np.array([0.5 * s, p.r_inner, p.r_outer, 1.5 * s])
    if edges[-1] > sides.min() / 2:
        raise ValueError("box too small for the overlap shells")
    per = np.array([np.diff(_pair_counts(pos, sides, edges))[[0, 2]] for pos in x])
    vol = 4.0 / 3.0 * math.pi * np.array([edges[1] ** 3 - edges[0] ** 3, edges[3] ** 3 - edges[2] ** 3])
    n_in, n_out = per.sum(axis=0)

    def ratio_of(c):
        return (c[0] / vol[0]) / (c[1] / vol[1]) if c[1] > 0 else np.nan

    ratio = ratio_of(per.sum(axis=0))
    B = min(n_blocks, len(x))
    if B >= 2:
        blocks = np.array([b.sum(axis=0) for b in np.array_split(per, B)])
        tot = blocks.sum(axis=0)
        jack = np.array([ratio_of(tot - b) for b in blocks])
        se = math.sqrt((B - 1) / B * np.sum((jack - jack.mean()) ** 2))
        tq = sps.t.ppf(0.5 + level / 2, B - 1)
    else:
        se, tq = np.inf, np.inf
    wide = bool(B < 5 or n_in < min_counts or n_out < min_counts or not np.isfinite(se))
    if wide:
        log.warning("overlap ratio from few samples (blocks=%d, n_in=%d, n_out=%d)", B, n_in, n_out)
    return OverlapEstimate(
        ratio=float(ratio),
        ci_low=float(ratio - tq * se),
        ci_high=float(ratio + tq * se),
        stderr=float(se),
        n_overlap=float(n_in),
        n_contact_free=float(n_out),
        wide=wide,
    )


def _kl_from_counts(counts, ref_prob):
    c = counts + JEFFREYS
    q = c / c.sum()
    return float(np.sum(q * np.log(q / ref_prob)))


def velocity_kl(states, theta=None, edges=KL_EDGES) -> float:
    """KL divergence of the binned velocity-component marginal from normal(0, theta).

    Components are scaled by sqrt(theta) and binned on fixed edges; each bin
    gets a 0.5 pseudo-count.
    """
    return velocity_kl_estimate(states, theta, edges)[0]


def velocity_kl_estimate(states, theta=None, edges=KL_EDGES, n_blocks=10):
    """(kl, stderr, n_samples); stderr from a jackknife over snapshot blocks."""
    v = _velocities(states)
    if theta is None:
        theta = np.mean([temperature(s) for s in v])
    z = v / math.sqrt(theta)
    ref = np.diff(sps.norm.cdf(edges))
    per = np.array([np.histogram(s.ravel(), bins=edges)[0] for s in z], dtype=float)
    total = per.sum(axis=0)
    kl = _kl_from_counts(total, ref)
    B = min(n_blocks, len(per))
    se = np.nan
    if B >= 2:
        blocks = np.array([b.sum(axis=0) for b in np.array_split(per, B)])
        jack = np.array([_kl_from_counts(total - b, ref) for b in blocks])
        se = math.sqrt((B - 1) / B * np.sum((jack - jack.mean()) ** 2))
    return kl, float(se), int(z.size)


def kl_bias_floor(n_samples, rng, edges=KL_EDGES, reps=20) -> float:
    """Mean velocity_kl of exact normal samples of the same size."""
    ref = np.diff(sps.norm.cdf(edges))
    vals = []
    for _ in range(reps):
        c = np.histogram(rng.standard_normal(int(n_samples)), bins=edges)[0].astype(float)
        vals.append(_kl_from_counts(c, ref))
    return float(np.mean(vals))


def windowed_kl(times, velocities, window, theta=None, edges=KL_EDGES):
    """KL per disjoint time window: arrays (t_mid, kl, stderr, n_samples)."""
    times = np.asarray(times, dtype=float)
    v = _velocities(velocities)
    if theta is None:
        theta = np.mean([temperature(s) for s in v])
    lo = times.min()
    idx = np.floor((times - lo) / window + 1e-9).astype(int)
    out = []
    for k in np.unique(idx):
        m = idx == k
        kl, se, n = velocity_kl_estimate(v[m], theta, edges)
        out.append((lo + (k + 0.5) * window, kl, se, n))
    a = np.array(out)
    return a[:, 0], a[:, 1], a[:, 2], a[:, 3].astype(int)


def _divergence(F, G):
    m = F > 0
    if np.any(G[m] <= 0):
        raise ValueError("divergence undefined: reference is zero where F > 0")
    return float(np.sum(F[m] * np.log(F[m] / G[m])))


def _outer(ps):
    out = np.ones(())
    for p in ps:
        out = np.multiply.outer(out, p)
    return out


def kl_marginal_identity_check(F, psi, ps):
    """Both sides of the marginal KL decomposition.

    lhs = P(F, psi * prod p_i); rhs = P(F, psi * prod f_i) + sum_i P(f_i, p_i)
    with P(A, B) = sum A log(A/B) and f_i the marginals of F.
    Returns (lhs, rhs, |lhs - rhs|).
    """
    F = np.asarray(F, dtype=float)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), F.shape)
    ps = [np.asarray(p, dtype=float) for p in ps]
    if len(ps) != F.ndim or any(p.shape != (n,) for p, n in zip(ps, F.shape)):
        raise ValueError("one density per axis of F is required")
    if np.any(psi <= 0):
        raise ValueError("psi must be positive")
    if abs(F.sum() - 1) > 1e-12 or any(abs(p.sum() - 1) > 1e-12 for p in ps):
        raise ValueError("F and p_i must be normalized")
    axes = range(F.ndim)
    fs = [F.sum(axis=tuple(a for a in axes if a != i)) for i in axes]
    lhs = _divergence(F, psi * _outer(ps))
    rhs = _divergence(F, psi * _outer(fs)) + sum(_divergence(f, p) for f, p in zip(fs, ps))
    return lhs, rhs, abs(lhs - rhs)


@dataclass
class NobleGasTable:
    element: list
    mass_amu: np.ndarray
    diameter_pm: np.ndarray

    def __post_init__(self):
        self.mass_amu = np.asarray(self.mass_amu, dtype=float)
        self.diameter_pm = np.asarray(self.diameter_pm, dtype=float)
        if np.any(self.mass_amu <= 0) or np.any(self.diameter_pm <= 0):
            raise ValueError("masses and diameters must be positive")

    @classmethod
    def read(cls, path_or_file=None):
        """Read (element, mass_amu, diameter_pm) rows; '#' lines are comments."""
        if path_or_file is None:
            text = resources.files("randgas").joinpath("data/noble_gases.csv").read_text()
        else:
            with open(path_or_file) as f:
                text = f.read()
        rows = [r for r in csv.reader(line for line in text.splitlines() if line.strip() and not line.startswith("#"))]
        header, body = rows[0], rows[1:]
        col = {name.strip(): k for k, name in enumerate(header)}
        return cls(
            [r[col["element"]].strip() for r in body],
            [float(r[col["mass_amu"]]) for r in body],
            [float(r[col["diameter_pm"]]) for r in body],
        )


def noble_gas_fit(table: NobleGasTable):
    """Least-squares line diameter = slope * mass^(1/3) + intercept. Returns (slope, intercept, residuals)."""
    m = np.cbrt(table.mass_amu)
    d = table.diameter_pm
    if len(m) < 3:
        raise ValueError("need at least three rows")
    A = np.column_stack([m, np.ones_like(m)])
    coef, _, rank, _ = np.linalg.lstsq(A, d, rcond=None)
    if rank < 2:
        raise np.linalg.LinAlgError("degenerate fit: all masses equal")
    return float(coef[0]), float(coef[1]), d - A @ coef

"""Two-sphere forward equation solved along straight characteristics.

Along x(s) = x0 + s v, y(s) = y0 + s w the density obeys

    dF/ds = lam * F * d/ds H(|x(s) - y(s)| - sigma)

with H the antiderivative of the contact mollifier. The closed-form
solution is compared with a fixed-step RK4 integration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import mollifier, mollifier_cdf


@dataclass(frozen=True)
class CharacteristicProblem:
    x0: tuple
    y0: tuple
    v: tuple
    w: tuple
    lam: float = 1.0
    alpha: float = 0.1
    sigma: float = 1.0
    F0: float = 1.0
    F0_prime: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or not 0 < self.alpha < 1 or self.sigma <= 0:
            raise ValueError("need lam >= 0, 0 < alpha < 1, sigma > 0")
        if not self.F0 > 0 or self.F0_prime < 0:
            raise ValueError("need F0 > 0 and F0_prime >= 0")
        d = self.d0
        if np.linalg.norm(d) <= self.sigma * (1 + self.alpha):
            raise ValueError("initial separation must exceed sigma*(1+alpha)")
        if np.dot(d, self.dv) >= 0:
            raise ValueError("spheres must be approaching")

    @property
    def d0(self):
        return np.asarray(self.x0, dtype=float) - np.asarray(self.y0, dtype=float)

    @property
    def dv(self):
        return np.asarray(self.v, dtype=float) - np.asarray(self.w, dtype=float)

    @property
    def width(self):
        return self.alpha * self.sigma

    def separation(self, s):
        s = np.asarray(s, dtype=float)
        d = self.d0 + s[..., None] * self.dv
        return np.linalg.norm(d, axis=-1)

    def crossing(self, r):
        """First s with |d(s)| = r, or None if the line never gets that close."""
        d, dv = self.d0, self.dv
        a, b, c = dv @ dv, d @ dv, d @ d - r * r
        disc = b * b - a * c
        if disc < 0:
            return None
        return (-b - math.sqrt(disc)) / a


@dataclass
class Profile:
    s: np.ndarray
    separation: np.ndarray
    F: np.ndarray
    F_rk4: np.ndarray

    @property
    def max_rel_err(self):
        return float(np.max(np.abs(self.F_rk4 - self.F) / np.abs(self.F)))


def closed_form(prob: CharacteristicProblem, s):
    r = prob.separation(s)
    H = mollifier_cdf(r - prob.sigma, prob.width)
    H0 = mollifier_cdf(np.linalg.norm(prob.d0) - prob.sigma, prob.width)
    return prob.F0 * np.exp(prob.lam * (H - H0))


def _rate(prob, s):
    """lam * d/ds H(|d(s)| - sigma)."""
    d = prob.d0 + s * prob.dv
    r = math.sqrt(d @ d)
    return prob.lam * mollifier(r - prob.sigma, prob.width) * (d @ prob.dv) / r


def rk4(prob: CharacteristicProblem, s_grid, F_start):
    s_grid = np.asarray(s_grid, dtype=float)
    F = np.empty_like(s_grid)
    F[0] = F_start
    for k in range(len(s_grid) - 1):
        s, h, y = s_grid[k], s_grid[k + 1] - s_grid[k], F[k]
        k1 = _rate(prob, s) * y
        k2 = _rate(prob, s + h / 2) * (y + h / 2 * k1)
        k3 = _rate(prob, s + h / 2) * (y + h / 2 * k2)
        k4 = _rate(prob, s + h) * (y + h * k3)
        F[k + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return F


def inward_window(prob: CharacteristicProblem, margin=0.05):
    """Parameter range covering the first passage through the contact zone."""
    s_in = prob.crossing(prob.sigma * (1 + prob.alpha))
    s_out = prob.crossing(prob.sigma * (1 - prob.alpha))
    if s_in is None or s_out is None:
        raise ValueError("characteristic does not pass fully through the contact zone")
    s_closest = -(prob.d0 @ prob.dv) / (prob.dv @ prob.dv)
    pad = margin * (s_out - s_in)
    return max(0.0, s_in - pad), min(s_out + pad, s_closest)


def traverse_inward(prob: CharacteristicProblem, n_points=1000, margin=0.05) -> Profile:
    """Closed-form profile across the zone together with its RK4 counterpart."""
    lo, hi = inward_window(prob, margin)
    s = np.linspace(lo, hi, n_points)
    F = closed_form(prob, s)
    return Profile(s, prob.separation(s), F, rk4(prob, s, F[0]))


def traverse_full(prob: CharacteristicProblem) -> float:
    """Value after complete traversal in the thin-zone limit.

    Survival e^-lam keeps the incoming value, the rest comes from the
    deflected characteristic.
    """
    p = math.exp(-prob.lam)
    return p * prob.F0 + (1.0 - p) * prob.F0_prime


def traverse_full_rk4(prob: CharacteristicProblem, n_points=1000) -> float:
    """traverse_full with the survival factor taken from the RK4 inward solve."""
    prof = traverse_inward(prob, n_points)
    survive = prof.F_rk4[-1] / prob.F0
    return survive * prob.F0 + (1.0 - survive) * prob.F0_prime

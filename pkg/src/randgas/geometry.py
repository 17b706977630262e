"""Collision kinematics, the contact mollifier and periodic-box geometry.

Vectors are plain numpy arrays whose last axis has length 3, so every
function here broadcasts over leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

UNIT_TOL = 1e-12

# Gauss-Legendre rule for the mollifier antiderivative. The bump is flat to
# all orders at +-1, so 64 nodes on [0, |z|] reach ~1e-14.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class Box3:
    """Periodic rectangular box."""

    side_lengths: tuple
    periodic: bool = True

    def __post_init__(self):
        sides = np.asarray(self.side_lengths, dtype=float).reshape(-1)
        if sides.shape != (3,):
            raise ValueError("box needs exactly three side lengths")
        if not np.all(np.isfinite(sides)) or np.any(sides <= 0):
            raise ValueError(f"box sides must be positive and finite, got {sides}")
        if not self.periodic:
            raise ValueError("only periodic boxes are supported")
        object.__setattr__(self, "side_lengths", tuple(float(s) for s in sides))

    @classmethod
    def cube(cls, side):
        return cls((side, side, side))

    @property
    def sides(self):
        return np.array(self.side_lengths)

    @property
    def volume(self):
        a, b, c = self.side_lengths
        return a * b * c

    def wrap(self, x):
        """Map positions into [0, L) per axis."""
        L = self.sides
        return x - L * np.floor(x / L)


@dataclass(frozen=True)
class ContactParams:
    """Sphere diameter, contact half-width fraction, intensity scale, sphere density."""

    sigma: float = 1.0
    alpha: float = 0.1
    lam: float = 1.0
    rho_sp: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 0.5]")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.rho_sp > 0:
            raise ValueError("rho_sp must be positive")

    @property
    def width(self):
        """Mollifier half-width alpha*sigma."""
        return self.alpha * self.sigma

    @property
    def r_outer(self):
        return self.sigma * (1.0 + self.alpha)

    @property
    def r_inner(self):
        return self.sigma * (1.0 - self.alpha)

    def check_box(self, box: Box3):
        if self.r_outer >= min(box.side_lengths) / 2:
            raise ValueError("sigma*(1+alpha) must be below half the smallest box side")
        if min(box.side_lengths) <= 2 * self.sigma:
            raise ValueError("every box side must exceed 2*sigma")


def _check_unit(n):
    nn = np.sqrt(np.sum(n * n, axis=-1))
    if np.any(np.abs(nn - 1.0) > UNIT_TOL):
        raise ValueError("collision normal must be a unit vector")


def collide(v, w, n):
    """Velocities after a jump with unit normal n.

    v' = v + ((w - v).n) n and w' = w - ((w - v).n) n, so the pair momentum is
    untouched and the normal component of the relative velocity flips sign.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    n = np.asarray(n, dtype=float)
    _check_unit(n)
    k = np.sum((w - v) * n, axis=-1)[..., None] * n
    return v + k, w - k


def min_image(x, y, box: Box3):
    """Displacement x - y wrapped into (-L/2, L/2] per axis (ties go to +L/2)."""
    L = box.sides
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return d - L * np.ceil(d / L - 0.5)


def collide_coords(x, y, v, w, box: Box3 | None = None):
    """collide() with the normal taken along the (minimum-image) line of centres."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = min_image(x, y, box) if box is not None else x - y
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0):
        raise ValueError("coincident centres give no collision normal")
    n = d / r[..., None]
    # renormalize once more so that |n| passes the unit check to 1e-12
    n = n / np.sqrt(np.sum(n * n, axis=-1))[..., None]
    return collide(v, w, n)


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


@lru_cache(maxsize=1)
def mollifier_constant():
    """c such that c*exp(-1/(1-x^2)) integrates to one over (-1, 1)."""
    f = lambda t: math.exp(-1.0 / (1.0 - t * t)) if abs(t) < 1 else 0.0
    half, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / (2.0 * half)


def mollifier(x, a):
    """Bump (1/a) phi(x/a), supported on |x| < a, unit mass."""
    if not a > 0:
        raise ValueError("mollifier width must be positive")
    val = mollifier_constant() * _bump(np.asarray(x, dtype=float) / a) / a
    return val if np.ndim(val) else float(val)


def mollifier_peak(a):
    """mollifier(0, a) = c/(a e)."""
    return mollifier_constant() * math.exp(-1.0) / a


def mollifier_cdf(x, a):
    """Antiderivative of mollifier(., a) with value 0 at -a and 1 at a."""
    if not a > 0:
        raise ValueError("mollifier width must be positive")
    z = np.clip(np.asarray(x, dtype=float) / a, -1.0, 1.0)
    az = np.abs(z)
    c = mollifier_constant()
    # inner half: 1/2 + int_0^|z|; outer half: 1 - int_|z|^1, which keeps the tails monotone
    inner = az <= 0.5
    lo = np.where(inner, 0.0, az)
    hi = np.where(inner, az, 1.0)
    t = lo[..., None] + 0.5 * (_GL_X + 1.0) * (hi - lo)[..., None]
    part = c * 0.5 * (hi - lo) * np.sum(_GL_W * _bump(t), axis=-1)
    upper = np.where(inner, 0.5 + part, 1.0 - part)
    out = np.where(z >= 0, upper, 1.0 - upper)
    out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(out) else float(out)


def random_unit_vectors(rng, size):
    n = rng.standard_normal((size, 3))
    return n / np.linalg.norm(n, axis=1)[:, None]

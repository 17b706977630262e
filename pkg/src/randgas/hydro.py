"""Planar (x-dependent) Enskog-Euler and Enskog-Navier-Stokes finite-volume solver.

Conserved variables per cell: rho, rho*u, rho*w, rho*eps with
eps = (u^2 + w^2)/2 + 3 theta/2. u is the x velocity; w is a transverse
velocity that stays uniform unless initialised otherwise (it carries the
shear-wave test). The pressure is p = rho theta (1 + b rho) with
b = 4 (1 + sigma R*) / rho_sp.

1-D reduction of the viscous stress
    tau = mu [(1 + a1)(grad u + grad u^T) - 2/3 (1 + a2)(div u) I]
for fields depending on x only, velocity (u, w, 0):
    tau_xx = mu u_x [2 (1 + a1) - 2/3 (1 + a2)]
    tau_xy = mu (1 + a1) w_x
and the heat flux is -(15/4) mu (1 + a3) theta_x. The momentum fluxes gain
-tau_xx and -tau_xy, the energy flux gains -(tau_xx u + tau_xy w) plus the
heat flux.

Sound speed: along isentropes 3/2 d theta = (p/rho^2) d rho, giving
    c^2 = theta [5/3 + 10/3 y + 2/3 y^2],  y = b rho,
which is 5/3 theta in the dilute limit. The matching entropy per unit mass is
s = log(theta^{3/2} / rho) - b rho.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GAMMA = 5.0 / 3.0
MU_CONST = 5.0 * math.sqrt(math.pi) / 96.0


class PositivityError(RuntimeError):
    def __init__(self, cells, time):
        self.cells = np.asarray(cells)
        self.time = time
        shown = ", ".join(str(c) for c in self.cells[:10])
        super().__init__(f"nonpositive density or temperature at t={time:.6g} in cells [{shown}]")


class StabilityError(RuntimeError):
    pass


@dataclass
class TransportCoeffs:
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    mu: np.ndarray
    pressure_factor: np.ndarray


def coeffs(rho, theta, rho_sp, sigma, dense=True, R_star=0.0) -> TransportCoeffs:
    """Dense-gas prefactors at x = rho / rho_sp.

    dense=False keeps mu but sets a_i = 0 and the pressure factor to 1,
    which is the classical (dilute) model.
    """
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    mu = MU_CONST * rho_sp * sigma * np.sqrt(theta) if np.isfinite(rho_sp) else np.full_like(theta, np.inf)
    if dense:
        x = rho / rho_sp
        a1 = 16 * x / 5 * (1 + 4 * x / 5 * (1 + 12 / math.pi))
        a2 = 16 * x / 5 * (1 + 4 * x / 5 * (1 - 18 / math.pi))
        a3 = 24 * x / 5 * (1 + 2 * x / 15 * (9 + 32 / math.pi))
        pf = 1 + 4 * x * (1 + sigma * R_star)
    else:
        a1 = a2 = a3 = np.zeros_like(rho)
        pf = np.ones_like(rho)
    return TransportCoeffs(a1, a2, a3, mu, pf)


@dataclass
class HydroState1D:
    n_cells: int
    dx: float
    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    rho_sp: float = 1.0
    sigma: float = 0.0
    time: float = 0.0
    w: np.ndarray | None = None
    bc: str = "periodic"
    dense: bool = True
    R_star: float = 0.0
    x0: float = 0.0
    frame_velocity: float = 0.0

    def __post_init__(self):
        n = int(self.n_cells)
        self.n_cells = n
        self.rho = np.array(self.rho, dtype=float).reshape(-1)
        self.u = np.array(self.u, dtype=float).reshape(-1)
        self.theta = np.array(self.theta, dtype=float).reshape(-1)
        self.w = np.zeros(n) if self.w is None else np.array(self.w, dtype=float).reshape(-1)
        for name in ("rho", "u", "theta", "w"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have n_cells entries")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if self.bc not in ("periodic", "transmissive"):
            raise ValueError("bc must be 'periodic' or 'transmissive'")
        if not self.rho_sp > 0 or self.sigma < 0:
            raise ValueError("need rho_sp > 0 and sigma >= 0")
        bad = np.flatnonzero(~((self.rho > 0) & (self.theta > 0)))
        if bad.size:
            raise PositivityError(bad, self.time)

    @property
    def x(self):
        return self.x0 + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def b(self):
        """Excluded-volume coefficient in p = rho theta (1 + b rho)."""
        return 4.0 * (1.0 + self.sigma * self.R_star) / self.rho_sp if self.dense else 0.0

    @property
    def pressure(self):
        return self.rho * self.theta * (1.0 + self.b * self.rho)

    @property
    def energy(self):
        return 0.5 * (self.u**2 + self.w**2) + 1.5 * self.theta

    def sound_speed(self):
        return _sound_speed(self.rho, self.theta, self.b)

    def totals(self):
        """Mass, x momentum, transverse momentum and energy integrated over the grid."""
        U = to_conserved(self)
        return U.sum(axis=1) * self.dx

    def entropy(self):
        """Grid total of rho s."""
        s = np.log(self.theta**1.5 / self.rho) - self.b * self.rho
        return float(np.sum(self.rho * s) * self.dx)

    def coeffs(self):
        return coeffs(self.rho, self.theta, self.rho_sp, self.sigma, self.dense, self.R_star)

    def copy(self, **kw):
        base = dict(rho=self.rho.copy(), u=self.u.copy(), theta=self.theta.copy(), w=self.w.copy())
        base.update(kw)
        return replace(self, **base)


def _sound_speed(rho, theta, b):
    y = b * rho
    return np.sqrt(theta * (5.0 / 3.0 + y * (10.0 / 3.0 + 2.0 / 3.0 * y)))


def to_conserved(s: HydroState1D):
    rho = s.rho
    return np.array([rho, rho * s.u, rho * s.w, rho * (0.5 * (s.u**2 + s.w**2) + 1.5 * s.theta)])


def to_primitive(U):
    rho = U[0]
    u = U[1] / rho
    w = U[2] / rho
    theta = (U[3] / rho - 0.5 * (u * u + w * w)) / 1.5
    return rho, u, w, theta


def _pad(a, ng, bc):
    if bc == "periodic":
        return np.concatenate([a[..., -ng:], a, a[..., :ng]], axis=-1)
    left = np.repeat(a[..., :1], ng, axis=-1)
    right = np.repeat(a[..., -1:], ng, axis=-1)
    return np.concatenate([left, a, right], axis=-1)


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _euler_flux(rho, u, w, theta, b, uf):
    """Physical flux through a face moving at uf."""
    p = rho * theta * (1.0 + b * rho)
    ur = u - uf
    E = rho * (0.5 * (u * u + w * w) + 1.5 * theta)
    return np.array([rho * ur, rho * u * ur + p, rho * w * ur, E * ur + p * u]), np.array([rho, rho * u, rho * w, E])


def euler_flux(rho, u, theta, b=0.0, w=None):
    """Physical Euler flux (mass, x momentum, transverse momentum, energy)."""
    rho, u, theta = (np.asarray(a, dtype=float) for a in (rho, u, theta))
    w = np.zeros_like(rho) if w is None else np.asarray(w, dtype=float)
    return _euler_flux(rho, u, w, theta, b, 0.0)[0]


def _face_fluxes(s: HydroState1D, prim, limiter):
    """Rusanov fluxes at the n+1 faces (n faces for periodic wrap, duplicated at the end)."""
    ng = 2
    P = _pad(np.array(prim), ng, s.bc)  # (4, n + 4)
    if limiter == "minmod":
        d = np.diff(P, axis=1)
        slope = np.zeros_like(P)
        slope[:, 1:-1] = _minmod(d[:, :-1], d[:, 1:])
    elif limiter is None:
        slope = np.zeros_like(P)
    else:
        raise ValueError(f"unknown limiter {limiter!r}")
    # faces between padded cells k and k+1 for k = ng-1 .. ng+n-1
    L = P[:, ng - 1:-ng] + 0.5 * slope[:, ng - 1:-ng]
    R = P[:, ng:-ng + 1] - 0.5 * slope[:, ng:-ng + 1]
    b, uf = s.b, s.frame_velocity
    if np.any(L[0] <= 0) or np.any(L[3] <= 0) or np.any(R[0] <= 0) or np.any(R[3] <= 0):
        L = P[:, ng - 1:-ng]
        R = P[:, ng:-ng + 1]
    FL, UL = _euler_flux(L[0], L[1], L[2], L[3], b, uf)
    FR, UR = _euler_flux(R[0], R[1], R[2], R[3], b, uf)
    a = np.maximum(np.abs(L[1] - uf) + _sound_speed(L[0], L[3], b), np.abs(R[1] - uf) + _sound_speed(R[0], R[3], b))
    return 0.5 * (FL + FR) - 0.5 * a * (UR - UL)


def _viscous_fluxes(s: HydroState1D, prim):
    """Central viscous and heat fluxes at the n+1 faces."""
    rho, u, w, th = (_pad(a, 1, s.bc) for a in prim)
    rf = 0.5 * (rho[1:] + rho[:-1])
    tf = 0.5 * (th[1:] + th[:-1])
    uf = 0.5 * (u[1:] + u[:-1])
    wf = 0.5 * (w[1:] + w[:-1])
    ux = np.diff(u) / s.dx
    wx = np.diff(w) / s.dx
    tx = np.diff(th) / s.dx
    c = coeffs(rf, tf, s.rho_sp, s.sigma, s.dense, s.R_star)
    txx = c.mu * ux * (2.0 * (1.0 + c.a1) - 2.0 / 3.0 * (1.0 + c.a2))
    txy = c.mu * (1.0 + c.a1) * wx
    heat = -15.0 / 4.0 * c.mu * (1.0 + c.a3) * tx
    zero = np.zeros_like(txx)
    return np.array([zero, -txx, -txy, -(txx * uf + txy * wf) + heat])


def _rhs(s: HydroState1D, U, viscous, limiter):
    prim = to_primitive(U)
    F = _face_fluxes(s, prim, limiter)
    if viscous and s.sigma > 0:
        F = F + _viscous_fluxes(s, prim)
    return -(F[:, 1:] - F[:, :-1]) / s.dx


def euler_rhs(state: HydroState1D, limiter=None):
    """Tendencies d U/dt of the conserved variables for the inviscid system."""
    return _rhs(state, to_conserved(state), False, limiter)


def ns_rhs(state: HydroState1D, limiter=None):
    """Tendencies including viscous stress and heat conduction."""
    return _rhs(state, to_conserved(state), True, limiter)


def diffusivity_max(s: HydroState1D):
    """Largest diffusion coefficient over the grid (momentum and heat)."""
    if s.sigma == 0:
        return 0.0
    c = s.coeffs()
    nu = np.maximum.reduce([
        c.mu * (2.0 * (1.0 + c.a1) - 2.0 / 3.0 * (1.0 + c.a2)),
        c.mu * (1.0 + c.a1),
        15.0 / 4.0 * c.mu * (1.0 + c.a3) / 1.5,
    ]) / s.rho
    return float(nu.max())


def stable_dt(s: HydroState1D, cfl=0.5, viscous=True):
    speed = float(np.max(np.abs(s.u - s.frame_velocity) + s.sound_speed()))
    dt = s.dx / speed if speed > 0 else np.inf
    if viscous:
        nu = diffusivity_max(s)
        if nu > 0:
            dt = min(dt, s.dx**2 / (2.0 * nu))
    return cfl * dt


def _from_conserved(s, U, t):
    rho, u, w, th = to_primitive(U)
    bad = np.flatnonzero(~((rho > 0) & (th > 0) & np.isfinite(th)))
    if bad.size:
        raise PositivityError(bad, t)
    return s.copy(rho=rho, u=u, w=w, theta=th, time=t)


def advance(state: HydroState1D, t_end, cfl=0.5, model="euler", limiter=None, dt=None,
            max_steps=10_000_000, callback=None) -> HydroState1D:
    """SSP-RK2 (Heun) steps until time t_end.

    model is "euler" or "ns". With a fixed dt the step must respect the
    advective and diffusive limits, otherwise StabilityError is raised.
    callback(state) runs after every step.
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    if model not in ("euler", "ns"):
        raise ValueError("model must be 'euler' or 'ns'")
    viscous = model == "ns"
    s = state.copy()
    if t_end <= s.time:
        return s
    U = to_conserved(s)
    steps = 0
    while s.time < t_end:
        if steps >= max_steps:
            raise StabilityError("step limit reached")
        limit = stable_dt(s, 1.0, viscous)
        if dt is None:
            h = cfl * limit
        else:
            if dt > limit * (1 + 1e-12):
                raise StabilityError(f"dt={dt:g} exceeds the stability limit {limit:g}")
            h = dt
        h = min(h, t_end - s.time)
        U1 = U + h * _rhs(s, U, viscous, limiter)
        _from_conserved(s, U1, s.time + h)
        U = 0.5 * U + 0.5 * (U1 + h * _rhs(s, U1, viscous, limiter))
        t = t_end if t_end - (s.time + h) <= 1e-14 * max(1.0, t_end) else s.time + h
        s = _from_conserved(s, U, t)
        steps += 1
        if callback is not None:
            callback(s)
    return s


# ------------------------------------------------------------------ exact Riemann

@dataclass(frozen=True)
class RiemannState:
    rho: float
    u: float
    theta: float

    @property
    def p(self):
        return self.rho * self.theta


@dataclass
class RiemannSolution:
    p_star: float
    u_star: float
    residual: float
    left: RiemannState
    right: RiemannState
    gamma: float = GAMMA

    def sample(self, xi):
        """(rho, u, theta) at similarity coordinate xi = (x - x0) / t."""
        xi = np.asarray(xi, dtype=float)
        g = self.gamma
        out = np.empty((3,) + xi.shape)
        for k, z in np.ndenumerate(xi):
            out[(slice(None),) + k] = self._at(z, g)
        rho, u, p = out
        return rho, u, p / rho

    def _at(self, xi, g):
        L, R, ps, us = self.left, self.right, self.p_star, self.u_star
        if xi <= us:
            rho, u, p, sgn = L.rho, L.u, L.p, -1.0
        else:
            rho, u, p, sgn = R.rho, R.u, R.p, 1.0
        c = math.sqrt(g * p / rho)
        if ps > p:  # shock
            rs = rho * (ps / p + (g - 1) / (g + 1)) / ((g - 1) / (g + 1) * ps / p + 1)
            S = u + sgn * c * math.sqrt((g + 1) / (2 * g) * ps / p + (g - 1) / (2 * g))
            if sgn * (xi - S) >= 0:
                return rho, u, p
            return rs, us, ps
        rs = rho * (ps / p) ** (1 / g)
        cs = c * (ps / p) ** ((g - 1) / (2 * g))
        head = u + sgn * c
        tail = us + sgn * cs
        if sgn * (xi - head) >= 0:
            return rho, u, p
        if sgn * (xi - tail) <= 0:
            return rs, us, ps
        # inside the fan
        uu = 2 / (g + 1) * (-sgn * c + (g - 1) / 2 * u + xi)
        cc = 2 / (g + 1) * (c - sgn * (g - 1) / 2 * (u - xi))
        rr = rho * (cc / c) ** (2 / (g - 1))
        return rr, uu, p * (cc / c) ** (2 * g / (g - 1))


def _pressure_function(p, s: RiemannState, g):
    A = 2 / ((g + 1) * s.rho)
    B = (g - 1) / (g + 1) * s.p
    c = math.sqrt(g * s.p / s.rho)
    if p > s.p:
        return (p - s.p) * math.sqrt(A / (p + B))
    return 2 * c / (g - 1) * ((p / s.p) ** ((g - 1) / (2 * g)) - 1)


def riemann_solve(left: RiemannState, right: RiemannState, gamma=GAMMA) -> RiemannSolution:
    """Star-region pressure and velocity by bisection on the pressure function."""
    g = gamma
    cl = math.sqrt(g * left.p / left.rho)
    cr = math.sqrt(g * right.p / right.rho)
    du = right.u - left.u
    if 2 * (cl + cr) / (g - 1) <= du:
        raise ValueError("initial states generate vacuum; not supported")

    def f(p):
        return _pressure_function(p, left, g) + _pressure_function(p, right, g) + du

    lo, hi = 0.0, max(left.p, right.p)
    while f(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    ps = 0.5 * (lo + hi)
    us = 0.5 * (left.u + right.u) + 0.5 * (_pressure_function(ps, right, g) - _pressure_function(ps, left, g))
    return RiemannSolution(ps, us, abs(f(ps)), left, right, g)


def riemann_exact_dilute(left, right, t, x, x_interface=0.5, gamma=GAMMA):
    """Exact classical Euler Riemann profile (rho, u, theta) at points x and time t."""
    left = left if isinstance(left, RiemannState) else RiemannState(*left)
    right = right if isinstance(right, RiemannState) else RiemannState(*right)
    x = np.asarray(x, dtype=float)
    if left == right:
        return np.full(x.shape, left.rho), np.full(x.shape, left.u), np.full(x.shape, left.theta)
    sol = riemann_solve(left, right, gamma)
    if t <= 0:
        side = x < x_interface
        return (np.where(side, left.rho, right.rho), np.where(side, left.u, right.u),
                np.where(side, left.theta, right.theta))
    return sol.sample((x - x_interface) / t)


def l1_error(state: HydroState1D, rho_ref):
    return float(np.sum(np.abs(state.rho - rho_ref)) * state.dx)


# ---------------------------------------------------------------------- presets

SOD_LEFT = RiemannState(1.0, 0.0, 1.0)
SOD_RIGHT = RiemannState(0.125, 0.0, 0.8)


def preset(name, n_cells=None, **kw) -> HydroState1D:
    """Initial states: uniform, sod-dilute, sod-dense, acoustic-pulse, shear-wave."""
    if name == "uniform":
        n = n_cells or 100
        return HydroState1D(n, 1.0 / n, np.ones(n), np.zeros(n), np.ones(n), **kw)
    if name in ("sod-dilute", "sod-dense"):
        n = n_cells or 800
        x = (np.arange(n) + 0.5) / n
        left = x < 0.5
        opts = dict(bc="transmissive", sigma=0.0)
        if name == "sod-dilute":
            opts.update(rho_sp=1e9, dense=False)
        else:
            opts.update(rho_sp=10.0, dense=True)  # x = 0.1 on the left
        opts.update(kw)
        return HydroState1D(
            n, 1.0 / n,
            np.where(left, SOD_LEFT.rho, SOD_RIGHT.rho),
            np.zeros(n),
            np.where(left, SOD_LEFT.theta, SOD_RIGHT.theta),
            **opts,
        )
    if name == "acoustic-pulse":
        n = n_cells or 400
        opts = dict(bc="periodic", rho_sp=10.0, sigma=0.0, dense=True)
        amp = kw.pop("amplitude", 1e-4)
        width = kw.pop("width", 0.05)
        opts.update(kw)
        x = (np.arange(n) + 0.5) / n
        bump = amp * np.exp(-(((x - 0.5) / width) ** 2))
        s0 = HydroState1D(n, 1.0 / n, np.ones(n), np.zeros(n), np.ones(n), **opts)
        b = s0.b
        c0 = float(_sound_speed(1.0, 1.0, b))
        rho = 1.0 + bump
        # isentropic: d theta / theta = 2/3 (1/rho + b) d rho; right-moving: du = c d rho / rho
        theta = 1.0 + 2.0 / 3.0 * (1.0 + b) * bump
        u = c0 * bump
        return s0.copy(rho=rho, u=u, theta=theta)
    if name == "shear-wave":
        n = n_cells or 128
        opts = dict(bc="periodic", rho_sp=10.0, sigma=0.01, dense=True)
        amp = kw.pop("amplitude", 1e-3)
        opts.update(kw)
        x = (np.arange(n) + 0.5) / n
        return HydroState1D(n, 1.0 / n, np.ones(n), np.zeros(n), np.ones(n), w=amp * np.sin(2 * np.pi * x), **opts)
    raise ValueError(f"unknown preset {name!r}")


def pulse_position(state: HydroState1D):
    """Location of the density maximum, refined by a parabola through three cells."""
    r = state.rho
    k = int(np.argmax(r))
    lo, mid, hi = r[k - 1], r[k], r[(k + 1) % state.n_cells]
    den = lo - 2 * mid + hi
    off = 0.5 * (lo - hi) / den if den != 0 else 0.0
    return float(state.x0 + (k + 0.5 + off) * state.dx)


def shear_amplitude(state: HydroState1D):
    """Projection of w on the fundamental sine mode of the grid."""
    L = state.n_cells * state.dx
    k = 2 * np.pi / L
    return float(2.0 / state.n_cells * np.sum(state.w * np.sin(k * (state.x - state.x0))))

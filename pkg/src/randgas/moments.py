"""Monte-Carlo checks of the collision-moment integrals behind the hydrodynamics.

Every integral has the form

    int F(v, w, n) Theta(n.(w - v)) dn dw dv

with f0 (and its x-derivatives, and the Grad correction f1) evaluated at one
hydrodynamic point. Velocities are sampled from f0/rho, so the densities
contribute rho^2 analytically, and derivatives of f0 enter through the
log-derivatives of the Gaussian.

Variance reduction (all unbiased):
  * n is drawn uniformly on the hemisphere n.(w - v) > 0 instead of on the
    sphere with the Heaviside gate, which halves the measure and removes the
    gate discontinuity;
  * each block uses a scrambled Sobol sequence in the 8 underlying uniforms;
  * centred velocities are drawn from normal(0, IS_SCALE * theta) and
    reweighted to f0; the integrands grow polynomially in |c|, so the wider
    proposal lowers the variance, and the weight is bounded by IS_SCALE^3;
  * each draw is evaluated at four images (c_v, c_w, n), (-c_v, -c_w, -n),
    (c_w, c_v, -n), (-c_w, -c_v, n) of the centred velocities. All four keep
    the hemisphere condition, the sampling density and the weight.
n_samples counts random draws (one symmetrised estimate each). The standard
error comes from the spread of independent block estimates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

SQRT_PI = math.sqrt(math.pi)
IDENTITIES = ("MI-1", "MI-2", "MI-3", "MI-4", "MI-5", "MI-6", "MI-7", "MI-8")
# integrand keys behind each identity; MI-7 and MI-8 have two parts each
PARTS = {
    "MI-1": ("1",),
    "MI-2": ("2",),
    "MI-3": ("3",),
    "MI-4": ("4",),
    "MI-5": ("5",),
    "MI-6": ("6",),
    "MI-7": ("7a", "7b"),
    "MI-8": ("8a", "8b"),
}
FLOOR = 1e-8
MAX_BLOCK = 1 << 16
IMAGES = 4
IS_SCALE = 1.8


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass
class HydroPoint:
    """Local state (rho, u, theta), its first and second derivatives, and the Grad moments.

    Index conventions: grad_u[i, k] = d u_i / d x_k, hess_u[i, k, l] =
    d^2 u_i / dx_k dx_l, grad_S[i, j, k] = d S_ij / d x_k, grad_q[i, k] =
    d q_i / d x_k.
    """

    rho: float
    u: np.ndarray
    theta: float
    grad_rho: np.ndarray = field(default_factory=lambda: np.zeros(3))
    grad_u: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    grad_theta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    S: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    q: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hess_rho: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    hess_u: np.ndarray = field(default_factory=lambda: np.zeros((3, 3, 3)))
    hess_theta: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    grad_S: np.ndarray = field(default_factory=lambda: np.zeros((3, 3, 3)))
    grad_q: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    rho_sp: float = 1.0

    def __post_init__(self):
        shapes = {
            "u": (3,), "grad_rho": (3,), "grad_u": (3, 3), "grad_theta": (3,), "S": (3, 3),
            "q": (3,), "hess_rho": (3, 3), "hess_u": (3, 3, 3), "hess_theta": (3, 3),
            "grad_S": (3, 3, 3), "grad_q": (3, 3),
        }
        for name, shape in shapes.items():
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
            setattr(self, name, a)
        self.rho = float(self.rho)
        self.theta = float(self.theta)
        self.rho_sp = float(self.rho_sp)
        if not (self.rho > 0 and self.theta > 0 and self.rho_sp > 0):
            raise ValueError("rho, theta and rho_sp must be positive")
        if abs(np.trace(self.S)) > 1e-12 * max(1.0, np.abs(self.S).max()):
            raise ValueError("S must be traceless")
        if not np.allclose(self.S, self.S.T, rtol=0, atol=1e-12):
            raise ValueError("S must be symmetric")

    @property
    def x(self):
        return self.rho / self.rho_sp

    def to_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: np.asarray(v, dtype=float) if isinstance(v, list) else v for k, v in d.items()})


def random_point(rng, rho_sp=1.0, scale=0.5) -> HydroPoint:
    """Random point with O(1) state, consistent symmetries and traceless S, grad_S."""
    rho = rng.uniform(0.5, 2.0)
    theta = rng.uniform(0.5, 2.0)
    u = rng.normal(size=3) * scale
    grad_rho = rng.normal(size=3) * scale
    grad_u = rng.normal(size=(3, 3)) * scale
    grad_theta = rng.normal(size=3) * scale
    hess_rho = _sym(rng.normal(size=(3, 3))) * scale
    hess_theta = _sym(rng.normal(size=(3, 3))) * scale
    Hu = rng.normal(size=(3, 3, 3)) * scale
    S = _sym(rng.normal(size=(3, 3))) * scale
    S -= np.trace(S) / 3 * np.eye(3)
    q = rng.normal(size=3) * scale
    gS = rng.normal(size=(3, 3, 3)) * scale
    gS = 0.5 * (gS + gS.transpose(1, 0, 2))
    gS -= np.einsum("iik->k", gS)[None, None, :] / 3 * np.eye(3)[:, :, None]
    grad_q = rng.normal(size=(3, 3)) * scale
    return HydroPoint(
        rho=rho, u=u, theta=theta, grad_rho=grad_rho, grad_u=grad_u, grad_theta=grad_theta,
        S=S, q=q, hess_rho=hess_rho, hess_u=0.5 * (Hu + Hu.transpose(0, 2, 1)),
        hess_theta=hess_theta, grad_S=gS, grad_q=grad_q, rho_sp=rho_sp,
    )


# ---------------------------------------------------------------- closed forms

def closed_forms(p: HydroPoint):
    """Right-hand sides of all identities, keyed like PARTS."""
    rho, th, u, gr, G, gt = p.rho, p.theta, p.u, p.grad_rho, p.grad_u, p.grad_theta
    S, q, gS, gq, Hu, Ht = p.S, p.q, p.grad_S, p.grad_q, p.hess_u, p.hess_theta
    st = math.sqrt(th)
    divu = np.trace(G)
    g_r2t = 2 * rho * th * gr + rho**2 * gt  # grad(rho^2 theta)
    A = G + G.T + divu * np.eye(3)
    divA = np.einsum("ijj->i", Hu) + 2 * np.einsum("jji->i", Hu)
    g_r2st = 2 * rho * gr * st + rho**2 * gt / (2 * st)  # grad(rho^2 sqrt(theta))
    out = {
        "1": -4 / p.rho_sp * g_r2t,
        "2": np.array([-8 / p.rho_sp * (g_r2t @ u + rho**2 * th * divu)]),
        "3": -16 * SQRT_PI / 5 * rho**2 * st * S,
        "4": 4 * math.pi / 15 * rho**2 * th * A,
        "5": -64 * SQRT_PI / 15 * rho**2 * st * q,
        "6": 10 * math.pi / 3 * th * g_r2t + 2 * math.pi * rho**2 * th * gt,
    }
    divS = np.einsum("ijj->i", gS)
    out["7a"] = 4 * math.pi / 15 * (2 * rho * S @ gr + rho**2 * divS)
    out["7b"] = 8 * SQRT_PI / 15 * (A @ g_r2st + rho**2 * st * divA)
    Sv = S @ u + 1.5 * q
    divSv = np.einsum("jkj,k->", gS, u) + np.einsum("jk,kj->", S, G) + 1.5 * np.trace(gq)
    out["8a"] = np.array([8 * math.pi / 15 * (2 * rho * gr @ Sv + rho**2 * divSv)])
    B = A @ u + 2.5 * gt
    divB = divA @ u + np.einsum("jk,kj->", A, G) + 2.5 * np.trace(Ht)
    out["8b"] = np.array([16 * SQRT_PI / 15 * (g_r2st @ B + rho**2 * st * divB)])
    return out


# ------------------------------------------------------------------ integrands

def sample_f0(point: HydroPoint, rng, size=None):
    """Velocities from normal(u, theta I)."""
    shape = (3,) if size is None else (int(size), 3)
    return point.u + math.sqrt(point.theta) * rng.standard_normal(shape)


def _hermite(p, c):
    """Bracket of the Grad correction at centred velocity c, without 1/theta^2."""
    cq = c @ p.q
    c2 = np.sum(c * c, axis=-1)
    return -cq + 0.5 * np.einsum("...i,ij,...j->...", c, p.S, c) + c2 * cq / (5 * p.theta)


def f1_weight(v, point: HydroPoint):
    """f1/f0 at velocity v: Grad's Hermite factor."""
    c = np.asarray(v, dtype=float) - point.u
    w = _hermite(point, c) / point.theta**2
    return w if np.ndim(w) else float(w)


def _dlog_f0(p, c):
    """x-gradient of log f0 at fixed velocity, with c = v - u."""
    th = p.theta
    c2 = np.sum(c * c, axis=-1)
    return p.grad_rho / p.rho - 1.5 * p.grad_theta / th + (c @ p.grad_u) / th + c2[:, None] * p.grad_theta / (2 * th**2)


def _d2log_f0(p, c):
    rho, th, gr, G, gt = p.rho, p.theta, p.grad_rho, p.grad_u, p.grad_theta
    c2 = np.sum(c * c, axis=-1)
    cG = c @ G
    base = (p.hess_rho / rho - np.outer(gr, gr) / rho**2
            - 1.5 * (p.hess_theta / th - np.outer(gt, gt) / th**2) - G.T @ G / th)
    out = base[None] + np.einsum("ni,ikl->nkl", c, p.hess_u) / th
    out -= (cG[:, :, None] * gt[None, None, :] + gt[None, :, None] * cG[:, None, :]) / th**2
    out += c2[:, None, None] * (p.hess_theta / (2 * th**2) - np.outer(gt, gt) / th**3)[None]
    return out


def _grad_f1_weight(p, c):
    """x-gradient of f1/f0 at fixed velocity (u, theta, S, q all vary with x)."""
    th, S, q, G, gt = p.theta, p.S, p.q, p.grad_u, p.grad_theta
    cq = c @ q
    c2 = np.sum(c * c, axis=-1)
    A = -cq + 0.5 * np.einsum("ni,ij,nj->n", c, S, c) + c2 * cq / (5 * th)
    dA_dc = -q[None] + c @ S + (2 * c * cq[:, None] + c2[:, None] * q[None]) / (5 * th)
    dA_dth = -c2 * cq / (5 * th**2)
    dA_dq = -c + c2[:, None] * c / (5 * th)
    Ak = (-(dA_dc @ G) + dA_dth[:, None] * gt[None]
          + 0.5 * np.einsum("ni,ijk,nj->nk", c, p.grad_S, c) + dA_dq @ p.grad_q)
    return Ak / th**2 - 2 * A[:, None] * gt[None] / th**3


def _stress_kernel(nr, n, cv):
    """(n.r) n n^T + n c_v^T + c_v n^T, flattened to 9 components."""
    M = nr[:, None, None] * n[:, :, None] * n[:, None, :] + n[:, :, None] * cv[:, None, :] + cv[:, :, None] * n[:, None, :]
    return M.reshape(-1, 9)


def _flux_kernel(nr, n, cv):
    """Bracket of the heat-flux identities, 3 components (without the (n.r)^2 weight)."""
    nr2 = nr * nr
    cv2 = np.sum(cv * cv, axis=1)
    ncv = np.sum(n * cv, axis=1)
    return ((nr2 * nr2)[:, None] * n + (nr2 * nr)[:, None] * (cv + 2 * n * ncv[:, None])
            + nr2[:, None] * (cv2[:, None] * n + 2 * cv * ncv[:, None]))


def integrands(p: HydroPoint, cv, cw, n, keys):
    """Pointwise integrand values (divided by f0(v) f0(w) / rho^2) for the given keys."""
    rho, u, rsp = p.rho, p.u, p.rho_sp
    r = cw - cv
    nr = np.sum(n * r, axis=1)
    gate = nr > 0
    nr2 = nr * nr
    base = 4 * math.pi * rho**2 * gate
    keys = set(keys)
    out = {}
    need_df = keys & {"1", "2", "4", "6", "7a", "8a", "7b", "8b"}
    if need_df:
        Lw = _dlog_f0(p, cw)
        ndf = np.sum(n * Lw, axis=1)
    if keys & {"3", "5", "7a", "8a"}:
        th2 = p.theta**2
        Wv = _hermite(p, cv) / th2
        Ww = _hermite(p, cw) / th2
    if keys & {"2", "8a", "8b"}:
        nwv = np.sum(n * (2 * u + cv + cw), axis=1)
    pref = -6 / (math.pi * rsp)
    if "1" in keys:
        out["1"] = pref * (base * nr2 * ndf)[:, None] * n
    if "2" in keys:
        out["2"] = (pref * base * nwv * nr2 * ndf)[:, None]
    if keys & {"3", "4"}:
        M = _stress_kernel(nr, n, cv)
        if "3" in keys:
            out["3"] = (base * nr2 * (Wv + Ww))[:, None] * M
        if "4" in keys:
            out["4"] = (base * nr2 * ndf)[:, None] * M
    if keys & {"5", "6"}:
        V = _flux_kernel(nr, n, cv)
        if "5" in keys:
            out["5"] = (base * (Wv + Ww))[:, None] * V
        if "6" in keys:
            out["6"] = (base * ndf)[:, None] * V
    if keys & {"7a", "8a"}:
        f1term = Wv * ndf + np.sum(n * (Lw * Ww[:, None] + _grad_f1_weight(p, cw)), axis=1)
        if "7a" in keys:
            out["7a"] = (base * nr2 * f1term)[:, None] * n
        if "8a" in keys:
            out["8a"] = (base * nwv * nr2 * f1term)[:, None]
    if keys & {"7b", "8b"}:
        D2 = _d2log_f0(p, cw) + Lw[:, :, None] * Lw[:, None, :]
        hterm = np.einsum("ni,nij,nj->n", n, D2, n)
        if "7b" in keys:
            out["7b"] = (base * nr2 * hterm)[:, None] * n
        if "8b" in keys:
            out["8b"] = (base * nwv * nr2 * hterm)[:, None]
    return out


# -------------------------------------------------------------------- sampling

def _frame(e):
    """Two unit vectors completing e to an orthonormal basis."""
    x, y, z = e[:, 0], e[:, 1], e[:, 2]
    bad = z < -0.999999
    a = 1.0 / (1.0 + np.where(bad, 0.0, z))
    p1 = np.stack([1 - a * x * x, -a * x * y, -x], 1)
    p2 = np.stack([-a * x * y, 1 - a * y * y, -y], 1)
    p1[bad] = [1.0, 0.0, 0.0]
    p2[bad] = [0.0, -1.0, 0.0]
    return p1, p2


def _uniforms(rng, size, sampler):
    if sampler == "rqmc":
        z = qmc.Sobol(8, scramble=True, seed=rng).random(size)
    elif sampler == "mc":
        z = rng.random((size, 8))
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return np.clip(z, 1e-16, 1 - 1e-16)


def _hemisphere_normals(cv, cw, t, phi):
    r = cw - cv
    e = r / np.linalg.norm(r, axis=1)[:, None]
    p1, p2 = _frame(e)
    s = np.sqrt(1 - t * t)
    return t[:, None] * e + s[:, None] * (np.cos(phi)[:, None] * p1 + np.sin(phi)[:, None] * p2)


def draw_block(p: HydroPoint, size, rng, sampler="rqmc", scale=IS_SCALE):
    """Base draws (c_v, c_w, t, phi, weight) for one block."""
    z = _uniforms(rng, size, sampler)
    g = norm.ppf(z[:, :6]) * math.sqrt(p.theta * scale)
    c2 = np.sum(g * g, axis=1)
    wt = scale**3 * np.exp(-0.5 * c2 / p.theta * (1.0 - 1.0 / scale))
    return g[:, :3], g[:, 3:], z[:, 6], 2 * math.pi * z[:, 7], wt


def block_mean(func, cv, cw, t, phi, wt=None):
    """Weighted average of func(cv, cw, n) over the four images, times the hemisphere measure 1/2.

    func returns a dict of (N, m) arrays; the result is a dict of (m,) means.
    """
    wt = np.ones(len(cv)) if wt is None else wt
    acc = None
    for sg, swap in ((1, False), (-1, False), (1, True), (-1, True)):
        x, y = (sg * cw, sg * cv) if swap else (sg * cv, sg * cw)
        n = _hemisphere_normals(x, y, t, phi)
        vals = func(x, y, n)
        m = {k: 0.5 * (wt[:, None] * v).mean(axis=0) for k, v in vals.items()}
        acc = m if acc is None else {k: acc[k] + m[k] for k in m}
    return {k: v / IMAGES for k, v in acc.items()}


def block_plan(n_samples, n_blocks=None):
    """(draws per block, blocks) with at least n_samples draws in total.

    Blocks hold a power of two draws (Sobol balance), at most MAX_BLOCK.
    """
    n_samples = int(n_samples)
    if n_blocks is None:
        if n_samples >= MAX_BLOCK * 16:
            return MAX_BLOCK, -(-n_samples // MAX_BLOCK)
        n_blocks = 16
    per = max(16, -(-n_samples // n_blocks))
    size = 1 << int(math.ceil(math.log2(per)))
    if size > MAX_BLOCK:
        size = MAX_BLOCK
        n_blocks = -(-n_samples // size)
    return size, n_blocks


def block_rngs(rng, n_blocks):
    ss = np.random.SeedSequence(int(rng.integers(2**63)))
    return [np.random.default_rng(s) for s in ss.spawn(n_blocks)]


def estimate(p: HydroPoint, keys, n_samples, rng, sampler="rqmc", n_blocks=None):
    """Block estimates for integrand keys: returns ({key: (B, m) array}, n_evaluations)."""
    size, B = block_plan(n_samples, n_blocks)
    out = {k: [] for k in keys}
    for brng in block_rngs(rng, B):
        cv, cw, t, phi, wt = draw_block(p, size, brng, sampler)
        m = block_mean(lambda x, y, n: integrands(p, x, y, n, keys), cv, cw, t, phi, wt)
        for k in keys:
            out[k].append(np.ravel(m[k]))
    return {k: np.array(v) for k, v in out.items()}, size * B


# --------------------------------------------------------------------- reports

@dataclass
class MomentReport:
    identity_id: str
    mc_value: np.ndarray
    closed_form: np.ndarray
    rel_err: float
    n_samples: int
    stderr: np.ndarray
    floor: float = 0.0
    parts: tuple = ()
    tolerance: float = 0.01

    @property
    def passed(self):
        return bool(self.rel_err <= self.tolerance)

    @property
    def max_z(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.mc_value - self.closed_form) / self.stderr
        z = np.where(self.stderr > 0, z, np.where(self.mc_value == self.closed_form, 0.0, np.inf))
        return float(np.max(z))

    def to_json(self, **extra):
        d = {
            "identity_id": self.identity_id,
            "parts": list(self.parts),
            "mc_value": np.asarray(self.mc_value).tolist(),
            "closed_form": np.asarray(self.closed_form).tolist(),
            "stderr": np.asarray(self.stderr).tolist(),
            "rel_err": self.rel_err,
            "n_samples": self.n_samples,
            "floor": self.floor,
            "tolerance": self.tolerance,
            "max_z": self.max_z,
            "passed": self.passed,
        }
        d.update(extra)
        return json.dumps(d)


def _rel_err(mc, closed, floor):
    return float(np.linalg.norm(mc - closed) / max(np.linalg.norm(closed), floor))


def make_report(identity, p, blocks, n_eval, closed=None, closed_scale=1.0, tolerance=0.01):
    closed = closed_forms(p) if closed is None else closed
    floor = FLOOR * p.rho**2 * p.theta**1.5
    parts = PARTS[identity]
    mcs, ses, cls, errs = [], [], [], []
    for k in parts:
        b = blocks[k]
        mc = b.mean(axis=0)
        se = b.std(axis=0, ddof=1) / math.sqrt(len(b)) if len(b) > 1 else np.full_like(mc, np.inf)
        cf = np.ravel(closed[k]) * closed_scale
        mcs.append(mc)
        ses.append(se)
        cls.append(cf)
        errs.append(_rel_err(mc, cf, floor))
    squeeze = len(parts) == 1
    pick = (lambda a: a[0]) if squeeze else np.array
    return MomentReport(
        identity_id=identity,
        mc_value=pick(mcs),
        closed_form=pick(cls),
        rel_err=max(errs),
        n_samples=n_eval,
        stderr=pick(ses),
        floor=floor,
        parts=parts,
        tolerance=tolerance,
    )


def verify_identities(point: HydroPoint, n_samples, rng, ids=IDENTITIES, sampler="rqmc",
                      n_blocks=None, closed_scale=1.0, tolerance=0.01):
    """One MomentReport per identity, all estimated from the same draws."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    ids = list(ids)
    for i in ids:
        if i not in PARTS:
            raise ValueError(f"unknown identity {i!r}")
    keys = [k for i in ids for k in PARTS[i]]
    blocks, n_eval = estimate(point, keys, n_samples, rng, sampler, n_blocks)
    closed = closed_forms(point)
    return [make_report(i, point, blocks, n_eval, closed, closed_scale, tolerance) for i in ids]


def verify_identity(identity, point: HydroPoint, n_samples, rng, **kw) -> MomentReport:
    return verify_identities(point, n_samples, rng, ids=[identity], **kw)[0]


# -------------------------------------------------------- collision invariants

def _invariant_h(cv, cw, theta):
    """Symmetric perturbation P(v, w) = h/(f0 f0) - 1 that is not a collision invariant."""
    return (cv[:, 0] * cw[:, 1] + cw[:, 0] * cv[:, 1]) / theta + (cv[:, 0] ** 2 + cw[:, 0] ** 2) / theta


def collision_invariant_integrals(point: HydroPoint, n_samples, rng, sampler="rqmc", n_blocks=None):
    """int psi(v) (h(v', w') - h(v, w)) n.(w - v) Theta dn dw dv for psi in 1, v, |v|^2 and a control.

    h = f0(v) f0(w) (1 + P(v, w)) with P symmetric; since v', w' keep the
    pair energy, f0(v') f0(w') = f0(v) f0(w) and only P changes. The control
    psi = v_x^3 is not conserved and must give a nonzero value.
    Returns {name: (mc, stderr)}.
    """
    size, B = block_plan(n_samples, n_blocks)
    u, th = point.u, point.theta
    names = ("one", "vx", "vy", "vz", "v2", "control_vx3")

    def func(cv, cw, n):
        nr = np.sum(n * (cw - cv), axis=1)
        k = nr[:, None] * n
        cvp, cwp = cv + k, cw - k
        dP = _invariant_h(cvp, cwp, th) - _invariant_h(cv, cw, th)
        v = u + cv
        w = 4 * math.pi * point.rho**2 * dP * nr * (nr > 0)
        return {
            "one": w[:, None],
            "vx": (w * v[:, 0])[:, None],
            "vy": (w * v[:, 1])[:, None],
            "vz": (w * v[:, 2])[:, None],
            "v2": (w * np.sum(v * v, axis=1))[:, None],
            "control_vx3": (w * v[:, 0] ** 3)[:, None],
        }

    res = {k: [] for k in names}
    for brng in block_rngs(rng, B):
        cv, cw, t, phi, wt = draw_block(point, size, brng, sampler)
        m = block_mean(func, cv, cw, t, phi, wt)
        for k in names:
            res[k].append(m[k][0])
    return {k: (float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v)))) for k, v in res.items()}


# ------------------------------------------------------------ Newton / Fourier

def _traceless_basis():
    E = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        m = np.zeros((3, 3))
        m[i, j] = m[j, i] = 1.0
        E.append(m)
    E.append(np.diag([1.0, -1.0, 0.0]))
    E.append(np.diag([1.0, 1.0, -2.0]) / math.sqrt(3))
    return E


@dataclass
class NewtonFourierResult:
    S: np.ndarray
    q: np.ndarray
    S_ratio: float
    q_ratio: float
    S_ratio_stderr: float
    q_ratio_stderr: float
    mu_constant: float
    mu_constant_stderr: float
    S_expected: float
    q_expected: float
    n_samples: int
    condition: float


def _solve_grad_state(p, Mblk, bblk):
    """S, q solving the two moment equations from MC integrals."""
    rsp, rho, th = p.rho_sp, p.rho, p.theta
    G, gt = p.grad_u, p.grad_theta
    divu = np.trace(G)
    D = G + G.T - 2.0 / 3.0 * divu * np.eye(3)
    g_r2t = 2 * rho * th * p.grad_rho + rho**2 * gt
    rhs_S = rho * th * D - 8.0 / (3 * rsp) * rho**2 * th * divu * np.eye(3)
    rhs_q = 5 * rho * th * gt - 20.0 / rsp * th * g_r2t
    rhs = math.pi * rsp / 6 * np.concatenate([rhs_S.ravel(), rhs_q]) + bblk
    x, *_ = np.linalg.lstsq(Mblk, rhs, rcond=None)
    S = sum(c * E for c, E in zip(x[:5], _traceless_basis()))
    return S, x[5:], D


def verify_newton_fourier(point: HydroPoint, n_samples, rng, sampler="rqmc", n_blocks=None,
                          max_condition=1e8) -> NewtonFourierResult:
    """Solve the stress / heat-flux moment equations for (S, q) with MC integrals.

    The equations are linear in (S, q): the S and q dependent integrals are
    estimated on a basis (5 traceless symmetric matrices, 3 vectors) and the
    gradient integrals at the point's velocity and temperature gradients. The
    point's own S and q are ignored. Ratios are taken against the dilute
    Newton and Fourier laws with mu/sigma = 5 sqrt(pi) rho_sp sqrt(theta)/96;
    the expected values are 1 + 8x/5 and 1 + 12x/5 with x = rho/rho_sp.
    """
    if n_samples < 1_000_000:
        raise ValueError("n_samples must be at least 1e6")
    p = point
    basis_S = _traceless_basis()
    basis_q = np.eye(3)
    th2 = p.theta**2

    def func(cv, cw, n):
        r = cw - cv
        nr = np.sum(n * r, axis=1)
        gate = nr > 0
        nr2 = nr * nr
        base = 4 * math.pi * p.rho**2 * gate
        Wsum = []
        c2v, c2w = np.sum(cv * cv, 1), np.sum(cw * cw, 1)
        for E in basis_S:
            Wsum.append(0.5 * (np.einsum("ni,ij,nj->n", cv, E, cv) + np.einsum("ni,ij,nj->n", cw, E, cw)) / th2)
        for e in basis_q:
            cq_v, cq_w = cv @ e, cw @ e
            Wsum.append((-cq_v + c2v * cq_v / (5 * p.theta) - cq_w + c2w * cq_w / (5 * p.theta)) / th2)
        Wsum = np.stack(Wsum, axis=1)
        M = _stress_kernel(nr, n, cv)
        V = _flux_kernel(nr, n, cv)
        ndf = np.sum(n * _dlog_f0(p, cw), axis=1)
        lin = np.concatenate([
            np.einsum("n,ni,nk->nik", base * nr2, M, Wsum),
            np.einsum("n,ni,nk->nik", base, V, Wsum),
        ], axis=1).reshape(len(nr), -1)
        grad = np.concatenate([(base * nr2 * ndf)[:, None] * M, (base * ndf)[:, None] * V], axis=1)
        return {"lin": lin, "grad": grad}

    size, B = block_plan(n_samples, n_blocks)
    Ms, bs = [], []
    for brng in block_rngs(rng, B):
        cv, cw, t, phi, wt = draw_block(p, size, brng, sampler)
        m = block_mean(func, cv, cw, t, phi, wt)
        Ms.append(m["lin"].reshape(12, 8))
        bs.append(m["grad"])
    Ms, bs = np.array(Ms), np.array(bs)
    M, b = Ms.mean(axis=0), bs.mean(axis=0)
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > max_condition:
        raise np.linalg.LinAlgError(f"ill-conditioned moment system (cond={cond:.3g})")

    mu_s = 5 * SQRT_PI / 96 * p.rho_sp * math.sqrt(p.theta)  # mu / sigma

    def ratios(Mx, bx):
        S, q, D = _solve_grad_state(p, Mx, bx)
        dd = np.sum(D * D)
        visc = -p.rho * np.sum(S * D) / dd if dd > 0 else np.nan
        gt = p.grad_theta
        g2 = gt @ gt
        cond_ = -p.rho * (q @ gt) / g2 if g2 > 0 else np.nan
        return S, q, visc / mu_s, cond_ / (15.0 / 4.0 * mu_s), visc / (p.rho_sp * math.sqrt(p.theta))

    S, q, sr, qr, muc = ratios(M, b)
    # jackknife over blocks for the nonlinear solve
    jk = np.array([ratios((Ms.sum(0) - Ms[k]) / (B - 1), (bs.sum(0) - bs[k]) / (B - 1))[2:] for k in range(B)])
    with np.errstate(invalid="ignore"):
        se = np.sqrt((B - 1) / B * np.sum((jk - jk.mean(axis=0)) ** 2, axis=0))
    return NewtonFourierResult(
        S=S, q=q, S_ratio=float(sr), q_ratio=float(qr),
        S_ratio_stderr=float(se[0]), q_ratio_stderr=float(se[1]),
        mu_constant=float(muc), mu_constant_stderr=float(se[2]),
        S_expected=1 + 8 * p.x / 5, q_expected=1 + 12 * p.x / 5,
        n_samples=size * B, condition=cond,
    )


def gradient_point(x, theta=1.3, rho=1.0) -> HydroPoint:
    """Fixed gradient state at dense parameter x = rho / rho_sp for closure checks."""
    G = np.array([[0.3, 0.5, 0.0], [0.1, -0.2, 0.4], [0.2, 0.0, 0.6]])
    return HydroPoint(
        rho=rho, u=np.zeros(3), theta=theta, grad_u=G,
        grad_theta=np.array([0.5, -0.3, 0.2]), grad_rho=np.array([0.2, 0.1, -0.3]),
        rho_sp=rho / x,
    )

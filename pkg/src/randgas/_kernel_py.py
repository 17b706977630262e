"""Pure-Python particle step kernel.

Reference implementation of the compiled kernel in _kernel.pyx. The two
must perform the same floating point operations in the same order and draw
uniforms from the generator in the same order, so that a given seed gives a
bitwise identical event log on either backend.
"""
import heapq
import math

import numpy as np


def _mi(d, L):
    return d - L * math.ceil(d / L - 0.5)


def candidate_pairs(pos, sides, rcut):
    """Pairs (i<j) with minimum-image distance below rcut, sorted by (i, j)."""
    K = pos.shape[0]
    if K < 2:
        return np.empty((0, 2), dtype=np.int64)
    iu, ju = np.triu_indices(K, 1)
    d = pos[iu] - pos[ju]
    d = d - sides * np.ceil(d / sides - 0.5)
    r2 = (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) + d[:, 2] * d[:, 2]
    keep = r2 < rcut * rcut
    return np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)


class _Stepper:
    def __init__(self, pos, vel, sides, sigma, alpha, lam, cnorm, bound, rng):
        self.pos = pos
        self.vel = vel
        self.L = [float(s) for s in sides]
        self.sigma = sigma
        self.width = alpha * sigma
        self.r_out = sigma * (1.0 + alpha)
        self.r_in = sigma * (1.0 - alpha)
        self.lam = lam
        self.cnorm = cnorm
        self.bound = bound
        self.rng = rng
        K = pos.shape[0]
        self.xref = [[pos[i, 0], pos[i, 1], pos[i, 2]] for i in range(K)]
        self.v = [[vel[i, 0], vel[i, 1], vel[i, 2]] for i in range(K)]
        self.tref = [0.0] * K
        self.n_prop = 0
        self.max_ratio = 0.0

    def sep(self, i, j, t):
        xi, xj, vi, vj = self.xref[i], self.xref[j], self.v[i], self.v[j]
        ti = t - self.tref[i]
        tj = t - self.tref[j]
        return [
            _mi((xi[k] + vi[k] * ti) - (xj[k] + vj[k] * tj), self.L[k]) for k in range(3)
        ]

    def intensity(self, d, dv):
        r = math.sqrt((d[0] * d[0] + d[1] * d[1]) + d[2] * d[2])
        z = (r - self.sigma) / self.width
        if z <= -1.0 or z >= 1.0:
            return 0.0
        closing = -((d[0] * dv[0] + d[1] * dv[1]) + d[2] * dv[2]) / r
        if closing <= 0.0:
            return 0.0
        return self.lam * (self.cnorm * math.exp(-1.0 / (1.0 - z * z)) / self.width) * closing

    def next_jump(self, i, j, ts, te):
        """First accepted jump time of pair (i, j) in (ts, te), or -1."""
        if self.bound <= 0.0:
            return -1.0
        d = self.sep(i, j, ts)
        vi, vj = self.v[i], self.v[j]
        dv = [vi[0] - vj[0], vi[1] - vj[1], vi[2] - vj[2]]
        dd = (d[0] * d[0] + d[1] * d[1]) + d[2] * d[2]
        b = (d[0] * dv[0] + d[1] * dv[1]) + d[2] * dv[2]
        vv = (dv[0] * dv[0] + dv[1] * dv[1]) + dv[2] * dv[2]
        if b >= 0.0 or vv == 0.0:
            return -1.0
        ro2 = self.r_out * self.r_out
        ri2 = self.r_in * self.r_in
        if dd <= ri2:
            return -1.0
        if dd < ro2:
            s0 = 0.0
        else:
            disc = b * b - vv * (dd - ro2)
            if disc <= 0.0:
                return -1.0
            s0 = (-b - math.sqrt(disc)) / vv
        disc = b * b - vv * (dd - ri2)
        if disc > 0.0:
            s1 = (-b - math.sqrt(disc)) / vv
        else:
            s1 = -b / vv
        t_hi = ts + s1
        if te < t_hi:
            t_hi = te
        t = ts + s0
        if t >= t_hi:
            return -1.0
        rng = self.rng
        while True:
            u = rng.random()
            t = t - math.log1p(-u) / self.bound
            if t >= t_hi:
                return -1.0
            self.n_prop += 1
            s = t - ts
            dt_ = [d[0] + s * dv[0], d[1] + s * dv[1], d[2] + s * dv[2]]
            h = self.intensity(dt_, dv)
            ratio = h / self.bound
            if ratio > self.max_ratio:
                self.max_ratio = ratio
            u2 = rng.random()
            if u2 * self.bound < h:
                return t

    def jump(self, i, j, t):
        d = self.sep(i, j, t)
        r = math.sqrt((d[0] * d[0] + d[1] * d[1]) + d[2] * d[2])
        n = [d[0] / r, d[1] / r, d[2] / r]
        for p in (i, j):
            s = t - self.tref[p]
            x, v = self.xref[p], self.v[p]
            self.xref[p] = [x[0] + v[0] * s, x[1] + v[1] * s, x[2] + v[2] * s]
            self.tref[p] = t
        vi, vj = self.v[i], self.v[j]
        k = ((vj[0] - vi[0]) * n[0] + (vj[1] - vi[1]) * n[1]) + (vj[2] - vi[2]) * n[2]
        self.v[i] = [vi[0] + k * n[0], vi[1] + k * n[1], vi[2] + k * n[2]]
        self.v[j] = [vj[0] - k * n[0], vj[1] - k * n[1], vj[2] - k * n[2]]
        return n


def step_kernel(pos, vel, sides, sigma, alpha, lam, cnorm, bound, rcut, dt, t0, rng):
    """Advance pos/vel in place by dt. Returns (events, n_candidates, n_proposals, max_ratio).

    events is a list of (t, i, j, nx, ny, nz) with absolute times t0 + s.
    """
    pairs = candidate_pairs(pos, np.asarray(sides, dtype=float), rcut)
    K = pos.shape[0]
    st = _Stepper(pos, vel, sides, sigma, alpha, lam, cnorm, bound, rng)
    nbr = [[] for _ in range(K)]
    heap = []
    ver = [0] * K
    for a, b in pairs.tolist():
        nbr[a].append((a, b))
        nbr[b].append((a, b))
        t = st.next_jump(a, b, 0.0, dt)
        if t >= 0.0:
            heapq.heappush(heap, (t, a, b, 0, 0))
    events = []
    while heap:
        t, a, b, va, vb = heapq.heappop(heap)
        if ver[a] != va or ver[b] != vb:
            continue
        n = st.jump(a, b, t)
        events.append((t0 + t, a, b, n[0], n[1], n[2]))
        ver[a] += 1
        ver[b] += 1
        redo = sorted(set(nbr[a]) | set(nbr[b]))
        for p, q in redo:
            tn = st.next_jump(p, q, t, dt)
            if tn >= 0.0:
                heapq.heappush(heap, (tn, p, q, ver[p], ver[q]))
    for p in range(K):
        s = dt - st.tref[p]
        x, v = st.xref[p], st.v[p]
        for k in range(3):
            y = x[k] + v[k] * s
            L = st.L[k]
            y = y - L * math.floor(y / L)
            if y >= L:
                y = 0.0
            pos[p, k] = y
            vel[p, k] = v[k]
    return events, len(pairs), st.n_prop, st.max_ratio

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled particle step kernel.

Mirrors _kernel_py.step_kernel operation for operation. Uniforms come
straight from the generator's bitgen (next_double), which is what
Generator.random() returns, so both backends see the same stream.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport sqrt, exp, log1p, ceil, floor
from libc.stdlib cimport malloc, realloc, free, qsort
from numpy.random cimport bitgen_t

cnp.import_array()


cdef struct Entry:
    double t
    long a
    long b
    long va
    long vb


cdef inline int entry_less(Entry* x, Entry* y) noexcept nogil:
    if x.t != y.t:
        return x.t < y.t
    if x.a != y.a:
        return x.a < y.a
    if x.b != y.b:
        return x.b < y.b
    if x.va != y.va:
        return x.va < y.va
    return x.vb < y.vb


cdef struct Heap:
    Entry* data
    long size
    long cap


cdef int heap_push(Heap* h, Entry e) noexcept nogil:
    cdef long i, p
    cdef Entry tmp
    if h.size == h.cap:
        h.cap = 2 * h.cap + 16
        h.data = <Entry*>realloc(h.data, h.cap * sizeof(Entry))
        if h.data == NULL:
            return -1
    i = h.size
    h.data[i] = e
    h.size += 1
    while i > 0:
        p = (i - 1) // 2
        if entry_less(&h.data[i], &h.data[p]):
            tmp = h.data[i]
            h.data[i] = h.data[p]
            h.data[p] = tmp
            i = p
        else:
            break
    return 0


cdef Entry heap_pop(Heap* h) noexcept nogil:
    cdef Entry top = h.data[0]
    cdef long i = 0, l, r, m
    cdef Entry tmp
    h.size -= 1
    h.data[0] = h.data[h.size]
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < h.size and entry_less(&h.data[l], &h.data[m]):
            m = l
        if r < h.size and entry_less(&h.data[r], &h.data[m]):
            m = r
        if m == i:
            break
        tmp = h.data[i]
        h.data[i] = h.data[m]
        h.data[m] = tmp
        i = m
    return top


cdef int cmp_long(const void* x, const void* y) noexcept nogil:
    cdef long a = (<long*>x)[0]
    cdef long b = (<long*>y)[0]
    return (a > b) - (a < b)


cdef inline double mi(double d, double L) noexcept nogil:
    return d - L * ceil(d / L - 0.5)


cdef struct Ctx:
    double* xref
    double* v
    double* tref
    double L[3]
    double sigma
    double width
    double r_out
    double r_in
    double lam
    double cnorm
    double bound
    bitgen_t* rng
    long n_prop
    double max_ratio


cdef inline void sep(Ctx* c, long i, long j, double t, double* d) noexcept nogil:
    cdef double ti = t - c.tref[i]
    cdef double tj = t - c.tref[j]
    cdef int k
    for k in range(3):
        d[k] = mi((c.xref[3 * i + k] + c.v[3 * i + k] * ti)
                  - (c.xref[3 * j + k] + c.v[3 * j + k] * tj), c.L[k])


cdef inline double intensity(Ctx* c, double* d, double* dv) noexcept nogil:
    cdef double r = sqrt((d[0] * d[0] + d[1] * d[1]) + d[2] * d[2])
    cdef double z = (r - c.sigma) / c.width
    cdef double closing
    if z <= -1.0 or z >= 1.0:
        return 0.0
    closing = -((d[0] * dv[0] + d[1] * dv[1]) + d[2] * dv[2]) / r
    if closing <= 0.0:
        return 0.0
    return c.lam * (c.cnorm * exp(-1.0 / (1.0 - z * z)) / c.width) * closing


cdef double next_jump(Ctx* c, long i, long j, double ts, double te) noexcept nogil:
    cdef double d[3]
    cdef double dv[3]
    cdef double dd, b, vv, ro2, ri2, disc, s0, s1, t_hi, t, u, s, h, ratio, u2
    cdef double dt_[3]
    cdef int k
    if c.bound <= 0.0:
        return -1.0
    sep(c, i, j, ts, d)
    for k in range(3):
        dv[k] = c.v[3 * i + k] - c.v[3 * j + k]
    dd = (d[0] * d[0] + d[1] * d[1]) + d[2] * d[2]
    b = (d[0] * dv[0] + d[1] * dv[1]) + d[2] * dv[2]
    vv = (dv[0] * dv[0] + dv[1] * dv[1]) + dv[2] * dv[2]
    if b >= 0.0 or vv == 0.0:
        return -1.0
    ro2 = c.r_out * c.r_out
    ri2 = c.r_in * c.r_in
    if dd <= ri2:
        return -1.0
    if dd < ro2:
        s0 = 0.0
    else:
        disc = b * b - vv * (dd - ro2)
        if disc <= 0.0:
            return -1.0
        s0 = (-b - sqrt(disc)) / vv
    disc = b * b - vv * (dd - ri2)
    if disc > 0.0:
        s1 = (-b - sqrt(disc)) / vv
    else:
        s1 = -b / vv
    t_hi = ts + s1
    if te < t_hi:
        t_hi = te
    t = ts + s0
    if t >= t_hi:
        return -1.0
    while True:
        u = c.rng.next_double(c.rng.state)
        t = t - log1p(-u) / c.bound
        if t >= t_hi:
            return -1.0
        c.n_prop += 1
        s = t - ts
        for k in range(3):
            dt_[k] = d[k] + s * dv[k]
        h = intensity(c, dt_, dv)
        ratio = h / c.bound
        if ratio > c.max_ratio:
            c.max_ratio = ratio
        u2 = c.rng.next_double(c.rng.state)
        if u2 * c.bound < h:
            return t


cdef void jump(Ctx* c, long i, long j, double t, double* n) noexcept nogil:
    cdef double d[3]
    cdef double r, s, kk
    cdef long p
    cdef int k, q
    sep(c, i, j, t, d)
    r = sqrt((d[0] * d[0] + d[1] * d[1]) + d[2] * d[2])
    for k in range(3):
        n[k] = d[k] / r
    for q in range(2):
        p = i if q == 0 else j
        s = t - c.tref[p]
        for k in range(3):
            c.xref[3 * p + k] = c.xref[3 * p + k] + c.v[3 * p + k] * s
        c.tref[p] = t
    kk = (((c.v[3 * j] - c.v[3 * i]) * n[0] + (c.v[3 * j + 1] - c.v[3 * i + 1]) * n[1])
          + (c.v[3 * j + 2] - c.v[3 * i + 2]) * n[2])
    for k in range(3):
        c.v[3 * i + k] = c.v[3 * i + k] + kk * n[k]
        c.v[3 * j + k] = c.v[3 * j + k] - kk * n[k]


cdef inline double dist2(double* pos, long i, long j, double* L) noexcept nogil:
    cdef double d0 = pos[3 * i] - pos[3 * j]
    cdef double d1 = pos[3 * i + 1] - pos[3 * j + 1]
    cdef double d2 = pos[3 * i + 2] - pos[3 * j + 2]
    d0 = d0 - L[0] * ceil(d0 / L[0] - 0.5)
    d1 = d1 - L[1] * ceil(d1 / L[1] - 0.5)
    d2 = d2 - L[2] * ceil(d2 / L[2] - 0.5)
    return (d0 * d0 + d1 * d1) + d2 * d2


def candidate_pairs(double[:, ::1] pos, sides, double rcut):
    """Pairs (i<j) closer than rcut (minimum image), sorted by (i, j).

    Uses a uniform cell list when every axis holds at least three cells,
    otherwise all pairs are checked.
    """
    cdef long K = pos.shape[0]
    cdef double L[3]
    cdef long m[3]
    cdef int k
    cdef long i, j, cnt, ncell, c, cx, cy, cz, ox, oy, oz, nb
    cdef double rc2 = rcut * rcut
    cdef double* p = &pos[0, 0] if K > 0 else NULL
    # cells at least rcut wide, and no more cells than about 2K in total
    cdef long mcap = 3
    while (mcap + 1) * (mcap + 1) * (mcap + 1) <= 2 * K:
        mcap += 1
    for k in range(3):
        L[k] = float(sides[k])
        m[k] = <long>floor(L[k] / rcut)
        if m[k] > mcap:
            m[k] = mcap
    if K < 2:
        return np.empty((0, 2), dtype=np.int64)
    cdef long cap = 64, npair = 0
    cdef long* buf = <long*>malloc(2 * cap * sizeof(long))
    cdef long* tmp = <long*>malloc(K * sizeof(long))
    cdef long* head = NULL
    cdef long* nxt = NULL
    cdef long* cell = NULL
    try:
        if m[0] >= 3 and m[1] >= 3 and m[2] >= 3:
            ncell = m[0] * m[1] * m[2]
            head = <long*>malloc(ncell * sizeof(long))
            nxt = <long*>malloc(K * sizeof(long))
            cell = <long*>malloc(3 * K * sizeof(long))
            for c in range(ncell):
                head[c] = -1
            for i in range(K - 1, -1, -1):
                for k in range(3):
                    c = <long>floor(p[3 * i + k] / L[k] * m[k])
                    if c < 0:
                        c = 0
                    if c >= m[k]:
                        c = m[k] - 1
                    cell[3 * i + k] = c
                c = (cell[3 * i] * m[1] + cell[3 * i + 1]) * m[2] + cell[3 * i + 2]
                nxt[i] = head[c]
                head[c] = i
            for i in range(K):
                cnt = 0
                for ox in range(-1, 2):
                    cx = (cell[3 * i] + ox + m[0]) % m[0]
                    for oy in range(-1, 2):
                        cy = (cell[3 * i + 1] + oy + m[1]) % m[1]
                        for oz in range(-1, 2):
                            cz = (cell[3 * i + 2] + oz + m[2]) % m[2]
                            j = head[(cx * m[1] + cy) * m[2] + cz]
                            while j >= 0:
                                if j > i and dist2(p, i, j, L) < rc2:
                                    tmp[cnt] = j
                                    cnt += 1
                                j = nxt[j]
                qsort(tmp, cnt, sizeof(long), cmp_long)
                for nb in range(cnt):
                    if npair == cap:
                        cap *= 2
                        buf = <long*>realloc(buf, 2 * cap * sizeof(long))
                    buf[2 * npair] = i
                    buf[2 * npair + 1] = tmp[nb]
                    npair += 1
        else:
            for i in range(K):
                for j in range(i + 1, K):
                    if dist2(p, i, j, L) < rc2:
                        if npair == cap:
                            cap *= 2
                            buf = <long*>realloc(buf, 2 * cap * sizeof(long))
                        buf[2 * npair] = i
                        buf[2 * npair + 1] = j
                        npair += 1
        res = np.empty((npair, 2), dtype=np.int64)
        for i in range(npair):
            res[i, 0] = buf[2 * i]
            res[i, 1] = buf[2 * i + 1]
        return res
    finally:
        free(buf)
        free(tmp)
        free(head)
        free(nxt)
        free(cell)


def step_kernel(double[:, ::1] pos, double[:, ::1] vel, sides, double sigma, double alpha,
                double lam, double cnorm, double bound, double rcut, double dt, double t0, rng):
    """Advance pos/vel in place by dt. Returns (events, n_candidates, n_proposals, max_ratio)."""
    cdef long K = pos.shape[0]
    cdef Ctx c
    cdef long i, k, a, b, q, npair, na, nb_, cnt, pa, pb
    cdef double t, s, y, Lk
    cdef double n[3]
    cdef Entry e
    cdef Heap h
    pairs = candidate_pairs(pos, sides, rcut)
    cdef long[:, ::1] pr = pairs
    npair = pr.shape[0]
    capsule = rng.bit_generator.capsule
    c.rng = <bitgen_t*>PyCapsule_GetPointer(capsule, "BitGenerator")
    for k in range(3):
        c.L[k] = float(sides[k])
    c.sigma = sigma
    c.width = alpha * sigma
    c.r_out = sigma * (1.0 + alpha)
    c.r_in = sigma * (1.0 - alpha)
    c.lam = lam
    c.cnorm = cnorm
    c.bound = bound
    c.n_prop = 0
    c.max_ratio = 0.0
    c.xref = <double*>malloc(3 * K * sizeof(double))
    c.v = <double*>malloc(3 * K * sizeof(double))
    c.tref = <double*>malloc(K * sizeof(double))
    cdef long* ver = <long*>malloc(K * sizeof(long))
    cdef long* deg = <long*>malloc((K + 1) * sizeof(long))
    cdef long* adj = <long*>malloc((2 * npair + 1) * sizeof(long))
    cdef long* fill = <long*>malloc((K + 1) * sizeof(long))
    cdef long* redo = <long*>malloc((2 * npair + 1) * sizeof(long))
    h.data = NULL
    h.size = 0
    h.cap = 0
    events = []
    lock = rng.bit_generator.lock
    try:
        for i in range(K):
            for k in range(3):
                c.xref[3 * i + k] = pos[i, k]
                c.v[3 * i + k] = vel[i, k]
            c.tref[i] = 0.0
            ver[i] = 0
            deg[i] = 0
        deg[K] = 0
        # CSR adjacency: pair indices touching each particle, in pair order
        for q in range(npair):
            deg[pr[q, 0] + 1] += 1
            deg[pr[q, 1] + 1] += 1
        for i in range(K):
            deg[i + 1] += deg[i]
            fill[i] = deg[i]
        for q in range(npair):
            a = pr[q, 0]
            b = pr[q, 1]
            adj[fill[a]] = q
            fill[a] += 1
            adj[fill[b]] = q
            fill[b] += 1
        with lock:
            for q in range(npair):
                t = next_jump(&c, pr[q, 0], pr[q, 1], 0.0, dt)
                if t >= 0.0:
                    e.t = t
                    e.a = pr[q, 0]
                    e.b = pr[q, 1]
                    e.va = 0
                    e.vb = 0
                    if heap_push(&h, e) != 0:
                        raise MemoryError()
            while h.size > 0:
                e = heap_pop(&h)
                a = e.a
                b = e.b
                if ver[a] != e.va or ver[b] != e.vb:
                    continue
                t = e.t
                jump(&c, a, b, t, n)
                events.append((t0 + t, a, b, n[0], n[1], n[2]))
                ver[a] += 1
                ver[b] += 1
                cnt = 0
                for k in range(deg[a], deg[a + 1]):
                    redo[cnt] = adj[k]
                    cnt += 1
                for k in range(deg[b], deg[b + 1]):
                    redo[cnt] = adj[k]
                    cnt += 1
                qsort(redo, cnt, sizeof(long), cmp_long)
                for k in range(cnt):
                    q = redo[k]
                    if k > 0 and redo[k - 1] == q:
                        continue
                    pa = pr[q, 0]
                    pb = pr[q, 1]
                    s = next_jump(&c, pa, pb, t, dt)
                    if s >= 0.0:
                        e.t = s
                        e.a = pa
                        e.b = pb
                        e.va = ver[pa]
                        e.vb = ver[pb]
                        if heap_push(&h, e) != 0:
                            raise MemoryError()
        for i in range(K):
            s = dt - c.tref[i]
            for k in range(3):
                y = c.xref[3 * i + k] + c.v[3 * i + k] * s
                Lk = c.L[k]
                y = y - Lk * floor(y / Lk)
                if y >= Lk:
                    y = 0.0
                pos[i, k] = y
                vel[i, k] = c.v[3 * i + k]
        return events, npair, c.n_prop, c.max_ratio
    finally:
        free(c.xref)
        free(c.v)
        free(c.tref)
        free(ver)
        free(deg)
        free(adj)
        free(fill)
        free(redo)
        free(h.data)

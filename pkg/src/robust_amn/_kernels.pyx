# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics mirror ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

BACKEND = "cython"


def rround_batch(ystar, estar, ks, bs, betas, labels_a, keep_a):
    cdef const double[:, ::1] Y = np.ascontiguousarray(ystar, dtype=np.float64)
    cdef const double[::1] E = np.ascontiguousarray(estar, dtype=np.float64)
    cdef const long long[:, ::1] KS = np.ascontiguousarray(ks, dtype=np.int64)
    cdef const long long[:, ::1] BS = np.ascontiguousarray(bs, dtype=np.int64)
    cdef const double[:, ::1] BE = np.ascontiguousarray(betas, dtype=np.float64)
    cdef long long[:, ::1] labels = labels_a
    cdef signed char[:, ::1] keep = keep_a
    cdef Py_ssize_t T = KS.shape[0], P = KS.shape[1]
    cdef Py_ssize_t N = Y.shape[0], m = E.shape[0]
    used_a = np.full(T, -1, dtype=np.int64)
    cdef long long[::1] used = used_a
    cdef Py_ssize_t t, p, i, j, remaining
    cdef long long k, b
    cdef double beta, thr
    for t in range(T):
        remaining = 0
        for i in range(N):
            if labels[t, i] < 0:
                remaining += 1
        for j in range(m):
            if keep[t, j] < 0:
                remaining += 1
        if remaining == 0:
            used[t] = 0
            continue
        for p in range(P):
            k = KS[t, p]
            b = BS[t, p]
            beta = BE[t, p]
            for i in range(N):
                if labels[t, i] < 0 and beta <= Y[i, k]:
                    labels[t, i] = k
                    remaining -= 1
            for j in range(m):
                if keep[t, j] < 0:
                    thr = E[j] if b == 1 else 1.0 - E[j]
                    if beta <= thr:
                        keep[t, j] = <signed char>b
                        remaining -= 1
            if remaining == 0:
                used[t] = p + 1
                break
    return used_a


cdef bint _next_comb(Py_ssize_t[::1] comb, Py_ssize_t size, Py_ssize_t n):
    """Advance ``comb[:size]`` to the next lexicographic combination of range(n)."""
    cdef Py_ssize_t i = size - 1
    while i >= 0 and comb[i] == n - size + i:
        i -= 1
    if i < 0:
        return False
    comb[i] += 1
    cdef Py_ssize_t r
    for r in range(i + 1, size):
        comb[r] = comb[r - 1] + 1
    return True


cdef double _best_subset(const double[::1] coef, Py_ssize_t limit, double sign,
                         Py_ssize_t[::1] comb, Py_ssize_t[::1] out, Py_ssize_t* out_size):
    cdef Py_ssize_t n = coef.shape[0]
    cdef Py_ssize_t size, r
    cdef double best = 0.0, v
    out_size[0] = 0
    if limit > n:
        limit = n
    for size in range(1, limit + 1):
        for r in range(size):
            comb[r] = r
        while True:
            v = 0.0
            for r in range(size):
                v += coef[comb[r]]
            v = sign * v
            if v > best:
                best = v
                for r in range(size):
                    out[r] = comb[r]
                out_size[0] = size
            if not _next_comb(comb, size, n):
                break
    return best


def brute_force_scan(node_coef, edges, edge_w, hat_agree, nonedges,
                     long long d_del, long long d_add, long long degree_cap, double constant):
    cdef const double[:, ::1] A = np.ascontiguousarray(node_coef, dtype=np.float64)
    cdef const long long[:, ::1] Ed = np.ascontiguousarray(np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    cdef const long long[:, ::1] Ne = np.ascontiguousarray(np.asarray(nonedges, dtype=np.int64).reshape(-1, 2))
    cdef const double[::1] W = np.ascontiguousarray(edge_w, dtype=np.float64)
    cdef const double[::1] H = np.ascontiguousarray(hat_agree, dtype=np.float64)
    cdef Py_ssize_t N = A.shape[0], K = A.shape[1]
    cdef Py_ssize_t m = Ed.shape[0], q = Ne.shape[0]
    cdef long long[::1] y = np.zeros(N, dtype=np.int64)
    cdef long long[::1] best_y = np.zeros(N, dtype=np.int64)
    cdef double[::1] c = np.zeros(m)
    cdef double[::1] g = np.zeros(q)
    cdef Py_ssize_t lim_d = min(d_del, m), lim_a = min(d_add, q)
    cdef Py_ssize_t[::1] comb = np.zeros(max(lim_d, lim_a, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] comb2 = np.zeros(max(lim_a, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] dsel = np.zeros(max(lim_d, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] asel = np.zeros(max(lim_a, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] best_d = np.zeros(max(lim_d, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] best_a = np.zeros(max(lim_a, 1), dtype=np.intp)
    cdef long long[::1] deg = np.zeros(N, dtype=np.int64)
    cdef Py_ssize_t nd = 0, na = 0, best_nd = 0, best_na = 0
    cdef Py_ssize_t i, r, sd, sa, u
    cdef long long t, rem, total = 1
    cdef double base, dv, av, v, best = -INFINITY
    cdef bint ok, found = False
    for i in range(N):
        total *= K
    for t in range(total):
        rem = t
        for i in range(N):
            y[i] = rem % K
            rem //= K
        base = constant
        for i in range(N):
            base += A[i, y[i]]
        for r in range(m):
            c[r] = (W[y[Ed[r, 0]]] if y[Ed[r, 0]] == y[Ed[r, 1]] else 0.0) - H[r]
            base += c[r]
        for r in range(q):
            g[r] = W[y[Ne[r, 0]]] if y[Ne[r, 0]] == y[Ne[r, 1]] else 0.0
        if degree_cap < 0:
            dv = _best_subset(c, lim_d, -1.0, comb, dsel, &nd)
            av = _best_subset(g, lim_a, 1.0, comb, asel, &na)
            v = base + dv + av
            if v > best:
                best = v
                found = True
                best_y[:] = y
                best_nd = nd
                best_na = na
                for r in range(nd):
                    best_d[r] = dsel[r]
                for r in range(na):
                    best_a[r] = asel[r]
            continue
        # joint enumeration under the per-node degree-change cap
        for sd in range(0, lim_d + 1):
            for r in range(sd):
                comb[r] = r
            while True:
                for i in range(N):
                    deg[i] = 0
                ok = True
                dv = 0.0
                for r in range(sd):
                    deg[Ed[comb[r], 0]] += 1
                    deg[Ed[comb[r], 1]] += 1
                    dv -= c[comb[r]]
                for i in range(N):
                    if deg[i] > degree_cap:
                        ok = False
                if ok:
                    for sa in range(0, lim_a + 1):
                        for r in range(sa):
                            comb2[r] = r
                        while True:
                            ok = True
                            av = 0.0
                            for r in range(sa):
                                deg[Ne[comb2[r], 0]] += 1
                                deg[Ne[comb2[r], 1]] += 1
                                av += g[comb2[r]]
                            for i in range(N):
                                if deg[i] > degree_cap:
                                    ok = False
                            for r in range(sa):
                                deg[Ne[comb2[r], 0]] -= 1
                                deg[Ne[comb2[r], 1]] -= 1
                            if ok:
                                v = base + dv + av
                                if v > best:
                                    best = v
                                    found = True
                                    best_y[:] = y
                                    best_nd = sd
                                    best_na = sa
                                    for r in range(sd):
                                        best_d[r] = comb[r]
                                    for r in range(sa):
                                        best_a[r] = comb2[r]
                            if sa == 0 or not _next_comb(comb2, sa, q):
                                break
                if sd == 0 or not _next_comb(comb, sd, m):
                    break
    return (
        float(best),
        np.asarray(best_y).copy() if found else None,
        np.asarray(best_d)[:best_nd].astype(np.int64),
        np.asarray(best_a)[:best_na].astype(np.int64),
    )

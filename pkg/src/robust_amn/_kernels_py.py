"""Pure-Python/numpy implementations of the hot kernels.

These are the reference semantics; ``_kernels.pyx`` must agree with them
bit-for-bit on identical inputs.
"""
from itertools import combinations

import numpy as np

BACKEND = "python"


def rround_batch(ystar, estar, ks, bs, betas, labels, keep):
    """Advance ``T`` independent rounding trials by up to ``P`` phases, in place.

    Parameters
    ----------
    ystar : (N, K) float array
        Fractional node-label marginals.
    estar : (m,) float array
        Fractional edge keep values.
    ks, bs, betas : (T, P) arrays
        Pre-drawn phase randomness: label, edge bit and threshold per phase.
    labels : (T, N) int64 array, updated in place
        Current node labels, -1 where unassigned.
    keep : (T, m) int8 array, updated in place
        Current edge decisions, -1 where unassigned.

    Returns
    -------
    used : (T,) int64
        Phases consumed until the trial completed, 0 if it was already
        complete, -1 if it is still incomplete after ``P`` phases.
    """
    ystar = np.ascontiguousarray(ystar, dtype=np.float64)
    estar = np.ascontiguousarray(estar, dtype=np.float64)
    T, P = ks.shape
    m = estar.shape[0]
    used = np.where((labels >= 0).all(axis=1) & (keep >= 0).all(axis=1), 0, -1)
    e_drop = 1.0 - estar
    for p in range(P):
        live = used < 0
        if not live.any():
            break
        k = ks[:, p]
        b = bs[:, p]
        beta = betas[:, p][:, None]
        assign = (labels < 0) & (beta <= ystar[:, k].T) & live[:, None]
        labels[assign] = np.broadcast_to(k[:, None], labels.shape)[assign]
        if m:
            thr = np.where(b[:, None] == 1, estar[None, :], e_drop[None, :])
            hit = (keep < 0) & (beta <= thr) & live[:, None]
            keep[hit] = np.broadcast_to(b[:, None], keep.shape)[hit]
        done = live & (labels >= 0).all(axis=1) & (keep >= 0).all(axis=1)
        used[done] = p + 1
    return used


def _best_subset(coef, limit, sign):
    """Exhaustive max of ``sign * sum(coef[S])`` over ``|S| <= limit``; first max wins."""
    best, best_s = 0.0, ()
    n = coef.shape[0]
    for size in range(1, min(limit, n) + 1):
        for s in combinations(range(n), size):
            v = sign * float(sum(coef[list(s)]))
            if v > best:
                best, best_s = v, s
    return best, best_s


def brute_force_scan(node_coef, edges, edge_w, hat_agree, nonedges, d_del, d_add, degree_cap, constant):
    """Exhaustive maximum of the integral attacker objective.

    The objective for labels ``y``, kept-edge indicators ``e`` and added
    non-edge indicators ``a`` is::

        constant + sum_i node_coef[i, y_i]
                 + sum_E (agree_ij(y) * edge_w[y_i] - hat_agree_ij) * e_ij
                 + sum_Ebar agree_ij(y) * edge_w[y_i] * a_ij

    ``degree_cap < 0`` means no cap.  Labelings are enumerated with node 0
    varying fastest, subsets by size then lexicographically; the first maximum
    found is returned as ``(value, labels, deleted_idx, added_idx)``.
    """
    node_coef = np.asarray(node_coef, dtype=np.float64)
    N, K = node_coef.shape
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    nonedges = np.asarray(nonedges, dtype=np.int64).reshape(-1, 2)
    edge_w = np.asarray(edge_w, dtype=np.float64)
    hat_agree = np.asarray(hat_agree, dtype=np.float64)
    m, q = edges.shape[0], nonedges.shape[0]
    best = -np.inf
    best_y = None
    best_del: tuple = ()
    best_add: tuple = ()
    y = np.zeros(N, dtype=np.int64)
    del_sets = [()] + [s for size in range(1, min(d_del, m) + 1) for s in combinations(range(m), size)]
    add_sets = [()] + [s for size in range(1, min(d_add, q) + 1) for s in combinations(range(q), size)]
    for t in range(K**N):
        rem = t
        for i in range(N):
            y[i] = rem % K
            rem //= K
        c = np.where(y[edges[:, 0]] == y[edges[:, 1]], edge_w[y[edges[:, 0]]], 0.0) - hat_agree
        g = np.where(y[nonedges[:, 0]] == y[nonedges[:, 1]], edge_w[y[nonedges[:, 0]]], 0.0)
        # sequential accumulation keeps results bit-identical to the compiled kernel
        base = float(constant)
        for i in range(N):
            base += node_coef[i, y[i]]
        for v in c:
            base += v
        if degree_cap < 0:
            dv, ds = _best_subset(c, d_del, -1.0)
            av, as_ = _best_subset(g, d_add, 1.0)
            v = base + dv + av
            if v > best:
                best, best_y, best_del, best_add = v, y.copy(), ds, as_
            continue
        for ds in del_sets:
            deg = np.zeros(N, dtype=np.int64)
            if ds:
                np.add.at(deg, edges[list(ds)].ravel(), 1)
                if deg.max() > degree_cap:
                    continue
            dv = -float(sum(c[list(ds)])) if ds else 0.0
            for as_ in add_sets:
                if as_:
                    deg2 = deg.copy()
                    np.add.at(deg2, nonedges[list(as_)].ravel(), 1)
                    if deg2.max() > degree_cap:
                        continue
                av = float(sum(g[list(as_)])) if as_ else 0.0
                v = base + dv + av
                if v > best:
                    best, best_y, best_del, best_add = v, y.copy(), ds, as_
    return (
        float(best),
        best_y,
        np.array(best_del, dtype=np.int64),
        np.array(best_add, dtype=np.int64),
    )

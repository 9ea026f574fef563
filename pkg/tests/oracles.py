"""Independent reference implementations used as test oracles.

Nothing here imports the package's solvers or LP builders; each oracle is
written directly from the model definition.
"""
from itertools import combinations, product

import numpy as np


def naive_score(Wn, We, X, edges, labels):
    s = 0.0
    for i, k in enumerate(labels):
        s += float(np.dot(Wn[k], X[i]))
    for i, j in edges:
        if labels[i] == labels[j]:
            s += float(We[labels[i]])
    return s


def exhaustive_map(Wn, We, X, edges, K):
    """Best score over all K^N labelings (first maximum in product order)."""
    best, arg = -np.inf, None
    for lab in product(range(K), repeat=X.shape[0]):
        s = naive_score(Wn, We, X, edges, lab)
        if s > best + 1e-12:
            best, arg = s, np.array(lab)
    return best, arg


def attacker_value(Wn, We, X, edges, truth, labels, deleted=(), added=()):
    """Integral attacker objective written from its definition:
    Hamming loss + score(y, attacked graph) - score(truth, attacked graph restricted to E)."""
    N = X.shape[0]
    kept = [tuple(e) for e in edges if tuple(e) not in {tuple(d) for d in deleted}]
    loss = sum(int(labels[i] != truth[i]) for i in range(N))
    s_y = naive_score(Wn, We, X, kept + [tuple(a) for a in added], labels)
    s_t = naive_score(Wn, We, X, kept, truth)
    return loss + s_y - s_t


def exhaustive_attack(Wn, We, X, edges, truth, K, d_del, nonedges=(), d_add=0):
    best = -np.inf
    edges = [tuple(e) for e in edges]
    nonedges = [tuple(e) for e in nonedges]
    dsets = [s for r in range(min(d_del, len(edges)) + 1) for s in combinations(edges, r)]
    asets = [s for r in range(min(d_add, len(nonedges)) + 1) for s in combinations(nonedges, r)]
    for lab in product(range(K), repeat=X.shape[0]):
        for ds in dsets:
            for as_ in asets:
                best = max(best, attacker_value(Wn, We, X, edges, truth, lab, ds, as_))
    return best


def knn_scan(U, k):
    """O(N^2) k-nearest-neighbour scan under cosine distance, ties to lower index."""
    n = U.shape[0]
    out = []
    for i in range(n):
        cands = []
        for j in range(n):
            if j != i:
                cands.append((round(1.0 - float(U[i] @ U[j]), 12), j))
        cands.sort()
        out.append([j for _, j in cands[:k]])
    return np.array(out)


def standard_amn_qp(X, edges, truth, K, C):
    """Non-robust max-margin AMN training, assembled by hand in cvxpy.

    Loss-augmented MAP over the LP relaxation, dualized per node (t_i free)
    and per (edge, label) (alpha, beta >= 0)::

        min 1/2 ||w||^2 + C (sum_i t_i + N - sum_i w_n^{yhat_i} x_i - sum_E [yhat_i = yhat_j] w_e^{yhat_i})
        s.t. t_i - sum_{e=(i,.)} alpha_e^k - sum_{e=(.,i)} beta_e^k >= w_n^k x_i - [yhat_i = k]
             alpha_e^k + beta_e^k >= w_e^k,   w_e >= 0
    """
    import cvxpy as cp

    N, d = X.shape
    edges = np.asarray(edges).reshape(-1, 2)
    m = edges.shape[0]
    Yh = np.eye(K)[truth]
    Wn = cp.Variable((K, d))
    We = cp.Variable(K, nonneg=True)
    t = cp.Variable(N)
    cons = []
    if m:
        A = cp.Variable((m, K), nonneg=True)
        B = cp.Variable((m, K), nonneg=True)
        S1 = np.zeros((N, m))
        S2 = np.zeros((N, m))
        S1[edges[:, 0], np.arange(m)] = 1
        S2[edges[:, 1], np.arange(m)] = 1
        cons.append(cp.reshape(t, (N, 1), order="C") @ np.ones((1, K)) - S1 @ A - S2 @ B >= X @ Wn.T - Yh)
        cons.append(A + B >= np.ones((m, 1)) @ cp.reshape(We, (1, K), order="C"))
        same = truth[edges[:, 0]] == truth[edges[:, 1]]
        counts = np.bincount(truth[edges[same, 0]], minlength=K).astype(float)
        edge_true = counts @ We
    else:
        cons.append(cp.reshape(t, (N, 1), order="C") @ np.ones((1, K)) >= X @ Wn.T - Yh)
        edge_true = 0.0
    node_true = cp.sum(cp.multiply(Yh, X @ Wn.T))
    obj = 0.5 * (cp.sum_squares(Wn) + cp.sum_squares(We)) + C * (cp.sum(t) + N - node_true - edge_true)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
    return np.asarray(Wn.value), np.asarray(We.value), float(prob.value)

"""AMN scoring, Hamming loss and LP-relaxed MAP inference."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .graph import FeatureGraph, Labeling, _atomic_write
from .solvers import LP_TOL, ProgramBuilder, require_optimal, solve_lp

INTEGRALITY_TOL = 1e-6
ROUNDING_TRIALS = 100


@dataclass(frozen=True, eq=False)
class Weights:
    """Per-label node weights ``node[k]`` (length d_n) and edge weights ``edge[k] >= 0``."""

    node: np.ndarray
    edge: np.ndarray

    def __post_init__(self):
        node = np.array(self.node, dtype=float, ndmin=2)
        edge = np.array(self.edge, dtype=float).ravel()
        if edge.shape[0] != node.shape[0]:
            raise ValueError("node and edge weights disagree on K")
        if np.any(edge < 0):
            raise ValueError("edge weights must be nonnegative (associativity)")
        node.setflags(write=False)
        edge.setflags(write=False)
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "edge", edge)

    @property
    def K(self) -> int:
        return self.node.shape[0]

    @property
    def d_n(self) -> int:
        return self.node.shape[1]

    @classmethod
    def zeros(cls, K: int, d_n: int) -> "Weights":
        return cls(np.zeros((K, d_n)), np.zeros(K))

    def to_vector(self) -> np.ndarray:
        """Flat layout used by the learning QP: node weights row-major, then edge weights."""
        return np.concatenate([self.node.ravel(), self.edge])

    @classmethod
    def from_vector(cls, v, K: int, d_n: int) -> "Weights":
        v = np.asarray(v, dtype=float)
        return cls(v[: K * d_n].reshape(K, d_n), v[K * d_n : K * d_n + K])

    def norm_sq(self) -> float:
        return float((self.node**2).sum() + (self.edge**2).sum())

    def to_text(self) -> str:
        lines = [f"amn-weights v1 {self.K} {self.d_n}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.node]
        lines.append(" ".join(repr(float(v)) for v in self.edge))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Weights":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        head = rows[0]
        if len(head) != 4 or head[:2] != ["amn-weights", "v1"]:
            raise ValueError("header must be 'amn-weights v1 K d_n'")
        K, d = int(head[2]), int(head[3])
        if len(rows) != K + 2:
            raise ValueError(f"expected {K} node rows and one edge row")
        node = np.array([[float(v) for v in r] for r in rows[1 : K + 1]]).reshape(K, d)
        edge = np.array([float(v) for v in rows[K + 1]])
        return cls(node, edge)

    def save(self, path: str | Path) -> None:
        _atomic_write(path, self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "Weights":
        return cls.from_text(Path(path).read_text())


def _check_dims(w: Weights, graph: FeatureGraph):
    if w.d_n != graph.d_n:
        raise ValueError(f"weights expect d_n={w.d_n}, graph has d_n={graph.d_n}")


def node_potentials(w: Weights, graph: FeatureGraph) -> np.ndarray:
    """``(N, K)`` matrix of ``w_n^k . x_i``."""
    _check_dims(w, graph)
    return graph.X @ w.node.T


def score(w: Weights, graph: FeatureGraph, y: Labeling) -> float:
    """Unnormalised log-probability: node potentials plus same-label edge rewards."""
    _check_dims(w, graph)
    if y.K != w.K or y.n != graph.n_nodes:
        raise ValueError("labeling does not match weights/graph dimensions")
    lab = y.labels
    node = float(node_potentials(w, graph)[np.arange(graph.n_nodes), lab].sum())
    a, b = lab[graph.edges[:, 0]], lab[graph.edges[:, 1]]
    edge = float(w.edge[a][a == b].sum())
    return node + edge


def score_many(w: Weights, graph: FeatureGraph, labels: np.ndarray) -> np.ndarray:
    """Scores of a ``(T, N)`` batch of labelings."""
    phi = node_potentials(w, graph)
    labels = np.asarray(labels)
    node = phi[np.arange(graph.n_nodes)[None, :], labels].sum(axis=1)
    a, b = labels[:, graph.edges[:, 0]], labels[:, graph.edges[:, 1]]
    edge = np.where(a == b, w.edge[a], 0.0).sum(axis=1)
    return node + edge


def hamming_loss(pred: Labeling, truth: Labeling) -> float:
    if pred.n != truth.n or pred.K != truth.K:
        raise ValueError("labelings differ in size or K")
    return float(np.count_nonzero(pred.labels != truth.labels))


def accuracy(pred: Labeling, truth: Labeling) -> float:
    if pred.n != truth.n:
        raise ValueError("labelings differ in size")
    if pred.n == 0:
        return float("nan")
    return float(np.mean(pred.labels == truth.labels))


class Inference(NamedTuple):
    labeling: Labeling
    relaxation_value: float
    integral: bool


def map_lp(w: Weights, graph: FeatureGraph):
    """LP relaxation of MAP: simplex rows per node, agreement caps per (edge, label)."""
    N, K, m = graph.n_nodes, w.K, graph.n_edges
    b = ProgramBuilder()
    yv = b.add_block("y", N * K).reshape(N, K)
    zv = b.add_block("z", m * K).reshape(m, K)
    b.add_rows("simplex", N, np.repeat(np.arange(N), K), yv.ravel(), 1.0, 1.0, "=")
    rows = np.arange(m * K)
    for fam, end in (("cap_i", 0), ("cap_j", 1)):
        ys = yv[graph.edges[:, end]].ravel()
        b.add_rows(fam, m * K, np.concatenate([rows, rows]), np.concatenate([zv.ravel(), ys]),
                   np.concatenate([np.ones(m * K), -np.ones(m * K)]), 0.0, "<=")
    c = np.concatenate([node_potentials(w, graph).ravel(), np.tile(w.edge, m)])
    return b.build_lp(c, "max")


def prefer_low_labels(w: Weights, graph: FeatureGraph, labels: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Move nodes to a smaller label whenever that does not lower the score.

    Applied to an optimal labeling this only resolves ties, toward small k.
    """
    labels = np.array(labels, dtype=np.int64)
    phi = node_potentials(w, graph)
    nbrs = [[] for _ in range(graph.n_nodes)]
    for i, j in graph.edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    for i in range(graph.n_nodes):
        cur = labels[i]
        for k in range(cur):
            nb = labels[nbrs[i]] if nbrs[i] else np.zeros(0, dtype=np.int64)
            delta = phi[i, k] - phi[i, cur] + w.edge[k] * np.count_nonzero(nb == k) - w.edge[cur] * np.count_nonzero(nb == cur)
            if delta >= -eps:
                labels[i] = k
                break
    return labels


def map_inference(w: Weights, graph: FeatureGraph, trials: int = ROUNDING_TRIALS, seed: int = 0,
                  tol: float = LP_TOL) -> Inference:
    """Maximise :func:`score` over labelings via the LP relaxation.

    An integral LP optimum (within ``INTEGRALITY_TOL``) is snapped and returned
    with ``integral=True``.  Otherwise node-only randomized rounding is run
    ``trials`` times and the best-scoring labeling is returned.
    """
    N, K = graph.n_nodes, w.K
    if N == 0:
        return Inference(Labeling(np.zeros(0, dtype=np.int64), K), 0.0, True)
    lp = map_lp(w, graph)
    sol = require_optimal(solve_lp(lp, tol), "MAP relaxation")
    Y = sol.value(lp, "y").reshape(N, K)
    frac = np.abs(Y - np.round(Y)).max()
    if frac <= INTEGRALITY_TOL:
        labels = prefer_low_labels(w, graph, np.argmax(np.round(Y), axis=1))
        return Inference(Labeling(labels, K), sol.objective, True)
    Y = np.clip(Y, 0.0, 1.0)
    Y /= Y.sum(axis=1, keepdims=True)
    labels, _ = kernels.rround(Y, np.zeros(0), trials, np.random.default_rng(seed))
    scores = score_many(w, graph, labels)
    best = int(np.argmax(scores))
    return Inference(Labeling(labels[best], K), sol.objective, False)

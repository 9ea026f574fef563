"""Attributed graphs, labelings, attack budgets/plans and their file formats."""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np


class DatasetError(ValueError):
    pass


def canonical_edges(edges) -> np.ndarray:
    """Return edges as an ``(m, 2)`` int array with ``i < j``, sorted, deduplicated.

    Raises on self-loops.  The row order of the result is the edge index used
    for every tie-break in the package.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if np.any(e[:, 0] == e[:, 1]):
        i = int(e[e[:, 0] == e[:, 1]][0, 0])
        raise ValueError(f"self-loop on node {i}")
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def _edge_keys(edges: np.ndarray, n: int) -> np.ndarray:
    return edges[:, 0] * n + edges[:, 1]


@dataclass(frozen=True, eq=False)
class FeatureGraph:
    """Node features ``X`` (N x d_n, nonnegative) and an undirected edge set.

    ``edges`` is kept canonical (see :func:`canonical_edges`).  Optional
    ``edge_features`` are row-aligned with ``edges``.  The learned model
    collapses edge features to a per-label scalar, so they are carried for I/O
    and attack bookkeeping only.
    """

    X: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    edge_features: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("node features must be a 2-d array")
        if np.any(X < 0):
            i, j = np.argwhere(X < 0)[0]
            raise ValueError(f"negative feature value at node {i}, column {j}")
        raw = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        edges = canonical_edges(raw)
        if len(edges) != len(raw):
            raise ValueError("duplicate edges")
        if edges.size and (edges.min() < 0 or edges.max() >= X.shape[0]):
            raise ValueError("edge endpoint out of range")
        ef = self.edge_features
        if ef is not None:
            ef = np.asarray(ef, dtype=float).reshape(len(raw), -1)
            if np.any(ef < 0):
                raise ValueError("negative edge feature value")
            # follow the canonical reordering
            order = np.lexsort((np.sort(raw, axis=1)[:, 1], np.sort(raw, axis=1)[:, 0]))
            ef = ef[order]
            ef.setflags(write=False)
        X.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_features", ef)

    @property
    def n_nodes(self) -> int:
        return self.X.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def d_n(self) -> int:
        return self.X.shape[1]

    @property
    def d_e(self) -> int:
        return 0 if self.edge_features is None else self.edge_features.shape[1]

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def with_edges(self, edges, edge_features=None) -> "FeatureGraph":
        return FeatureGraph(self.X, edges, edge_features)

    def subgraph(self, nodes) -> "FeatureGraph":
        """Node-induced subgraph; nodes are renumbered in the given order."""
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.n_nodes, -1, dtype=np.int64)
        remap[nodes] = np.arange(nodes.size)
        a, b = remap[self.edges[:, 0]], remap[self.edges[:, 1]]
        keep = (a >= 0) & (b >= 0)
        ef = None if self.edge_features is None else self.edge_features[keep]
        return FeatureGraph(self.X[nodes], np.column_stack([a[keep], b[keep]]), ef)


@dataclass(frozen=True, eq=False)
class Labeling:
    """Integer labels in ``0..K-1`` (files and the CLI use ``1..K``)."""

    labels: np.ndarray
    K: int

    def __post_init__(self):
        y = np.asarray(self.labels, dtype=np.int64).ravel()
        if y.size and (y.min() < 0 or y.max() >= self.K):
            raise ValueError(f"label out of range for K={self.K}")
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_onehot(cls, Y) -> "Labeling":
        Y = np.asarray(Y)
        if not np.all(Y.sum(axis=1) == 1):
            raise ValueError("each node needs exactly one active label")
        return cls(Y.argmax(axis=1), Y.shape[1])

    @property
    def n(self) -> int:
        return self.labels.size

    def onehot(self) -> np.ndarray:
        Y = np.zeros((self.n, self.K))
        Y[np.arange(self.n), self.labels] = 1.0
        return Y

    def subset(self, nodes) -> "Labeling":
        return Labeling(self.labels[np.asarray(nodes, dtype=np.int64)], self.K)

    def __eq__(self, other):
        return isinstance(other, Labeling) and self.K == other.K and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class AttackBudget:
    deletions: int
    additions: int = 0
    variant: str = "D"  # "D" (delete only) or "AD"
    degree_cap: int | None = None

    def __post_init__(self):
        if self.variant not in ("D", "AD"):
            raise ValueError(f"unknown attack variant {self.variant!r}")
        if self.deletions < 0 or self.additions < 0:
            raise ValueError("budgets must be nonnegative")
        if self.variant == "D" and self.additions != 0:
            raise ValueError("delete-only budget cannot allow additions")
        if self.degree_cap is not None and self.degree_cap < 0:
            raise ValueError("degree cap must be nonnegative")

    @classmethod
    def from_fraction(cls, frac: float, n_edges: int, variant: str = "D", degree_cap=None) -> "AttackBudget":
        """Integer budget ``floor(frac * |E|)`` for deletions (and additions for AD)."""
        if not 0.0 <= frac <= 1.0:
            raise ValueError("budget fraction must lie in [0, 1]")
        d = int(math.floor(frac * n_edges + 1e-9))
        return cls(d, d if variant == "AD" else 0, variant, degree_cap)


@dataclass(frozen=True, eq=False)
class AttackPlan:
    deletions: np.ndarray
    additions: np.ndarray
    provenance: str = "lp-round"
    objective: float = float("nan")
    shortfall: int = 0
    labeling: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "deletions", canonical_edges(self.deletions))
        object.__setattr__(self, "additions", canonical_edges(self.additions))

    @classmethod
    def empty(cls, provenance="lp-round", objective=float("nan")) -> "AttackPlan":
        z = np.zeros((0, 2), dtype=np.int64)
        return cls(z, z, provenance, objective)

    @property
    def n_deletions(self) -> int:
        return len(self.deletions)

    @property
    def n_additions(self) -> int:
        return len(self.additions)

    def respects(self, budget: AttackBudget) -> bool:
        return self.n_deletions <= budget.deletions and self.n_additions <= budget.additions

    def to_text(self) -> str:
        lines = [f"# provenance={self.provenance} objective={float(self.objective)!r}"]
        lines += [f"delete {i} {j}" for i, j in self.deletions]
        lines += [f"add {i} {j}" for i, j in self.additions]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AttackPlan":
        dels, adds = [], []
        prov, obj = "file", float("nan")
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("provenance="):
                        prov = tok.split("=", 1)[1]
                    elif tok.startswith("objective="):
                        obj = float(tok.split("=", 1)[1])
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("delete", "add"):
                raise DatasetError(f"line {ln}: expected 'delete i j' or 'add i j'")
            (dels if parts[0] == "delete" else adds).append((int(parts[1]), int(parts[2])))
        return cls(dels, adds, prov, obj)


def reduced_nonedges(graph: FeatureGraph, truth: Labeling) -> np.ndarray:
    """Candidate additions: non-adjacent pairs whose true labels differ, sorted."""
    n = graph.n_nodes
    y = truth.labels
    i, j = np.triu_indices(n, k=1)
    keep = y[i] != y[j]
    i, j = i[keep], j[keep]
    if graph.n_edges:
        existing = np.isin(i * n + j, _edge_keys(graph.edges, n))
        i, j = i[~existing], j[~existing]
    return np.column_stack([i, j]).astype(np.int64)


# ---------------------------------------------------------------------------
# operations


def apply_attack(graph: FeatureGraph, plan: AttackPlan) -> FeatureGraph:
    """Return ``(E \\ deletions) U additions``; added edges get all-ones features."""
    n = graph.n_nodes
    keys = _edge_keys(graph.edges, n)
    dkeys = _edge_keys(plan.deletions, n)
    akeys = _edge_keys(plan.additions, n)
    if not np.all(np.isin(dkeys, keys)):
        bad = plan.deletions[~np.isin(dkeys, keys)][0]
        raise ValueError(f"deletion ({bad[0]}, {bad[1]}) is not an edge")
    if np.any(np.isin(akeys, keys)):
        bad = plan.additions[np.isin(akeys, keys)][0]
        raise ValueError(f"addition ({bad[0]}, {bad[1]}) is already an edge")
    if plan.additions.size and plan.additions.max() >= n:
        raise ValueError("addition endpoint out of range")
    keep = ~np.isin(keys, dkeys)
    edges = np.vstack([graph.edges[keep], plan.additions])
    ef = None
    if graph.edge_features is not None:
        ef = np.vstack([graph.edge_features[keep], np.ones((plan.n_additions, graph.d_e))])
    return FeatureGraph(graph.X, edges, ef)


class Part(NamedTuple):
    graph: FeatureGraph
    labels: Labeling
    nodes: np.ndarray


def split_train_test(graph: FeatureGraph, labeling: Labeling, ratio: float = 0.5, seed: int = 0):
    """Seeded, label-stratified node partition into induced train/test subgraphs.

    The training side gets ``round(ratio * N)`` nodes, spread over the labels
    in proportion to their sizes (largest remainders first, ties to the lower
    label), so both sides see the same class balance.  Edges crossing the
    partition are dropped.  Node ids inside each part keep their original
    relative order.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n = graph.n_nodes
    n_train = int(round(ratio * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"ratio {ratio} leaves one side of a {n}-node split empty")
    rng = np.random.default_rng(seed)
    counts = np.bincount(labeling.labels, minlength=labeling.K)
    share = ratio * counts
    take = np.floor(share).astype(np.int64)
    extra = n_train - int(take.sum())
    order = np.lexsort((np.arange(labeling.K), -(share - take)))
    take[order[:extra]] += 1
    tr = np.concatenate([rng.permutation(np.flatnonzero(labeling.labels == k))[: take[k]]
                         for k in range(labeling.K)])
    tr = np.sort(tr)
    te = np.setdiff1d(np.arange(n), tr)
    return (
        Part(graph.subgraph(tr), labeling.subset(tr), tr),
        Part(graph.subgraph(te), labeling.subset(te), te),
    )


def purify_noisy_edges(graph: FeatureGraph, labeling: Labeling, p: float, seed: int = 0) -> FeatureGraph:
    """Drop each edge joining differently-labelled nodes independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    y = labeling.labels
    noisy = y[graph.edges[:, 0]] != y[graph.edges[:, 1]]
    u = np.random.default_rng(seed).random(graph.n_edges)
    keep = ~(noisy & (u < p))
    ef = None if graph.edge_features is None else graph.edge_features[keep]
    return FeatureGraph(graph.X, graph.edges[keep], ef)


def tfidf(counts: np.ndarray) -> np.ndarray:
    """TF-IDF with natural-log idf ``1 + ln(N / (1 + df))`` and L2-normalised rows."""
    counts = np.asarray(counts, dtype=float)
    n = counts.shape[0]
    df = (counts > 0).sum(axis=0)
    idf = 1.0 + np.log(n / (1.0 + df))
    T = counts * idf
    norms = np.linalg.norm(T, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"node {int(zero[0])} has a zero feature vector; cosine distance undefined")
    return T / norms[:, None]


def knn_neighbors(unit_rows: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    """Indices of each row's k most cosine-similar other rows; ties to the lower index."""
    n = unit_rows.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    idx = np.arange(n)
    for s in range(0, n, chunk):
        S = unit_rows[s : s + chunk] @ unit_rows.T
        # rounding absorbs float noise so exact ties really tie
        D = np.round(1.0 - S, 12)
        rows = np.arange(S.shape[0])
        D[rows, s + rows] = np.inf
        for r in range(S.shape[0]):
            order = np.lexsort((idx, D[r]))
            out[s + r] = order[:k]
    return out


def build_knn_graph(features, k: int = 3, transform: str = "tfidf") -> FeatureGraph:
    """Symmetrised k-nearest-neighbour graph under cosine distance.

    Each node links to its ``k`` nearest neighbours in TF-IDF space and the
    union of the directed links becomes the undirected edge set.  The returned
    graph keeps the raw ``features`` as node features.
    """
    X = np.asarray(features, dtype=float)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} nodes, got {n}")
    if np.any(X < 0):
        raise ValueError("features must be nonnegative")
    if transform == "tfidf":
        U = tfidf(X)
    else:
        norms = np.linalg.norm(X, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise ValueError(f"node {int(zero[0])} has a zero feature vector; cosine distance undefined")
        U = X / norms[:, None]
    nbrs = knn_neighbors(U, k)
    src = np.repeat(np.arange(n), k)
    return FeatureGraph(X, canonical_edges(np.column_stack([src, nbrs.ravel()])))


# ---------------------------------------------------------------------------
# file formats


def _atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_dataset(path: str | Path) -> tuple[FeatureGraph, Labeling]:
    """Read an ``amn-dataset v1`` file.

    Layout::

        amn-dataset v1 N d_n K
        <label> <idx>:<val> <idx>:<val> ...      (N lines, label in 1..K, idx 0-based)
        edges                                    (optional section)
        <i> <j> [edge feature floats]

    Returns the graph (edgeless unless an ``edges`` section is present) and
    the labeling.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise DatasetError("empty dataset file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "amn-dataset" or head[1] != "v1":
        raise DatasetError("header must be 'amn-dataset v1 N d_n K'")
    try:
        n, d, K = (int(t) for t in head[2:])
    except ValueError as exc:
        raise DatasetError(f"bad header: {exc}") from None
    if len(lines) < 1 + n:
        raise DatasetError(f"expected {n} node lines, found {len(lines) - 1}")
    X = np.zeros((n, d))
    y = np.zeros(n, dtype=np.int64)
    for r in range(n):
        toks = lines[1 + r].split()
        lineno = r + 2
        try:
            lab = int(toks[0])
        except (ValueError, IndexError):
            raise DatasetError(f"node line {lineno}: missing integer label") from None
        if not 1 <= lab <= K:
            raise DatasetError(f"node line {lineno}: label {lab} out of range 1..{K}")
        y[r] = lab - 1
        for tok in toks[1:]:
            try:
                idx_s, val_s = tok.split(":")
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise DatasetError(f"node line {lineno}: malformed feature pair {tok!r}") from None
            if not 0 <= idx < d:
                raise DatasetError(f"node line {lineno}: feature index {idx} out of range")
            if val < 0:
                raise DatasetError(f"node line {lineno}: negative feature value {val}")
            X[r, idx] = val
    edges, efeat = [], []
    rest = lines[1 + n :]
    if rest:
        if rest[0] != "edges":
            raise DatasetError(f"unexpected content after node lines: {rest[0]!r}")
        for t, line in enumerate(rest[1:]):
            toks = line.split()
            try:
                i, j = int(toks[0]), int(toks[1])
                f = [float(v) for v in toks[2:]]
            except (ValueError, IndexError):
                raise DatasetError(f"edge line {t + 1}: malformed {line!r}") from None
            edges.append((i, j))
            efeat.append(f)
    ef = None
    if efeat and any(efeat):
        if len({len(f) for f in efeat}) != 1:
            raise DatasetError("edge feature rows have inconsistent length")
        ef = np.array(efeat)
    try:
        graph = FeatureGraph(X, np.array(edges, dtype=np.int64).reshape(-1, 2), ef)
    except ValueError as exc:
        raise DatasetError(str(exc)) from None
    return graph, Labeling(y, K)


def dataset_to_text(graph: FeatureGraph, labeling: Labeling) -> str:
    out = [f"amn-dataset v1 {graph.n_nodes} {graph.d_n} {labeling.K}"]
    for r in range(graph.n_nodes):
        nz = np.flatnonzero(graph.X[r])
        pairs = " ".join(f"{j}:{float(graph.X[r, j])!r}" for j in nz)
        out.append(f"{labeling.labels[r] + 1} {pairs}".rstrip())
    if graph.n_edges:
        out.append("edges")
        for t, (i, j) in enumerate(graph.edges):
            extra = ""
            if graph.edge_features is not None:
                extra = " " + " ".join(repr(float(v)) for v in graph.edge_features[t])
            out.append(f"{i} {j}{extra}")
    return "\n".join(out) + "\n"


def save_dataset(graph: FeatureGraph, labeling: Labeling, path: str | Path) -> None:
    _atomic_write(path, dataset_to_text(graph, labeling))


def save_labeling(labeling: Labeling, path: str | Path) -> None:
    _atomic_write(path, "".join(f"{i} {lab + 1}\n" for i, lab in enumerate(labeling.labels)))


def load_labeling(path: str | Path, K: int) -> Labeling:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    idx = np.array([int(r[0]) for r in rows])
    lab = np.array([int(r[1]) - 1 for r in rows])
    if not np.array_equal(np.sort(idx), np.arange(len(idx))):
        raise DatasetError("labeling must list every node exactly once")
    out = np.empty(len(idx), dtype=np.int64)
    out[idx] = lab
    return Labeling(out, K)

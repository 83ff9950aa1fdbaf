"""Synthetic data generators and structure-recovery metrics.

Three benchmark settings are covered: sparse Gaussian MRFs on random
connected graphs (optionally split into components), heavy-tailed t-copula
data on small disjoint cliques, and a high-dimensional low-sample Gaussian
setting scored by an FDR-truncated ROC sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DimensionMismatchError, InfeasibleDegreeError, SizeMismatchError


@dataclass
class GroundTruthGraph:
    adjacency: np.ndarray  # d x d, 0/1, symmetric, zero diagonal
    labels: np.ndarray  # component label per node
    descriptor: dict

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2


@dataclass
class Score:
    hamming: int
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    inter_fp: int


def _component_labels(adjacency: np.ndarray) -> np.ndarray:
    d = adjacency.shape[0]
    labels = np.full(d, -1, dtype=np.intp)
    current = 0
    for start in range(d):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(adjacency[u]):
                if labels[v] < 0:
                    labels[v] = current
                    stack.append(v)
        current += 1
    return labels


# ---------------------------------------------------------------------------
# Graph generators


def _random_connected_block(nodes, n_edges, rng):
    """Uniform random spanning tree plus extra distinct edges."""
    m = len(nodes)
    edges = set()
    order = rng.permutation(m)
    for i in range(1, m):
        a = order[i]
        b = order[rng.integers(0, i)]
        edges.add((min(a, b), max(a, b)))
    candidates = [(u, v) for u in range(m) for v in range(u + 1, m) if (u, v) not in edges]
    extra = n_edges - len(edges)
    if extra > 0:
        picks = rng.choice(len(candidates), size=extra, replace=False)
        for p in picks:
            edges.add(candidates[p])
    return [(nodes[u], nodes[v]) for u, v in edges]


def gen_graph(d: int, avg_degree: float, n_components: int = 1, seed=0) -> GroundTruthGraph:
    """Random graph with ``round(d * avg_degree / 2)`` edges.

    Nodes are split as evenly as possible into ``n_components`` blocks; each
    block gets a uniform random connected graph (spanning tree plus random
    extra edges), with the edge budget apportioned by block size.
    """
    if d < 2 or n_components < 1 or n_components > d:
        raise InfeasibleDegreeError("invalid node/component counts")
    rng = np.random.default_rng(seed)
    total_edges = int(round(d * avg_degree / 2.0))

    sizes = [d // n_components + (1 if i < d % n_components else 0) for i in range(n_components)]
    # Apportion edges by size share, then fix rounding while respecting each
    # block's spanning-tree minimum and complete-graph maximum.
    raw = [total_edges * s / d for s in sizes]
    counts = [int(np.floor(r)) for r in raw]
    remainders = sorted(range(n_components), key=lambda i: (raw[i] - counts[i], -sizes[i]))
    for i in reversed(remainders):
        if sum(counts) == total_edges:
            break
        counts[i] += 1
    counts = [max(c, s - 1) for c, s in zip(counts, sizes)]
    overflow = sum(counts) - total_edges
    for i in range(n_components):
        while overflow > 0 and counts[i] > sizes[i] - 1:
            counts[i] -= 1
            overflow -= 1
    if sum(counts) != total_edges:
        raise InfeasibleDegreeError(
            f"cannot place {total_edges} edges across components of sizes {sizes}"
        )
    for c, s in zip(counts, sizes):
        if c < s - 1 or c > s * (s - 1) // 2:
            raise InfeasibleDegreeError(f"block of {s} nodes cannot carry {c} edges")

    adjacency = np.zeros((d, d), dtype=np.int8)
    start = 0
    for size, n_edges in zip(sizes, counts):
        nodes = list(range(start, start + size))
        for u, v in _random_connected_block(nodes, n_edges, rng):
            adjacency[u, v] = adjacency[v, u] = 1
        start += size
    return GroundTruthGraph(
        adjacency,
        _component_labels(adjacency),
        {
            "type": "random",
            "d": d,
            "avg_degree": avg_degree,
            "n_components": n_components,
            "seed": seed,
        },
    )


def random_clique_sizes(d: int, seed=0, sizes=(3, 4)) -> list[int]:
    """A uniformly chosen composition of ``d`` into parts from ``sizes``."""
    rng = np.random.default_rng(seed)
    compositions = []

    def extend(remaining, acc):
        if remaining == 0:
            compositions.append(tuple(acc))
            return
        for s in sizes:
            if s <= remaining:
                extend(remaining - s, acc + [s])

    extend(d, [])
    if not compositions:
        raise SizeMismatchError(f"{d} cannot be partitioned into parts of sizes {sizes}")
    return list(compositions[rng.integers(0, len(compositions))])


def gen_clique_graph(d: int, clique_sizes, seed=0) -> GroundTruthGraph:
    """Disjoint complete subgraphs with the given sizes."""
    clique_sizes = list(clique_sizes)
    if sum(clique_sizes) != d:
        raise SizeMismatchError(f"clique sizes {clique_sizes} do not sum to {d}")
    adjacency = np.zeros((d, d), dtype=np.int8)
    start = 0
    for size in clique_sizes:
        block = slice(start, start + size)
        adjacency[block, block] = 1
        start += size
    np.fill_diagonal(adjacency, 0)
    return GroundTruthGraph(
        adjacency,
        _component_labels(adjacency),
        {"type": "clique", "d": d, "clique_sizes": clique_sizes, "seed": seed},
    )


# ---------------------------------------------------------------------------
# Data generators


def gmrf_precision(graph: GroundTruthGraph, rng) -> np.ndarray:
    """Diagonally dominant precision matrix supported exactly on the graph.

    Off-diagonal entries are +/-0.3 with random signs; the diagonal is the
    row absolute sum plus 0.1, which guarantees positive definiteness.
    """
    d = graph.d
    precision = np.zeros((d, d))
    for u in range(d):
        for v in range(u + 1, d):
            if graph.adjacency[u, v]:
                sign = 1.0 if rng.random() < 0.5 else -1.0
                precision[u, v] = precision[v, u] = -0.3 * sign
    diag = np.abs(precision).sum(axis=1) + 0.1
    precision[np.arange(d), np.arange(d)] = diag
    return precision


def gen_gmrf_data(graph: GroundTruthGraph, n: int, seed=0) -> np.ndarray:
    """Zero-mean Gaussian samples whose precision support equals the graph."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    precision = gmrf_precision(graph, rng)
    chol = np.linalg.cholesky(precision)
    z = rng.standard_normal((n, graph.d))
    # x = L^-T z has covariance (L L^T)^-1 = precision^-1
    return np.linalg.solve(chol.T, z.T).T


TCLIQUE_CORRELATION = 0.5


def gen_tclique_data(graph: GroundTruthGraph, n: int, df: float = 1.0, seed=0) -> np.ndarray:
    """Per-clique equicorrelated t-copula samples with Gaussianized marginals.

    Within each clique the dependence is a Student-t copula (correlation 0.5,
    shared chi-square mixing per sample); the Gaussian quantile transform of
    the pseudoobservations makes every marginal standard normal.
    """
    if df <= 0:
        raise ValueError("df must be positive")
    rng = np.random.default_rng(seed)
    d = graph.d
    out = np.empty((n, d))
    for label in range(int(graph.labels.max()) + 1):
        nodes = np.flatnonzero(graph.labels == label)
        m = nodes.size
        cov = np.full((m, m), TCLIQUE_CORRELATION)
        np.fill_diagonal(cov, 1.0)
        chol = np.linalg.cholesky(cov)
        z = rng.standard_normal((n, m)) @ chol.T
        g = rng.chisquare(df, n) / df
        u = stats.t.cdf(z / np.sqrt(g)[:, None], df)
        out[:, nodes] = special.ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    return out


# ---------------------------------------------------------------------------
# Metrics


def score(estimate: np.ndarray, truth: GroundTruthGraph) -> Score:
    """Edge-recovery metrics of an estimated adjacency against the truth.

    Precision follows the no-edges-predicted convention (1.0); inter-cluster
    false positives are predicted edges joining different true components.
    """
    estimate = np.asarray(estimate)
    if estimate.shape != truth.adjacency.shape:
        raise DimensionMismatchError(
            f"estimate is {estimate.shape}, truth is {truth.adjacency.shape}"
        )
    iu = np.triu_indices(truth.d, 1)
    est = estimate[iu].astype(bool)
    true = truth.adjacency[iu].astype(bool)
    tp = int(np.sum(est & true))
    fp = int(np.sum(est & ~true))
    fn = int(np.sum(~est & true))
    cross = truth.labels[iu[0]] != truth.labels[iu[1]]
    inter_fp = int(np.sum(est & ~true & cross))
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    return Score(
        hamming=fp + fn,
        precision=precision,
        recall=recall,
        tp=tp,
        fp=fp,
        fn=fn,
        inter_fp=inter_fp,
    )


def roc_curve(beta: np.ndarray, truth: GroundTruthGraph, fdr_cap: float = 0.01):
    """Threshold sweep down the sorted edge weights.

    Returns (fdr, tp) points, one per distinct weight value; tied weights
    enter as one block. The sweep stops after the first point whose
    empirical FDR exceeds ``fdr_cap``.
    """
    if not 0.0 < fdr_cap <= 1.0:
        raise ValueError("fdr_cap must lie in (0, 1]")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != truth.adjacency.shape:
        raise DimensionMismatchError(
            f"beta is {beta.shape}, truth is {truth.adjacency.shape}"
        )
    iu = np.triu_indices(truth.d, 1)
    weights = beta[iu]
    true = truth.adjacency[iu].astype(bool)

    points = []
    for value in np.unique(weights)[::-1]:
        predicted = weights >= value
        tp = int(np.sum(predicted & true))
        fp = int(np.sum(predicted & ~true))
        fdr = fp / (tp + fp) if tp + fp > 0 else 0.0
        points.append((fdr, tp))
        if fdr > fdr_cap:
            break
    return points


def edges_at_fdr(beta: np.ndarray, truth: GroundTruthGraph, fdr_cap: float = 0.01) -> int:
    """Most true edges recovered at empirical FDR within the cap."""
    feasible = [tp for fdr, tp in roc_curve(beta, truth, fdr_cap) if fdr <= fdr_cap]
    return max(feasible, default=0)

"""Negative log-likelihoods and gradients for the three ensemble estimators.

All objectives are functions of a symmetric nonnegative edge-weight matrix
``beta`` and a potential tensor ``W`` of shape (N, d, d) holding the fitted
copula density of every edge at every sample. Gradients are derivatives with
respect to the symmetric edge-weight parameters: each pair (u, v) = (v, u) is
one coordinate, and the returned d x d matrices are symmetric with zero
diagonal. Finite-difference tests pin this convention.

The tree-ensemble likelihood requires a connected support graph. The forest
variants lift that restriction in two ways: by averaging over an explicit
set of two-way graph cuts, or by restricting to the single partition induced
by the current sparsity pattern plus an L1 penalty. Determinant products are
accumulated in log-space throughout so overflow cannot occur.

Every term reduces to log |Q| (and its derivative matrix) on node subsets,
evaluated over the batch of per-sample weight matrices by the fused kernels
in :mod:`._backend`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _backend
from .errors import (
    AllCutsSingularError,
    BlockDisconnectedError,
    DisconnectedSupportError,
    TooLargeError,
)
from .treekernel import PIVOT_TOL

EXACT_EF_MAX_NODES = 8


@dataclass(frozen=True)
class GraphCut:
    """A two-way node partition; ``side_b`` empty marks the trivial cut."""

    side_a: tuple[int, ...]
    side_b: tuple[int, ...]
    weight: float = 0.0

    def sides(self):
        return (self.side_a, self.side_b)


def trivial_cut(d: int) -> GraphCut:
    return GraphCut(tuple(range(d)), (), 0.0)


# ---------------------------------------------------------------------------
# Partitions


def connected_components(beta: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """Component labels of the graph with edges where beta > threshold.

    Labels are 0..k-1, ordered by each component's smallest node index.
    """
    beta = np.asarray(beta)
    d = beta.shape[0]
    parent = list(range(d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u in range(d):
        for v in range(u + 1, d):
            if beta[u, v] > threshold:
                ru, rv = find(u), find(v)
                if ru != rv:
                    parent[max(ru, rv)] = min(ru, rv)

    labels = np.empty(d, dtype=np.intp)
    order = {}
    for node in range(d):
        root = find(node)
        if root not in order:
            order[root] = len(order)
        labels[node] = order[root]
    return labels


def blocks_from_labels(labels: np.ndarray) -> list[np.ndarray]:
    labels = np.asarray(labels)
    return [np.flatnonzero(labels == lab) for lab in range(int(labels.max()) + 1)]


# ---------------------------------------------------------------------------
# Shared evaluation plumbing


def _pad_subsets(subsets):
    lens = np.array([s.size for s in subsets], dtype=np.int64)
    sides = np.zeros((len(subsets), int(lens.max())), dtype=np.int64)
    for i, s in enumerate(subsets):
        sides[i, : s.size] = s
    return sides, lens


def _prior_data_stack(beta, W):
    """(N+1, d, d) weight stack: bare beta first, then beta * w^(j)."""
    return np.concatenate([beta[None], beta[None] * W], axis=0)


def _prior_data_mult(W):
    """Multipliers matching :func:`_prior_data_stack`: 1 for the prior slot."""
    n, d, _ = W.shape
    return np.concatenate([np.ones((1, d, d)), W], axis=0)


def _subset_logdets(beta, W, subsets):
    sides, lens = _pad_subsets(subsets)
    stack = _prior_data_stack(beta, W)
    return _backend.subset_logdet_batch(stack, sides, lens, PIVOT_TOL)


def _subset_grads(beta, W, subsets, coef):
    sides, lens = _pad_subsets(subsets)
    stack = _prior_data_stack(beta, W)
    mult = _prior_data_mult(W)
    return _backend.subset_grad_batch(stack, mult, coef, sides, lens, PIVOT_TOL)


def _scatter_symmetric(grad, nodes, upper):
    block = upper[: nodes.size, : nodes.size]
    grad[np.ix_(nodes, nodes)] += block + block.T


# ---------------------------------------------------------------------------
# Tree ensemble (connected support)


def et_nll(beta: np.ndarray, W: np.ndarray) -> float:
    """Tree-ensemble negative log-likelihood N log|Q(b)| - sum_j log|Q(b w^j)|."""
    n_samples = W.shape[0]
    d = beta.shape[0]
    ld, ok = _subset_logdets(beta, W, [np.arange(d)])
    if not ok[0, 0]:
        raise DisconnectedSupportError("support graph of beta is disconnected")
    return float(n_samples * ld[0, 0] - ld[0, 1:].sum())


def et_grad(beta: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Gradient of :func:`et_nll`: N M(b) - sum_j w^j * M(b w^j)."""
    n_samples = W.shape[0]
    d = beta.shape[0]
    coef = np.full((1, n_samples + 1), -1.0)
    coef[0, 0] = n_samples
    out, ok = _subset_grads(beta, W, [np.arange(d)], coef)
    if not ok[0, 0]:
        raise DisconnectedSupportError("support graph of beta is disconnected")
    grad = np.zeros_like(beta)
    _scatter_symmetric(grad, np.arange(d), out[0])
    return grad


# ---------------------------------------------------------------------------
# Forest ensemble, induced-partition variant with L1 penalty


def _multi_node_blocks(labels):
    return [(i, nodes) for i, nodes in enumerate(blocks_from_labels(labels)) if nodes.size >= 2]


def ef_lambda_objective(beta, W, labels, lam: float) -> float:
    """Per-block tree-ensemble terms plus lam * sum of all off-diagonal betas.

    The L1 term counts each symmetric pair twice (entrywise matrix norm), so
    its derivative per pair coordinate is 2 lam. Every block of ``labels``
    must be connected under beta's support.
    """
    n_samples = W.shape[0]
    value = lam * float(beta.sum())
    blocks = _multi_node_blocks(labels)
    if not blocks:
        return float(value)
    ld, ok = _subset_logdets(beta, W, [nodes for _, nodes in blocks])
    for row, (i, _) in enumerate(blocks):
        if not ok[row, 0]:
            raise BlockDisconnectedError(i)
    value += float((n_samples * ld[:, 0] - ld[:, 1:].sum(axis=1)).sum())
    return float(value)


def ef_lambda_grad(beta, W, labels, lam: float) -> np.ndarray:
    """Gradient of :func:`ef_lambda_objective`.

    Within-block entries carry the per-block tree-ensemble gradient plus
    2 lam (the pair derivative of the doubled L1 norm); entries joining
    different blocks are exactly zero.
    """
    n_samples = W.shape[0]
    grad = np.zeros_like(beta)
    blocks = _multi_node_blocks(labels)
    if not blocks:
        return grad
    coef = np.full((len(blocks), n_samples + 1), -1.0)
    coef[:, 0] = n_samples
    out, ok = _subset_grads(beta, W, [nodes for _, nodes in blocks], coef)
    for row, (i, nodes) in enumerate(blocks):
        if not ok[row, 0]:
            raise BlockDisconnectedError(i)
        m = nodes.size
        block = out[row, :m, :m]
        sym = block + block.T + 2.0 * lam
        np.fill_diagonal(sym, 0.0)
        grad[np.ix_(nodes, nodes)] = sym
    return grad


# ---------------------------------------------------------------------------
# Forest ensemble, cut-averaged variant


def _cut_rows(cuts):
    rows = []
    for c, cut in enumerate(cuts):
        for side in cut.sides():
            if len(side) >= 2:
                rows.append((c, np.asarray(side, dtype=np.intp)))
    return rows


def _cut_log_terms(beta, W, cuts):
    """Per-cut log determinant products: prior (c,) and data (c, N) arrays."""
    n_samples = W.shape[0]
    rows = _cut_rows(cuts)
    prior = np.zeros(len(cuts))
    data = np.zeros((len(cuts), n_samples))
    ld, _ = _subset_logdets(beta, W, [nodes for _, nodes in rows])
    for r, (c, _) in enumerate(rows):
        prior[c] += ld[r, 0]
        data[c] += ld[r, 1:]
    return prior, data, rows, ld


def ef_cuts_objective(beta, W, cuts) -> float:
    """Cut-averaged forest negative log-likelihood over a fixed cut set.

    Cuts with a disconnected side contribute zero weight (log-space -inf)
    and are effectively skipped; if every cut is singular the value is
    undefined and :class:`AllCutsSingularError` is raised.
    """
    n_samples = W.shape[0]
    prior, data, _, _ = _cut_log_terms(beta, W, cuts)
    lse_prior = logsumexp(prior)
    if lse_prior == -np.inf:
        raise AllCutsSingularError("every cut has a disconnected side")
    lse_data = logsumexp(data, axis=0)
    return float(n_samples * lse_prior - lse_data.sum())


def ef_cuts_grad(beta, W, cuts) -> np.ndarray:
    """Gradient of :func:`ef_cuts_objective`.

    For each pair (u, v), only cuts keeping u and v on one side contribute;
    the derivative matrices are evaluated at the corresponding restriction of
    beta (prior term) and of beta * w^(j) (data terms), and the denominators
    run over all non-singular cuts.
    """
    n_samples = W.shape[0]
    prior, data, rows, _ = _cut_log_terms(beta, W, cuts)
    lse_prior = logsumexp(prior)
    if lse_prior == -np.inf:
        raise AllCutsSingularError("every cut has a disconnected side")
    lse_data = logsumexp(data, axis=0)
    prior_weight = np.exp(prior - lse_prior)
    data_weight = np.exp(data - lse_data[None, :])

    coef = np.empty((len(rows), n_samples + 1))
    for r, (c, _) in enumerate(rows):
        coef[r, 0] = n_samples * prior_weight[c]
        coef[r, 1:] = -data_weight[c]
    out, _ = _subset_grads(beta, W, [nodes for _, nodes in rows], coef)
    grad = np.zeros_like(beta)
    for r, (_, nodes) in enumerate(rows):
        _scatter_symmetric(grad, nodes, out[r])
    return grad


# ---------------------------------------------------------------------------
# Exact forest ensemble (enumeration oracle, small d only)


def _partitions_upto(items: tuple, k: int):
    """All unordered partitions of ``items`` into at most k non-empty blocks."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions_upto(rest, k):
        for i in range(len(part)):
            yield part[:i] + [part[i] + (first,)] + part[i + 1 :]
        if len(part) < k:
            yield part + [(first,)]


def exact_ef_nll(beta, W, k: int) -> float:
    """Exact forest-ensemble negative log-likelihood by partition enumeration.

    Sums determinant products over every unordered partition of the node set
    into at most ``k`` blocks (k is an upper bound on the component count;
    singleton and empty blocks contribute factor 1). Guarded to d <= 8.
    """
    beta = np.asarray(beta, dtype=np.float64)
    n_samples = W.shape[0]
    d = beta.shape[0]
    if d > EXACT_EF_MAX_NODES:
        raise TooLargeError(f"partition enumeration limited to {EXACT_EF_MAX_NODES} nodes")

    partitions = [
        [tuple(sorted(block)) for block in part]
        for part in _partitions_upto(tuple(range(d)), k)
    ]
    needed = sorted({block for part in partitions for block in part if len(block) >= 2})
    if needed:
        ld, _ = _subset_logdets(
            beta, W, [np.asarray(block, dtype=np.intp) for block in needed]
        )
        terms = {block: ld[i] for i, block in enumerate(needed)}

    prior_terms = np.zeros(len(partitions))
    data_terms = np.zeros((len(partitions), n_samples))
    for p, part in enumerate(partitions):
        for block in part:
            if len(block) >= 2:
                prior_terms[p] += terms[block][0]
                data_terms[p] += terms[block][1:]

    lse_prior = logsumexp(prior_terms)
    lse_data = logsumexp(data_terms, axis=0)
    return float(n_samples * lse_prior - lse_data.sum())

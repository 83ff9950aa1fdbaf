"""Weighted-Laplacian machinery: Q matrices, log-determinants, derivatives.

The sum over all spanning trees of the product of edge weights equals the
determinant of the weighted Laplacian with one row and column removed (the
weighted matrix-tree identity). Everything downstream reduces to evaluating
log |Q| and its derivative matrix M on node subsets; both are served by the
batched Cholesky kernels in :mod:`._backend`.

Conventions fixed here:

* the removed index is always the highest-indexed node of the subset (the
  determinant is invariant to the choice, which tests verify);
* a singleton or empty subset has |Q| = 1, i.e. log |Q| = 0;
* a Cholesky pivot below ``PIVOT_TOL`` marks the subset as disconnected, and
  log |Q| is reported as ``-inf`` (singularity is a value, not a failure).
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from . import _backend
from .errors import SingularComponentError, TooLargeError

PIVOT_TOL = 1e-12

BRUTE_FORCE_MAX_NODES = 8


def validate_edge_weights(beta: np.ndarray) -> np.ndarray:
    """Check symmetry, nonnegativity and zero diagonal; return as float64."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
        raise ValueError("edge weights must be a square matrix")
    if not np.allclose(beta, beta.T, rtol=0.0, atol=0.0):
        raise ValueError("edge weights must be exactly symmetric")
    if np.any(beta < 0.0):
        raise ValueError("edge weights must be nonnegative")
    if np.any(np.diagonal(beta) != 0.0):
        raise ValueError("edge weights must have a zero diagonal")
    return beta


def _as_nodes(beta, nodes):
    d = beta.shape[0]
    if nodes is None:
        return np.arange(d)
    nodes = np.asarray(nodes, dtype=np.intp)
    if nodes.size == 0:
        raise ValueError("node subset must be non-empty")
    return np.sort(nodes)


def reduced_laplacian(weights: np.ndarray) -> np.ndarray:
    """Laplacian of a (..., m, m) weight stack with the last row/col removed."""
    m = weights.shape[-1]
    lap = -weights.copy()
    idx = np.arange(m)
    lap[..., idx, idx] = weights.sum(axis=-1)
    return np.ascontiguousarray(lap[..., : m - 1, : m - 1])


def q_matrix(beta: np.ndarray, nodes=None, remove=None) -> np.ndarray:
    """Laplacian of the restricted weights with row/column ``remove`` deleted.

    ``remove`` defaults to the highest-indexed node of the subset. A
    singleton subset yields the empty 0 x 0 matrix (determinant 1).
    """
    beta = np.asarray(beta, dtype=np.float64)
    nodes = _as_nodes(beta, nodes)
    if remove is None:
        remove = nodes[-1]
    if remove not in nodes:
        raise ValueError("removed node must belong to the subset")
    sub = beta[np.ix_(nodes, nodes)]
    lap = np.diag(sub.sum(axis=1)) - sub
    pos = int(np.searchsorted(nodes, remove))
    keep = [i for i in range(nodes.size) if i != pos]
    return lap[np.ix_(keep, keep)]


def logdet_batch(weight_stack: np.ndarray, tol: float = PIVOT_TOL):
    """Batched log |Q| for a (b, m, m) stack of edge-weight matrices."""
    return _backend.chol_logdet_batch(reduced_laplacian(weight_stack), tol)


def logdet_minv_batch(weight_stack: np.ndarray, tol: float = PIVOT_TOL):
    """Batched log |Q| plus the derivative matrices M.

    M has shape (b, m, m) with M[., u, v] = d log|Q| / d beta_uv for the
    symmetric edge-weight parameter, assembled from the four-case formula
    using the inverse of the same factorization: for u, v both different
    from the removed node w, M_uv = Qinv_uu + Qinv_vv - 2 Qinv_uv; border
    entries use the bare diagonal; the diagonal is zero.
    """
    b, m, _ = weight_stack.shape
    logdet, ok, inv = _backend.chol_logdet_inv_batch(reduced_laplacian(weight_stack), tol)
    mmat = np.zeros((b, m, m))
    if m >= 2:
        diag = np.diagonal(inv, axis1=1, axis2=2)
        core = diag[:, :, None] + diag[:, None, :] - 2.0 * inv
        idx = np.arange(m - 1)
        core[:, idx, idx] = 0.0
        mmat[:, : m - 1, : m - 1] = core
        mmat[:, : m - 1, m - 1] = diag
        mmat[:, m - 1, : m - 1] = diag
        mmat[~ok] = 0.0
    return logdet, ok, mmat


def log_det_q(beta: np.ndarray, nodes=None) -> float:
    """log |Q| on a node subset; ``-inf`` when the subset is disconnected."""
    beta = np.asarray(beta, dtype=np.float64)
    nodes = _as_nodes(beta, nodes)
    if nodes.size <= 1:
        return 0.0
    sub = beta[np.ix_(nodes, nodes)]
    logdet, _ = logdet_batch(sub[None])
    return float(logdet[0])


def m_matrix(beta: np.ndarray, nodes=None) -> np.ndarray:
    """Derivative matrix of log |Q| on a node subset.

    Raises :class:`SingularComponentError` when the restricted support graph
    is disconnected.
    """
    beta = np.asarray(beta, dtype=np.float64)
    nodes = _as_nodes(beta, nodes)
    if nodes.size <= 1:
        return np.zeros((nodes.size, nodes.size))
    sub = beta[np.ix_(nodes, nodes)]
    _, ok, mmat = logdet_minv_batch(sub[None])
    if not ok[0]:
        raise SingularComponentError("disconnected component has no spanning tree")
    return mmat[0]


# ---------------------------------------------------------------------------
# Brute-force oracle


def _prufer_edges(seq, m):
    degree = [1] * m
    for s in seq:
        degree[s] += 1
    edges = []
    for s in seq:
        leaf = min(i for i in range(m) if degree[i] == 1)
        edges.append((leaf, s))
        degree[leaf] -= 1
        degree[s] -= 1
    last = [i for i in range(m) if degree[i] == 1]
    edges.append((last[0], last[1]))
    return edges


@lru_cache(maxsize=None)
def _spanning_tree_edges(m: int) -> np.ndarray:
    """Edge lists of all m^(m-2) labelled trees on m nodes, via Prufer codes."""
    if m == 1:
        return np.zeros((1, 0, 2), dtype=np.int8)
    trees = [
        _prufer_edges(seq, m) for seq in itertools.product(range(m), repeat=m - 2)
    ]
    return np.array(trees, dtype=np.int8)


def brute_force_tree_sum(beta: np.ndarray, nodes=None) -> float:
    """Exact sum over spanning trees of the product of edge weights.

    Combinatorial enumeration, independent of the determinant route; guarded
    to subsets of at most ``BRUTE_FORCE_MAX_NODES`` nodes.
    """
    beta = np.asarray(beta, dtype=np.float64)
    nodes = _as_nodes(beta, nodes)
    m = nodes.size
    if m > BRUTE_FORCE_MAX_NODES:
        raise TooLargeError(f"tree enumeration limited to {BRUTE_FORCE_MAX_NODES} nodes")
    if m == 1:
        return 1.0
    sub = beta[np.ix_(nodes, nodes)]
    trees = _spanning_tree_edges(m)
    weights = sub[trees[:, :, 0], trees[:, :, 1]]
    return float(weights.prod(axis=1).sum())

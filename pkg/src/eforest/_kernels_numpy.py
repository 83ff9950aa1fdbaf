"""Pure-numpy batched Cholesky kernels (fallback backend).

Semantics match :mod:`._kernels_numba`: factorize a batch of symmetric
matrices, flag any batch element whose pivot drops below the tolerance as
singular (log-determinant -inf), and optionally return the inverse computed
from the same factorization.
"""

import numpy as np

NAME = "numpy"


def _batched_cholesky(mats, tol):
    b, m, _ = mats.shape
    lower = np.zeros_like(mats)
    logdet = np.zeros(b)
    ok = np.ones(b, dtype=bool)
    for i in range(m):
        pivot = mats[:, i, i] - np.einsum("bk,bk->b", lower[:, i, :i], lower[:, i, :i])
        ok &= pivot > tol
        safe = np.where(pivot > tol, pivot, 1.0)
        logdet += np.log(safe)
        diag = np.sqrt(safe)
        lower[:, i, i] = diag
        if i + 1 < m:
            off = mats[:, i + 1 :, i] - np.einsum(
                "bjk,bk->bj", lower[:, i + 1 :, :i], lower[:, i, :i]
            )
            lower[:, i + 1 :, i] = off / diag[:, None]
    logdet[~ok] = -np.inf
    return lower, logdet, ok


def chol_logdet_batch(mats, tol):
    """Log-determinants of a (b, m, m) batch; -inf where a pivot is < tol."""
    mats = np.asarray(mats, dtype=np.float64)
    b, m, _ = mats.shape
    if m == 0:
        return np.zeros(b), np.ones(b, dtype=bool)
    _, logdet, ok = _batched_cholesky(mats, tol)
    return logdet, ok


def chol_logdet_inv_batch(mats, tol):
    """Log-determinants plus inverses from the same factorization.

    Inverse entries of singular batch elements are zeroed; callers must
    consult the ``ok`` flags.
    """
    mats = np.asarray(mats, dtype=np.float64)
    b, m, _ = mats.shape
    if m == 0:
        return np.zeros(b), np.ones(b, dtype=bool), np.zeros((b, 0, 0))
    lower, logdet, ok = _batched_cholesky(mats, tol)
    # Forward-substitute L Y = I, then inv = Y^T Y.
    y = np.zeros_like(lower)
    for r in range(m):
        if r:
            y[:, r, :r] = -np.einsum("bk,bkj->bj", lower[:, r, :r], y[:, :r, :r])
            y[:, r, :r] /= lower[:, r, r][:, None]
        y[:, r, r] = 1.0 / lower[:, r, r]
    inv = np.matmul(y.transpose(0, 2, 1), y)
    inv[~ok] = 0.0
    return logdet, ok, inv


def _reduced_laplacians(weights, nodes):
    sub = weights[:, nodes][:, :, nodes]
    m = nodes.size
    lap = -sub
    idx = np.arange(m)
    lap[:, idx, idx] = sub.sum(axis=-1)
    return np.ascontiguousarray(lap[:, : m - 1, : m - 1])


def subset_logdet_batch(weights, sides, lens, tol):
    """Reduced-Laplacian log-determinants for node subsets x weight batch.

    Same contract as the numba backend: ``sides`` holds padded sorted node
    subsets of length >= 2 each; the highest-indexed node is removed.
    """
    weights = np.asarray(weights, dtype=np.float64)
    n_sides, batch = sides.shape[0], weights.shape[0]
    logdet = np.empty((n_sides, batch))
    ok = np.empty((n_sides, batch), dtype=bool)
    for s in range(n_sides):
        nodes = sides[s, : lens[s]]
        logdet[s], ok[s] = chol_logdet_batch(_reduced_laplacians(weights, nodes), tol)
    return logdet, ok


def subset_grad_batch(weights, mult, coef, sides, lens, tol):
    """Accumulated log-determinant derivatives over a weight batch.

    Same contract as the numba backend: returns per-subset upper-triangular
    sums of coef * mult * M and ok flags for the evaluated slots.
    """
    weights = np.asarray(weights, dtype=np.float64)
    mult = np.asarray(mult, dtype=np.float64)
    n_sides, batch = sides.shape[0], weights.shape[0]
    max_m = sides.shape[1]
    out = np.zeros((n_sides, max_m, max_m))
    ok = np.ones((n_sides, batch), dtype=bool)
    for s in range(n_sides):
        m = int(lens[s])
        nodes = sides[s, :m]
        active = coef[s] != 0.0
        if not active.any():
            continue
        _, slot_ok, inv = chol_logdet_inv_batch(
            _reduced_laplacians(weights[active], nodes), tol
        )
        ok[s, active] = slot_ok
        diag = np.diagonal(inv, axis1=1, axis2=2)
        deriv = np.zeros((inv.shape[0], m, m))
        core = diag[:, :, None] + diag[:, None, :] - 2.0 * inv
        idx = np.arange(m - 1)
        core[:, idx, idx] = 0.0
        deriv[:, : m - 1, : m - 1] = core
        deriv[:, : m - 1, m - 1] = diag
        deriv[:, m - 1, : m - 1] = diag
        deriv[~slot_ok] = 0.0
        sub_mult = mult[active][:, nodes][:, :, nodes]
        acc = np.einsum("b,bpq,bpq->pq", coef[s, active], sub_mult, deriv)
        out[s, :m, :m] = np.triu(acc, 1)
    return out, ok

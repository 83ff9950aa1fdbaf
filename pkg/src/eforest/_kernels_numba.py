"""Numba-compiled batched Cholesky kernels (default backend).

Each batch element is factorized independently inside a prange loop, so the
outputs are bitwise deterministic regardless of thread count.
"""

import warnings

import numpy as np

with warnings.catch_warnings():
    # Some hosts ship a TBB too old for numba's TBB layer; numba falls back
    # to another threading layer and warns. The fallback is fine.
    warnings.filterwarnings("ignore", message=".*TBB.*")
    from numba import njit, prange

NAME = "numba"


@njit(cache=True, parallel=True)
def _chol_logdet(mats, tol, logdet, ok):
    b, m, _ = mats.shape
    for idx in prange(b):
        lower = np.zeros((m, m))
        acc = 0.0
        good = True
        for i in range(m):
            pivot = mats[idx, i, i]
            for k in range(i):
                pivot -= lower[i, k] * lower[i, k]
            if not pivot > tol:
                good = False
                break
            acc += np.log(pivot)
            diag = np.sqrt(pivot)
            lower[i, i] = diag
            for j in range(i + 1, m):
                s = mats[idx, j, i]
                for k in range(i):
                    s -= lower[j, k] * lower[i, k]
                lower[j, i] = s / diag
        if good:
            logdet[idx] = acc
            ok[idx] = True
        else:
            logdet[idx] = -np.inf
            ok[idx] = False


@njit(cache=True, parallel=True)
def _chol_logdet_inv(mats, tol, logdet, ok, inv):
    b, m, _ = mats.shape
    for idx in prange(b):
        lower = np.zeros((m, m))
        acc = 0.0
        good = True
        for i in range(m):
            pivot = mats[idx, i, i]
            for k in range(i):
                pivot -= lower[i, k] * lower[i, k]
            if not pivot > tol:
                good = False
                break
            acc += np.log(pivot)
            diag = np.sqrt(pivot)
            lower[i, i] = diag
            for j in range(i + 1, m):
                s = mats[idx, j, i]
                for k in range(i):
                    s -= lower[j, k] * lower[i, k]
                lower[j, i] = s / diag
        if not good:
            logdet[idx] = -np.inf
            ok[idx] = False
            continue
        logdet[idx] = acc
        ok[idx] = True
        # Forward-substitute L Y = I, then inv = Y^T Y.
        y = np.zeros((m, m))
        for r in range(m):
            for c in range(r):
                s = 0.0
                for k in range(c, r):
                    s -= lower[r, k] * y[k, c]
                y[r, c] = s / lower[r, r]
            y[r, r] = 1.0 / lower[r, r]
        for p in range(m):
            for q in range(p, m):
                s = 0.0
                for r in range(q, m):
                    s += y[r, p] * y[r, q]
                inv[idx, p, q] = s
                inv[idx, q, p] = s


@njit(cache=True, parallel=True)
def _subset_logdet(weights, sides, lens, tol, logdet, ok):
    n_sides = sides.shape[0]
    batch = weights.shape[0]
    for task in prange(n_sides * batch):
        s = task // batch
        b = task % batch
        m = lens[s]
        lap = np.zeros((m - 1, m - 1))
        for i in range(m - 1):
            total = 0.0
            ni = sides[s, i]
            for k in range(m):
                total += weights[b, ni, sides[s, k]]
            lap[i, i] = total
            for j in range(m - 1):
                if j != i:
                    lap[i, j] = -weights[b, ni, sides[s, j]]
        acc = 0.0
        good = True
        for i in range(m - 1):
            pivot = lap[i, i]
            for k in range(i):
                pivot -= lap[i, k] * lap[i, k]
            if not pivot > tol:
                good = False
                break
            acc += np.log(pivot)
            diag = np.sqrt(pivot)
            lap[i, i] = diag
            for j in range(i + 1, m - 1):
                v = lap[j, i]
                for k in range(i):
                    v -= lap[j, k] * lap[i, k]
                lap[j, i] = v / diag
        if good:
            logdet[s, b] = acc
            ok[s, b] = True
        else:
            logdet[s, b] = -np.inf
            ok[s, b] = False


@njit(cache=True, parallel=True)
def _subset_grad(weights, mult, coef, sides, lens, tol, n_chunks, out, ok):
    n_sides = sides.shape[0]
    batch = weights.shape[0]
    for task in prange(n_sides * n_chunks):
        s = task // n_chunks
        chunk = task % n_chunks
        b_start = chunk * batch // n_chunks
        b_end = (chunk + 1) * batch // n_chunks
        m = lens[s]
        lap = np.zeros((m - 1, m - 1))
        y = np.zeros((m - 1, m - 1))
        qinv = np.zeros((m - 1, m - 1))
        for b in range(b_start, b_end):
            c = coef[s, b]
            if c == 0.0:
                continue
            for i in range(m - 1):
                total = 0.0
                ni = sides[s, i]
                for k in range(m):
                    total += weights[b, ni, sides[s, k]]
                lap[i, i] = total
                for j in range(m - 1):
                    if j != i:
                        lap[i, j] = -weights[b, ni, sides[s, j]]
            good = True
            for i in range(m - 1):
                pivot = lap[i, i]
                for k in range(i):
                    pivot -= lap[i, k] * lap[i, k]
                if not pivot > tol:
                    good = False
                    break
                diag = np.sqrt(pivot)
                lap[i, i] = diag
                for j in range(i + 1, m - 1):
                    v = lap[j, i]
                    for k in range(i):
                        v -= lap[j, k] * lap[i, k]
                    lap[j, i] = v / diag
            if not good:
                ok[s, b] = False
                continue
            # y = L^-1 by forward substitution, then qinv = y^T y
            for r in range(m - 1):
                for cc in range(r):
                    v = 0.0
                    for k in range(cc, r):
                        v -= lap[r, k] * y[k, cc]
                    y[r, cc] = v / lap[r, r]
                y[r, r] = 1.0 / lap[r, r]
            for p in range(m - 1):
                for q in range(p, m - 1):
                    v = 0.0
                    for r in range(q, m - 1):
                        v += y[r, p] * y[r, q]
                    qinv[p, q] = v
                    qinv[q, p] = v
            # accumulate coef * mult * dlog|Q|/dbeta into the upper triangle
            for p in range(m - 1):
                for q in range(p + 1, m):
                    if q == m - 1:
                        deriv = qinv[p, p]
                    else:
                        deriv = qinv[p, p] + qinv[q, q] - 2.0 * qinv[p, q]
                    out[s, chunk, p, q] += c * mult[b, sides[s, p], sides[s, q]] * deriv


def chol_logdet_batch(mats, tol):
    """Log-determinants of a (b, m, m) batch; -inf where a pivot is < tol."""
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    b = mats.shape[0]
    logdet = np.empty(b)
    ok = np.empty(b, dtype=np.bool_)
    _chol_logdet(mats, tol, logdet, ok)
    return logdet, ok


def chol_logdet_inv_batch(mats, tol):
    """Log-determinants plus inverses from the same factorization."""
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    b, m, _ = mats.shape
    logdet = np.empty(b)
    ok = np.empty(b, dtype=np.bool_)
    inv = np.zeros((b, m, m))
    _chol_logdet_inv(mats, tol, logdet, ok, inv)
    return logdet, ok, inv


_GRAD_CHUNKS = 8


def subset_logdet_batch(weights, sides, lens, tol):
    """Reduced-Laplacian log-determinants for node subsets x weight batch.

    ``weights`` is a (b, d, d) stack of edge-weight matrices, ``sides`` a
    padded (s, max_m) array of sorted node subsets (each of length >= 2, the
    highest-indexed node is the removed one). Returns (s, b) log-determinants
    (-inf marks a disconnected subset) and matching ok flags.
    """
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    n_sides, batch = sides.shape[0], weights.shape[0]
    logdet = np.empty((n_sides, batch))
    ok = np.empty((n_sides, batch), dtype=np.bool_)
    _subset_logdet(weights, sides, lens, tol, logdet, ok)
    return logdet, ok


def subset_grad_batch(weights, mult, coef, sides, lens, tol):
    """Accumulated log-determinant derivatives over a weight batch.

    For each subset s this computes the upper-triangular (in subset-local
    indices) sums over the batch of coef[s, b] * mult[b, u, v] * M_uv, where
    M is the derivative matrix of log |Q| at weights[b] restricted to the
    subset. Slots with zero coefficient are skipped; singular evaluated
    slots contribute nothing and clear their ok flag.
    """
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    mult = np.ascontiguousarray(mult, dtype=np.float64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    n_sides, batch = sides.shape[0], weights.shape[0]
    max_m = sides.shape[1]
    n_chunks = min(_GRAD_CHUNKS, batch)
    out = np.zeros((n_sides, n_chunks, max_m, max_m))
    ok = np.ones((n_sides, batch), dtype=np.bool_)
    _subset_grad(weights, mult, coef, sides, lens, tol, n_chunks, out, ok)
    return out.sum(axis=1), ok

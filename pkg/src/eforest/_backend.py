"""Kernel backend selection.

Batched Cholesky factorizations dominate runtime. They exist in two
implementations with identical semantics: numba-compiled loops and a pure
numpy fallback. The environment variable ``EFOREST_BACKEND`` picks one of
``auto`` (default: numba when importable), ``numba``, or ``numpy``; it is
read once at import time.
"""

import os

ENV_VAR = "EFOREST_BACKEND"


def get_backend(name: str):
    """Return the kernel module for ``name`` ('numba' or 'numpy')."""
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    if name == "numpy":
        from . import _kernels_numpy

        return _kernels_numpy
    raise ValueError(f"unknown backend {name!r}")


def _resolve():
    choice = os.environ.get(ENV_VAR, "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be auto, numba, or numpy, got {choice!r}")
    if choice in ("auto", "numba"):
        try:
            return get_backend("numba")
        except ImportError:
            if choice == "numba":
                raise
    return get_backend("numpy")


_ACTIVE = _resolve()


def backend_name() -> str:
    return _ACTIVE.NAME


def chol_logdet_batch(mats, tol):
    return _ACTIVE.chol_logdet_batch(mats, tol)


def chol_logdet_inv_batch(mats, tol):
    return _ACTIVE.chol_logdet_inv_batch(mats, tol)


def subset_logdet_batch(weights, sides, lens, tol):
    return _ACTIVE.subset_logdet_batch(weights, sides, lens, tol)


def subset_grad_batch(weights, mult, coef, sides, lens, tol):
    return _ACTIVE.subset_grad_batch(weights, mult, coef, sides, lens, tol)

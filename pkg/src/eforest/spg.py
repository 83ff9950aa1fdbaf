"""Spectral projected gradient minimization over simple box constraints.

Barzilai-Borwein step lengths, a nonmonotone line search over a short
objective memory, and componentwise projection. All fitting routines in
this package share this optimizer with the nonnegative orthant as the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpgConfig:
    max_iterations: int = 500
    alpha_min: float = 1e-10
    alpha_max: float = 1e10
    memory: int = 10
    sufficient_decrease: float = 1e-4
    tolerance: float = 1e-5
    max_backtracks: int = 30

    def __post_init__(self):
        if not 0.0 < self.alpha_min < self.alpha_max:
            raise ValueError("need 0 < alpha_min < alpha_max")
        if self.memory < 1 or self.tolerance <= 0.0:
            raise ValueError("memory must be >= 1 and tolerance positive")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise ValueError("sufficient_decrease must lie in (0, 1)")


@dataclass
class SpgResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)
    abort_reason: str | None = None


def project_nonnegative(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def spg_minimize(objective, gradient, project, x0, config: SpgConfig = SpgConfig()) -> SpgResult:
    """Minimize ``objective`` over the box defined by ``project``.

    Stops when the projected-gradient infinity norm falls below the
    configured tolerance or the iteration budget runs out. A line search
    that cannot find a finite sufficient-decrease point within the
    backtracking budget aborts with the best point found so far
    (``abort_reason`` set); callers may retry with tighter step bounds.
    """
    x = project(np.asarray(x0, dtype=np.float64))
    f = float(objective(x))
    if not np.isfinite(f):
        raise ValueError("objective must be finite at the initial point")
    g = np.asarray(gradient(x), dtype=np.float64)

    history = [f]
    trace = [f]
    best_x, best_f = x.copy(), f

    pg = project(x - g) - x
    pg_norm = float(np.abs(pg).max()) if pg.size else 0.0
    if pg_norm <= config.tolerance:
        return SpgResult(x, f, 0, True, trace)
    alpha = float(np.clip(1.0 / pg_norm, config.alpha_min, config.alpha_max))

    stale_direction = False
    for iteration in range(1, config.max_iterations + 1):
        direction = project(x - alpha * g) - x
        slope = float(np.dot(g.ravel(), direction.ravel()))
        if slope >= 0.0:
            # Not a descent direction: usually a stale Barzilai-Borwein step
            # length rather than stationarity. Reset the step once; a second
            # failure in a row means the iterate is numerically stationary.
            if stale_direction:
                return SpgResult(x, f, iteration - 1, True, trace)
            stale_direction = True
            pg = project(x - g) - x
            pg_norm = float(np.abs(pg).max())
            if pg_norm <= config.tolerance:
                return SpgResult(x, f, iteration - 1, True, trace)
            alpha = float(np.clip(1.0 / pg_norm, config.alpha_min, config.alpha_max))
            continue
        stale_direction = False

        f_max = max(history[-config.memory :])
        step = 1.0
        f_new = np.inf
        for _ in range(config.max_backtracks):
            candidate = x + step * direction
            f_new = float(objective(candidate))
            if np.isfinite(f_new) and f_new <= f_max + config.sufficient_decrease * step * slope:
                break
            step *= 0.5
        else:
            return SpgResult(
                best_x,
                best_f,
                iteration,
                False,
                trace,
                abort_reason=f"line search failed at iteration {iteration}",
            )

        x_new = x + step * direction
        g_new = np.asarray(gradient(x_new), dtype=np.float64)
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s.ravel(), y.ravel()))
        if sy > 0.0:
            alpha = float(np.clip(np.dot(s.ravel(), s.ravel()) / sy, config.alpha_min, config.alpha_max))
        else:
            alpha = config.alpha_max

        x, f, g = x_new, f_new, g_new
        history.append(f)
        trace.append(f)
        if f < best_f:
            best_x, best_f = x.copy(), f

        pg = project(x - g) - x
        if float(np.abs(pg).max()) <= config.tolerance:
            return SpgResult(x, f, iteration, True, trace)

    return SpgResult(best_x, best_f, config.max_iterations, False, trace)

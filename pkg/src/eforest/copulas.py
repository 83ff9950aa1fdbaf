"""Bivariate copula families: rank transforms, densities, CDFs, sampling, fitting.

Edge potentials of the graphical models in this package are bivariate copula
densities evaluated at rank-transformed data. This module owns the rank
transform, six parametric families (Gaussian, Student-t, Clayton, Gumbel,
Frank, independence) and the two-stage fit: Kendall-tau inversion refined by
maximum pseudo-likelihood.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConstantColumnError, ParameterError

# Arguments are clipped into [CLIP, 1 - CLIP] before density evaluation so
# quantile functions stay finite.
CLIP = 1e-6

# Correlation parameters are kept strictly inside (-1, 1).
RHO_MAX = 1.0 - 1e-7

CLAYTON_THETA_MAX = 50.0
GUMBEL_THETA_MAX = 50.0
FRANK_THETA_MAX = 35.0

# Degrees-of-freedom grid for Student-t fits; a joint (theta, df) search is
# ill-conditioned at small n.
STUDENT_T_DF_GRID = (1.0, 2.0, 4.0, 8.0)


class Family(enum.Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"
    INDEPENDENCE = "independence"


@dataclass(frozen=True)
class CopulaSpec:
    """A parametric family tag plus its dependence parameter(s).

    ``df`` is meaningful for the Student-t family only. ``fallback`` marks
    specs produced by a failed tau inversion (e.g. negative tau handed to
    Clayton), which degrade to independence.
    """

    family: Family
    theta: float = 0.0
    df: float = 4.0
    fallback: bool = False

    def __post_init__(self):
        f, t = self.family, self.theta
        if f in (Family.GAUSSIAN, Family.STUDENT_T):
            if not -1.0 < t < 1.0:
                raise ParameterError(f"{f.value}: theta must lie in (-1, 1), got {t}")
            if f is Family.STUDENT_T and not self.df > 0:
                raise ParameterError(f"student_t: df must be positive, got {self.df}")
        elif f is Family.CLAYTON:
            if not t > 0:
                raise ParameterError(f"clayton: theta must be positive, got {t}")
        elif f is Family.GUMBEL:
            if not t >= 1.0:
                raise ParameterError(f"gumbel: theta must be >= 1, got {t}")
        elif f is Family.FRANK:
            if t == 0.0 or not np.isfinite(t):
                raise ParameterError(f"frank: theta must be finite and nonzero, got {t}")


INDEPENDENCE = CopulaSpec(Family.INDEPENDENCE)


# ---------------------------------------------------------------------------
# Rank transforms


def to_pseudoobservations(data: np.ndarray) -> np.ndarray:
    """Map each column of ``data`` to averaged ranks scaled by 1/(n+1).

    Entries land strictly inside (0, 1); tied values share their averaged
    rank. Raises :class:`ConstantColumnError` for columns without any rank
    information.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("expected an n x d matrix")
    n = data.shape[0]
    if n < 2:
        raise ValueError("need at least two rows to rank")
    out = np.empty_like(data)
    for i in range(data.shape[1]):
        col = data[:, i]
        if np.min(col) == np.max(col):
            raise ConstantColumnError(i)
        out[:, i] = stats.rankdata(col, method="average") / (n + 1)
    return out


class EmpiricalCDF:
    """Empirical CDF of one variable with the n/(n+1) scaling convention.

    Evaluations are clipped into [1/(n+1), n/(n+1)], so any sample point maps
    strictly inside (0, 1).
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float).ravel()
        if values.size < 2:
            raise ValueError("need at least two observations")
        self.sorted_values = np.sort(values)
        self.n = values.size

    def __call__(self, x) -> np.ndarray:
        ranks = np.searchsorted(self.sorted_values, np.asarray(x, dtype=float), side="right")
        u = ranks / (self.n + 1)
        return np.clip(u, 1.0 / (self.n + 1), self.n / (self.n + 1))


# ---------------------------------------------------------------------------
# Log-densities
#
# Each family has a helper working on already-transformed coordinates so the
# pseudo-likelihood search can reuse the (expensive) quantile transforms.


def _gaussian_log_density_xy(x, y, rho):
    r2 = rho * rho
    return -0.5 * np.log1p(-r2) - (r2 * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * (1.0 - r2))


def _student_t_log_density_xy(x, y, rho, df):
    r2 = rho * rho
    quad = (x * x - 2.0 * rho * x * y + y * y) / (df * (1.0 - r2))
    const = (
        math.lgamma(0.5 * df + 1.0)
        + math.lgamma(0.5 * df)
        - 2.0 * math.lgamma(0.5 * (df + 1.0))
    )
    return (
        const
        - 0.5 * np.log1p(-r2)
        - 0.5 * (df + 2.0) * np.log1p(quad)
        + 0.5 * (df + 1.0) * (np.log1p(x * x / df) + np.log1p(y * y / df))
    )


def _log_clayton_sum(lu, lv, theta):
    # log(u^-theta + v^-theta - 1) without overflow; lu, lv are log u, log v.
    a = -theta * lu
    b = -theta * lv
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _clayton_log_density_uv(u, v, theta):
    lu, lv = np.log(u), np.log(v)
    return (
        np.log1p(theta)
        - (1.0 + theta) * (lu + lv)
        - (2.0 + 1.0 / theta) * _log_clayton_sum(lu, lv, theta)
    )


def _gumbel_log_density_uv(u, v, theta):
    xt, yt = -np.log(u), -np.log(v)
    lx, ly = np.log(xt), np.log(yt)
    log_s = np.logaddexp(theta * lx, theta * ly)
    big_a = np.exp(log_s / theta)
    return (
        -big_a
        + xt
        + yt
        + (theta - 1.0) * (lx + ly)
        + (1.0 / theta - 2.0) * log_s
        + np.log(big_a + theta - 1.0)
    )


def _frank_log_density_uv(u, v, theta):
    if abs(theta) < 1e-8:
        return np.zeros(np.broadcast(u, v).shape)
    g1 = -np.expm1(-theta)  # 1 - e^-theta
    denom = g1 - np.expm1(-theta * u) * np.expm1(-theta * v)
    return np.log(theta * g1) - theta * (u + v) - 2.0 * np.log(np.abs(denom))


def copula_log_density(spec: CopulaSpec, u, v) -> np.ndarray:
    """Log of the copula density, with arguments clipped to the interior."""
    u = np.clip(np.asarray(u, dtype=float), CLIP, 1.0 - CLIP)
    v = np.clip(np.asarray(v, dtype=float), CLIP, 1.0 - CLIP)
    f = spec.family
    if f is Family.INDEPENDENCE:
        return np.zeros(np.broadcast(u, v).shape)
    if f is Family.GAUSSIAN:
        return _gaussian_log_density_xy(special.ndtri(u), special.ndtri(v), spec.theta)
    if f is Family.STUDENT_T:
        x = stats.t.ppf(u, spec.df)
        y = stats.t.ppf(v, spec.df)
        return _student_t_log_density_xy(x, y, spec.theta, spec.df)
    if f is Family.CLAYTON:
        return _clayton_log_density_uv(u, v, spec.theta)
    if f is Family.GUMBEL:
        return _gumbel_log_density_uv(u, v, spec.theta)
    if f is Family.FRANK:
        return _frank_log_density_uv(u, v, spec.theta)
    raise ParameterError(f"unknown family {f}")


def copula_density(spec: CopulaSpec, u, v) -> np.ndarray:
    """Copula density c(u, v); finite and positive on the open square."""
    return np.exp(copula_log_density(spec, u, v))


# ---------------------------------------------------------------------------
# CDFs


def _binorm_cdf(x, y, rho):
    """Standard bivariate normal CDF via Owen's T function."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    denom = math.sqrt(1.0 - rho * rho)
    px = special.ndtr(x)
    py = special.ndtr(y)

    with np.errstate(divide="ignore", invalid="ignore"):
        ax = np.where(x != 0.0, (y - rho * x) / (x * denom), 0.0)
        ay = np.where(y != 0.0, (x - rho * y) / (y * denom), 0.0)
    beta = np.where(
        (x * y < 0.0) | ((x * y == 0.0) & (x + y < 0.0)), 0.5, 0.0
    )
    general = 0.5 * (px + py) - special.owens_t(x, ax) - special.owens_t(y, ay) - beta

    # Degenerate axes: Phi2(h, 0) = Phi(h)/2 - T(h, -rho/sqrt(1-rho^2));
    # at the origin Phi2(0, 0) = 1/4 + arcsin(rho)/(2 pi).
    slope = -rho / denom
    x_zero = 0.5 * py - special.owens_t(y, slope)
    y_zero = 0.5 * px - special.owens_t(x, slope)
    origin = 0.25 + math.asin(rho) / (2.0 * math.pi)

    out = np.where(x == 0.0, x_zero, general)
    out = np.where(y == 0.0, np.where(x == 0.0, origin, y_zero), out)
    return np.clip(out, 0.0, 1.0)


def _student_t_cdf_point(u, v, rho, df):
    # C(u, v) = int_0^u P(V <= v | U = t) dt with the closed-form t
    # conditional; accurate enough for finite-difference cross-checks.
    y = stats.t.ppf(v, df)
    denom = math.sqrt(1.0 - rho * rho)

    def cond(t):
        x = stats.t.ppf(t, df)
        scale = math.sqrt((df + x * x) / (df + 1.0)) * denom
        return stats.t.cdf((y - rho * x) / scale, df + 1.0)

    val, _ = integrate.quad(cond, 0.0, u, epsabs=1e-12, epsrel=1e-11, limit=200)
    return val


def copula_cdf(spec: CopulaSpec, u, v) -> np.ndarray:
    """Copula CDF C(u, v) with exact uniform-marginal boundaries."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(np.clip(u, 0.0, 1.0), np.clip(v, 0.0, 1.0))
    scalar = u.ndim == 0
    u, v = np.atleast_1d(u), np.atleast_1d(v)

    out = np.empty(u.shape, dtype=float)
    lo = (u == 0.0) | (v == 0.0)
    hi_u = v == 1.0
    hi_v = u == 1.0
    interior = ~(lo | hi_u | hi_v)
    out[lo] = 0.0
    out[hi_u & ~lo] = u[hi_u & ~lo]
    out[hi_v & ~lo & ~hi_u] = v[hi_v & ~lo & ~hi_u]

    if np.any(interior):
        ui, vi = u[interior], v[interior]
        f = spec.family
        if f is Family.INDEPENDENCE:
            val = ui * vi
        elif f is Family.GAUSSIAN:
            val = _binorm_cdf(special.ndtri(ui), special.ndtri(vi), spec.theta)
        elif f is Family.STUDENT_T:
            val = np.array(
                [_student_t_cdf_point(a, b, spec.theta, spec.df) for a, b in zip(ui, vi)]
            )
        elif f is Family.CLAYTON:
            val = np.exp(-_log_clayton_sum(np.log(ui), np.log(vi), spec.theta) / spec.theta)
        elif f is Family.GUMBEL:
            log_s = np.logaddexp(
                spec.theta * np.log(-np.log(ui)), spec.theta * np.log(-np.log(vi))
            )
            val = np.exp(-np.exp(log_s / spec.theta))
        elif f is Family.FRANK:
            th = spec.theta
            val = -np.log1p(np.expm1(-th * ui) * np.expm1(-th * vi) / np.expm1(-th)) / th
        else:
            raise ParameterError(f"unknown family {f}")
        out[interior] = np.clip(val, 0.0, 1.0)

    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# Sampling


def _sample_gaussian_pairs(rho, n, rng):
    z = rng.standard_normal((n, 2))
    y = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
    return special.ndtr(np.column_stack([z[:, 0], y]))


def _sample_student_t_pairs(rho, df, n, rng):
    z = rng.standard_normal((n, 2))
    y = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
    g = rng.chisquare(df, n) / df
    t = np.column_stack([z[:, 0], y]) / np.sqrt(g)[:, None]
    return stats.t.cdf(t, df)


def _sample_clayton_pairs(theta, n, rng):
    # Marshall-Olkin frailty: psi(t) = (1 + t)^(-1/theta), V ~ Gamma(1/theta).
    frailty = rng.gamma(1.0 / theta, 1.0, n)
    e = rng.exponential(size=(n, 2))
    return np.power(1.0 + e / frailty[:, None], -1.0 / theta)


def _sample_gumbel_pairs(theta, n, rng):
    if theta < 1.0 + 1e-9:
        return rng.random((n, 2))
    # Kanter's representation of the positive alpha-stable frailty with
    # Laplace transform exp(-t^alpha), alpha = 1/theta.
    alpha = 1.0 / theta
    w = rng.uniform(1e-12, 1.0 - 1e-12, n)
    e0 = rng.exponential(size=n)
    num = (
        np.power(np.sin(alpha * np.pi * w), alpha / (1.0 - alpha))
        * np.sin((1.0 - alpha) * np.pi * w)
        / np.power(np.sin(np.pi * w), 1.0 / (1.0 - alpha))
    )
    frailty = np.power(num / e0, (1.0 - alpha) / alpha)
    e = rng.exponential(size=(n, 2))
    return np.exp(-np.power(e / frailty[:, None], alpha))


def _sample_frank_pairs(theta, n, rng):
    # Closed-form inversion of the conditional distribution given u.
    u = rng.random(n)
    p = rng.random(n)
    g1 = np.expm1(-theta)
    v = -np.log1p(p * g1 / (np.exp(-theta * u) * (1.0 - p) + p)) / theta
    return np.column_stack([u, v])


def sample_copula(spec: CopulaSpec, n: int, seed) -> np.ndarray:
    """Draw ``n`` dependent uniform pairs; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    f = spec.family
    if f is Family.INDEPENDENCE:
        return rng.random((n, 2))
    if f is Family.GAUSSIAN:
        return _sample_gaussian_pairs(spec.theta, n, rng)
    if f is Family.STUDENT_T:
        return _sample_student_t_pairs(spec.theta, spec.df, n, rng)
    if f is Family.CLAYTON:
        return _sample_clayton_pairs(spec.theta, n, rng)
    if f is Family.GUMBEL:
        return _sample_gumbel_pairs(spec.theta, n, rng)
    if f is Family.FRANK:
        return _sample_frank_pairs(spec.theta, n, rng)
    raise ParameterError(f"unknown family {f}")


# ---------------------------------------------------------------------------
# Fitting


@lru_cache(maxsize=4096)
def _frank_tau(theta: float) -> float:
    # tau = 1 - (4/theta) (1 - D1(theta)) with D1 the first Debye function.
    debye, _ = integrate.quad(lambda t: t / math.expm1(t), 0.0, theta, limit=200)
    return 1.0 - 4.0 / theta * (1.0 - debye / theta)


def _frank_theta_from_tau(tau: float) -> float:
    sign = 1.0 if tau > 0 else -1.0
    target = abs(tau)
    hi = FRANK_THETA_MAX
    if _frank_tau(hi) <= target:
        return sign * hi
    theta = optimize.brentq(lambda t: _frank_tau(t) - target, 1e-6, hi, xtol=1e-10)
    return sign * theta


def kendall_tau_to_theta(family: Family, tau: float) -> float:
    """Family-specific method-of-moments inversion of Kendall's tau.

    Returns the dependence parameter clamped into the family's working
    domain. Raises :class:`ParameterError` when the family cannot represent
    the sign of the given tau (Clayton/Gumbel need tau > 0, Frank tau != 0).
    """
    if family in (Family.GAUSSIAN, Family.STUDENT_T):
        return float(np.clip(math.sin(math.pi * tau / 2.0), -RHO_MAX, RHO_MAX))
    if family is Family.CLAYTON:
        if tau <= 0:
            raise ParameterError("clayton cannot represent tau <= 0")
        tau = min(tau, 0.999)
        return float(np.clip(2.0 * tau / (1.0 - tau), 1e-4, CLAYTON_THETA_MAX))
    if family is Family.GUMBEL:
        if tau < 0:
            raise ParameterError("gumbel cannot represent tau < 0")
        tau = min(tau, 0.999)
        return float(np.clip(1.0 / (1.0 - tau), 1.0, GUMBEL_THETA_MAX))
    if family is Family.FRANK:
        if tau == 0:
            raise ParameterError("frank is undefined at tau = 0")
        return _frank_theta_from_tau(tau)
    raise ParameterError(f"tau inversion undefined for {family}")


def fit_copula_tau(family: Family, uv: np.ndarray) -> CopulaSpec:
    """Method-of-moments fit from sample Kendall's tau.

    Falls back to independence (with ``fallback=True``) when tau lies outside
    the family's range.
    """
    uv = np.asarray(uv, dtype=float)
    if uv.ndim != 2 or uv.shape[1] != 2 or uv.shape[0] < 10:
        raise ValueError("expected an n x 2 array with n >= 10")
    if family is Family.INDEPENDENCE:
        return INDEPENDENCE
    tau = stats.kendalltau(uv[:, 0], uv[:, 1]).statistic
    if not np.isfinite(tau):
        tau = 0.0
    try:
        theta = kendall_tau_to_theta(family, tau)
    except ParameterError:
        return replace(INDEPENDENCE, fallback=True)
    df = STUDENT_T_DF_GRID[2] if family is Family.STUDENT_T else 4.0
    return CopulaSpec(family, theta, df=df)


def _family_search_bounds(family: Family):
    if family in (Family.GAUSSIAN, Family.STUDENT_T):
        return (-RHO_MAX, RHO_MAX)
    if family is Family.CLAYTON:
        return (1e-4, CLAYTON_THETA_MAX)
    if family is Family.GUMBEL:
        return (1.0, GUMBEL_THETA_MAX)
    if family is Family.FRANK:
        return (-FRANK_THETA_MAX, FRANK_THETA_MAX)
    raise ParameterError(f"no search bounds for {family}")


def pseudo_log_likelihood(spec: CopulaSpec, uv: np.ndarray) -> float:
    """Sum of log copula densities over pseudoobservation pairs."""
    return float(np.sum(copula_log_density(spec, uv[:, 0], uv[:, 1])))


def fit_copula_mpl(family: Family, uv: np.ndarray, init: CopulaSpec) -> CopulaSpec:
    """Maximum pseudo-likelihood refinement of a tau-based initialization.

    One-dimensional bounded search over theta (per df-grid point for the
    Student-t family). Never returns a spec with lower pseudo-likelihood
    than ``init``; non-finite search results fall back to ``init``.
    """
    uv = np.asarray(uv, dtype=float)
    if family is Family.INDEPENDENCE:
        return init
    u = np.clip(uv[:, 0], CLIP, 1.0 - CLIP)
    v = np.clip(uv[:, 1], CLIP, 1.0 - CLIP)
    init_ll = pseudo_log_likelihood(init, uv)
    lo, hi = _family_search_bounds(family)

    if family is Family.GAUSSIAN:
        x, y = special.ndtri(u), special.ndtri(v)
        candidates = [(lambda th: _gaussian_log_density_xy(x, y, th), None)]
    elif family is Family.STUDENT_T:
        candidates = []
        for df in STUDENT_T_DF_GRID:
            x, y = stats.t.ppf(u, df), stats.t.ppf(v, df)
            candidates.append(
                (lambda th, x=x, y=y, df=df: _student_t_log_density_xy(x, y, th, df), df)
            )
    elif family is Family.CLAYTON:
        candidates = [(lambda th: _clayton_log_density_uv(u, v, th), None)]
    elif family is Family.GUMBEL:
        candidates = [(lambda th: _gumbel_log_density_uv(u, v, th), None)]
    elif family is Family.FRANK:
        candidates = [(lambda th: _frank_log_density_uv(u, v, th), None)]
    else:
        raise ParameterError(f"cannot fit family {family}")

    best_ll, best_spec = init_ll, init
    for log_density, df in candidates:
        def neg(th):
            val = np.sum(log_density(th))
            return -val if np.isfinite(val) else np.inf

        res = optimize.minimize_scalar(
            neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6}
        )
        theta = float(res.x)
        if family is Family.FRANK and theta == 0.0:
            theta = 1e-12
        ll = -neg(theta)
        if np.isfinite(ll) and ll > best_ll:
            best_ll = ll
            best_spec = CopulaSpec(family, theta, df=df if df is not None else init.df)
    return best_spec

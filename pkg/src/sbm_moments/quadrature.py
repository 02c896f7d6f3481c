"""Integration over the ordered time simplex 0 < s_m < ... < s_1 < t.

Integrands blow up like inverse square roots when a branch time approaches t, when two
branch times merge, or (for atomic initial data) when the last one approaches 0.  Two
estimators are provided:

``importance-mc``
    i.i.d. coordinates with density proportional to (t - s)^{-1/2}, sorted.  Cancels the
    dominant singularity at s_1 -> t; unbiased with a statistical standard error.

``qmc-substituted``
    Randomised quasi-Monte Carlo in relative gap variables with an r^2 substitution on
    each gap (see :func:`_relative_gap_points`), absorbing the weight at s -> t and all
    adjacent-gap singularities.  The standard error comes from independently scrambled
    replicates.

Samples are handed to integrands as gap arrays of shape (batch, m + 1), see
:class:`~sbm_moments.gaussian.TripleKernel`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import betaincinv, betaln
from scipy.stats import qmc

METHODS = ("importance-mc", "qmc-substituted")
QMC_REPLICATES = 16
_TINY = 1e-280


@dataclass(frozen=True)
class SimplexIntegrand:
    """``func`` maps gaps (batch, dim + 1) to nonnegative values (batch,)."""

    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    horizon: float

    @classmethod
    def from_times(cls, func, dim: int, horizon: float) -> "SimplexIntegrand":
        """Wrap a callable of the branch times s (batch, dim)."""
        return cls(lambda g: func(gaps_to_times(g, horizon)), dim, horizon)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    std_error: float
    evaluations: int
    method: str

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "evaluations": self.evaluations, "method": self.method}


def gaps_to_times(gaps, t: float) -> np.ndarray:
    gaps = np.atleast_2d(gaps)
    return t - np.cumsum(gaps[:, :-1], axis=1)


def times_to_gaps(s, t: float) -> np.ndarray:
    s = np.atleast_2d(s)
    batch = s.shape[0]
    full = np.hstack([np.full((batch, 1), t), s, np.zeros((batch, 1))])
    return -np.diff(full, axis=1)


def reference_weight_integral(n_prime: int, t: float) -> float:
    """Integral of prod (t - s_i)^{-1/2} over the ordered simplex: (2 sqrt t)^m / m!."""
    if n_prime < 0:
        raise ValueError("n_prime must be nonnegative")
    return (2.0 * math.sqrt(t)) ** n_prime / math.factorial(n_prime)


def _singular_importance_gaps(m: int, t: float, rng: np.random.Generator, size: int):
    # s = t (1 - U^2) has density (t - s)^{-1/2} / (2 sqrt t) on (0, t)
    u = np.sort(rng.random((size, m)), axis=1)
    bad = np.any(np.diff(u, axis=1) <= 0, axis=1) | (u[:, 0] <= 0) | (u[:, -1] >= 1)
    while np.any(bad):
        u[bad] = np.sort(rng.random((int(bad.sum()), m)), axis=1)
        bad = np.any(np.diff(u, axis=1) <= 0, axis=1) | (u[:, 0] <= 0) | (u[:, -1] >= 1)
    gaps = np.empty((size, m + 1))
    gaps[:, 0] = t * u[:, 0] ** 2
    gaps[:, 1:m] = t * (u[:, 1:] - u[:, :-1]) * (u[:, 1:] + u[:, :-1])
    gaps[:, m] = t * (1.0 - u[:, -1]) * (1.0 + u[:, -1])
    # weight = 1 / (m! prod_i (t - s_i)^{-1/2} / (2 sqrt t)) with t - s_i = t u_i^2
    log_w = m * math.log(2.0 * t) + np.sum(np.log(u), axis=1) - math.lgamma(m + 1)
    return gaps, np.exp(log_w)


def sample_singular_importance(n_prime: int, t: float, rng: np.random.Generator, size: int | None = None):
    """Branch times s (decreasing) drawn from the normalised weight prod (t - s_i)^{-1/2}.

    Returns ``(s, weight)`` with weight = 1 / density(s); arrays gain a leading batch
    axis when ``size`` is given.
    """
    if n_prime < 1 or not t > 0:
        raise ValueError("need n_prime >= 1 and t > 0")
    gaps, w = _singular_importance_gaps(n_prime, t, rng, 1 if size is None else size)
    s = gaps_to_times(gaps, t)
    return (s[0], float(w[0])) if size is None else (s, w)


def _relative_gap_points(u: np.ndarray, t: float):
    """Map cube points to gaps via distances from the horizon T_i = t - s_i.

    T_m = t v_m and T_i = T_{i+1} v_i with v_j ~ Beta(j/2, 1/2) by inverse CDF.  The
    Beta(j/2, .) part cancels prod T_i^{-1/2}; the (1 - v)^{-1/2} part is the r^2
    substitution on every relative gap 1 - v_i = (T_{i+1} - T_i) / T_{i+1}.
    """
    m = u.shape[1]
    a = 0.5 * np.arange(1, m + 1)
    a_full = np.broadcast_to(a, u.shape)
    v = betaincinv(a_full, 0.5, u)
    c = 1.0 - v
    # recompute 1 - v directly where the subtraction would lose digits
    near_one = v > 0.5
    c[near_one] = betaincinv(0.5, a_full[near_one], 1.0 - u[near_one])
    v = np.maximum(v, _TINY)
    c = np.maximum(c, _TINY)
    T = t * np.cumprod(v[:, ::-1], axis=1)[:, ::-1]  # T[:, i] = t * prod_{j >= i} v_j
    gaps = np.empty((u.shape[0], m + 1))
    gaps[:, 0] = T[:, 0]
    gaps[:, 1:m] = T[:, 1:] * c[:, :-1]
    gaps[:, m] = t * c[:, -1]
    log_w = m * math.log(t) + np.sum(betaln(a, 0.5)) + np.log(v) @ a + 0.5 * np.sum(np.log(c), axis=1)
    return gaps, np.exp(log_w)


def _check_finite(values: np.ndarray, gaps: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise FloatingPointError(f"integrand returned {values[i]!r} at interior gaps {gaps[i].tolist()}")


def _rounding_floor(value: float, n: int) -> float:
    return float(np.finfo(float).eps * abs(value) * math.sqrt(n))


def integrate_ordered_simplex(
    f,
    t: float,
    budget: int = 2**16,
    method: str = "importance-mc",
    seed=0,
    batch: int = 2**15,
    rel_tol: float | None = None,
) -> QuadratureResult:
    """Estimate the integral of ``f`` over the ordered simplex of horizon ``t``.

    ``f`` is a :class:`SimplexIntegrand` or a callable of gaps plus ``f.dim``.  With
    ``rel_tol`` set, importance-mc stops early once the relative standard error drops
    below it (checked after each batch); ``budget`` is always a hard cap.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    m = f.dim
    if m < 1:
        raise ValueError("the n_prime = 0 term carries no time integral")
    if budget < 2:
        raise ValueError("budget must be at least 2 evaluations")
    func = f.func if isinstance(f, SimplexIntegrand) else f
    rng = np.random.default_rng(seed)

    if method == "importance-mc":
        total = total_sq = 0.0
        n = 0
        # Welford-free two-moment accumulation is fine here: values are O(1) after weighting
        shift = None
        while n < budget:
            size = min(batch, budget - n)
            gaps, w = _singular_importance_gaps(m, t, rng, size)
            vals = func(gaps) * w
            _check_finite(vals, gaps)
            if shift is None:
                shift = float(np.mean(vals))
            d = vals - shift
            total += float(d.sum())
            total_sq += float(np.dot(d, d))
            n += size
            mean_d = total / n
            var = max(total_sq / n - mean_d**2, 0.0) * n / max(n - 1, 1)
            value = shift + mean_d
            se = math.sqrt(var / n)
            if rel_tol is not None and n >= 1024 and se <= rel_tol * abs(value):
                break
        se = math.hypot(se, _rounding_floor(value, n))
        return QuadratureResult(value, se, n, method)

    if method == "qmc-substituted":
        reps = QMC_REPLICATES
        per = max(2 ** int(math.floor(math.log2(max(budget // reps, 2)))), 2)
        seeds = rng.spawn(reps)
        estimates = np.empty(reps)
        for r in range(reps):
            sobol = qmc.Sobol(d=m, scramble=True, seed=seeds[r])
            acc = 0.0
            left = per
            while left > 0:
                size = min(batch, left)
                u = sobol.random(size)
                gaps, w = _relative_gap_points(u, t)
                vals = func(gaps) * w
                _check_finite(vals, gaps)
                acc += float(vals.sum())
                left -= size
            estimates[r] = acc / per
        value = float(estimates.mean())
        se = float(estimates.std(ddof=1) / math.sqrt(reps))
        se = math.hypot(se, _rounding_floor(value, reps * per))
        return QuadratureResult(value, se, reps * per, method)

    raise ValueError(f"unknown quadrature method {method!r}; expected one of {METHODS}")

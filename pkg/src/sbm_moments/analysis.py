"""Numerical checks of the moment envelopes, growth slopes and tail estimates.

The two-sided bounds hold with constants that exist but are not given explicitly, so
they are checked as band statements: the normalised log-ratio

    rho(n, t) = (1/n) log( m_n(t) / shape(n, t) )

must stay in a bounded band over a grid.  Its extremes are the fitted constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .engine import MomentRequest, QuadSettings, moment
from .gaussian import InitialCondition, initial_potential


@dataclass(frozen=True)
class H1:
    """Initial density bounded between K1 and K2."""

    K1: float
    K2: float
    name: str = "h1"


@dataclass(frozen=True)
class H2:
    """Finite initial measure with t^gamma-decaying heat potential (limit L, onset C_x)."""

    gamma: float
    L: float
    C_x: float
    name: str = "h2"


def compute_cx(u0: InitialCondition, x: float, t_min: float = 1e-8, t_max: float = 1e12) -> float:
    """Smallest t after which t^gamma * int p_t(x - z) u0(dz) stays within [L/2, 2L].

    Located by a logarithmic scan for the last excursion followed by bisection.  When
    the potential never leaves the band the lower scan limit ``t_min`` is returned.
    """
    gamma, L = u0.h2_parameters()

    def inside(t):
        g = t**gamma * initial_potential(u0, t, x)
        return 0.5 * L <= g <= 2.0 * L

    grid = np.geomspace(t_min, t_max, 481)
    flags = [inside(t) for t in grid]
    if not flags[-1]:
        raise ValueError("heat potential has not settled into [L/2, 2L] by t_max")
    outside = [i for i, ok in enumerate(flags) if not ok]
    if not outside:
        return t_min
    lo, hi = grid[outside[-1]], grid[outside[-1] + 1]
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if inside(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo - 1.0 < 1e-14:
            break
    return hi


def hypothesis_for(u0: InitialCondition, x: float = 0.0):
    if u0.is_constant:
        return H1(u0.level, u0.level)
    gamma, L = u0.h2_parameters()
    return H2(gamma, L, compute_cx(u0, x))


def envelope_shape(n: int, t: float, hyp) -> float:
    if isinstance(hyp, H1):
        return 1.0 + math.factorial(n) * t ** (0.5 * (n - 1))
    return math.factorial(n) * t ** (0.5 * (n - 1) - hyp.gamma)


def moment_envelope(n: int, t: float, hyp) -> tuple[float | None, float | None]:
    """(lower shape, upper shape) with unit constants; None where a bound does not apply.

    Under H2 the upper bound needs t >= C_x and the lower bound t >= max(n C_x, 1).
    """
    if n < 1 or not t > 0:
        raise ValueError("need n >= 1 and t > 0")
    shape = envelope_shape(n, t, hyp)
    if isinstance(hyp, H1):
        return shape, shape
    upper = shape if t >= hyp.C_x else None
    lower = shape if t >= max(n * hyp.C_x, 1.0) else None
    return lower, upper


def normalized_log_ratio(m_n: float, n: int, t: float, hyp) -> float:
    return math.log(m_n / envelope_shape(n, t, hyp)) / n


@dataclass
class BoundsReport:
    hypothesis: object
    rows: list = field(default_factory=list)  # dicts per grid point
    rho_min: float = math.nan
    rho_max: float = math.nan

    @property
    def band_width(self) -> float:
        return self.rho_max - self.rho_min

    @property
    def K_lower_hat(self) -> float:
        return math.exp(self.rho_min)

    @property
    def K_upper_hat(self) -> float:
        return math.exp(self.rho_max)

    def to_dict(self) -> dict:
        hyp = self.hypothesis
        return {
            "hypothesis": {k: getattr(hyp, k) for k in hyp.__dataclass_fields__},
            "rows": self.rows,
            "rho_min": self.rho_min,
            "rho_max": self.rho_max,
            "band_width": self.band_width,
            "K_lower_hat": self.K_lower_hat,
            "K_upper_hat": self.K_upper_hat,
        }


def bounds_report(u0: InitialCondition, ns: Sequence[int], ts: Sequence[float], x: float = 0.0,
                  quad: QuadSettings = QuadSettings(), hyp=None) -> BoundsReport:
    """Moments over an (n, t) grid with envelope shapes and rho; H2 points outside the
    domain of both bounds are kept in ``rows`` but excluded from the band."""
    hyp = hyp or hypothesis_for(u0, x)
    report = BoundsReport(hyp)
    rhos = []
    for n in ns:
        for t in ts:
            lower, upper = moment_envelope(n, t, hyp)
            res = moment(MomentRequest(n, float(t), x, u0, quad))
            in_domain = lower is not None and upper is not None
            rho = normalized_log_ratio(res.value, n, t, hyp)
            report.rows.append({
                "n": n, "t": float(t), "moment": res.value, "std_error": res.std_error,
                "lower_shape": lower, "upper_shape": upper, "rho": rho, "in_domain": in_domain,
            })
            if in_domain:
                rhos.append(rho)
    if rhos:
        report.rho_min, report.rho_max = min(rhos), max(rhos)
    return report


@dataclass(frozen=True)
class SlopeEstimate:
    n: int | None
    slope: float
    half_width: float
    target: float | None
    intercept: float

    @property
    def deviation(self) -> float | None:
        return None if self.target is None else self.slope - self.target

    def to_dict(self) -> dict:
        return {"n": self.n, "slope": self.slope, "half_width": self.half_width,
                "target": self.target, "intercept": self.intercept}


def fit_log_slope(points, n: int | None = None, target: float | None = None,
                  weighted: bool = False, level: float = 0.95) -> SlopeEstimate:
    """Least-squares slope of log m against log t from (t, m, err) triples.

    The half-width is the ``level`` confidence half-width of the slope; with
    ``weighted`` each point is weighted by (m / err)^2.
    """
    pts = sorted((float(t), float(m), float(e)) for t, m, e in points)
    if len(pts) < 4:
        raise ValueError("slope fit needs at least 4 points")
    t = np.array([p[0] for p in pts])
    m = np.array([p[1] for p in pts])
    if np.log10(t[-1] / t[0]) < 2.0 - 1e-12:
        raise ValueError("slope fit needs t spanning at least two decades")
    X = np.column_stack([np.ones_like(t), np.log(t)])
    y = np.log(m)
    if weighted:
        err = np.array([p[2] for p in pts])
        w = np.where(err > 0, (m / np.maximum(err, 1e-300)) ** 2, 1.0)
    else:
        w = np.ones_like(t)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = (y - X @ coef) * sw
    dof = len(t) - 2
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv((X * w[:, None]).T @ X)
    half = float(stats.t.ppf(0.5 + level / 2, dof) * math.sqrt(cov[1, 1]))
    return SlopeEstimate(n, float(coef[1]), half, target, float(coef[0]))


def slope_target(n: int, hyp) -> float:
    return 0.5 * (n - 1) - (hyp.gamma if isinstance(hyp, H2) else 0.0)


def high_moment_ratio(moments, t: float | None = None) -> list[tuple[int, float]]:
    """[(n, log m_n / (n log n))] for entries with n >= 2."""
    out = []
    for n, m in moments:
        if n < 2:
            raise ValueError("the ratio needs n >= 2 (n log n vanishes at n = 1)")
        out.append((int(n), math.log(m) / (n * math.log(n))))
    return out


def fit_k_star(moments, t: float) -> float:
    """max over n of [m_n / (1 + n! t^{(n-1)/2})]^{1/n}."""
    return max((m / (1.0 + math.factorial(n) * t ** (0.5 * (n - 1)))) ** (1.0 / n) for n, m in moments)


def default_alpha(t: float, K_star: float) -> float:
    return 1.0 / (2.0 * K_star * math.sqrt(t))


def tail_upper_bound(z, t: float, K_star: float, alpha: float | None = None):
    """Exponential Markov bound e^{-alpha z} [e^{alpha K*} + (sqrt t (1 - alpha K* sqrt t))^{-1}]."""
    if not t > 0 or not K_star > 0:
        raise ValueError("t and K_star must be positive")
    a = default_alpha(t, K_star) if alpha is None else float(alpha)
    q = a * K_star * math.sqrt(t)
    if not 0 < q < 1:
        raise ValueError(f"need 0 < alpha K* sqrt(t) < 1 for the moment series to converge, got {q:g}")
    bracket = math.exp(a * K_star) + 1.0 / (math.sqrt(t) * (1.0 - q))
    out = np.exp(-a * np.asarray(z, dtype=float)) * bracket
    return float(out) if np.ndim(out) == 0 else out


def paley_zygmund_lower(m_n: float, m_2n: float, n: int, theta: float = 0.5) -> tuple[float, float]:
    """(threshold, bound) with P(u > theta m_n^{1/n}) >= (1 - theta^n)^2 m_n^2 / m_2n."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if not m_2n > 0:
        raise ValueError("m_2n must be positive")
    return theta * m_n ** (1.0 / n), (1.0 - theta**n) ** 2 * m_n * m_n / m_2n


@dataclass(frozen=True)
class ProbePoint:
    t: float
    z: float
    value: float
    censored: bool

    def to_dict(self) -> dict:
        return {"t": self.t, "z": self.z, "value": self.value, "censored": self.censored}


def large_deviation_probe(ts, sigma: float, probability: Callable[[float, float], tuple[float, float]],
                          hypothesis: str = "h1") -> list[ProbePoint]:
    """t^{1/2 - sigma} log P(u_t(x) > t^sigma) along ``ts``.

    ``probability(t, z)`` returns (estimate, resolution).  A zero estimate is censored:
    the point is reported at the resolution (e.g. 1 / replicates) and flagged.
    """
    if hypothesis == "h1" and not sigma > 0.5:
        raise ValueError("sigma must exceed 1/2 under H1")
    if hypothesis == "h2" and not 0.5 < sigma < 1.5:
        raise ValueError("sigma must lie in (1/2, 3/2) under H2")
    out = []
    for t in ts:
        z = t**sigma
        p, resolution = probability(t, z)
        censored = p <= 0
        val = math.log(resolution if censored else p)
        out.append(ProbePoint(float(t), float(z), t ** (0.5 - sigma) * val, censored))
    return out


def upper_bound_probability(K_star_at: Callable[[float], float]):
    """Probability callable for :func:`large_deviation_probe` from the Markov bound,
    capped at 1; ``K_star_at(t)`` supplies the fitted constant."""
    def prob(t, z):
        return min(1.0, tail_upper_bound(z, t, K_star_at(t))), 0.0
    return prob


@dataclass
class TailReport:
    t: float
    x: float
    K_star_hat: float
    alpha: float
    rows: list = field(default_factory=list)
    pz_points: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"t": self.t, "x": self.x, "K_star_hat": self.K_star_hat, "alpha": self.alpha,
                "rows": self.rows, "pz_points": self.pz_points, "failures": self.failures}


def tail_report(moments: dict, t: float, x: float, empirical_rows, replicates: int,
                theta: float = 0.5, pz_orders=(1, 2, 3), k_orders=(1, 2, 3, 4, 5),
                min_count: int = 5, n_sigma: float = 3.0) -> TailReport:
    """Compare empirical exceedance frequencies with the Markov upper bound and the
    Paley-Zygmund lower points.

    ``moments`` maps n to m_n and must contain ``k_orders`` plus n and 2n for every
    Paley-Zygmund order.  ``empirical_rows`` are (z, freq, se, count) tuples; a row is
    resolvable when its exceedance count is at least ``min_count``.  Comparisons allow
    ``n_sigma`` binomial standard errors, with the error at the bound itself used for
    the lower side so that a zero frequency is not over-trusted.
    """
    K = fit_k_star([(n, moments[n]) for n in k_orders], t)
    alpha = default_alpha(t, K)
    rep = TailReport(t, x, K, alpha)
    zs = np.array([r[0] for r in empirical_rows])
    freqs = np.array([r[1] for r in empirical_rows])
    for z, p, se, count in empirical_rows:
        z, p, se, count = float(z), float(p), float(se), int(count)
        ub = tail_upper_bound(z, t, K)
        resolvable = count >= min_count
        ok = bool(p <= ub + n_sigma * se)
        rep.rows.append({"z": z, "frequency": p, "std_error": se, "count": count,
                         "upper_bound": ub, "resolvable": resolvable, "below_upper": ok})
        if resolvable and not ok:
            rep.failures.append(f"frequency {p:.4g} at z={z:g} exceeds the Markov bound {ub:.4g}")
    for n in pz_orders:
        thr, bound = paley_zygmund_lower(moments[n], moments[2 * n], n, theta)
        # empirical frequency at the threshold, by the nearest grid point at or above it
        idx = np.searchsorted(zs, thr)
        if idx >= len(zs):
            rep.failures.append(f"Paley-Zygmund threshold {thr:g} beyond the tail grid")
            continue
        p = float(freqs[idx])
        se = math.sqrt(max(bound * (1.0 - bound), p * (1.0 - p)) / replicates)
        ok = bool(bound <= p + n_sigma * se)
        rep.pz_points.append({"n": n, "threshold": thr, "bound": bound, "z_grid": float(zs[idx]),
                              "frequency": p, "std_error": se, "above_lower": ok})
        if not ok:
            rep.failures.append(f"frequency {p:.4g} at z={zs[idx]:g} below the Paley-Zygmund point {bound:.4g} (n={n})")
    return rep

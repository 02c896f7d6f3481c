import math

import numpy as np
import pytest

from sbm_moments.analysis import (
    H1,
    H2,
    bounds_report,
    compute_cx,
    fit_k_star,
    fit_log_slope,
    high_moment_ratio,
    hypothesis_for,
    large_deviation_probe,
    normalized_log_ratio,
    paley_zygmund_lower,
    slope_target,
    tail_report,
    tail_upper_bound,
    moment_envelope,
    upper_bound_probability,
)
from sbm_moments.engine import QuadSettings
from sbm_moments.gaussian import InitialCondition

FLAT = H1(1.0, 1.0)


def test_envelope_examples():
    assert moment_envelope(1, 7.0, FLAT) == (2.0, 2.0)
    assert moment_envelope(3, 100.0, FLAT) == (601.0, 601.0)
    h2 = H2(0.5, 1 / math.sqrt(2 * math.pi), 0.5)
    assert moment_envelope(2, 3.0, h2) == (2.0, 2.0)
    assert moment_envelope(2, 0.6, h2) == (None, 2.0)  # lower bound needs t >= max(2 C_x, 1)
    assert moment_envelope(2, 0.1, h2) == (None, None)
    with pytest.raises(ValueError):
        moment_envelope(0, 1.0, FLAT)


def test_rho_of_first_moment():
    assert normalized_log_ratio(1.0, 1, 5.0, FLAT) == pytest.approx(math.log(0.5))


def test_cx_for_a_dirac():
    # t^{1/2} p_t(d) = e^{-d^2 / 2t} / sqrt(2 pi) enters [L/2, 2L] at t = d^2 / (2 ln 2)
    assert compute_cx(InitialCondition.dirac(0.0), 1.0) == pytest.approx(1 / (2 * math.log(2)), rel=1e-12)
    assert compute_cx(InitialCondition.dirac(1.0), 4.0) == pytest.approx(9 / (2 * math.log(2)), rel=1e-12)
    assert compute_cx(InitialCondition.dirac(0.0), 0.0) == 1e-8
    hyp = hypothesis_for(InitialCondition.dirac(0.0), 1.0)
    assert isinstance(hyp, H2) and hyp.gamma == 0.5
    with pytest.raises(ValueError):
        compute_cx(InitialCondition.constant(1.0), 0.0)


def test_slope_of_exact_power_law():
    pts = [(t, 3.0 * t, 0.0) for t in (1.0, 10.0, 100.0, 1000.0)]
    est = fit_log_slope(pts, n=3, target=1.0)
    assert est.slope == pytest.approx(1.0, abs=1e-12) and est.half_width < 1e-10
    assert est.intercept == pytest.approx(math.log(3.0))
    w = fit_log_slope([(t, t**0.5, 0.01 * t**0.5) for t in (1, 10, 100, 1000, 1e4)], weighted=True)
    assert w.slope == pytest.approx(0.5, abs=1e-12)


def test_slope_inputs_rejected():
    with pytest.raises(ValueError):
        fit_log_slope([(1, 1, 0), (10, 2, 0), (100, 3, 0)])
    with pytest.raises(ValueError):
        fit_log_slope([(1, 1, 0), (2, 2, 0), (5, 3, 0), (50, 4, 0)])


def test_slope_targets():
    assert slope_target(3, FLAT) == 1.0
    assert slope_target(3, H2(0.5, 0.4, 0.7)) == 0.5


def test_high_moment_ratio():
    ratios = high_moment_ratio([(n, math.factorial(n)) for n in (2, 10, 100)])
    assert ratios[0] == (2, pytest.approx(math.log(2) / (2 * math.log(2))))
    assert ratios[0][1] < ratios[1][1] < ratios[2][1] < 1.0
    with pytest.raises(ValueError):
        high_moment_ratio([(1, 1.0)])


def test_tail_bound_shape():
    t, K = 1.0, 0.8
    zs = np.linspace(0, 10, 41)
    b = tail_upper_bound(zs, t, K)
    assert b[0] >= 1.0 and np.isfinite(b[0])
    assert np.all(np.diff(b) < 0)
    slope = np.diff(np.log(b)) / np.diff(zs)
    assert np.allclose(slope, -1 / (2 * K * math.sqrt(t)))
    assert isinstance(tail_upper_bound(1.0, t, K), float)


def test_tail_bound_precondition():
    with pytest.raises(ValueError, match="alpha"):
        tail_upper_bound(1.0, 4.0, 1.0, alpha=0.5)
    assert tail_upper_bound(1.0, 4.0, 1.0, alpha=0.1) > 0


def test_paley_zygmund():
    thr, b = paley_zygmund_lower(1.0, 1 + 1 / math.sqrt(math.pi), 1, 0.5)
    assert thr == 0.5 and b == pytest.approx(0.1598, abs=1e-4)
    assert paley_zygmund_lower(1.0, 2.0, 1, 0.999999)[1] < 1e-10
    assert paley_zygmund_lower(2.0, 4.0, 1, 1e-9)[1] <= 1.0
    with pytest.raises(ValueError):
        paley_zygmund_lower(1.0, 2.0, 1, 1.0)


def test_k_star_fit():
    # moments exactly equal to the H1 shape give K* = 1
    t = 2.0
    moms = [(n, 1 + math.factorial(n) * t ** ((n - 1) / 2)) for n in range(1, 6)]
    assert fit_k_star(moms, t) == pytest.approx(1.0)


def test_probe():
    # exact exponential tail exp(-z / sqrt t) gives -1 for every t
    pts = large_deviation_probe([1.0, 4.0, 100.0], 1.0, lambda t, z: (math.exp(-z / math.sqrt(t)), 0.0))
    assert [p.value for p in pts] == pytest.approx([-1.0, -1.0, -1.0])
    assert pts[1].z == 4.0
    cens = large_deviation_probe([4.0], 1.0, lambda t, z: (0.0, 1e-3))[0]
    assert cens.censored and cens.value == pytest.approx(0.5 * math.log(1e-3))
    with pytest.raises(ValueError):
        large_deviation_probe([1.0], 0.5, lambda t, z: (0.5, 0.0))
    with pytest.raises(ValueError):
        large_deviation_probe([1.0], 1.6, lambda t, z: (0.5, 0.0), hypothesis="h2")
    ub = large_deviation_probe([16.0, 64.0, 256.0], 1.0, upper_bound_probability(lambda t: 1.0))
    assert max(p.value for p in ub) <= 0.0


def test_tail_report_flags_violations():
    moms = {1: 1.0, 2: 1.56, 3: 3.19, 4: 7.94, 5: 23.2, 6: 77.4}
    fine = [(0.0, 1.0, 0.0, 1000), (1.0, 0.4, 0.015, 400), (3.0, 0.01, 0.003, 10)]
    rep = tail_report(moms, 1.0, 0.0, fine, 1000)
    assert rep.failures == [] and len(rep.pz_points) == 3
    loud = [(0.0, 1.0, 0.0, 1000), (1.0, 0.4, 0.015, 400), (30.0, 0.5, 0.01, 500)]
    assert any("Markov" in f for f in tail_report(moms, 1.0, 0.0, loud, 1000).failures)
    empty = [(0.0, 1.0, 0.0, 1000), (0.3, 0.0, 0.0, 0), (1.0, 0.0, 0.0, 0)]
    assert any("Paley" in f for f in tail_report(moms, 1.0, 0.0, empty, 1000).failures)


def test_small_bounds_report():
    rep = bounds_report(InitialCondition.constant(1.0), [1, 2], [0.1, 1.0, 10.0], quad=QuadSettings(budget=2048))
    assert len(rep.rows) == 6 and all(r["in_domain"] for r in rep.rows)
    assert rep.rho_min <= rep.rho_max and rep.K_lower_hat == pytest.approx(math.exp(rep.rho_min))
    h2 = bounds_report(InitialCondition.dirac(0.0), [2], [0.1, 0.5, 2.0, 8.0], x=1.0, quad=QuadSettings(budget=2048))
    assert [r["in_domain"] for r in h2.rows] == [False, False, True, True]
    assert "band_width" in h2.to_dict()

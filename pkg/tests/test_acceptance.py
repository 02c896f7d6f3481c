"""Acceptance battery: one PASS/FAIL line per criterion.

The lines are echoed in pytest's terminal summary; running this file directly prints
them as they are produced.  Criterion 6 contains a part that fails on the exact
moments themselves (see ``test_c6_slopes``); it is marked as an expected failure so
the line stays red without turning the suite red.
"""
import functools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import random_graph, tensor_quadrature
from sbm_moments.analysis import (
    bounds_report,
    fit_log_slope,
    hypothesis_for,
    slope_target,
    tail_report,
)
from sbm_moments.engine import MomentRequest, QuadSettings, closed_form_moment, moment
from sbm_moments.gaussian import Fixed, HeatKernelFactor, InitialCondition, KernelGraph, Var, heat_kernel, spatial_integral
from sbm_moments.indexing import enumerate_triples, triple_count_closed_form
from sbm_moments.particles import (
    SimulationConfig,
    empirical_tail,
    richardson_weights,
    sample_replicates,
    smoothed_mean,
    smoothed_second_moment,
)
from sbm_moments.quadrature import SimplexIntegrand, integrate_ordered_simplex, reference_weight_integral

FLAT = InitialCondition.constant(1.0)
DIRAC = InitialCondition.dirac(0.0)
SIM_N = 20_000
SIM_SEED = 0


def record(k: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


@functools.lru_cache(maxsize=None)
def flat_sample():
    """10^4 replicates at N = 2e4, t = 1, x = 0 from a unit density; (uhat, mass, roots/N, seconds)."""
    cfg = SimulationConfig(SIM_N, 1.0, replicates=10_000, seed=SIM_SEED)
    start = time.perf_counter()
    uhat, mass, aborted = sample_replicates(cfg, FLAT, 0.0)
    assert aborted == 0
    return uhat, mass, 2.0 * cfg.window, time.perf_counter() - start


def test_c1_enumeration():
    start = time.perf_counter()
    bad = []
    for n in range(1, 8):
        for m in range(n):
            got = len(enumerate_triples(n, m))
            if got != triple_count_closed_form(n, m):
                bad.append((n, m, got))
    named = {(4, 3): 18, (5, 4): 180, (6, 5): 2700, (7, 6): 56700}
    named_ok = all(len(enumerate_triples(n, m)) == c for (n, m), c in named.items())
    secs = time.perf_counter() - start
    ok = not bad and named_ok and secs < 30
    record(1, "enumeration matches the closed-form count for n <= 7", ok,
           f"mismatches={bad}, named counts ok={named_ok}, {secs:.1f}s (limit 30s)")
    assert ok


def test_c2_gaussian_calculus():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_graph = 0.0
    for _ in range(200):
        g = random_graph(rng)
        worst_graph = max(worst_graph, abs(spatial_integral(g) / tensor_quadrature(g) - 1.0))
    worst_id = 0.0
    for _ in range(1000):
        s, t = rng.uniform(0.05, 5.0, 2)
        a, b, y = rng.uniform(-3.0, 3.0, 3)
        g = KernelGraph(1, [HeatKernelFactor(s, Fixed(a), Var(1)), HeatKernelFactor(t, Var(1), Fixed(b))])
        worst_id = max(worst_id, abs(spatial_integral(g) / heat_kernel(s + t, a - b) - 1.0))
        lhs = heat_kernel(s, y - a) * heat_kernel(t, y - b)
        rhs = heat_kernel(s + t, a - b) * heat_kernel(s * t / (s + t), y - (t * a + s * b) / (s + t))
        worst_id = max(worst_id, abs(lhs / rhs - 1.0))
    secs = time.perf_counter() - start
    ok = worst_graph <= 1e-6 and worst_id <= 1e-12 and secs < 60
    record(2, "kernel networks vs tensor quadrature, semigroup and product identities", ok,
           f"worst graph rel err {worst_graph:.1e} (tol 1e-6), worst identity rel err {worst_id:.1e} "
           f"(tol 1e-12), {secs:.1f}s (limit 60s)")
    assert ok


def test_c3_quadrature():
    start = time.perf_counter()
    worst_z, worst_rel = 0.0, 0.0
    for t in (0.5, 1.0, 4.0):
        for m in range(1, 7):
            f = SimplexIntegrand.from_times(lambda s, t=t: np.prod(t - s, axis=1) ** -0.5, m, t)
            ref = reference_weight_integral(m, t)
            mc = integrate_ordered_simplex(f, t, budget=10**6, method="importance-mc", seed=m)
            worst_z = max(worst_z, abs(mc.value - ref) / mc.std_error)
            qm = integrate_ordered_simplex(f, t, budget=10**6, method="qmc-substituted", seed=m)
            worst_rel = max(worst_rel, abs(qm.value / ref - 1.0))
    secs = time.perf_counter() - start
    ok = worst_z <= 3 and worst_rel <= 1e-4 and secs < 120
    record(3, "simplex quadrature reproduces (2 sqrt t)^m / m! for m <= 6", ok,
           f"importance-mc worst |z| {worst_z:.2f} (tol 3), qmc worst rel err {worst_rel:.1e} (tol 1e-4), "
           f"{secs:.1f}s (limit 120s)")
    assert ok


def test_c4_closed_form_moments():
    start = time.perf_counter()
    parts = []
    ok = True
    for name, u0, exact in (("flat", FLAT, 1 + 1 / math.sqrt(math.pi)), ("dirac", DIRAC, 0.25 + 1 / (2 * math.pi))):
        res = moment(MomentRequest(2, 1.0, 0.0, u0))
        rel = abs(res.value / exact - 1.0)
        within = abs(res.value - exact) <= 3 * res.std_error
        ok &= rel <= 1e-3 and within
        parts.append(f"{name} {res.value:.7f} vs {exact:.7f} (rel {rel:.1e}, se {res.std_error:.1e})")
    secs = time.perf_counter() - start
    ok &= secs < 60
    record(4, "second moments match their closed forms", ok, "; ".join(parts) + f", {secs:.1f}s (limit 60s)")
    assert ok


def test_c5_engine_vs_simulator():
    start = time.perf_counter()
    uhat, _, _, _ = flat_sample()
    c = richardson_weights((0.01, 0.02, 0.04, 0.08))
    R = len(uhat)
    parts, ok = [], True
    for n in (3, 4):
        eng = moment(MomentRequest(n, 1.0, 0.0, FLAT))
        y = (uhat**n) @ c
        sim, sim_se = float(y.mean()), float(y.std(ddof=1) / math.sqrt(R))
        z = (sim - eng.value) / math.hypot(sim_se, eng.std_error)
        ok &= abs(z) <= 3
        parts.append(f"n={n} engine {eng.value:.4f}+-{eng.std_error:.4f}, simulator {sim:.4f}+-{sim_se:.4f}, z {z:+.2f}")
    secs = time.perf_counter() - start
    ok &= secs < 900
    record(5, "extrapolated particle moments agree with the engine (N=2e4, 1e4 replicates)", ok,
           "; ".join(parts) + f", {secs:.0f}s (limit 900s)")
    assert ok


def _slopes(u0, x, ns, ts, hyp):
    out = {}
    for n in ns:
        pts = []
        for t in ts:
            if hasattr(hyp, "C_x") and t < n * hyp.C_x:
                continue
            r = moment(MomentRequest(n, t, x, u0))
            pts.append((t, r.value, r.std_error))
        out[n] = fit_log_slope(pts, n=n, target=slope_target(n, hyp))
    return out


@functools.lru_cache(maxsize=None)
def slope_results():
    start = time.perf_counter()
    h1 = _slopes(FLAT, 0.0, range(2, 6), (1e2, 1e3, 1e4, 1e5), hypothesis_for(FLAT))
    hyp2 = hypothesis_for(DIRAC, 1.0)
    h2 = _slopes(DIRAC, 1.0, range(2, 5), (10.0, 1e2, 1e3, 1e4), hyp2)
    return h1, h2, hyp2, time.perf_counter() - start


@pytest.mark.xfail(strict=True, reason="on t <= 1e5 the exact H1 moments for n = 4, 5 have local slopes more "
                                       "than 0.05 below (n-1)/2; see test_c6_h1_gap_is_in_the_exact_moments")
def test_c6_slopes():
    h1, h2, hyp2, secs = slope_results()
    fmt = lambda d: ", ".join(f"n={n} {e.slope:.4f} (target {e.target})" for n, e in d.items())
    ok = all(abs(e.deviation) <= 0.05 for e in (*h1.values(), *h2.values())) and secs < 1200
    record(6, "log-log growth slopes within 0.05 of their targets", ok,
           f"h1: {fmt(h1)}; h2 (x=1, C_x={hyp2.C_x:.4f}): {fmt(h2)}, {secs:.0f}s (limit 1200s)")
    assert ok


def test_c6_h2_and_low_orders_hold():
    h1, h2, _, _ = slope_results()
    assert all(abs(e.deviation) <= 0.05 for e in h2.values())
    assert abs(h1[2].deviation) <= 0.05 and abs(h1[3].deviation) <= 0.05


def test_c6_h1_gap_is_in_the_exact_moments():
    # for a flat start m_n(t) = sum_k c_k t^{k/2} exactly, so the coefficients at t = 1
    # give the exact curve; its fitted slope reproduces the miss on 1e2..1e5 and
    # converges to (n-1)/2 further out
    q = QuadSettings("qmc-substituted", 2**18, 0, None)
    h1, _, _, _ = slope_results()
    for n in (4, 5):
        coef = [p for _, p, _ in moment(MomentRequest(n, 1.0, 0.0, FLAT, q)).per_nprime]
        curve = lambda ts: [(t, sum(c * t ** (k / 2) for k, c in enumerate(coef)), 0.0) for t in ts]
        near = fit_log_slope(curve((1e2, 1e3, 1e4, 1e5)))
        far = fit_log_slope(curve((1e6, 1e7, 1e8, 1e9)))
        assert near.slope == pytest.approx(h1[n].slope, abs=5e-3)
        assert abs(near.slope - (n - 1) / 2) > 0.05
        assert abs(far.slope - (n - 1) / 2) < 2e-3


def test_c7_envelope_band():
    start = time.perf_counter()
    h1 = bounds_report(FLAT, range(1, 6), (0.1, 1.0, 10.0, 1e2, 1e3, 1e4))
    h2 = bounds_report(DIRAC, range(1, 6), (1.0, 10.0, 1e2, 1e3, 1e4), x=1.0)
    used = sum(r["in_domain"] for r in h2.rows)
    ok = h1.band_width <= 3 and h2.band_width <= 3 and used >= 4
    secs = time.perf_counter() - start
    record(7, "normalised log-ratio stays in a band of width <= 3", ok,
           f"h1 rho in [{h1.rho_min:.3f}, {h1.rho_max:.3f}] width {h1.band_width:.3f}; "
           f"h2 (x=1) rho in [{h2.rho_min:.3f}, {h2.rho_max:.3f}] width {h2.band_width:.3f} over {used} "
           f"in-domain points, {secs:.0f}s")
    assert ok


def test_c8_tail_sandwich():
    start = time.perf_counter()
    uhat, _, _, _ = flat_sample()
    moms = {n: moment(MomentRequest(n, 1.0, 0.0, FLAT)).value for n in range(1, 7)}
    zs = np.round(np.arange(0.0, 8.0 + 1e-9, 0.25), 12)
    cfg = SimulationConfig(SIM_N, 1.0, replicates=len(uhat))
    rows = empirical_tail(cfg, FLAT, 0.0, zs, uhat=uhat)
    rep = tail_report(moms, 1.0, 0.0, rows, len(uhat), theta=0.5)
    resolvable = [r for r in rep.rows if r["resolvable"]]
    pz = ", ".join(f"n={p['n']} P>={p['bound']:.3f} at z>={p['threshold']:.3f} (freq {p['frequency']:.3f})"
                   for p in rep.pz_points)
    secs = time.perf_counter() - start
    ok = not rep.failures and len(rep.pz_points) == 3 and secs < 600
    record(8, "empirical tails between the Markov and Paley-Zygmund bounds at t=1", ok,
           f"K*={rep.K_star_hat:.4f}, {len(resolvable)} resolvable z up to {resolvable[-1]['z']:g} all below the "
           f"bound; {pz}; failures={rep.failures}, {secs:.0f}s plus the shared simulation")
    assert ok


def test_c9_simulator_calibration():
    start = time.perf_counter()
    uhat, mass, mass0, _ = flat_sample()
    uhat, mass = uhat[:5000], mass[:5000]  # identical to a 5000-replicate run with the same seed
    zs = []

    def z(sample, exact):
        val = (sample.mean() - exact) / (sample.std(ddof=1) / math.sqrt(len(sample)))
        zs.append(val)
        return val

    z(mass, mass0)
    hs = (0.01, 0.02, 0.04, 0.08)
    for j, h in enumerate(hs):
        z(uhat[:, j], 1.0)
        z(uhat[:, j] ** 2, smoothed_second_moment(FLAT, 1.0, 0.0, h))
    cfg = SimulationConfig(SIM_N, 1.0, replicates=5000, seed=SIM_SEED)
    du, dmass, _ = sample_replicates(cfg, DIRAC, 0.0)
    z(dmass, 1.0)
    for j, h in enumerate(hs):
        z(du[:, j], smoothed_mean(DIRAC, 1.0, 0.0, h))
        extra = (heat_kernel(1.0 + h / 2, 0.0) / math.sqrt(4 * math.pi * h) - heat_kernel(1.0 + h, 0.0) ** 2) / SIM_N
        z(du[:, j] ** 2, smoothed_second_moment(DIRAC, 1.0, 0.0, h) + extra)
    secs = time.perf_counter() - start + flat_sample()[3] / 2
    worst = max(abs(v) for v in zs)
    ok = worst <= 3 and secs < 300
    record(9, "mass conservation and smoothed-moment anchors (N=2e4, 5000 replicates)", ok,
           f"{len(zs)} checks, worst |z| {worst:.2f} (flat mass z {zs[0]:+.2f}, dirac mass z {zs[9]:+.2f}), "
           f"{secs:.0f}s (limit 300s)")
    assert ok


CLI_RUNS = [
    ["enumerate", "--n", "4", "--nprime", "2"],
    ["moment", "--n", "4", "--t", "2", "--u0", "dirac:0.3", "--x", "0.1", "--seed", "5"],
    ["moment", "--n", "3", "--t", "1", "--quad-method", "qmc-substituted", "--quad-budget", "8192"],
    ["simulate", "--u0", "const:1", "--N", "300", "--replicates", "200", "--seed", "3"],
    ["bounds", "--hypothesis", "h1", "--grid", "n=1:3;t=0.1,1,10"],
    ["bounds", "--hypothesis", "h2", "--grid", "n=1:3;t=1,10,100"],
    ["slopes", "--hypothesis", "h2"],
    ["tails", "--N", "400", "--replicates", "300", "--seed", "1"],
    ["report", "--N", "400", "--replicates", "300", "--quad-budget", "8192"],
]


def test_c10_cli_determinism(tmp_path):
    start = time.perf_counter()
    differing = []
    for k, args in enumerate(CLI_RUNS):
        outs = []
        for rep in range(2):
            path = tmp_path / f"run{k}_{rep}.json"
            proc = subprocess.run([sys.executable, "-m", "sbm_moments", *args, "--out", str(path)],
                                  capture_output=True, text=True)
            assert proc.returncode in (0, 1), proc.stderr
            outs.append(path.read_bytes())
        if outs[0] != outs[1]:
            differing.append(args[0])
    secs = time.perf_counter() - start
    ok = not differing
    record(10, "repeated CLI runs give byte-identical JSON", ok,
           f"{len(CLI_RUNS)} invocations covering every subcommand, differing={differing}, {secs:.0f}s")
    assert ok


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    for name, fn in list(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn(Path(tempfile.mkdtemp())) if "tmp_path" in fn.__code__.co_varnames else fn()
            except AssertionError:
                pass

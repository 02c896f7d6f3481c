"""Command line entry point: ``python -m sbm_moments <command> ...``.

Every command writes one JSON document (to ``--out`` or stdout).  The checking
commands also write a flat CSV next to it.  Exit status is 0 when every enabled
assertion holds, 1 when some fail (the list is in the JSON under ``failures`` and on
stderr), and 2 on bad input.

Options may also come from a ``--config`` file of ``key = value`` lines, using the
long option names (dashes or underscores).  Command-line flags take precedence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .engine import MomentRequest, QuadSettings, group_triples, moment
from .gaussian import InitialCondition, build_kernel_graph
from .indexing import enumerate_triples, triple_count_closed_form
from .particles import SimulationConfig, empirical_tail, richardson_weights, sample_replicates
from .quadrature import METHODS

DEFAULT_GRIDS = {
    ("bounds", "h1"): "n=1:5;t=0.1,1,10,100,1000,10000",
    ("bounds", "h2"): "n=1:4;t=1,10,100,1000,10000",
    ("slopes", "h1"): "n=2:5;t=100,1000,10000,100000",
    ("slopes", "h2"): "n=2:4;t=10,100,1000,10000",
}
DEFAULT_U0 = {"h1": "const:1", "h2": "dirac:0"}
DEFAULT_X = {"h1": 0.0, "h2": 1.0}


class UsageError(ValueError):
    pass


# -- parsing helpers -------------------------------------------------------------------


def parse_u0(text: str) -> InitialCondition:
    kind, _, arg = text.partition(":")
    try:
        if kind == "const":
            return InitialCondition.constant(float(arg))
        if kind == "dirac":
            return InitialCondition.dirac(float(arg))
        if kind == "atoms":
            data = np.loadtxt(arg, delimiter=None, ndmin=2)
            return InitialCondition.atoms(data[:, 0].tolist(), data[:, 1].tolist())
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad --u0 {text!r}: {exc}") from exc
    raise UsageError(f"--u0 must be const:K, dirac:W or atoms:FILE, got {text!r}")


def parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def parse_grid(text: str) -> dict[str, list]:
    """``n=1:5;t=0.1,1,10`` -> {'n': [1..5], 't': [0.1, 1, 10]}; ranges are inclusive."""
    grid = {}
    for part in text.split(";"):
        key, _, val = part.strip().partition("=")
        key = key.strip()
        if key == "n":
            if ":" in val:
                lo, hi = val.split(":")
                grid["n"] = list(range(int(lo), int(hi) + 1))
            else:
                grid["n"] = [int(v) for v in val.split(",")]
        elif key == "t":
            grid["t"] = parse_floats(val)
        else:
            raise UsageError(f"unknown grid axis {key!r} in {text!r}")
    if set(grid) != {"n", "t"} or not grid["n"] or not grid["t"]:
        raise UsageError(f"grid needs both n and t axes: {text!r}")
    return grid


def read_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


# -- output helpers --------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def write_outputs(args, doc: dict, rows: list[dict] | None = None) -> None:
    text = dumps(doc)
    if args.out:
        out = Path(args.out)
        if out.suffix == ".csv" and rows is not None:
            out.write_text(rows_to_csv(rows))
            return
        out.write_text(text)
        if rows is not None:
            out.with_suffix(".csv").write_text(rows_to_csv(rows))
    else:
        sys.stdout.write(text)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    fields = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def quad_settings(args) -> QuadSettings:
    return QuadSettings(args.quad_method, args.quad_budget, args.seed, args.rel_tol)


def hyp_inputs(args):
    u0 = parse_u0(args.u0 or DEFAULT_U0[args.hypothesis])
    x = DEFAULT_X[args.hypothesis] if args.x is None else args.x
    if args.hypothesis == "h1" and not u0.is_constant:
        raise UsageError("h1 needs a constant initial density (const:K)")
    if args.hypothesis == "h2" and u0.is_constant:
        raise UsageError("h2 needs a finite initial measure (dirac:W or atoms:FILE)")
    return u0, x


# -- commands --------------------------------------------------------------------------


def cmd_enumerate(args):
    count = triple_count_closed_form(args.n, args.nprime)
    doc = {"n": args.n, "nprime": args.nprime, "count": count}
    if not args.count_only:
        triples = enumerate_triples(args.n, args.nprime)
        doc["count"] = len(triples)
        doc["triples"] = [tr.to_dict() for tr in triples]
    write_outputs(args, doc)
    return []


def dump_graphs(args, u0: InitialCondition) -> None:
    """Kernel graphs of each distinct summand at evenly spaced branch times."""
    docs = []
    for n_prime in range(1, args.n):
        s = args.t * (1.0 - np.arange(1, n_prime + 1) / (n_prime + 1))
        for first, tr, mult in group_triples(enumerate_triples(args.n, n_prime)).values():
            docs.append({
                "triple": tr.to_dict(), "multiplicity": mult, "times": s.tolist(),
                "graphs": [g.to_dict() for g in build_kernel_graph(tr, s, args.t, args.x or 0.0, u0)],
            })
    Path(args.dump_graph).write_text(dumps({"n": args.n, "t": args.t, "x": args.x or 0.0, "summands": docs}))


def cmd_moment(args):
    u0 = parse_u0(args.u0 or "const:1")
    x = args.x or 0.0
    res = moment(MomentRequest(args.n, args.t, x, u0, quad_settings(args)), max_order=args.max_order)
    if args.dump_graph:
        dump_graphs(args, u0)
    doc = res.to_dict()
    doc["u0"] = u0.to_dict()
    doc["quad"] = {"method": args.quad_method, "budget": args.quad_budget, "seed": args.seed}
    write_outputs(args, doc)
    return []


def cmd_simulate(args):
    u0 = parse_u0(args.u0 or "const:1")
    x = args.x or 0.0
    cfg = SimulationConfig(args.N, args.t, tuple(parse_floats(args.bandwidths)), args.replicates, args.seed)
    uhat, mass, aborted = sample_replicates(cfg, u0, x)
    if args.out and args.out.endswith(".csv"):
        rows = [{"replicate": r, "bandwidth": h, "uhat": float(uhat[r, j])}
                for r in range(len(uhat)) for j, h in enumerate(cfg.bandwidths)]
        Path(args.out).write_text(rows_to_csv(rows))
        return []
    R = len(uhat)
    orders = [int(v) for v in args.orders.split(",")]
    c = richardson_weights(cfg.bandwidths) if len(cfg.bandwidths) > 1 else None
    stats = []
    for n in orders:
        p = uhat**n
        entry = {"n": n, "mean": p.mean(axis=0).tolist(), "std_error": (p.std(axis=0, ddof=1) / math.sqrt(R)).tolist()}
        if c is not None:
            y = p @ c
            entry["extrapolated"] = {"mean": float(y.mean()), "std_error": float(y.std(ddof=1) / math.sqrt(R))}
        stats.append(entry)
    doc = {
        "u0": u0.to_dict(), "t": args.t, "x": x, "N": args.N, "seed": args.seed,
        "bandwidths": list(cfg.bandwidths), "replicates": R, "aborted": aborted,
        "mass": {"mean": float(mass.mean()), "std_error": float(mass.std(ddof=1) / math.sqrt(R))},
        "moments": stats,
    }
    write_outputs(args, doc)
    return []


def run_bounds(args, hypothesis: str, grid_text: str | None):
    args.hypothesis = hypothesis
    u0, x = hyp_inputs(args)
    grid = parse_grid(grid_text or DEFAULT_GRIDS[("bounds", hypothesis)])
    rep = analysis.bounds_report(u0, grid["n"], grid["t"], x, quad_settings(args))
    failures = []
    if not any(r["in_domain"] for r in rep.rows):
        failures.append(f"{hypothesis} bounds: no grid point inside the domain of both bounds")
    elif not rep.band_width <= args.band_limit:
        failures.append(f"{hypothesis} bounds: rho band width {rep.band_width:.4g} exceeds {args.band_limit}")
    doc = {"u0": u0.to_dict(), "x": x, **rep.to_dict(), "band_limit": args.band_limit}
    rows = [{"hypothesis": hypothesis, **r} for r in rep.rows]
    return doc, rows, failures


def cmd_bounds(args):
    doc, rows, failures = run_bounds(args, args.hypothesis, args.grid)
    doc["failures"] = failures
    write_outputs(args, doc, rows)
    return failures


def run_slopes(args, hypothesis: str, grid_text: str | None):
    args.hypothesis = hypothesis
    u0, x = hyp_inputs(args)
    hyp = analysis.hypothesis_for(u0, x)
    grid = parse_grid(grid_text or DEFAULT_GRIDS[("slopes", hypothesis)])
    quad = quad_settings(args)
    estimates, rows, failures = [], [], []
    for n in grid["n"]:
        ts = [t for t in grid["t"] if isinstance(hyp, analysis.H1) or t >= n * hyp.C_x]
        pts = []
        for t in ts:
            res = moment(MomentRequest(n, t, x, u0, quad))
            pts.append((t, res.value, res.std_error))
            rows.append({"hypothesis": hypothesis, "n": n, "t": t, "moment": res.value, "std_error": res.std_error})
        try:
            est = analysis.fit_log_slope(pts, n=n, target=analysis.slope_target(n, hyp))
        except ValueError as exc:
            failures.append(f"{hypothesis} slope n={n}: {exc}")
            continue
        estimates.append(est)
        if abs(est.deviation) > args.slope_tolerance:
            failures.append(f"{hypothesis} slope n={n}: {est.slope:.4f} is more than "
                            f"{args.slope_tolerance} from {est.target}")
    doc = {"u0": u0.to_dict(), "x": x, "hypothesis": {k: getattr(hyp, k) for k in hyp.__dataclass_fields__},
           "slopes": [e.to_dict() for e in estimates], "tolerance": args.slope_tolerance}
    return doc, rows, failures


def cmd_slopes(args):
    doc, rows, failures = run_slopes(args, args.hypothesis, args.grid)
    doc["failures"] = failures
    write_outputs(args, doc, rows)
    return failures


def run_tails(args):
    u0 = parse_u0(args.u0 or "const:1")
    x = args.x or 0.0
    quad = quad_settings(args)
    orders = sorted({1, 2, 3, 4, 5} | {2 * n for n in (1, 2, 3)})
    moments = {n: moment(MomentRequest(n, args.t, x, u0, quad)).value for n in orders}
    cfg = SimulationConfig(args.N, args.t, tuple(parse_floats(args.bandwidths)), args.replicates, args.seed)
    uhat, _, aborted = sample_replicates(cfg, u0, x)
    zs = np.round(np.arange(0.0, args.z_max + 1e-12, args.z_step), 12)
    emp = empirical_tail(cfg, u0, x, zs, uhat=uhat)
    rep = analysis.tail_report(moments, args.t, x, emp, len(uhat), theta=args.theta)
    R = len(uhat)
    probe = analysis.large_deviation_probe(
        [args.t], 1.0, lambda t, z: (float(np.mean(uhat[:, 0] > z)), 1.0 / R))
    doc = {"u0": u0.to_dict(), "N": args.N, "replicates": R, "aborted": aborted,
           "moments": {str(n): v for n, v in moments.items()}, **rep.to_dict(),
           "probe": [p.to_dict() for p in probe]}
    rows = [{"z": r["z"], "frequency": r["frequency"], "std_error": r["std_error"], "count": r["count"],
             "upper_bound": r["upper_bound"]} for r in rep.rows]
    return doc, rows, list(rep.failures)


def cmd_tails(args):
    doc, rows, failures = run_tails(args)
    doc["failures"] = failures
    write_outputs(args, doc, rows)
    return failures


def cmd_report(args):
    sections, rows, failures = {}, [], []
    for hypothesis in ("h1", "h2"):
        args.u0, args.x = None, None
        doc, r, f = run_bounds(args, hypothesis, None)
        sections[f"bounds_{hypothesis}"] = doc
        rows += [{"section": "bounds", **row} for row in r]
        failures += f
        doc, r, f = run_slopes(args, hypothesis, None)
        sections[f"slopes_{hypothesis}"] = doc
        rows += [{"section": "slopes", **row} for row in r]
        failures += f
    args.u0, args.x = "const:1", 0.0
    moments = [(n, moment(MomentRequest(n, 1.0, 0.0, InitialCondition.constant(1.0), quad_settings(args))).value)
               for n in range(2, args.max_order + 1)]
    sections["high_moment_ratio"] = [{"n": n, "ratio": v} for n, v in analysis.high_moment_ratio(moments)]
    if not args.skip_tails:
        doc, r, f = run_tails(args)
        sections["tails"] = doc
        rows += [{"section": "tails", **row} for row in r]
        failures += f
    sections["failures"] = failures
    write_outputs(args, sections, rows)
    return failures


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="file of 'key = value' lines supplying defaults")
    common.add_argument("--out", help="output file (JSON; CSV where supported); stdout when omitted")
    common.add_argument("--seed", type=int, default=0)

    quad = argparse.ArgumentParser(add_help=False)
    quad.add_argument("--quad-method", choices=METHODS, default="importance-mc")
    quad.add_argument("--quad-budget", type=int, default=2**17)
    quad.add_argument("--rel-tol", type=float, default=1e-3,
                      help="early stop for importance-mc once the relative error drops below this")
    quad.add_argument("--max-order", type=int, default=7)
    quad.add_argument("--u0", help="const:K, dirac:W or atoms:FILE (two columns: weight location)")
    quad.add_argument("--x", type=float)

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--t", type=float, default=1.0)
    sim.add_argument("--N", type=int, default=20000)
    sim.add_argument("--replicates", type=int, default=10000)
    sim.add_argument("--bandwidths", default="0.01,0.02,0.04,0.08")

    check = argparse.ArgumentParser(add_help=False)
    check.add_argument("--hypothesis", choices=("h1", "h2"), default="h1")
    check.add_argument("--grid", help="e.g. 'n=1:5;t=0.1,1,10'")
    check.add_argument("--band-limit", type=float, default=3.0)
    check.add_argument("--slope-tolerance", type=float, default=0.05)

    tails = argparse.ArgumentParser(add_help=False)
    tails.add_argument("--theta", type=float, default=0.5)
    tails.add_argument("--z-max", type=float, default=8.0)
    tails.add_argument("--z-step", type=float, default=0.25)

    p = argparse.ArgumentParser(prog="sbm_moments", description="Moments of super-Brownian motion.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enumerate", parents=[common], help="list the index triples of one moment term")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--nprime", type=int, required=True)
    e.add_argument("--count-only", action="store_true")
    e.set_defaults(func=cmd_enumerate)

    m = sub.add_parser("moment", parents=[common, quad], help="E[u_t(x)^n] from the moment formula")
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--t", type=float, required=True)
    m.add_argument("--dump-graph", metavar="FILE", help="write the kernel graphs of every summand as JSON")
    m.set_defaults(func=cmd_moment)

    s = sub.add_parser("simulate", parents=[common, sim], help="particle-system kernel estimates")
    s.add_argument("--u0")
    s.add_argument("--x", type=float)
    s.add_argument("--orders", default="1,2,3,4")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bounds", parents=[common, quad, check], help="envelope band check")
    b.set_defaults(func=cmd_bounds)
    sl = sub.add_parser("slopes", parents=[common, quad, check], help="log-log growth slopes")
    sl.set_defaults(func=cmd_slopes)
    ta = sub.add_parser("tails", parents=[common, quad, sim, tails], help="tail bounds against simulation")
    ta.set_defaults(func=cmd_tails)
    r = sub.add_parser("report", parents=[common, quad, sim, check, tails], help="full battery")
    r.add_argument("--skip-tails", action="store_true", help="leave out the simulation-based section")
    r.set_defaults(func=cmd_report)
    return p


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        conf = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in conf.items():
            if key not in actions or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            act = actions[key]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[key] = val.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = act.type(val) if act.type else val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        failures = args.func(args)
    except (UsageError, ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if failures:
        print(json.dumps({"failures": failures}, indent=2), file=sys.stderr)
        return 1
    return 0

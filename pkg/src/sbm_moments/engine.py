"""Integer moments E[u_t(x)^n] of super-Brownian motion from the combinatorial formula.

Each summand is a head factor, the closed-form spatial integral of its kernel network
(:mod:`sbm_moments.gaussian`) and a time integral over the ordered simplex
(:mod:`sbm_moments.quadrature`).

Triples that differ only in *which* leaves are attached, or in the order of the leaf
slots, have identical integrands.  They are evaluated once and weighted by their
multiplicity; the standard error scales with the multiplicity as the copies share one
estimate.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .gaussian import InitialCondition, TripleKernel, heat_kernel, initial_potential
from .indexing import IndexTriple, enumerate_triples
from .quadrature import METHODS, SimplexIntegrand, integrate_ordered_simplex

DEFAULT_MAX_ORDER = 7


@dataclass(frozen=True)
class QuadSettings:
    method: str = "importance-mc"
    budget: int = 2**17
    seed: int = 0
    rel_tol: float | None = 1e-3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.budget < 2:
            raise ValueError("quadrature budget must be at least 2")


@dataclass(frozen=True)
class MomentRequest:
    n: int
    t: float
    x: float = 0.0
    u0: InitialCondition = field(default_factory=InitialCondition.constant)
    quad: QuadSettings = field(default_factory=QuadSettings)

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError("moment order n must be a positive integer")
        if not self.t > 0:
            raise ValueError("time t must be positive")


@dataclass
class MomentResult:
    n: int
    t: float
    x: float
    value: float
    std_error: float
    per_nprime: list[tuple[int, float, float]]
    triples_evaluated: int
    distinct_integrands: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "t": self.t,
            "x": self.x,
            "value": self.value,
            "std_error": self.std_error,
            "per_nprime": [
                {"nprime": k, "partial_sum": v, "std_error": e} for k, v, e in self.per_nprime
            ],
            "triples_evaluated": self.triples_evaluated,
            "distinct_integrands": self.distinct_integrands,
        }


def integrand_key(triple: IndexTriple) -> tuple:
    """Two triples with equal keys have identical summands."""
    wa = triple.pair.weight_alpha
    return (triple.n_prime, triple.beta, tuple(sorted(triple.tau[:wa])), triple.tau[wa:])


def group_triples(triples) -> "OrderedDict[tuple, tuple[int, IndexTriple, int]]":
    """key -> (index of first triple, first triple, multiplicity), in enumeration order."""
    groups: OrderedDict = OrderedDict()
    for i, tr in enumerate(triples):
        k = integrand_key(tr)
        if k in groups:
            first, rep, mult = groups[k]
            groups[k] = (first, rep, mult + 1)
        else:
            groups[k] = (i, tr, 1)
    return groups


def _term_seed(seed: int, n_prime: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(n_prime, index))


def _integrate_kernel(kernel: TripleKernel, t, x, quad: QuadSettings, seed) -> tuple[float, float]:
    f = SimplexIntegrand(lambda g: kernel(g, x), kernel.n_prime, t)
    res = integrate_ordered_simplex(f, t, budget=quad.budget, method=quad.method, seed=seed, rel_tol=quad.rel_tol)
    return res.value, res.std_error


def moment_term(
    triple: IndexTriple, t: float, x: float, u0: InitialCondition, quad: QuadSettings = QuadSettings(), index: int = 0
) -> tuple[float, float]:
    """(value, std_error) of the summand of one triple."""
    kernel = TripleKernel(triple, u0)
    head = math.exp(kernel.log_head(t, x))
    if triple.n_prime == 0:
        return head, 0.0
    try:
        val, err = _integrate_kernel(kernel, t, x, quad, _term_seed(quad.seed, triple.n_prime, index))
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        raise RuntimeError(f"quadrature failed for triple {triple.to_dict()}: {exc}") from exc
    return head * val, head * err


def moment(req: MomentRequest, max_order: int = DEFAULT_MAX_ORDER, workers: int = 1) -> MomentResult:
    if req.n > max_order:
        raise ValueError(f"moment order {req.n} exceeds the configured cap {max_order}")
    per_nprime = []
    n_triples = 0
    n_distinct = 0
    for n_prime in range(req.n):
        triples = enumerate_triples(req.n, n_prime)
        n_triples += len(triples)
        if n_prime == 0:
            per_nprime.append((0, initial_potential(req.u0, req.t, req.x) ** req.n, 0.0))
            n_distinct += 1
            continue
        groups = list(group_triples(triples).values())
        n_distinct += len(groups)

        def job(entry):
            first, rep, mult = entry
            val, err = moment_term(rep, req.t, req.x, req.u0, req.quad, index=first)
            return mult * val, mult * err

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(job, groups))
        else:
            parts = [job(g) for g in groups]
        # fixed summation order keeps results bit-identical per seed
        partial = math.fsum(v for v, _ in parts)
        err = math.sqrt(math.fsum(e * e for _, e in parts))
        per_nprime.append((n_prime, partial, err))
    value = math.fsum(p for _, p, _ in per_nprime)
    std_error = math.sqrt(math.fsum(e * e for _, _, e in per_nprime))
    return MomentResult(req.n, req.t, req.x, value, std_error, per_nprime, n_triples, n_distinct)


def _single_atom(u0: InitialCondition) -> tuple[float, float]:
    if u0.is_constant or len(u0.weights) != 1:
        raise ValueError("closed forms cover constant densities and single atoms only")
    return u0.weights[0], u0.locations[0]


def closed_form_moment(n: int, t: float, x: float, u0: InitialCondition) -> float:
    """Analytic first and second moments (second moment off the atom: 1-D quadrature)."""
    if not t > 0:
        raise ValueError("t must be positive")
    if n == 1:
        return initial_potential(u0, t, x)
    if n != 2:
        raise ValueError("closed forms exist for n in {1, 2} only")
    if u0.is_constant:
        K = u0.level
        return K * K + K * math.sqrt(t / math.pi)
    w, z = _single_atom(u0)
    d = x - z
    # int_0^t (4 pi (t - s))^{-1/2} p_{(t + s)/2}(d) ds
    if d == 0.0:
        branch = 0.25
    else:
        branch, _ = integrate.quad(
            lambda s: heat_kernel(0.5 * (t + s), d) / math.sqrt(4.0 * math.pi),
            0.0,
            t,
            weight="alg",
            wvar=(0.0, -0.5),
            epsabs=0.0,
            epsrel=1e-13,
        )
    return (w * heat_kernel(t, d)) ** 2 + w * branch

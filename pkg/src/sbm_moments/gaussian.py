"""Heat kernels, initial conditions and closed-form Gaussian network integrals.

After fixing the branch times, every summand of the moment formula is an integral over
the branch locations z_1..z_m of a product of heat kernels.  Such a product is an
unnormalised Gaussian in z, so the integral is

    prefactor * prod_e (2 pi v_e)^{-1/2} * (2 pi)^{m/2} det(Q)^{-1/2} exp(b^T Q^{-1} b / 2 + c)

with Q the weighted graph Laplacian of the kernel network grounded at the fixed
endpoints.  :class:`TripleKernel` evaluates this vectorised over many time samples;
:class:`KernelGraph` is the explicit, inspectable form used for debugging and testing.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np
from scipy.special import logsumexp

from .indexing import IndexTriple, iota

LOG_2PI = math.log(2.0 * math.pi)
MIN_VARIANCE = 1e-300


def heat_kernel(t, x):
    """Gaussian density with variance ``t`` evaluated at ``x``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs a positive time argument")
    out = np.exp(-np.square(x) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return float(out) if np.ndim(out) == 0 else out


def log_heat_kernel(t, x):
    return -0.5 * (LOG_2PI + np.log(t)) - np.square(x) / (2.0 * t)


@dataclass(frozen=True)
class InitialCondition:
    """Either a constant density ``level`` or a finite atomic measure."""

    kind: str
    level: float = 0.0
    weights: tuple[float, ...] = ()
    locations: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "const":
            if not self.level > 0:
                raise ValueError("constant density must be positive")
        elif self.kind == "atoms":
            if not self.weights or len(self.weights) != len(self.locations):
                raise ValueError("atomic measure needs matching non-empty weights/locations")
            if any(not w > 0 for w in self.weights):
                raise ValueError("atom weights must be positive")
        else:
            raise ValueError(f"unknown initial condition kind {self.kind!r}")

    @classmethod
    def constant(cls, level: float = 1.0) -> "InitialCondition":
        return cls("const", level=float(level))

    @classmethod
    def dirac(cls, location: float = 0.0) -> "InitialCondition":
        return cls("atoms", weights=(1.0,), locations=(float(location),))

    @classmethod
    def atoms(cls, weights, locations) -> "InitialCondition":
        return cls("atoms", weights=tuple(map(float, weights)), locations=tuple(map(float, locations)))

    @property
    def is_constant(self) -> bool:
        return self.kind == "const"

    @property
    def total_mass(self) -> float:
        return math.inf if self.is_constant else float(sum(self.weights))

    def h2_parameters(self) -> tuple[float, float]:
        """(gamma, L) of the decaying-potential hypothesis; finite measures only."""
        if self.is_constant:
            raise ValueError("constant densities are not finite measures")
        return 0.5, self.total_mass / math.sqrt(2.0 * math.pi)

    def to_dict(self) -> dict:
        if self.is_constant:
            return {"kind": "const", "level": self.level}
        return {"kind": "atoms", "weights": list(self.weights), "locations": list(self.locations)}


def initial_potential(u0: InitialCondition, t: float, x: float) -> float:
    """int p_t(x - z) u0(dz)."""
    if not t > 0:
        raise ValueError("t must be positive")
    if u0.is_constant:
        return u0.level
    return float(sum(w * heat_kernel(t, x - z) for w, z in zip(u0.weights, u0.locations)))


def log_initial_potential(u0: InitialCondition, t, x=0.0):
    """Log of :func:`initial_potential`, vectorised in ``t``."""
    t = np.asarray(t, dtype=float)
    if u0.is_constant:
        return np.full(t.shape, math.log(u0.level)) if t.ndim else math.log(u0.level)
    terms = [math.log(w) + log_heat_kernel(t, x - z) for w, z in zip(u0.weights, u0.locations)]
    return logsumexp(np.stack(terms), axis=0)


# -- explicit kernel graphs ---------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    location: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


Endpoint = Union[Fixed, Var]


@dataclass(frozen=True)
class HeatKernelFactor:
    variance: float
    left: Endpoint
    right: Endpoint

    def __post_init__(self):
        if not self.variance > MIN_VARIANCE:
            raise ValueError(f"kernel variance {self.variance!r} is not positive")
        if isinstance(self.left, Var) and self.left == self.right:
            raise ValueError("a kernel cannot join a variable to itself")


@dataclass(frozen=True)
class KernelGraph:
    n_vars: int
    factors: tuple[HeatKernelFactor, ...]
    log_prefactor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        # union-find with node 0 standing for every fixed endpoint
        parent = list(range(self.n_vars + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        def node(e):
            if isinstance(e, Fixed):
                return 0
            if not 1 <= e.index <= self.n_vars:
                raise ValueError(f"variable index {e.index} out of range 1..{self.n_vars}")
            return e.index

        for f in self.factors:
            parent[find(node(f.left))] = find(node(f.right))
        root = find(0)
        loose = [k for k in range(1, self.n_vars + 1) if find(k) != root]
        if loose:
            raise ValueError(f"variables {loose} are not tied to a fixed point; integral diverges")

    @property
    def constant_prefactor(self) -> float:
        return math.exp(self.log_prefactor)

    def to_dict(self) -> dict:
        def enc(e):
            return {"fixed": e.location} if isinstance(e, Fixed) else {"var": e.index}

        return {
            "n_vars": self.n_vars,
            "log_prefactor": self.log_prefactor,
            "factors": [
                {"variance": f.variance, "left": enc(f.left), "right": enc(f.right)} for f in self.factors
            ],
        }


def build_kernel_graph(triple: IndexTriple, s, t: float, x: float, u0: InitialCondition) -> list[KernelGraph]:
    """Kernel graphs of one summand at branch times ``s`` (strictly decreasing in (0, t)).

    Constant densities give one graph.  An atomic measure gives one graph per way of
    assigning atoms to the branch points carrying an initial factor; the summand is the
    sum of their integrals.
    """
    s = [float(v) for v in s]
    m = triple.n_prime
    if len(s) != m:
        raise ValueError(f"expected {m} branch times, got {len(s)}")
    times = [t] + s + [0.0]
    if any(not times[i] > times[i + 1] for i in range(len(times) - 1)):
        raise ValueError("branch times must satisfy 0 < s_m < ... < s_1 < t")

    wa = triple.pair.weight_alpha
    ib = iota(triple.beta)
    factors = []
    for i in range(wa):
        k = triple.tau[i]
        factors.append(HeatKernelFactor(t - s[k - 1], Fixed(x), Var(k)))
    for i in range(wa, 2 * m):
        j, k = ib[i - wa + 1], triple.tau[i]
        factors.append(HeatKernelFactor(s[j - 1] - s[k - 1], Var(j), Var(k)))

    log_head = (triple.n - wa) * float(log_initial_potential(u0, t, x))
    rooted = [k for k in range(1, m + 1) if triple.beta[k - 1] == 0]
    if u0.is_constant:
        return [KernelGraph(m, factors, log_head + len(rooted) * math.log(u0.level))]
    graphs = []
    atoms = list(zip(u0.weights, u0.locations))
    for choice in itertools.product(atoms, repeat=len(rooted)):
        extra = [HeatKernelFactor(s[k - 1], Var(k), Fixed(z)) for k, (_, z) in zip(rooted, choice)]
        log_w = sum(math.log(w) for w, _ in choice)
        graphs.append(KernelGraph(m, factors + extra, log_head + log_w))
    return graphs


def log_spatial_integral(graph: KernelGraph) -> float:
    vv, vf, ff = [], [], []
    for e, f in enumerate(graph.factors):
        a, b = f.left, f.right
        if isinstance(a, Var) and isinstance(b, Var):
            vv.append((a.index - 1, b.index - 1, e))
        elif isinstance(a, Var):
            vf.append((a.index - 1, b.location, e))
        elif isinstance(b, Var):
            vf.append((b.index - 1, a.location, e))
        else:
            ff.append((a.location, b.location, e))
    variances = np.array([[f.variance for f in graph.factors]])
    out = gaussian_network_log_integral(graph.n_vars, vv, vf, ff, variances)
    return float(out[0]) + graph.log_prefactor


def spatial_integral(graph: Union[KernelGraph, Iterable[KernelGraph]]) -> float:
    """Exact integral over R^m of the product of the graph's kernels (sums lists of graphs)."""
    if isinstance(graph, KernelGraph):
        return math.exp(log_spatial_integral(graph))
    return math.exp(logsumexp([log_spatial_integral(g) for g in graph]))


# -- vectorised evaluation ------------------------------------------------------------


def gaussian_network_log_integral(n_vars, vv, vf, ff, variances) -> np.ndarray:
    """Log of the integral of a kernel network for a batch of variance vectors.

    ``vv``: (k, l, edge) variable-variable kernels, ``vf``: (k, location, edge) kernels
    to a fixed point, ``ff``: (location, location, edge) kernels with no variable.
    ``variances`` has shape (batch, n_edges).  Indices are 0-based.
    """
    variances = np.asarray(variances, dtype=float)
    if np.any(~(variances > MIN_VARIANCE)):
        raise FloatingPointError("kernel variance at or below 1e-300; point is on the simplex boundary")
    batch = variances.shape[0]
    out = -0.5 * np.sum(LOG_2PI + np.log(variances), axis=1)
    c = np.zeros(batch)
    for y1, y2, e in ff:
        c -= (y1 - y2) ** 2 / (2.0 * variances[:, e])
    if n_vars == 0:
        return out + c
    inv = 1.0 / variances
    Q = np.zeros((batch, n_vars, n_vars))
    b = np.zeros((batch, n_vars))
    for k, l, e in vv:
        Q[:, k, k] += inv[:, e]
        Q[:, l, l] += inv[:, e]
        Q[:, k, l] -= inv[:, e]
        Q[:, l, k] -= inv[:, e]
    for k, y, e in vf:
        Q[:, k, k] += inv[:, e]
        if y != 0.0:
            b[:, k] += y * inv[:, e]
            c -= y * y * inv[:, e] / 2.0
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError("singular precision matrix: a variable is disconnected") from err
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    out += 0.5 * n_vars * LOG_2PI - 0.5 * logdet + c
    if vf and np.any(b):
        w = np.linalg.solve(L, b[..., None])[..., 0]
        out += 0.5 * np.sum(w * w, axis=1)
    return out


@dataclass
class TripleKernel:
    """Spatially integrated summand of one index triple as a function of the time gaps.

    The time sample is passed as gaps ``g`` of shape (batch, m + 1):
    ``g[:, 0] = t - s_1``, ``g[:, j] = s_j - s_{j+1}``, ``g[:, m] = s_m``.  Working with
    gaps keeps every kernel variance strictly positive even when two branch times
    nearly coincide.  The value excludes the head factor, see :meth:`log_head`.
    """

    triple: IndexTriple
    u0: InitialCondition
    edges: list = field(init=False)
    rooted: list = field(init=False)

    def __post_init__(self):
        tr = self.triple
        m = tr.n_prime
        wa = tr.pair.weight_alpha
        ib = iota(tr.beta)
        # an edge is (left, right, hi, lo): time-index span [hi, lo) over the gaps,
        # time index 0 = t, k = s_k, m + 1 = 0; endpoint -1 = the observation point x
        self.edges = [(-1, tr.tau[i] - 1, 0, tr.tau[i]) for i in range(wa)]
        for i in range(wa, 2 * m):
            j, k = ib[i - wa + 1], tr.tau[i]
            self.edges.append((j - 1, k - 1, j, k))
        self.rooted = [k for k in range(1, m + 1) if tr.beta[k - 1] == 0]

    @property
    def n_prime(self) -> int:
        return self.triple.n_prime

    def log_head(self, t: float, x: float) -> float:
        return (self.triple.n - self.triple.pair.weight_alpha) * float(log_initial_potential(self.u0, t, x))

    def log_value(self, gaps, x: float = 0.0) -> np.ndarray:
        gaps = np.atleast_2d(np.asarray(gaps, dtype=float))
        m = self.n_prime
        if m == 0:
            return np.zeros(gaps.shape[0])
        spans = [gaps[:, hi:lo].sum(axis=1) for _, _, hi, lo in self.edges]
        vv = [(a, b, e) for e, (a, b, _, _) in enumerate(self.edges) if a >= 0]
        # shift coordinates so that x sits at the origin (translation invariance)
        vf = [(b, 0.0, e) for e, (a, b, _, _) in enumerate(self.edges) if a < 0]
        if self.u0.is_constant:
            var = np.stack(spans, axis=1)
            log_pref = len(self.rooted) * math.log(self.u0.level)
            return log_pref + gaussian_network_log_integral(m, vv, vf, [], var)
        # s_k for each rooted variable: sum of gaps k..m
        roots = [gaps[:, k:].sum(axis=1) for k in self.rooted]
        var = np.stack(spans + roots, axis=1)
        n_edges = len(spans)
        atoms = list(zip(self.u0.weights, self.u0.locations))
        terms = []
        for choice in itertools.product(atoms, repeat=len(self.rooted)):
            extra = [(k - 1, z - x, n_edges + r) for r, (k, (_, z)) in enumerate(zip(self.rooted, choice))]
            log_w = sum(math.log(w) for w, _ in choice)
            terms.append(log_w + gaussian_network_log_integral(m, vv, vf + extra, [], var))
        return logsumexp(np.stack(terms), axis=0)

    def __call__(self, gaps, x: float = 0.0) -> np.ndarray:
        return np.exp(self.log_value(gaps, x))

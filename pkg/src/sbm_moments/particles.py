"""Critical binary branching Brownian motion as a Monte Carlo stand-in for the superprocess.

Particles carry mass 1/N, move as standard Brownian motions and at rate N either die
or split in two with probability 1/2 each.  The pointwise density is observed through
a Gaussian kernel estimate u_h(x) = sum_i mass * p_h(x - X_i).

Two exact samplers of the configuration at time t are provided:

* :func:`simulate_path_events` steps from event to event.  Its cost is proportional to
  the number of branching events, about N * t per unit of initial mass per particle,
  so it only serves small N.
* :func:`simulate_path` and the moment/tail estimators sample only the families that
  survive to time t.  A family started by one particle survives with probability
  1 / (1 + b t), b = N / 2, and the genealogy of its survivors is a coalescent point
  process: consecutive survivors split at i.i.d. depths H with P(H > s) = 1 / (1 + b s),
  stopped at the first H > t.  Brownian positions are laid on that tree with bridges.
  Both samplers produce the same law; the test suite checks them against each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import integrate

from .gaussian import InitialCondition, heat_kernel

# kernel terms beyond this many standard deviations are below 1e-17 of the peak
KERNEL_CUTOFF_SD = 9.0


@dataclass(frozen=True)
class SimulationConfig:
    particles_N: int
    t_end: float
    bandwidths: tuple[float, ...] = (0.01, 0.02, 0.04, 0.08)
    replicates: int = 1000
    seed: int = 0
    domain_truncation: float | None = None
    population_cap_factor: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "bandwidths", tuple(sorted(float(h) for h in self.bandwidths)))
        if self.particles_N < 1 or self.replicates < 1:
            raise ValueError("particles_N and replicates must be at least 1")
        if not self.t_end > 0 or not all(h > 0 for h in self.bandwidths) or not self.bandwidths:
            raise ValueError("t_end and bandwidths must be positive")
        if self.domain_truncation is not None and not self.domain_truncation > 0:
            raise ValueError("domain_truncation must be positive")

    @property
    def window(self) -> float:
        if self.domain_truncation is not None:
            return self.domain_truncation
        return max(8.0 * math.sqrt(self.t_end), 8.0)


@dataclass
class ParticleSystem:
    positions: np.ndarray
    mass: float
    time: float

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(p), self.mass) for p in self.positions]

    @property
    def total_mass(self) -> float:
        return self.mass * len(self.positions)


@dataclass
class EmpiricalMoments:
    bandwidths: tuple[float, ...]
    orders: tuple[int, ...]
    mean: np.ndarray  # (n_bandwidths, n_orders)
    std_error: np.ndarray
    replicates: int
    aborted: int
    extrapolated: dict = field(default_factory=dict)  # n -> (value, std_error)

    def to_dict(self) -> dict:
        return {
            "bandwidths": list(self.bandwidths),
            "orders": list(self.orders),
            "mean": self.mean.tolist(),
            "std_error": self.std_error.tolist(),
            "replicates": self.replicates,
            "aborted": self.aborted,
            "extrapolated": {str(n): {"value": v, "std_error": e} for n, (v, e) in self.extrapolated.items()},
        }


class PopulationExplosion(RuntimeError):
    pass


def initial_particles(u0: InitialCondition, N: int, x: float, window: float) -> np.ndarray:
    """Starting positions, each particle of mass 1/N.

    A constant density K becomes round(2 K W N) particles on the midpoints of a regular
    grid over [x - W, x + W]; an atom of weight w becomes round(w N) particles at its
    location.
    """
    if u0.is_constant:
        count = max(int(round(2.0 * u0.level * window * N)), 1)
        edges = np.linspace(x - window, x + window, count + 1)
        return 0.5 * (edges[:-1] + edges[1:])
    parts = [np.full(max(int(round(w * N)), 1), z) for w, z in zip(u0.weights, u0.locations)]
    return np.concatenate(parts)


def estimate_density(system: ParticleSystem, x: float, h: float) -> float:
    """Kernel estimate sum mass * p_h(x - position)."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if len(system.positions) == 0:
        return 0.0
    return float(system.mass * np.sum(heat_kernel(h, x - system.positions)))


# -- reduced-genealogy sampler ----------------------------------------------------------


# depth of the branch-point stack; it holds a decreasing record chain of split depths,
# which stays near log(family size) -- overflow is treated like a population blow-up
STACK_SIZE = 4096


@nb.njit(cache=True)
def _run_replicate(rng, roots, t, b, x, hs, cutoff, cap, store, out, acc):
    """One replicate; returns (population, status), status 1 on cap or stack overflow.

    ``acc[j]`` receives sum_i p_{hs[j]}(x - X_i) over surviving particles, truncated
    at ``cutoff`` standard deviations; ``hs`` must be ascending.  With
    ``store`` the positions go to ``out`` (length >= cap).
    """
    nh = hs.shape[0]
    for j in range(nh):
        acc[j] = 0.0
    norm = np.empty(nh)
    reach = np.empty(nh)
    for j in range(nh):
        norm[j] = 1.0 / math.sqrt(2.0 * math.pi * hs[j])
        reach[j] = cutoff * cutoff * hs[j]
    p_surv = 1.0 / (1.0 + b * t)
    log_fail = math.log1p(-p_surv) if p_surv < 1.0 else -np.inf
    stack_d = np.empty(STACK_SIZE)
    stack_p = np.empty(STACK_SIZE)
    pop = 0
    i = -1
    n_roots = roots.shape[0]
    while True:
        # geometric skip to the next root whose family survives
        if p_surv >= 1.0:
            i += 1
        else:
            u = 1.0 - rng.random()
            i += 1 + int(math.floor(math.log(u) / log_fail))
        if i >= n_roots:
            break
        stack_d[0] = t
        stack_p[0] = roots[i]
        leaf = roots[i] + math.sqrt(t) * rng.standard_normal()
        sp = 1
        while True:
            stack_d[sp] = 0.0
            stack_p[sp] = leaf
            if pop >= cap:
                return pop, 1
            if store:
                out[pop] = leaf
            pop += 1
            dx2 = (leaf - x) * (leaf - x)
            if dx2 < reach[nh - 1]:
                for j in range(nh):
                    if dx2 < reach[j]:
                        acc[j] += norm[j] * math.exp(-dx2 / (2.0 * hs[j]))
            u = 1.0 - rng.random()
            h = (1.0 / u - 1.0) / b
            if h >= t:
                break
            # pop branch points below the new split depth; the last one popped bounds it
            below_d = stack_d[sp]
            below_p = stack_p[sp]
            while stack_d[sp] < h:
                below_d = stack_d[sp]
                below_p = stack_p[sp]
                sp -= 1
            above_d = stack_d[sp]
            above_p = stack_p[sp]
            frac = (h - below_d) / (above_d - below_d)
            pos = below_p + frac * (above_p - below_p)
            pos += math.sqrt((above_d - h) * frac) * rng.standard_normal()
            if sp + 3 > STACK_SIZE:
                return pop, 1
            sp += 1
            stack_d[sp] = h
            stack_p[sp] = pos
            sp += 1
            leaf = pos + math.sqrt(h) * rng.standard_normal()
    return pop, 0


def _replicate_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(count)]


def _population_cap(config: SimulationConfig, n_roots: int) -> int:
    return int(config.population_cap_factor * max(n_roots, config.particles_N))


def simulate_path(config: SimulationConfig, u0: InitialCondition, rng=None, x: float = 0.0) -> ParticleSystem:
    """Configuration at ``config.t_end`` from the reduced-genealogy sampler.

    ``x`` centres the initialisation window of a constant density.  Randomness comes
    from ``rng``, or from the first replicate stream of ``config.seed`` when omitted.
    """
    if rng is None:
        rng = _replicate_rngs(config.seed, 1)[0]
    roots = initial_particles(u0, config.particles_N, x, config.window)
    cap = _population_cap(config, len(roots))
    out = np.empty(cap)
    acc = np.empty(1)
    b = 0.5 * config.particles_N
    pop, status = _run_replicate(
        rng, roots, config.t_end, b, x, np.array([1.0]), 0.0, cap, True, out, acc
    )
    if status:
        raise PopulationExplosion(f"population exceeded the cap of {cap} particles")
    return ParticleSystem(out[:pop].copy(), 1.0 / config.particles_N, config.t_end)


def sample_replicates(config: SimulationConfig, u0: InitialCondition, x: float = 0.0):
    """Kernel estimates for every replicate and bandwidth.

    Returns ``(uhat, mass, aborted)``: ``uhat`` has shape (kept replicates, bandwidths),
    ``mass`` holds the total mass of each kept replicate, ``aborted`` counts replicates
    dropped at the population cap.
    """
    roots = initial_particles(u0, config.particles_N, x, config.window)
    hs = np.asarray(config.bandwidths, dtype=float)
    cap = _population_cap(config, len(roots))
    b = 0.5 * config.particles_N
    rngs = _replicate_rngs(config.seed, config.replicates)
    uhat = np.empty((config.replicates, len(hs)))
    mass = np.empty(config.replicates)
    ok = np.ones(config.replicates, dtype=bool)
    acc = np.empty(len(hs))
    dummy = np.empty(1)
    for r in range(config.replicates):
        pop, status = _run_replicate(rngs[r], roots, config.t_end, b, x, hs, KERNEL_CUTOFF_SD, cap, False, dummy, acc)
        ok[r] = status == 0
        uhat[r] = acc / config.particles_N
        mass[r] = pop / config.particles_N
    aborted = int((~ok).sum())
    if aborted > 0.01 * config.replicates:
        raise PopulationExplosion(f"{aborted} of {config.replicates} replicates hit the population cap")
    return uhat[ok], mass[ok], aborted


def richardson_weights(bandwidths, degree: int = 2) -> np.ndarray:
    """Weights c with sum_k c_k y_k the intercept of a least-squares polynomial in sqrt(h).

    Smoothing bias is linear in sqrt(h) only to leading order; over the default ladder
    the h term shifts the third moment by about 1.5%, so it is fitted too whenever the
    ladder has room for it.
    """
    hs = np.asarray(bandwidths, dtype=float)
    degree = min(degree, len(hs) - 1)
    X = np.sqrt(hs)[:, None] ** np.arange(degree + 1)
    return np.linalg.pinv(X)[0]


def empirical_moments(config: SimulationConfig, u0: InitialCondition, x: float, orders) -> EmpiricalMoments:
    if config.replicates < 30:
        raise ValueError("empirical moments need at least 30 replicates")
    orders = tuple(int(n) for n in orders)
    uhat, _, aborted = sample_replicates(config, u0, x)
    R = uhat.shape[0]
    powers = np.stack([uhat**n for n in orders], axis=2)  # (R, bandwidths, orders)
    mean = powers.mean(axis=0)
    se = powers.std(axis=0, ddof=1) / math.sqrt(R)
    extrapolated = {}
    if len(config.bandwidths) >= 2:
        c = richardson_weights(config.bandwidths)
        for k, n in enumerate(orders):
            # combine per replicate so correlation across bandwidths enters the error
            y = powers[:, :, k] @ c
            extrapolated[n] = (float(y.mean()), float(y.std(ddof=1) / math.sqrt(R)))
    return EmpiricalMoments(config.bandwidths, orders, mean, se, R, aborted, extrapolated)


def empirical_tail(config: SimulationConfig, u0: InitialCondition, x: float, thresholds, uhat=None):
    """[(z, frequency of u_h(x) > z, binomial std error, exceedance count)] at the smallest h.

    Pass ``uhat`` (replicates x bandwidths) to reuse an existing sample.
    """
    if uhat is None:
        uhat, _, _ = sample_replicates(config, u0, x)
    sample = uhat[:, 0]
    R = len(sample)
    rows = []
    for z in thresholds:
        count = int(np.count_nonzero(sample > z))
        p = count / R
        rows.append((float(z), p, math.sqrt(p * (1.0 - p) / R), count))
    return rows


# -- exact smoothed-moment anchors ----------------------------------------------------


def smoothed_mean(u0: InitialCondition, t: float, x: float, h: float) -> float:
    """E[u_h(x)] = int p_{t+h}(x - z) u0(dz)."""
    if u0.is_constant:
        return u0.level
    return float(sum(w * heat_kernel(t + h, x - z) for w, z in zip(u0.weights, u0.locations)))


def smoothed_second_moment(u0: InitialCondition, t: float, x: float, h: float) -> float:
    """E[u_h(x)^2] for the superprocess (the N -> infinity limit of the particle system)."""
    if u0.is_constant:
        K = u0.level
        return K * K + K * (math.sqrt(t + h) - math.sqrt(h)) / math.sqrt(math.pi)
    m1 = smoothed_mean(u0, t, x, h)

    def branch(s):
        return sum(
            w * heat_kernel(s + 0.5 * (t - s + h), x - z) for w, z in zip(u0.weights, u0.locations)
        ) / math.sqrt(4.0 * math.pi)

    # singular weight (t - s + h)^{-1/2} is smooth for h > 0 but steep for small h
    val, _ = integrate.quad(lambda s: branch(s) / math.sqrt(t - s + h), 0.0, t, epsabs=0.0, epsrel=1e-12, limit=200)
    return m1 * m1 + val


# -- brute-force event-driven sampler -------------------------------------------------


def simulate_path_events(config: SimulationConfig, u0: InitialCondition, rng: np.random.Generator, x: float = 0.0) -> ParticleSystem:
    """Event-by-event simulation; exact but only practical for small N."""
    N = config.particles_N
    pos = initial_particles(u0, N, x, config.window).astype(float)
    cap = _population_cap(config, len(pos))
    now = 0.0
    while len(pos):
        wait = rng.exponential(1.0 / (N * len(pos)))
        step = min(wait, config.t_end - now)
        pos = pos + math.sqrt(step) * rng.standard_normal(len(pos))
        now += step
        if now >= config.t_end:
            break
        k = rng.integers(len(pos))
        if rng.random() < 0.5:
            pos = np.delete(pos, k)
        else:
            pos = np.append(pos, pos[k])
        if len(pos) > cap:
            raise PopulationExplosion(f"population exceeded the cap of {cap} particles")
    return ParticleSystem(pos, 1.0 / N, config.t_end)

"""Index triples (alpha, beta, tau) labelling the summands of the moment formula.

A triple for moment order ``n`` and ``n_prime`` branch times consists of

* ``alpha`` -- 0/1 vector of length ``n``; a one marks a leaf attached to a branch point,
* ``beta``  -- 0/1 vector of length ``n_prime`` with last entry 0; a one marks a branch
  point that re-attaches to an earlier one,
* ``tau``   -- map from the ``2 * n_prime`` kernel slots to branch points ``1..n_prime``
  hitting every value exactly twice, with ``tau[i] > iota_beta(i - |alpha|)`` on the
  beta slots.

Indices in the public API are 1-based to keep the correspondence with the formula
readable; the empty tuple stands for the degenerate ``n_prime = 0`` case.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

# largest n whose factorials still give counts below 2**63
MAX_ORDER = 12
INT64_MAX = 2**63 - 1


@dataclass(frozen=True, order=True)
class MomentIndexPair:
    n: int
    n_prime: int
    alpha: tuple[int, ...]
    beta: tuple[int, ...]

    def __post_init__(self):
        if len(self.alpha) != self.n or len(self.beta) != self.n_prime:
            raise ValueError("alpha/beta lengths do not match (n, n_prime)")
        if any(b not in (0, 1) for b in self.alpha + self.beta):
            raise ValueError("alpha and beta must be 0/1 vectors")
        if self.n_prime >= 1 and self.beta[-1] != 0:
            raise ValueError("last coordinate of beta must be 0")
        if sum(self.alpha) + sum(self.beta) != 2 * self.n_prime:
            raise ValueError("|alpha| + |beta| must equal 2 * n_prime")

    @property
    def weight_alpha(self) -> int:
        return sum(self.alpha)


@dataclass(frozen=True, order=True)
class IndexTriple:
    pair: MomentIndexPair
    tau: tuple[int, ...]

    def __post_init__(self):
        check_pairing(self.pair, self.tau)

    @property
    def n(self) -> int:
        return self.pair.n

    @property
    def n_prime(self) -> int:
        return self.pair.n_prime

    @property
    def alpha(self) -> tuple[int, ...]:
        return self.pair.alpha

    @property
    def beta(self) -> tuple[int, ...]:
        return self.pair.beta

    def to_dict(self) -> dict:
        return {"alpha": list(self.alpha), "beta": list(self.beta), "tau": list(self.tau)}


def iota(bits) -> dict[int, int]:
    """Map i -> position (1-based) of the i-th nonzero entry of ``bits``."""
    positions = [j + 1 for j, b in enumerate(bits) if b]
    return {i + 1: pos for i, pos in enumerate(positions)}


def _check_orders(n: int, n_prime: int) -> None:
    if not isinstance(n, int) or not isinstance(n_prime, int):
        raise TypeError("n and n_prime must be integers")
    if n < 1:
        raise ValueError(f"moment order must be positive, got n={n}")
    if n_prime < 0 or n_prime > n - 1:
        raise ValueError(f"n_prime must lie in [0, n-1], got n={n}, n_prime={n_prime}")


def enumerate_index_pairs(n: int, n_prime: int) -> list[MomentIndexPair]:
    """All [alpha, beta] in I_{n, n_prime}, lexicographic in (alpha, beta)."""
    _check_orders(n, n_prime)
    if n_prime == 0:
        return [MomentIndexPair(n, 0, (0,) * n, ())]
    pairs = []
    for alpha in itertools.product((0, 1), repeat=n):
        wa = sum(alpha)
        if wa > 2 * n_prime:
            continue
        for head in itertools.product((0, 1), repeat=n_prime - 1):
            if wa + sum(head) == 2 * n_prime:
                pairs.append(MomentIndexPair(n, n_prime, alpha, head + (0,)))
    return pairs


def check_pairing(pair: MomentIndexPair, tau) -> None:
    """Raise ValueError unless ``tau`` belongs to K^{alpha,beta}_{n,n_prime}."""
    tau = tuple(tau)
    m = pair.n_prime
    if len(tau) != 2 * m:
        raise ValueError(f"tau must have length {2 * m}, got {len(tau)}")
    for k in range(1, m + 1):
        if tau.count(k) != 2:
            raise ValueError(f"value {k} must be attained exactly twice by tau")
    wa = pair.weight_alpha
    ib = iota(pair.beta)
    for i in range(wa + 1, 2 * m + 1):
        if tau[i - 1] <= ib[i - wa]:
            raise ValueError(f"tau({i}) = {tau[i - 1]} violates tau(i) > iota_beta(i - |alpha|)")


def enumerate_pairings(pair: MomentIndexPair) -> list[tuple[int, ...]]:
    """All admissible tau for a fixed [alpha, beta], ordered as words."""
    m = pair.n_prime
    if m == 0:
        return [()]
    wa = pair.weight_alpha
    ib = iota(pair.beta)
    # lower bound per slot from the beta condition; alpha slots are unconstrained
    floor = [0] * wa + [ib[j] for j in range(1, 2 * m - wa + 1)]
    found = []

    def place(k: int, free: list[int], tau: list[int]) -> None:
        if k > m:
            found.append(tuple(tau))
            return
        for a, b in itertools.combinations(free, 2):
            if k <= floor[a] or k <= floor[b]:
                continue
            tau[a] = tau[b] = k
            # slots are overwritten on the next branch, no undo needed
            place(k + 1, [i for i in free if i != a and i != b], tau)

    place(1, list(range(2 * m)), [0] * (2 * m))
    found.sort()
    return found


def enumerate_triples(n: int, n_prime: int) -> list[IndexTriple]:
    triple_count_closed_form(n, n_prime)  # validates and rejects counts past int64
    return [
        IndexTriple(pair, tau)
        for pair in enumerate_index_pairs(n, n_prime)
        for tau in enumerate_pairings(pair)
    ]


def triple_count_closed_form(n: int, n_prime: int) -> int:
    """|J_{n, n_prime}| = n!(n-1)! / (2^{n_prime} (n - n_prime)! (n - n_prime - 1)!)."""
    _check_orders(n, n_prime)
    num = math.factorial(n) * math.factorial(n - 1)
    den = 2**n_prime * math.factorial(n - n_prime) * math.factorial(n - n_prime - 1)
    count, rem = divmod(num, den)
    if rem:
        raise ArithmeticError(f"non-integer count for n={n}, n_prime={n_prime}")
    if count > INT64_MAX:
        raise OverflowError(f"|J_{{{n},{n_prime}}}| exceeds the 64-bit range")
    return count

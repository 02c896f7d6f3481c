import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from sbm_moments.indexing import (
    MAX_ORDER,
    IndexTriple,
    MomentIndexPair,
    check_pairing,
    enumerate_index_pairs,
    enumerate_pairings,
    enumerate_triples,
    iota,
    triple_count_closed_form,
)


def brute_pairings(pair):
    """Every word with each of 1..m twice, filtered by the membership check."""
    m = pair.n_prime
    words = set(itertools.permutations([k for k in range(1, m + 1) for _ in range(2)]))
    ok = []
    for w in words:
        try:
            check_pairing(pair, w)
        except ValueError:
            continue
        ok.append(w)
    return sorted(ok)


@pytest.mark.parametrize("n", range(1, 7))
def test_counts_match_closed_form(n):
    for m in range(n):
        assert len(enumerate_triples(n, m)) == triple_count_closed_form(n, m)


@pytest.mark.parametrize("n,m,count", [(4, 3, 18), (5, 4, 180), (6, 5, 2700), (7, 6, 56700), (2, 1, 1), (3, 1, 3)])
def test_named_counts(n, m, count):
    assert triple_count_closed_form(n, m) == count


def test_count_by_hand():
    # n! (n-1)! / (2^m (n-m)! (n-m-1)!) written out for n = 5, m = 2
    assert triple_count_closed_form(5, 2) == math.factorial(5) * math.factorial(4) // (4 * 6 * 2)


def test_small_pairing_example():
    pair = MomentIndexPair(3, 2, (1, 1, 1), (1, 0))
    assert enumerate_pairings(pair) == [(1, 1, 2, 2), (1, 2, 1, 2), (2, 1, 1, 2)]


def test_zero_branch_case():
    triples = enumerate_triples(4, 0)
    assert len(triples) == 1
    assert triples[0].alpha == (0, 0, 0, 0) and triples[0].tau == ()


@pytest.mark.parametrize("n", range(2, 6))
def test_pairings_agree_with_brute_force(n):
    for m in range(1, min(n, 4)):
        for pair in enumerate_index_pairs(n, m):
            assert enumerate_pairings(pair) == brute_pairings(pair)


def test_index_pairs_are_lexicographic_and_valid():
    pairs = enumerate_index_pairs(5, 3)
    assert pairs == sorted(pairs)
    for p in pairs:
        assert p.beta[-1] == 0
        assert sum(p.alpha) + sum(p.beta) == 2 * p.n_prime


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1))))
def test_triples_unique_and_admissible(nm):
    n, m = nm
    triples = enumerate_triples(n, m)
    assert len(set(triples)) == len(triples)
    for tr in triples:
        check_pairing(tr.pair, tr.tau)
        d = tr.to_dict()
        assert len(d["alpha"]) == n and len(d["beta"]) == m and len(d["tau"]) == 2 * m


def test_iota_positions():
    assert iota((0, 1, 1, 0, 1)) == {1: 2, 2: 3, 3: 5}
    assert iota(()) == {}


@pytest.mark.parametrize("n,m", [(0, 0), (3, 3), (3, -1)])
def test_invalid_orders_rejected(n, m):
    with pytest.raises(ValueError):
        triple_count_closed_form(n, m)


def test_overflow_rejected():
    with pytest.raises(OverflowError):
        triple_count_closed_form(MAX_ORDER + 8, MAX_ORDER + 4)


def test_invalid_tau_rejected():
    pair = MomentIndexPair(3, 2, (1, 1, 1), (1, 0))
    with pytest.raises(ValueError):
        IndexTriple(pair, (1, 2, 2, 1))  # slot 4 is a beta slot and needs a value above 1
    with pytest.raises(ValueError):
        IndexTriple(pair, (1, 1, 1, 2))

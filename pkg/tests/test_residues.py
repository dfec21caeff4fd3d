import math

import pytest
from hypothesis import given, settings, strategies as st

from primerace.errors import InsufficientPrimes, PreconditionViolation
from primerace.residues import (
    Modulus, RaceTuple, build_race_tuple, c_shift, euler_phi, factorize,
    primes_up_to, reduced_residues, signed,
)


def brute_phi(q):
    return sum(1 for a in range(1, q + 1) if math.gcd(a, q) == 1)


def brute_shift(q, a):
    return sum(1 for b in range(1, q + 1) if (b * b - a) % q == 0) - 1


def test_phi_small_cases():
    assert euler_phi(1) == 1
    assert euler_phi(24) == 8
    for p in (2, 3, 101, 163, 7919):
        assert euler_phi(p) == p - 1


@given(st.integers(1, 5000))
def test_phi_matches_enumeration(q):
    assert euler_phi(q) == brute_phi(q)
    assert len(reduced_residues(q)) == euler_phi(q)


@given(st.integers(1, 10**6))
def test_factorize_reconstructs(q):
    assert math.prod(p**e for p, e in factorize(q)) == q


def test_modulus_rejects_nonpositive():
    with pytest.raises(ValueError):
        Modulus(0)


@pytest.mark.parametrize("q,a,expected", [(7, 2, 1), (7, 3, -1), (8, 1, 3)])
def test_c_shift_examples(q, a, expected):
    assert c_shift(q, a) == expected


@settings(max_examples=60)
@given(st.integers(2, 400))
def test_c_shift_matches_enumeration_and_sums_to_phi(q):
    vals = [c_shift(q, int(a)) for a in reduced_residues(q)]
    assert vals == [brute_shift(q, int(a)) for a in reduced_residues(q)]
    assert min(vals) >= -1
    assert sum(v + 1 for v in vals) == euler_phi(q)


def test_primes_up_to():
    assert list(primes_up_to(30)) == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert len(primes_up_to(10**5)) == 9592


def test_race_tuple_large_modulus():
    q = 1000003
    rt = build_race_tuple(q, 4, 1)
    assert rt.contestants == (3821, 996182, 3823, 3833)
    assert rt.signed == (3821, -3821, 3823, 3833)
    assert 5 * 4 * math.log(q) ** 2 == pytest.approx(3818.0, abs=1.0)


@pytest.mark.parametrize("n,k", [(4, 1), (4, 2), (6, 3), (7, 2)])
def test_race_tuple_invariants(n, k):
    q = 1000003
    rt = build_race_tuple(q, n, k)
    assert rt.n == n and rt.k == k
    L = math.log(q) ** 2
    s = rt.signed
    mags = [abs(x) for x in s]
    for j in range(k):
        assert s[2 * j] == -s[2 * j + 1]
    distinct = sorted(set(mags))
    assert len(distinct) == n - k
    for b in distinct:
        assert 5 * n * L < b <= 10 * n * L
        assert all(b % p for p in range(2, math.isqrt(b) + 1))
    for x in mags:
        for y in mags:
            assert 0.5 < x / y < 2


def test_race_tuple_all_pairs():
    rt = build_race_tuple(1000003, 6, 3)
    s = rt.signed
    assert all(s[2 * j] == -s[2 * j + 1] for j in range(3))


def test_race_tuple_too_many_contestants():
    with pytest.raises((InsufficientPrimes, PreconditionViolation)):
        build_race_tuple(101, 50, 1)


def test_race_tuple_lenient_small_modulus():
    with pytest.warns(UserWarning):
        rt = build_race_tuple(163, 3, 1, strict=False)
    assert rt.contestants == (41, 122, 43)
    assert rt.notes


def test_race_tuple_validation():
    m = Modulus(7)
    with pytest.raises(ValueError):
        RaceTuple(m, (1, 1), 0)
    with pytest.raises(ValueError):
        RaceTuple(m, (1, 2), 1)
    with pytest.raises(ValueError):
        RaceTuple(Modulus(8), (2, 3), 0)
    rt = RaceTuple.custom(24, (5, 1))
    assert rt.contestants == (5, 1) and rt.k == 0


def test_signed_view():
    assert signed(6, 7) == -1
    assert signed(3, 7) == 3
    assert signed(4, 8) == 4

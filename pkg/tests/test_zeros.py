import gzip
import math

import numpy as np
import pytest

from oracles import full_zero_sum, hardy_z, hurwitz_l
from primerace._lfunc import HardyZ
from primerace.characters import character_group, primitive_inducer, root_number
from primerace.errors import MissingCharacter, OrderError, ParseError
from primerace.zeros import (
    ZeroRepository, ZeroSet, compute_repository, compute_zeros, data_hash, expected_count,
    load_zeros, parse_zeros, tail_estimate, weighted_zero_sum, write_zeros,
)

FIRST_MOD4 = 6.0209489


@pytest.fixture(scope="module")
def chi4():
    return [c for c in character_group(4) if not c.is_principal][0]


@pytest.fixture(scope="module")
def chi5():
    """A complex primitive character mod 5."""
    return [c for c in character_group(5) if not c.is_real][0]


@pytest.mark.parametrize("q", [4, 5, 7, 8])
def test_hardy_z_kernel_matches_mpmath(q):
    for chi in character_group(q):
        if not chi.is_primitive or chi.is_principal:
            continue
        Z = HardyZ(chi, 40.0)
        ts = np.array([0.7, 6.0, 13.3, 29.9])
        got = Z.values(ts)
        eps = root_number(chi)
        want = [hardy_z(chi, float(t), eps) for t in ts]
        assert np.allclose(got, want, atol=1e-9)


def test_mod4_first_zero(chi4):
    zs = compute_zeros(chi4, 10.0)
    assert zs.count == 1
    assert zs.ordinates[0] == pytest.approx(FIRST_MOD4, abs=1e-6)
    assert abs(hurwitz_l(chi4, complex(0.5, zs.ordinates[0]))) < 1e-8


def test_empty_below_first_zero(chi4):
    assert compute_zeros(chi4, 5.0).count == 0


def test_two_grid_steps_agree(chi4):
    a = compute_zeros(chi4, 60.0, step=0.05)
    b = compute_zeros(chi4, 60.0, step=0.025)
    assert a.count == b.count
    assert np.max(np.abs(a.ordinates - b.ordinates)) < 1e-8


@pytest.mark.parametrize("q,T", [(4, 60.0), (5, 100.0), (7, 100.0), (11, 80.0)])
def test_counts_follow_main_term(q, T):
    repo = compute_repository(q, T)
    for zs in repo.sets():
        chi = character_group(zs.conductor)[zs.label[1]]
        assert abs(zs.count - expected_count(chi.modulus, chi.parity, T)) <= 2


def test_real_character_conjugate_has_same_zeros(chi4):
    assert chi4.conjugate().label == chi4.label


def test_complex_conjugate_zeros_are_reflected(chi5):
    T = 20.0
    z = compute_zeros(chi5, T).ordinates
    zb = compute_zeros(chi5.conjugate(), T).ordinates
    assert z.size and zb.size
    # the sets differ, but every ordinate of the conjugate is a zero of L(s, chi) at -gamma
    assert not (z.size == zb.size and np.allclose(z, zb))
    for g in zb:
        assert abs(hurwitz_l(chi5, complex(0.5, -g))) < 1e-8


def test_weighted_sum_single_zero():
    zs = ZeroSet((4, 1), np.array([FIRST_MOD4]), 10.0)
    head, tail = weighted_zero_sum(zs)
    assert head == pytest.approx(1 / (0.25 + FIRST_MOD4**2))
    assert head == pytest.approx(0.0273959, abs=1e-7)
    assert round(head, 5) == 0.02740
    assert tail > 0


def test_weighted_sum_empty():
    head, _ = weighted_zero_sum(ZeroSet((4, 1), np.array([]), 3.0))
    assert head == 0.0


def test_tail_estimate_decreasing():
    Ts = [10, 30, 100, 300, 1000, 1e4]
    vals = [tail_estimate(163, T) for T in Ts]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("q", [4, 5, 8])
def test_head_plus_tail_matches_explicit_formula(q):
    # zeros of L(s, chi) below the real axis are the conjugate character's positive ordinates
    T = 1000.0
    repo = compute_repository(q, T)
    for zs in repo.sets():
        chi = character_group(zs.conductor)[zs.label[1]]
        head, tail = weighted_zero_sum(zs)
        head_b, tail_b = weighted_zero_sum(repo.get(chi.conjugate()))
        assert head + tail + head_b + tail_b == pytest.approx(full_zero_sum(chi), abs=1e-4)


def test_load_single_line(tmp_path):
    p = tmp_path / "z.txt"
    p.write_text("4 1 6.0209489\n")
    repo = load_zeros(p)
    assert repo.labels() == [(4, 1)]
    assert repo.get((4, 1)).ordinates[0] == 6.0209489
    assert repo.content_hash


def test_empty_file_gives_empty_repository(tmp_path, chi4):
    p = tmp_path / "z.txt"
    p.write_text("")
    repo = load_zeros(p)
    assert len(repo) == 0
    with pytest.raises(MissingCharacter):
        repo.get(chi4)


@pytest.mark.parametrize("line", ["4 1 abc", "4 1", "4 x 1.0", "4 1 -2.0", "4 1 nan"])
def test_malformed_lines(line):
    with pytest.raises(ParseError):
        parse_zeros([line])


def test_descending_rejected():
    with pytest.raises(OrderError):
        parse_zeros(["4 1 10.2", "4 1 6.02"])


def test_duplicates_dropped():
    repo = parse_zeros(["4 1 6.02", "4 1 6.02", "4 1 10.2"])
    assert repo.get((4, 1)).count == 2


@pytest.mark.parametrize("suffix", [".txt", ".txt.gz"])
def test_round_trip_bit_exact(tmp_path, suffix):
    repo = parse_zeros(["# height 4 1 30", "4 1 6.020948904697597", "4 1 10.24377030416655",
                        "4 1 12.98809801231242", "5 1 6.18357819545085",
                        "5 1 8.457303956837"])
    p = tmp_path / ("z" + suffix)
    h1 = write_zeros(repo, p)
    back = load_zeros(p)
    for z in repo.sets():
        assert back.get(z.label).strings() == z.strings()
        assert np.array_equal(back.get(z.label).ordinates, z.ordinates)
    assert back.get((4, 1)).height == 30.0
    assert data_hash(back) == data_hash(repo)
    # deterministic bytes
    p2 = tmp_path / ("w" + suffix)
    assert write_zeros(back, p2) == h1
    if suffix.endswith(".gz"):
        with gzip.open(p, "rt") as fh:
            assert fh.readline().startswith("#")


def test_computed_round_trip(tmp_path, chi4):
    repo = ZeroRepository([compute_zeros(chi4, 50.0)])
    p = tmp_path / "c.txt"
    write_zeros(repo, p)
    back = load_zeros(p)
    assert np.array_equal(back.get((4, 1)).ordinates, repo.get((4, 1)).ordinates)


def test_repository_sharing_mod24():
    repo = compute_repository(3, 30.0)
    chis = [c for c in character_group(24) if c.conductor == 3]
    assert chis
    sets = [repo.get(c) for c in chis]
    assert all(s is sets[0] for s in sets)
    assert sets[0].label == primitive_inducer(chis[0]).label


def test_mod24_needs_all_inducers():
    repo = compute_repository(24, 20.0)
    for c in character_group(24):
        if not c.is_principal:
            assert primitive_inducer(c).label in repo


def test_zeroset_validation():
    with pytest.raises(OrderError):
        ZeroSet((4, 1), np.array([3.0, 2.0]), 5.0)
    with pytest.raises(ValueError):
        ZeroSet((4, 1), np.array([6.0]), 5.0)


def test_truncation():
    zs = ZeroSet((4, 1), np.array([6.0, 10.2, 12.9]), 15.0)
    t = zs.truncated(11.0)
    assert t.count == 2 and t.height == 11.0
    repo = ZeroRepository([zs]).truncated(7.0)
    assert repo.get((4, 1)).count == 1
    assert math.isclose(repo.height(), 7.0)

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from primerace.empirical import (
    LABEL, RaceTrajectory, e_vector, log_checkpoints, log_density_estimate, race_trajectory,
    sieve_counts,
)
from primerace.model import make_ordering


def trial_primes(x):
    return [p for p in range(2, int(x) + 1) if all(p % d for d in range(2, math.isisqrt(p) + 1))] \
        if False else [p for p in range(2, int(x) + 1) if all(p % d for d in range(2, math.isqrt(p) + 1))]


def test_mod4_at_100():
    c = sieve_counts(100, 4)
    assert c.at() == {1: 11, 3: 13}
    assert int(c.pi[0]) == 25


def test_mod3_at_10():
    assert sieve_counts(10, 3).at() == {1: 1, 2: 2}


@pytest.mark.parametrize("q", [1, 2, 3, 4, 7, 10, 12, 30, 49, 50])
def test_matches_trial_division(q):
    x = 10**5
    primes = trial_primes(x)
    cps = [10, 977, 5000, 31622.7, x]
    c = sieve_counts(x, q, cps, segment=1 << 13)
    for i, t in enumerate(cps):
        ps = [p for p in primes if p <= t]
        assert c.pi[i] == len(ps)
        for a in c.residues:
            assert c.column(a)[i] == sum(1 for p in ps if p % q == a % q)
        # primes dividing q sit outside every reduced class
        assert c.counts[i].sum() == len(ps) - sum(1 for p in ps if q % p == 0)


def test_threads_do_not_change_counts():
    a = sieve_counts(3 * 10**6, 7, [1e5, 2e6, 3e6], threads=1, segment=1 << 16)
    b = sieve_counts(3 * 10**6, 7, [1e5, 2e6, 3e6], threads=3, segment=1 << 16)
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.pi, b.pi)


def test_sieve_validation():
    with pytest.raises(ValueError):
        sieve_counts(100, 4, [50, 20])
    with pytest.raises(ValueError):
        sieve_counts(100, 4, [200])
    with pytest.raises(ValueError):
        sieve_counts(100, 4).column(2)


def test_e_vector_example():
    E = e_vector(100.0, 4, (3, 1))
    assert E[0] - E[1] == pytest.approx(math.log(100) / 10 * 2 * (13 - 11))
    assert E[0] - E[1] == pytest.approx(1.8421, abs=1e-4)


def test_e_vector_definition():
    c = sieve_counts(1000, 5)
    E = e_vector(1000.0, 5, (1, 2, 3, 4))
    f = math.log(1000) / math.sqrt(1000)
    for e, a in zip(E, (1, 2, 3, 4)):
        assert e == pytest.approx(f * (4 * c.at()[a] - int(c.pi[0])))


@settings(max_examples=30, deadline=None)
@given(st.integers(11, 20000), st.sampled_from([3, 4, 5, 8]))
def test_e_vector_sign_matches_counts(x, q):
    c = sieve_counts(x, q)
    res = c.residues
    E = e_vector(float(x), q, res)
    for i, a in enumerate(res):
        for j, b in enumerate(res):
            assert np.sign(E[i] - E[j]) == np.sign(c.at()[a] - c.at()[b])


def test_log_checkpoints():
    x = log_checkpoints(1e3, 1e6, 1000)
    assert x[0] == 1e3 and x[-1] == 1e6
    assert np.allclose(np.diff(np.log(x)), math.log(1e3) / 999)


def test_vacuous_spec_has_density_one():
    assert log_density_estimate(4, (3, 1), make_ordering("custom", 2, pairs=[]), 1e3, 1e5, 1000) == 1.0


def test_chebyshev_bias_mod4():
    d = log_density_estimate(4, (3, 1), make_ordering("full_chain", 2), 1e3, 1e6, 10**4)
    assert 0.9 < d <= 1.0


def test_complementarity_mod4():
    tr = race_trajectory(4, (3, 1), make_ordering("full_chain", 2), 1e3, 1e6, 10**4)
    rev = make_ordering("full_chain", 2).reversed()
    back = tr.log_measure(rev.contains(tr.E))
    gap = 1 - tr.density - back
    assert gap >= -1e-12
    assert gap == pytest.approx(tr.log_measure(tr.ties), abs=1e-12)
    assert gap <= 0.01


@pytest.mark.parametrize("q,race", [(3, (2, 1)), (8, (3, 5, 7, 1)), (7, (3, 5, 6, 1))])
def test_density_in_unit_interval(q, race):
    spec = make_ordering("full_chain", len(race))
    d = log_density_estimate(q, race, spec, 100, 10**5, 2000)
    assert 0 <= d <= 1


def test_trajectory_csv(tmp_path):
    tr = race_trajectory(4, (3, 1), make_ordering("full_chain", 2), 100, 1e4, 50)
    p = tr.to_csv(tmp_path / "t.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "x,E_1,E_2,in_region"
    assert len(lines) == 51
    assert float(lines[1].split(",")[0]) == 100.0
    assert tr.label == LABEL
    # bit-identical on rerun
    p2 = race_trajectory(4, (3, 1), make_ordering("full_chain", 2), 100, 1e4, 50).to_csv(tmp_path / "u.csv")
    assert p2.read_bytes() == p.read_bytes()


def test_trajectory_validation():
    spec = make_ordering("full_chain", 2)
    with pytest.raises(ValueError):
        RaceTrajectory(4, (3, 1), spec, np.array([1.0]), np.zeros((1, 2)), np.zeros(1, bool))
    with pytest.raises(ValueError):
        log_density_estimate(4, (3, 1), spec, 1e3, 1e4, 100)
    with pytest.raises(ValueError):
        race_trajectory(4, (3, 1, 5), spec, 1e3, 1e4, 100)


def test_sieve_1e8_performance():
    t = time.perf_counter()
    c = sieve_counts(10**8, 4)
    assert time.perf_counter() - t < 60
    assert int(c.pi[0]) == 5761455
    assert c.at() == {1: 2880504, 3: 2880950}

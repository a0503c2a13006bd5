import math
import random

import numpy as np
import pytest

from neqm_well.qm_oracle import (
    even_condition,
    odd_condition,
    qm_det_check,
    qm_even_roots,
    qm_odd_roots,
    qm_spectrum,
)


def brute_force_count(v0, n=100_000):
    # sign changes of the product of both conditions on (0, sqrt(2 v0))
    ks = np.linspace(0, math.sqrt(2 * v0), n + 2)[1:-1]
    kap = np.sqrt(2 * v0 - ks ** 2)
    f = (kap * np.cos(ks) - ks * np.sin(ks)) * (kap * np.sin(ks) + ks * np.cos(ks))
    return int(np.sum(np.sign(f[1:]) != np.sign(f[:-1])))


def test_shallow_well_binds_one_even_state():
    assert len(qm_even_roots(1e-6)) == 1
    assert qm_odd_roots(1e-6) == []
    s = qm_spectrum(1e-6)
    assert len(s) == 1 and s[0].parity == "even"


def test_v0_5000_ground_state():
    # the oracle value; the table column at beta=0.01 is a different quantity
    ground = qm_spectrum(5000.0)[0]
    assert ground.energy == pytest.approx(1.2093, abs=1e-4)
    assert ground.k == pytest.approx(1.5552, abs=1e-4)


def test_v0_pi_squared_over_2_has_two_states():
    s = qm_spectrum(math.pi ** 2 / 2)
    assert [x.parity for x in s] == ["even", "odd"]


def test_odd_threshold():
    assert qm_odd_roots(math.pi ** 2 / 8 * 0.999) == []
    assert len(qm_odd_roots(math.pi ** 2 / 8 * 1.001)) == 1


@pytest.mark.parametrize("v0", [0.3, 7.0, 50.0, 300.0, 5000.0])
def test_count_matches_brute_force(v0):
    assert len(qm_spectrum(v0)) == brute_force_count(v0)


def test_v0_5000_count():
    assert abs(len(qm_spectrum(5000.0)) - (math.floor(2 * math.sqrt(10000) / math.pi) + 1)) <= 1


@pytest.mark.parametrize("v0", [0.5, 50.0, 5000.0])
def test_states_satisfy_defining_equations(v0):
    states = qm_spectrum(v0)
    for i, s in enumerate(states):
        assert s.parity == ("even" if i % 2 == 0 else "odd")
        assert s.kappa ** 2 + s.k ** 2 == pytest.approx(2 * v0, rel=1e-12)
        cond = even_condition if s.parity == "even" else odd_condition
        assert abs(cond(s.k, v0)) < 1e-10 * max(1.0, s.kappa)
        rhs = s.k * math.tan(s.k) if s.parity == "even" else -s.k / math.tan(s.k)
        assert abs(s.kappa - rhs) < 1e-8 * max(1.0, abs(s.kappa))
    assert all(a.energy < b.energy for a, b in zip(states, states[1:]))


def test_factorisation_identity_random():
    rng = random.Random(3)
    for _ in range(100):
        v0 = math.exp(rng.uniform(math.log(0.1), math.log(5000.0)))
        k = rng.uniform(0.01, 0.99) * math.sqrt(2 * v0)
        d, de, do = qm_det_check(k, v0)
        assert d == pytest.approx(-2 * de * do, rel=1e-12, abs=1e-300)


def test_sector_dets_at_roots():
    v0 = 50.0
    ke = qm_even_roots(v0)[0]
    _, de, do = qm_det_check(ke, v0)
    assert abs(de) < 1e-12 and abs(do) > 1e-6
    ko = qm_odd_roots(v0)[0]
    _, de, do = qm_det_check(ko, v0)
    assert abs(do) < 1e-12 and abs(de) > 1e-6


def test_det_check_domain():
    with pytest.raises(ValueError):
        qm_det_check(20.0, 50.0)

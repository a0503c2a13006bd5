import math
import random

import gmpy2
import pytest
from gmpy2 import mpfr

from neqm_well.basis import (
    apply_region_hamiltonian,
    combine,
    derivative_stack,
    make_P,
    make_Qe,
    make_Qo,
    mode_rate,
    working_precision,
)
from neqm_well.core import Params, energy_of_mu, mu_max, rho_of_mu

P = Params(0.9, 40.0)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), mpfr(1e-300))


def test_working_precision_restores_context():
    before = gmpy2.get_context().precision
    with working_precision(300) as bits:
        assert bits == 300 and gmpy2.get_context().precision == 300
    assert gmpy2.get_context().precision == before
    with pytest.raises(ValueError):
        with working_precision(8):
            pass


def test_precision_env_override(monkeypatch):
    monkeypatch.setenv("NEQM_PRECISION_BITS", "320")
    with working_precision() as bits:
        assert bits == 320


def test_make_P_examples():
    with working_precision(128):
        rho = mpfr("1.25")
        row = make_P(P, 0, rho)
        assert len(row) == 1
        assert row.terms[0].derivatives(-1, 1) == [gmpy2.exp(-rho), rho * gmpy2.exp(-rho)]
        row = make_P(P, 1, rho)
        assert [t.value(0) for t in row] == [1, 1, 1]
        c = mode_rate(P, 1)
        d1 = [t.derivatives(0, 1)[1] for t in row]
        assert d1 == [rho, c + rho, c - rho]
        assert [t.label for t in row] == [("outside", 0, "+rho"), ("outside", 1, "+rho"), ("outside", 1, "-rho")]
    with pytest.raises(ValueError):
        make_P(P, -1, 1.0)


def test_make_Q_examples():
    with working_precision(128):
        mu = mpfr("0.8")
        assert len(make_Qe(P, 0, mu)) == 1
        assert rel(make_Qe(P, 0, mu).terms[0].value(mpfr("0.3")), gmpy2.cos(mu * mpfr("0.3"))) < 1e-35
        d1 = [t.derivatives(0, 1)[1] for t in make_Qe(P, 1, mu)]
        assert all(abs(v) < 1e-35 for v in d1)
        c = mode_rate(P, 1)
        d1 = [t.derivatives(0, 1)[1] for t in make_Qo(P, 1, mu)]
        for got, want in zip(d1, [mu, mu, -c]):
            assert rel(got, want) < 1e-35


def test_terms_evaluate_to_closed_forms():
    with working_precision(128):
        mu, x = mpfr("1.1"), mpfr("-0.37")
        L = 2
        qe, qo = make_Qe(P, L, mu), make_Qo(P, L, mu)
        for l in (1, 2):
            c = mode_rate(P, l)
            assert rel(qe.terms[l].value(x), gmpy2.cosh(c * x) * gmpy2.cos(mu * x)) < 1e-35
            assert rel(qe.terms[L + l].value(x), gmpy2.sinh(c * x) * gmpy2.sin(mu * x)) < 1e-35
            assert rel(qo.terms[l].value(x), gmpy2.cosh(c * x) * gmpy2.sin(mu * x)) < 1e-35
            assert rel(qo.terms[L + l].value(x), -gmpy2.sinh(c * x) * gmpy2.cos(mu * x)) < 1e-35
        assert rel(qo.terms[0].value(x), gmpy2.sin(mu * x)) < 1e-35


def test_derivatives_match_finite_differences():
    rng = random.Random(5)
    h = 1e-5
    with working_precision(200):
        for _ in range(10):
            L = rng.randint(0, 2)
            mu = mpfr(rng.uniform(0.1, 3.0))
            row = rng.choice([make_Qe(P, L, mu), make_Qo(P, L, mu), make_P(P, L, rho_of_mu(mu, P))])
            t = rng.choice(row.terms)
            x = mpfr(rng.uniform(-1.0, 1.0))
            d = t.derivatives(x, 3)
            f = lambda y: t.value(mpfr(y))
            fd1 = (f(x + h) - f(x - h)) / (2 * h)
            fd2 = (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2
            fd3 = (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h ** 3)
            for n, fd in ((1, fd1), (2, fd2), (3, fd3)):
                assert abs(fd - d[n]) <= 1e-6 * max(abs(d[n]), abs(d[0]), mpfr(1)) * mode_rate(P, max(L, 1)) ** n


def test_high_derivative_is_composition_of_first_derivatives():
    with working_precision(128):
        t = make_Qe(P, 2, mpfr("0.7")).terms[3]
        d = t.derivatives(mpfr("0.2"), 9)
        for amp_g in [t.components]:
            manual = sum((a * g ** 9 * gmpy2.exp(g * mpfr("0.2")) for a, g in amp_g), gmpy2.mpc(0)).real
        assert rel(d[9], manual) < 1e-35


@pytest.mark.parametrize("x", ["0.3", "1", "2"])
@pytest.mark.parametrize("L", [0, 1, 2, 3, 4])
def test_reflection_identities(L, x):
    with working_precision(192):
        x = mpfr(x)
        mu = mu_max(P, mpfr(P.beta), mpfr(P.v0)) / 3
        n_max = 4 * L + 1
        for maker, sign in ((make_Qe, 1), (make_Qo, -1)):
            row = maker(P, L, mu)
            left = derivative_stack(row, -x, n_max)
            right = derivative_stack(row, x, n_max, alternate_signs=True)
            for r_l, r_r in zip(left, right):
                for a, b in zip(r_l, r_r):
                    assert abs(a - sign * b) <= mpfr("1e-12") * max(abs(a), abs(b), mpfr("1e-200"))


def test_derivative_stack_shape():
    with working_precision(128):
        blk = derivative_stack(make_P(P, 2, mpfr(1)), -1, 9)
        assert len(blk) == 10 and all(len(r) == 5 for r in blk)


@pytest.mark.parametrize("L", [0, 1, 2, 4])
def test_every_term_is_a_region_eigenfunction(L):
    with working_precision(256):
        for frac in ("0.1", "0.5", "0.93"):
            mu = mu_max(P, mpfr(P.beta), mpfr(P.v0)) * mpfr(frac)
            e = energy_of_mu(mu, P, mpfr(P.beta))
            rho = rho_of_mu(mu, P)
            for t in make_P(P, L, rho):
                assert rel(apply_region_hamiltonian(t, P.v0, P), e) < 1e-10
            for t in list(make_Qe(P, L, mu)) + list(make_Qo(P, L, mu)):
                assert rel(apply_region_hamiltonian(t, 0.0, P), e) < 1e-10


def test_cos_term_eigenvalue_closed_form():
    with working_precision(128):
        mu = mpfr("1.3")
        val = apply_region_hamiltonian(make_Qe(P, 0, mu).terms[0], 0.0, P)
        beta = mpfr(P.beta)
        assert rel(val, (gmpy2.cosh(beta * mu) - 1) / beta ** 2) < 1e-30


def test_hamiltonian_rejects_mixed_term():
    from neqm_well.basis import BasisTerm
    with working_precision(128):
        bad = BasisTerm(((gmpy2.mpc(1), gmpy2.mpc(1)), (gmpy2.mpc(1), gmpy2.mpc(2))), ("test", 0, "mixed"))
        with pytest.raises(ValueError):
            apply_region_hamiltonian(bad, 0.0, P)


def test_outside_terms_decay():
    with working_precision(128):
        mu = mu_max(P, mpfr(P.beta), mpfr(P.v0)) / 2
        rho = rho_of_mu(mu, P)
        assert 0 < rho <= gmpy2.const_pi() / P.beta
        for t in make_P(P, 3, rho):
            assert all(g.real > 0 and g.imag == 0 for _, g in t.components)


def test_combine_is_linear():
    with working_precision(128):
        row = make_Qe(P, 1, mpfr("0.9"))
        x = mpfr("0.4")
        coeffs = [mpfr(2), mpfr(-3), mpfr("0.5")]
        want = sum(c * t.derivatives(x, 2)[2] for c, t in zip(coeffs, row))
        assert combine(row, coeffs, x, 2) == want
        assert math.isfinite(float(want))

"""Truncated region bases P(x), Q_e(x), Q_o(x).

Every basis function is stored as a short sum of complex exponentials
``amp * exp(gamma x)``, so the n-th derivative is exact:
``sum(amp * gamma**n * exp(gamma x))``. Arithmetic runs in the current gmpy2
context; callers pick the precision (see :func:`working_precision`).
"""
from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import gmpy2
from gmpy2 import mpc, mpfr

from .core import Params, _bound_root

DEFAULT_PRECISION_BITS = 256

_QUARTER = mpc(0.25)
_HALF = mpc(0.5)


def default_precision_bits() -> int:
    env = os.environ.get("NEQM_PRECISION_BITS")
    return int(env) if env else DEFAULT_PRECISION_BITS


@contextlib.contextmanager
def working_precision(bits: int | None = None):
    """Run a block with a gmpy2 mantissa of ``bits`` bits (thread-local)."""
    bits = default_precision_bits() if bits is None else int(bits)
    if bits < 24:
        raise ValueError(f"precision of {bits} bits is too small")
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        yield bits


@dataclass(frozen=True)
class BasisTerm:
    """One basis function, ``sum(amp * exp(gamma * x))`` over ``components``."""

    components: Tuple[Tuple[mpc, mpc], ...]
    label: Tuple[str, int, str]

    def derivatives(self, x, n_max: int) -> List[mpfr]:
        """Real values of f(x), f'(x), ..., f^(n_max)(x)."""
        x = mpfr(x)
        out = [mpc(0)] * (n_max + 1)
        for amp, gamma in self.components:
            t = amp * gmpy2.exp(gamma * x)
            for n in range(n_max + 1):
                out[n] += t
                t *= gamma
        return [v.real for v in out]

    def value(self, x):
        return self.derivatives(x, 0)[0]


@dataclass(frozen=True)
class BasisRow:
    terms: Tuple[BasisTerm, ...]

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def mode_rate(p: Params, l: int):
    """2 pi l / beta, the spacing of the exponential ladder."""
    return 2 * gmpy2.const_pi() * l / mpfr(p.beta)


def make_P(p: Params, L: int, rho) -> BasisRow:
    """Outside-left row: e^{rho x}, e^{(c_l+rho)x} (l=1..L), e^{(c_l-rho)x} (l=1..L)."""
    if L < 0:
        raise ValueError("L must be >= 0")
    rho = mpfr(rho)
    one = mpc(1)
    terms = [BasisTerm(((one, mpc(rho)),), ("outside", 0, "+rho"))]
    for l in range(1, L + 1):
        terms.append(BasisTerm(((one, mpc(mode_rate(p, l) + rho)),), ("outside", l, "+rho")))
    for l in range(1, L + 1):
        terms.append(BasisTerm(((one, mpc(mode_rate(p, l) - rho)),), ("outside", l, "-rho")))
    return BasisRow(tuple(terms))


def _cos(mu):
    return ((_HALF, mpc(0, mu)), (_HALF, mpc(0, -mu)))


def _sin(mu):
    # sin(mu x) = (e^{i mu x} - e^{-i mu x}) / 2i
    return ((mpc(0, -0.5), mpc(0, mu)), (mpc(0, 0.5), mpc(0, -mu)))


def _quad(c, mu, amp_of):
    return tuple(
        (amp_of(s1, s2), mpc(s1 * c, s2 * mu)) for s1 in (1, -1) for s2 in (1, -1)
    )


# cosh(cx)cos(mu x), sinh(cx)sin(mu x), cosh(cx)sin(mu x), -sinh(cx)cos(mu x)
_COSH_COS = lambda s1, s2: _QUARTER
_SINH_SIN = lambda s1, s2: mpc(0, -0.25 * s1 * s2)
_COSH_SIN = lambda s1, s2: mpc(0, -0.25 * s2)
_NEG_SINH_COS = lambda s1, s2: mpc(-0.25 * s1)


def make_Qe(p: Params, L: int, mu) -> BasisRow:
    """Even inside row: cos, cosh(c_l x)cos (l=1..L), sinh(c_l x)sin (l=1..L)."""
    mu = mpfr(mu)
    terms = [BasisTerm(_cos(mu), ("inside", 0, "cos"))]
    for l in range(1, L + 1):
        terms.append(BasisTerm(_quad(mode_rate(p, l), mu, _COSH_COS), ("inside", l, "cosh*cos")))
    for l in range(1, L + 1):
        terms.append(BasisTerm(_quad(mode_rate(p, l), mu, _SINH_SIN), ("inside", l, "sinh*sin")))
    return BasisRow(tuple(terms))


def make_Qo(p: Params, L: int, mu) -> BasisRow:
    """Odd inside row: sin, cosh(c_l x)sin (l=1..L), -sinh(c_l x)cos (l=1..L)."""
    mu = mpfr(mu)
    terms = [BasisTerm(_sin(mu), ("inside", 0, "sin"))]
    for l in range(1, L + 1):
        terms.append(BasisTerm(_quad(mode_rate(p, l), mu, _COSH_SIN), ("inside", l, "cosh*sin")))
    for l in range(1, L + 1):
        terms.append(BasisTerm(_quad(mode_rate(p, l), mu, _NEG_SINH_COS), ("inside", l, "-sinh*cos")))
    return BasisRow(tuple(terms))


def derivative_stack(row: BasisRow, x, n_max: int, alternate_signs: bool = False) -> List[List[mpfr]]:
    """The (n_max+1) x len(row) block whose row n holds the n-th derivatives.

    With ``alternate_signs`` odd-order rows are negated (the D* operator).
    """
    cols = [term.derivatives(x, n_max) for term in row]
    block = []
    for n in range(n_max + 1):
        sign = -1 if (alternate_signs and n % 2) else 1
        block.append([sign * col[n] for col in cols])
    return block


def apply_region_hamiltonian(term: BasisTerm, v_c, p: Params, rtol: float = 1e-10):
    """Eigenvalue of the region Hamiltonian on ``term``.

    On e^{gamma x} the shift operators act as e^{-/+ i beta gamma}, so the
    Hamiltonian returns (sqrt(1+2 beta^2 v_c) cos(beta gamma) - 1)/beta^2.
    Raises ValueError when the components disagree, i.e. ``term`` is not an
    eigenfunction.
    """
    beta = mpfr(p.beta)
    root = _bound_root(beta, mpfr(v_c))
    values = [(root * gmpy2.cos(beta * gamma) - 1) / (beta * beta) for _, gamma in term.components]
    ref = values[0]
    # absolute floor: the cancellation in root*cos - 1 costs digits of (root+1)/beta^2
    floor = (root + 1) / (beta * beta) * mpfr(2) ** (-gmpy2.get_context().precision // 2)
    scale = max(abs(ref), floor)
    for v in values[1:]:
        if abs(v - ref) > rtol * scale:
            raise ValueError(f"{term.label} is not an eigenfunction: {v} vs {ref}")
    if abs(ref.imag) > rtol * scale:
        raise ValueError(f"{term.label} has a complex eigenvalue {ref}")
    return ref.real


def row_values(row: BasisRow, x) -> List[mpfr]:
    return [t.value(x) for t in row]


def combine(row: BasisRow, coeffs: Sequence, x, n: int = 0):
    """n-th derivative of sum(coeffs[j] * row[j]) at x."""
    return sum((c * t.derivatives(x, n)[n] for c, t in zip(coeffs, row)), mpfr(0))

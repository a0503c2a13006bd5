"""Matching matrices and their determinants.

Entries of the matching matrices span thousands of decades at small beta
and large L (e^{2 pi L/beta} next to e^{-2 pi L/beta}), so everything is
computed with gmpy2 mpfr numbers: an arbitrary mantissa and an exponent
range far beyond what these matrices need. Determinants are accumulated as
:class:`ScaledValue` so the exponent never has to fit anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import gmpy2
from gmpy2 import mpfr

from .basis import derivative_stack, make_P, make_Qe, make_Qo, mode_rate
from .core import DomainError, Params, rho_of_mu

PARITIES = ("even", "odd")


def matching_orders(L: int) -> int:
    """Highest derivative order matched at the walls, 4L+1."""
    return 4 * L + 1


@dataclass(frozen=True)
class ScaledValue:
    """sign * mantissa * 2**exponent with mantissa in [1, 2)."""

    sign: int
    mantissa: mpfr
    exponent: int

    @classmethod
    def from_number(cls, x) -> "ScaledValue":
        x = mpfr(x)
        if x == 0:
            return cls(0, mpfr(0), 0)
        if not gmpy2.is_finite(x):
            raise ValueError(f"cannot represent {x}")
        e, m = gmpy2.frexp(abs(x))
        return cls(1 if x > 0 else -1, 2 * m, int(e) - 1)

    @classmethod
    def one(cls) -> "ScaledValue":
        return cls(1, mpfr(1), 0)

    def __mul__(self, other):
        if not isinstance(other, ScaledValue):
            other = ScaledValue.from_number(other)
        if self.sign == 0 or other.sign == 0:
            return ScaledValue(0, mpfr(0), 0)
        m = self.mantissa * other.mantissa
        e = self.exponent + other.exponent
        if m >= 2:
            m /= 2
            e += 1
        return ScaledValue(self.sign * other.sign, m, e)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, ScaledValue):
            other = ScaledValue.from_number(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero ScaledValue")
        if self.sign == 0:
            return self
        m = self.mantissa / other.mantissa
        e = self.exponent - other.exponent
        if m < 1:
            m *= 2
            e -= 1
        return ScaledValue(self.sign * other.sign, m, e)

    def __neg__(self):
        return ScaledValue(-self.sign, self.mantissa, self.exponent)

    def to_mpfr(self) -> mpfr:
        if self.sign == 0:
            return mpfr(0)
        return self.sign * gmpy2.mul_2exp(self.mantissa, self.exponent)

    def __float__(self):
        return float(self.to_mpfr())

    def log2_abs(self):
        if self.sign == 0:
            return -gmpy2.inf()
        return self.exponent + gmpy2.log2(self.mantissa)

    def rel_diff(self, other: "ScaledValue"):
        """|self - other| / |other|."""
        if other.sign == 0:
            return mpfr(0) if self.sign == 0 else gmpy2.inf()
        q = (self / other).to_mpfr()
        return abs(q - 1)


@dataclass
class MatchMatrix:
    """Dense matching matrix; ``entries[i][j] = raw[i][j] / (row_scales[i] * col_scales[j])``."""

    entries: List[List[mpfr]]
    parity: str
    L: int
    mu: mpfr
    row_scales: List[mpfr] = field(default_factory=list)
    col_scales: List[mpfr] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.entries)
        if any(len(r) != n for r in self.entries):
            raise ValueError("matching matrix must be square")
        expected = (2 if self.parity in PARITIES else 4) * (2 * self.L + 1)
        if n != expected:
            raise ValueError(f"{self.parity} matrix for L={self.L} must be {expected}x{expected}, got {n}")
        if not self.row_scales:
            self.row_scales = [mpfr(1)] * n
        if not self.col_scales:
            self.col_scales = [mpfr(1)] * n

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def equilibrated(self) -> bool:
        return any(s != 1 for s in self.row_scales) or any(s != 1 for s in self.col_scales)

    def raw(self) -> List[List[mpfr]]:
        return [
            [x * r * c for x, c in zip(row, self.col_scales)]
            for row, r in zip(self.entries, self.row_scales)
        ]

    def scale_product(self) -> ScaledValue:
        out = ScaledValue.one()
        for s in self.row_scales + self.col_scales:
            out = out * s
        return out


def _rho(mu, p: Params):
    return rho_of_mu(mpfr(mu), p)


def _sector(mu, p: Params, L: int, parity: str) -> MatchMatrix:
    mu = mpfr(mu)
    rho = _rho(mu, p)
    n_max = matching_orders(L)
    dp = derivative_stack(make_P(p, L, rho), -1, n_max)
    q = make_Qe(p, L, mu) if parity == "even" else make_Qo(p, L, mu)
    dq = derivative_stack(q, -1, n_max)
    entries = [a + [-x for x in b] for a, b in zip(dp, dq)]
    return MatchMatrix(entries, parity, L, mu)


def assemble_even(mu, p: Params, L: int) -> MatchMatrix:
    """(D P(-a), -D Q_e(-a)); columns are the A block then the B_e block."""
    return _sector(mu, p, L, "even")


def assemble_odd(mu, p: Params, L: int) -> MatchMatrix:
    """(D P(-a), -D Q_o(-a))."""
    return _sector(mu, p, L, "odd")


def assemble(mu, p: Params, L: int, parity: str) -> MatchMatrix:
    if parity == "even":
        return assemble_even(mu, p, L)
    if parity == "odd":
        return assemble_odd(mu, p, L)
    if parity == "full":
        return assemble_full(mu, p, L)
    raise ValueError(f"unknown parity {parity!r}")


def assemble_full(mu, p: Params, L: int) -> MatchMatrix:
    """The full 4(2L+1) matrix acting on (A, B_e, B_o, C).

    Top block row matches at x=-a, bottom block row at x=+a rewritten with
    D* at -a:
        ( D P   -D Q_e   -D Q_o   0    )
        ( 0     -D*Q_e    D*Q_o   D*P  )
    """
    mu = mpfr(mu)
    rho = _rho(mu, p)
    n_max = matching_orders(L)
    P, Qe, Qo = make_P(p, L, rho), make_Qe(p, L, mu), make_Qo(p, L, mu)
    dP, dQe, dQo = (derivative_stack(r, -1, n_max) for r in (P, Qe, Qo))
    sP, sQe, sQo = (derivative_stack(r, -1, n_max, alternate_signs=True) for r in (P, Qe, Qo))
    m = 2 * L + 1
    zero = [mpfr(0)] * m
    top = [a + [-x for x in b] + [-x for x in c] + zero for a, b, c in zip(dP, dQe, dQo)]
    bottom = [zero + [-x for x in b] + list(c) + list(a) for a, b, c in zip(sP, sQe, sQo)]
    return MatchMatrix(top + bottom, "full", L, mu)


def equilibrate(m: MatchMatrix) -> MatchMatrix:
    """Divide each column, then each row, by its largest magnitude.

    Scale factors are positive so determinant signs and roots are unchanged.
    Zero columns or rows keep a unit scale.
    """
    a = [row[:] for row in m.entries]
    n = len(a)
    col_scales = list(m.col_scales)
    row_scales = list(m.row_scales)
    for j in range(n):
        s = max(abs(a[i][j]) for i in range(n))
        if s:
            for i in range(n):
                a[i][j] /= s
            col_scales[j] *= s
    for i in range(n):
        s = max(abs(x) for x in a[i])
        if s:
            a[i] = [x / s for x in a[i]]
            row_scales[i] *= s
    return replace(m, entries=a, row_scales=row_scales, col_scales=col_scales)


@dataclass
class LU:
    """In-place style LU result: ``U`` upper triangular with the multipliers dropped."""

    U: List[List[mpfr]]
    row_perm: List[int]
    col_perm: List[int]
    sign: int
    singular_at: Optional[int] = None

    @property
    def pivots(self) -> List[mpfr]:
        return [self.U[k][k] for k in range(len(self.U))]


def lu_factor(a: Sequence[Sequence[mpfr]], full_pivoting: bool = False) -> LU:
    """Gaussian elimination with partial (or full) pivoting.

    Stops at the first exactly-zero pivot column and records its index.
    """
    n = len(a)
    U = [list(r) for r in a]
    rows = list(range(n))
    cols = list(range(n))
    sign = 1
    for k in range(n):
        if full_pivoting:
            best, pi, pj = mpfr(0), k, k
            for i in range(k, n):
                Ui = U[i]
                for j in range(k, n):
                    v = abs(Ui[j])
                    if v > best:
                        best, pi, pj = v, i, j
            if pj != k:
                for r in U:
                    r[k], r[pj] = r[pj], r[k]
                cols[k], cols[pj] = cols[pj], cols[k]
                sign = -sign
        else:
            pi = max(range(k, n), key=lambda i: abs(U[i][k]))
        if pi != k:
            U[k], U[pi] = U[pi], U[k]
            rows[k], rows[pi] = rows[pi], rows[k]
            sign = -sign
        piv = U[k][k]
        if piv == 0:
            return LU(U, rows, cols, sign, singular_at=k)
        Uk = U[k]
        for i in range(k + 1, n):
            Ui = U[i]
            f = Ui[k] / piv
            if f:
                for j in range(k + 1, n):
                    Ui[j] -= f * Uk[j]
            Ui[k] = mpfr(0)
    return LU(U, rows, cols, sign)


def _det_of(a, full_pivoting: bool) -> ScaledValue:
    lu = lu_factor(a, full_pivoting)
    if lu.singular_at is not None:
        return ScaledValue(0, mpfr(0), 0)
    out = ScaledValue(lu.sign, mpfr(1), 0)
    for piv in lu.pivots:
        out = out * piv
    return out


def scaled_det(m: MatchMatrix, full_pivoting: bool = False, equilibrate_first: bool = True) -> ScaledValue:
    """Determinant of the equilibrated matrix.

    Equals det(raw) / prod(scales): same sign and same roots in mu as the
    true determinant, but with a tame magnitude.
    """
    if equilibrate_first and not m.equilibrated:
        m = equilibrate(m)
    return _det_of(m.entries, full_pivoting)


def determinant(m: MatchMatrix, full_pivoting: bool = False) -> ScaledValue:
    """Determinant of the unscaled matrix (scale factors multiplied back in)."""
    if not m.equilibrated:
        m = equilibrate(m)
    return _det_of(m.entries, full_pivoting) * m.scale_product()


def sector_sign(mu, p: Params, L: int, parity: str, full_pivoting: bool = False) -> int:
    return scaled_det(assemble(mu, p, L, parity), full_pivoting).sign


def asymptotic_leading_det(L: int, parity: str, k, v0, beta, convention: str = "printed"):
    """Leading small-beta behaviour of the sector determinant at fixed k.

    ``convention="printed"`` evaluates
        L=1: (2pi/beta)^12 2^5 e^{-kappa} k kappa f(k)
        L=2: (2pi/beta)^40 2^22 3^8 e^{-kappa} k^2 kappa^2 f(k)
    with f = kappa cos k - k sin k (even) or kappa sin k + k cos k (odd, from
    cos -> sin, sin -> -cos). Those constants come from replacing cosh and
    sinh by a bare exponential; ``convention="exact"`` keeps the 1/2 of each
    (a factor 4^-L) and the sign picked up by the odd sector, and is the form
    the determinant actually approaches.
    """
    if L not in (1, 2):
        raise ValueError("closed forms exist for L = 1, 2 only")
    if parity not in PARITIES:
        raise ValueError(f"parity must be even or odd, got {parity!r}")
    k = mpfr(k)
    kappa2 = 2 * mpfr(v0) - k * k
    if kappa2 < 0:
        raise DomainError("k^2 > 2 v0: no real decay rate")
    kappa = gmpy2.sqrt(kappa2)
    if parity == "even":
        f = kappa * gmpy2.cos(k) - k * gmpy2.sin(k)
    else:
        f = kappa * gmpy2.sin(k) + k * gmpy2.cos(k)
    c = 2 * gmpy2.const_pi() / mpfr(beta)
    if L == 1:
        val = c ** 12 * 2 ** 5 * gmpy2.exp(-kappa) * k * kappa * f
    else:
        val = c ** 40 * mpfr(2) ** 22 * mpfr(3) ** 8 * gmpy2.exp(-kappa) * k ** 2 * kappa ** 2 * f
    if convention == "exact":
        val /= mpfr(4) ** L
        if parity == "odd":
            val = -val
    elif convention != "printed":
        raise ValueError(f"unknown convention {convention!r}")
    return val


def full_factorization_constant(L: int) -> int:
    """c in det M_full = c * det M_even * det M_odd; -2 at L=0, -2^(2L+1) in general."""
    return -(2 ** (2 * L + 1))


__all__ = [
    "LU",
    "MatchMatrix",
    "ScaledValue",
    "assemble",
    "assemble_even",
    "assemble_full",
    "assemble_odd",
    "asymptotic_leading_det",
    "determinant",
    "equilibrate",
    "full_factorization_constant",
    "lu_factor",
    "matching_orders",
    "mode_rate",
    "scaled_det",
    "sector_sign",
]

"""Coefficients, normalisation, evaluation and matching residuals at a root."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .basis import BasisRow, make_P, make_Qe, make_Qo, working_precision
from .core import DomainError, Params, rho_of_mu
from .matcher import assemble, equilibrate, lu_factor, matching_orders

PIVOT_SEPARATION = 1e-4
NULL_RESIDUAL = 1e-8


class AmbiguousNullspaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class WavefunctionCoefficients:
    """A (outside, left), B (inside); C = A for even, C = -A for odd states."""

    A: Tuple[mpfr, ...]
    B: Tuple[mpfr, ...]
    parity: str
    mu: mpfr
    rho: mpfr
    params: Params
    L: int

    @property
    def C(self) -> Tuple[mpfr, ...]:
        return self.A if self.parity == "even" else tuple(-a for a in self.A)

    @property
    def sign(self) -> int:
        return 1 if self.parity == "even" else -1

    def inside_row(self) -> BasisRow:
        maker = make_Qe if self.parity == "even" else make_Qo
        with working_precision(self.mu.precision):
            return maker(self.params, self.L, self.mu)

    def outside_row(self) -> BasisRow:
        with working_precision(self.mu.precision):
            return make_P(self.params, self.L, self.rho)

    def scaled(self, factor) -> "WavefunctionCoefficients":
        with working_precision(self.mu.precision):
            factor = mpfr(factor)
            return replace(self, A=tuple(a * factor for a in self.A), B=tuple(b * factor for b in self.B))


def null_vector(m, separation: float = PIVOT_SEPARATION, strict: bool = True) -> List[mpfr]:
    """Nullspace direction of a (nearly) singular matching matrix.

    LU of the equilibrated matrix; the unknown of the smallest pivot is set
    to 1, later unknowns to 0, earlier ones by back substitution.
    ``strict=False`` skips the separation and residual checks (diagnostics
    away from a root).
    """
    eq = m if m.equilibrated else equilibrate(m)
    lu = lu_factor(eq.entries)
    U = lu.U
    n = len(U)
    piv = [abs(U[k][k]) for k in range(n)]
    order = sorted(range(n), key=lambda k: piv[k])
    k = order[0]
    if strict and n > 1 and piv[order[0]] > separation * piv[order[1]]:
        raise AmbiguousNullspaceError(
            f"smallest pivot {float(piv[order[0]]):.3e} is not separated from the next "
            f"{float(piv[order[1]]):.3e}; refine the root with a tighter refine_tol"
        )
    w = [mpfr(0)] * n
    w[k] = mpfr(1)
    for i in range(k - 1, -1, -1):
        s = sum((U[i][j] * w[j] for j in range(i + 1, k + 1)), mpfr(0))
        w[i] = -s / U[i][i]
    res = max(abs(sum((a * b for a, b in zip(row, w)), mpfr(0))) for row in eq.entries)
    if strict and res > NULL_RESIDUAL * max(abs(x) for x in w):
        raise AmbiguousNullspaceError(f"null vector residual {float(res):.3e} too large; refine the root further")
    return [wj / c for wj, c in zip(w, eq.col_scales)]


def coefficients_at_root(mu_star, parity: str, p: Params, L: int, mantissa_bits: int | None = None,
                         normalise: bool = True, strict: bool = True) -> WavefunctionCoefficients:
    """Normalised coefficient vectors of the state whose sector determinant vanishes at mu_star."""
    with working_precision(mantissa_bits):
        mu = mpfr(mu_star)
        v = null_vector(assemble(mu, p, L, parity), strict=strict)
        m = 2 * L + 1
        c = WavefunctionCoefficients(tuple(v[:m]), tuple(v[m:]), parity, mu, rho_of_mu(mu, p), p, L)
        return normalize(c) if normalise else c


def _pair_integral(s):
    # integral over [-1, 1] of e^{s x}
    if s == 0:
        return mpc(2)
    return (gmpy2.exp(s) - gmpy2.exp(-s)) / s


def norm_squared(c: WavefunctionCoefficients):
    """Closed-form integral of psi^2 over the real line."""
    with working_precision(c.mu.precision):
        return _norm_squared(c)


def _norm_squared(c: WavefunctionCoefficients):
    rates = [t.components[0][1].real for t in c.outside_row()]
    if min(rates) <= 0:
        raise DomainError("an outside term does not decay (rho <= 0)")
    # region I; region III is its mirror image
    outside = mpfr(0)
    for a_i, r_i in zip(c.A, rates):
        for a_j, r_j in zip(c.A, rates):
            s = r_i + r_j
            outside += a_i * a_j * gmpy2.exp(-s) / s
    comps = [[(b * amp, g) for amp, g in t.components] for b, t in zip(c.B, c.inside_row())]
    flat = [x for cs in comps for x in cs]
    inside = mpc(0)
    for amp_i, g_i in flat:
        for amp_j, g_j in flat:
            inside += amp_i * amp_j * _pair_integral(g_i + g_j)
    return 2 * outside + inside.real


def _apply_sign_convention(c: WavefunctionCoefficients) -> WavefunctionCoefficients:
    row = c.inside_row()
    n = 0 if c.parity == "even" else 1
    at_zero = sum((b * t.derivatives(0, n)[n] for b, t in zip(c.B, row)), mpfr(0))
    return c.scaled(-1) if at_zero < 0 else c


def normalize(c: WavefunctionCoefficients) -> WavefunctionCoefficients:
    """Scale to unit norm; psi(0) > 0 for even states, psi'(0) > 0 for odd ones."""
    with working_precision(c.mu.precision):
        total = norm_squared(c)
        if not total > 0:
            raise DomainError("wavefunction has zero norm")
        return _apply_sign_convention(c.scaled(1 / gmpy2.sqrt(total)))


def _psi_derivative(c: WavefunctionCoefficients, x, n: int):
    x = mpfr(x)
    if x < -1:
        return sum((a * t.derivatives(x, n)[n] for a, t in zip(c.A, c.outside_row())), mpfr(0))
    if x > 1:
        # psi_III(x) = +-P(-x) A
        val = sum((a * t.derivatives(-x, n)[n] for a, t in zip(c.A, c.outside_row())), mpfr(0))
        return c.sign * (-1) ** n * val
    return sum((b * t.derivatives(x, n)[n] for b, t in zip(c.B, c.inside_row())), mpfr(0))


def eval_psi(x, c: WavefunctionCoefficients, n: int = 0):
    """psi^(n)(x) as float; ``x`` may be a scalar or a sequence."""
    with working_precision(c.mu.precision):
        if np.ndim(x) == 0:
            return float(_psi_derivative(c, x, n))
        return np.array([float(_psi_derivative(c, xi, n)) for xi in x])


def _float_terms(row: BasisRow, coeffs):
    return [(float(k), [(complex(a), complex(g)) for a, g in t.components]) for k, t in zip(coeffs, row)]


def _sum_float(terms, x, n):
    total = 0.0
    for k, comps in terms:
        total += k * sum(a * g ** n * cmath.exp(g * x) for a, g in comps).real
    return total


def matching_residuals(c: WavefunctionCoefficients, variant: str = "psi_II",
                       arithmetic: str = "working") -> List[Tuple[int, float]]:
    """(n, psi_I^(n)(-a) - psi_II^(n)(-a)) for n = 0..4L+2 (dimensionless, i.e. times a^n sqrt(a)).

    Order 4L+2 is the first one the truncation does not match.
    ``variant="psi_III"`` subtracts psi_III continued to x = -a instead.
    ``arithmetic="float64"`` evaluates the sums in IEEE doubles, which is
    how such residual lists come out of a double-precision pipeline.
    """
    if variant not in ("psi_II", "psi_III"):
        raise ValueError(f"unknown variant {variant!r}")
    n_top = matching_orders(c.L) + 1
    P = c.outside_row()
    other_row, other_coeffs = (c.inside_row(), c.B) if variant == "psi_II" else (P, c.C)
    mirror = variant == "psi_III"
    out = []
    with working_precision(c.mu.precision):
        if arithmetic == "working":
            left = [t.derivatives(-1, n_top) for t in P]
            right = [t.derivatives(1 if mirror else -1, n_top) for t in other_row]
            for n in range(n_top + 1):
                a = sum((k * d[n] for k, d in zip(c.A, left)), mpfr(0))
                b = sum((k * d[n] for k, d in zip(other_coeffs, right)), mpfr(0))
                if mirror:
                    b *= (-1) ** n
                out.append((n, float(a - b)))
        elif arithmetic == "float64":
            left = _float_terms(P, c.A)
            right = _float_terms(other_row, other_coeffs)
            for n in range(n_top + 1):
                a = _sum_float(left, -1.0, n)
                b = _sum_float(right, 1.0 if mirror else -1.0, n)
                if mirror:
                    b *= (-1) ** n
                out.append((n, a - b))
        else:
            raise ValueError(f"unknown arithmetic {arithmetic!r}")
    return out


def coefficient_table(c: WavefunctionCoefficients) -> List[Tuple[str, float]]:
    """Rows like ("A1", value), ..., ("B7", value) in basis order."""
    rows = [(f"A{i + 1}", float(a)) for i, a in enumerate(c.A)]
    rows += [(f"B{i + 1}", float(b)) for i, b in enumerate(c.B)]
    return rows


def polish_tolerance(bits: int):
    """Relative root width used before nullspace extraction: ~2^-(bits-32)."""
    return mpfr(2) ** -(bits - 32)


def coefficients_for_state(state, cfg, normalise: bool = True) -> WavefunctionCoefficients:
    """Bisect a solver state's bracket down to near working precision, then extract coefficients."""
    from .solver import refine_bracket

    with working_precision(cfg.mantissa_bits) as bits:
        lo, hi = refine_bracket(state.bracket, state.parity, state.params, cfg, tol=polish_tolerance(bits))
        return coefficients_at_root((lo + hi) / 2, state.parity, state.params, state.L, bits, normalise)

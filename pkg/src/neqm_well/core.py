"""Unit conventions, dispersion maps and the per-region case classification.

Everything is dimensionless with hbar = m = a = 1: ``beta`` stands for
beta*hbar/a, ``v0`` for m a^2 V0 / hbar^2 and energies for m a^2 E / hbar^2.

The functions accept plain floats (evaluated with :mod:`math`) or
``gmpy2.mpfr`` values (evaluated in the current gmpy2 context), and return
the same kind of number they were given.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import gmpy2

_MPFR = type(gmpy2.mpfr(0))


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


def _lib(*xs):
    return gmpy2 if any(isinstance(x, _MPFR) for x in xs) else math


def _coerce(*xs):
    """Pick the backend and lift every argument to it (floats -> mpfr when needed)."""
    lib = _lib(*xs)
    if lib is gmpy2:
        xs = tuple(gmpy2.mpfr(x) for x in xs)
    return (lib,) + tuple(xs)


@dataclass(frozen=True)
class Params:
    """Physical configuration of the well.

    ``beta`` must be strictly positive; the beta -> 0 limit is ordinary
    quantum mechanics and lives in :mod:`neqm_well.qm_oracle`.
    """

    beta: float
    v0: float

    def __post_init__(self):
        if not (self.beta > 0) or not math.isfinite(self.beta):
            raise DomainError(f"beta must be positive and finite, got {self.beta!r}")
        if not (self.v0 >= 0) or not math.isfinite(self.v0):
            raise DomainError(f"v0 must be non-negative and finite, got {self.v0!r}")


@dataclass(frozen=True)
class CaseInfo:
    case_id: int
    gamma_r: Tuple[float, ...]
    gamma_i: Tuple[float, ...]
    validity: Tuple[float, float]


def _bound_root(beta, v):
    # sqrt(1 + 2 beta^2 v)
    lib, beta, v = _coerce(beta, v)
    return lib.sqrt(1 + 2 * beta * beta * v)


def energy_upper_bound(p: Params, beta=None, v0=None):
    """Largest energy a bound state can have: (sqrt(1+2 beta^2 v0) - 1)/beta^2."""
    beta = p.beta if beta is None else beta
    v0 = p.v0 if v0 is None else v0
    _, beta, v0 = _coerce(beta, v0)
    # rationalised to avoid cancellation for small beta
    return 2 * v0 / (_bound_root(beta, v0) + 1)


def mu_max(p: Params, beta=None, v0=None):
    """Upper end of the mu scan, log(sqrt(1+2b^2v0) + sqrt(2b^2v0))/b."""
    beta = p.beta if beta is None else beta
    v0 = p.v0 if v0 is None else v0
    lib, beta, v0 = _coerce(beta, v0)
    return lib.asinh(lib.sqrt(2 * beta * beta * v0)) / beta


def energy_of_mu(mu, p: Params, beta=None):
    """E = (cosh(beta mu) - 1)/beta^2."""
    beta = p.beta if beta is None else beta
    if mu < 0:
        raise DomainError(f"mu must be non-negative, got {mu!r}")
    lib, mu, beta = _coerce(mu, beta)
    s = lib.sinh(beta * mu / 2) / beta
    return 2 * s * s


def mu_of_energy(energy, p: Params, beta=None):
    """Inverse of :func:`energy_of_mu`."""
    beta = p.beta if beta is None else beta
    if energy < 0:
        raise DomainError(f"energy must be non-negative, got {energy!r}")
    lib, energy, beta = _coerce(energy, beta)
    x = beta * beta * energy
    return lib.log1p(x + lib.sqrt(x * (2 + x))) / beta


def rho_of_mu(mu, p: Params, beta=None, v0=None):
    """Outside decay rate matched to the inside wavenumber ``mu``.

    rho = arccos(cosh(beta mu) / sqrt(1 + 2 beta^2 v0)) / beta, evaluated as
    2 asin(sqrt(d/2))/beta with d = 1 - cosh(beta mu)/sqrt(1+2 beta^2 v0)
    formed without cancellation.
    """
    beta = p.beta if beta is None else beta
    v0 = p.v0 if v0 is None else v0
    if mu < 0:
        raise DomainError(f"mu must be non-negative, got {mu!r}")
    lib, mu, beta, v0 = _coerce(mu, beta, v0)
    root = _bound_root(beta, v0)
    sh = lib.sinh(beta * mu / 2)
    # root - cosh(beta mu) = (root - 1) - 2 sinh^2(beta mu / 2)
    gap = 2 * beta * beta * v0 / (root + 1) - 2 * sh * sh
    d = gap / root
    if d < 0:
        # tolerate rounding in mu_max itself so the scan endpoint stays legal;
        # d moves by ~ beta mu sinh(beta mu)/root per unit relative change in mu
        ulp = 2.0 ** -(gmpy2.get_context().precision if lib is gmpy2 else 52)
        slack = 1 + (1 + beta * mu * lib.sinh(beta * mu)) * lib.cosh(beta * mu) / root
        if -d > 64 * ulp * slack:
            raise DomainError(f"mu={mu!r} exceeds mu_max={mu_max(p, beta, v0)!r}")
        d = 0 * d
    return 2 * lib.asin(lib.sqrt(d / 2)) / beta


def classify_case(energy, v_c, beta) -> CaseInfo:
    """Which of the three exponential-ansatz regimes applies at ``energy``.

    Case 1 (E below the lower threshold): gamma_r = pi(2n+1)/beta.
    Case 2 (between thresholds): gamma_i = 0, cos(beta gamma_r) = (1+beta^2E)/root.
    Case 3 (above the upper threshold): gamma_r = 2 pi n/beta.
    Threshold energies go to the higher-numbered case. ``gamma_r`` reports
    the n = 0 representative(s); ``gamma_i`` both log branches.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    b2 = beta * beta
    root = math.sqrt(1 + 2 * b2 * v_c)
    lower = (-root - 1) / b2
    upper = (root - 1) / b2
    ratio = (1 + b2 * energy) / root
    if energy >= upper:
        s = math.sqrt(max(ratio * ratio - 1, 0.0))
        gi = (math.log(ratio + s) / beta, math.log(ratio - s) / beta if ratio - s > 0 else -math.inf)
        return CaseInfo(3, (0.0,), gi, (upper, math.inf))
    if energy >= lower:
        g = math.acos(max(-1.0, min(1.0, ratio))) / beta
        return CaseInfo(2, (g, -g), (0.0,), (lower, upper))
    s = math.sqrt(ratio * ratio - 1)
    gi = (math.log(-ratio + s) / beta, math.log(-ratio - s) / beta)
    return CaseInfo(1, (math.pi / beta,), gi, (-math.inf, lower))

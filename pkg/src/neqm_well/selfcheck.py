"""Invariant checks behind ``neqm-well selfcheck``.

Each check returns a :class:`CheckResult`; the CLI exits with status 4
when any of them fails. The configurations are deliberately small so the
whole suite runs in a few minutes on one core.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

from gmpy2 import mpfr
from scipy.integrate import quad

from .basis import (
    apply_region_hamiltonian,
    default_precision_bits,
    make_P,
    make_Qe,
    make_Qo,
    working_precision,
)
from .core import Params, energy_of_mu, mu_max, rho_of_mu
from .matcher import PARITIES, assemble, assemble_full, determinant, full_factorization_constant, scaled_det
from .solver import ScanConfig, spectrum
from .wavefunction import coefficients_for_state, eval_psi, norm_squared


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _timed(name: str, fn: Callable[[], tuple]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed check, not a crashed suite
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def check_reflection(bits: int, make_qe=make_Qe, make_qo=make_Qo, trials: int = 8, seed: int = 1) -> tuple:
    """Q_e(-x) = Q_e(x), Q_o(-x) = -Q_o(x) term by term, and the full-matrix factorisation.

    ``make_qe``/``make_qo`` can be swapped for broken rows to see the check fire.
    """
    rng = random.Random(seed)
    worst = 0.0
    with working_precision(bits):
        for _ in range(trials):
            p = Params(rng.uniform(0.3, 3.0), rng.uniform(5.0, 100.0))
            L = rng.randint(0, 3)
            mu = mu_max(p, mpfr(p.beta), mpfr(p.v0)) * mpfr(rng.uniform(0.05, 0.95))
            x = mpfr(rng.uniform(0.05, 1.0))
            for row, sign in ((make_qe(p, L, mu), 1), (make_qo(p, L, mu), -1)):
                for t in row:
                    a, b = t.value(x), t.value(-x)
                    scale = max(abs(a), abs(b), mpfr(1))
                    worst = max(worst, float(abs(b - sign * a) / scale))
        if worst > 1e-30:
            return False, f"parity of the inside basis violated by {worst:.3e}"
        # det M_full = -2^(2L+1) det M_e det M_o
        fact = 0.0
        for L in range(3):
            p = Params(rng.uniform(0.3, 3.0), rng.uniform(5.0, 100.0))
            mu = mu_max(p, mpfr(p.beta), mpfr(p.v0)) * mpfr(rng.uniform(0.05, 0.95))
            full = determinant(assemble_full(mu, p, L)).to_mpfr()
            prod = (determinant(assemble(mu, p, L, "even")) * determinant(assemble(mu, p, L, "odd"))).to_mpfr()
            fact = max(fact, float(abs(full / (full_factorization_constant(L) * prod) - 1)))
    ok = fact < 1e-20
    return ok, f"parity error {worst:.1e}, factorisation error {fact:.1e}"


def check_region_eigenfunctions(bits: int, trials: int = 6, seed: int = 2) -> tuple:
    """Every P term is an outside eigenfunction and every Q term an inside one, with energy E(mu)."""
    rng = random.Random(seed)
    worst = 0.0
    with working_precision(bits):
        for _ in range(trials):
            p = Params(rng.uniform(0.3, 3.0), rng.uniform(5.0, 100.0))
            L = rng.randint(0, 3)
            mu = mu_max(p, mpfr(p.beta), mpfr(p.v0)) * mpfr(rng.uniform(0.05, 0.95))
            e = energy_of_mu(mu, p, mpfr(p.beta))
            rho = rho_of_mu(mu, p)
            for row, v_c in ((make_P(p, L, rho), p.v0), (make_Qe(p, L, mu), 0.0), (make_Qo(p, L, mu), 0.0)):
                for t in row:
                    val = apply_region_hamiltonian(t, v_c, p)
                    worst = max(worst, float(abs(val - e) / max(abs(e), mpfr(1))))
    return worst < 1e-10, f"max relative eigenvalue error {worst:.1e}"


def check_grid_doubling(bits: int, p: Params = Params(0.71, 200.0), L: int = 2, samples: int = 100) -> tuple:
    """Doubling the scan grid must not change the spectrum."""
    a = spectrum(p, ScanConfig(L=L, samples=samples, mantissa_bits=bits))
    b = spectrum(p, ScanConfig(L=L, samples=2 * samples, mantissa_bits=bits))
    if len(a) != len(b):
        return False, f"{len(a)} states at {samples} samples, {len(b)} at {2 * samples}"
    diff = max((abs(x.energy - y.energy) / y.energy for x, y in zip(a.states, b.states)), default=0.0)
    return diff < 1e-8, f"{len(a)} states, max relative energy change {diff:.1e}"


def check_precision_doubling(bits: int, p: Params = Params(0.01, 5000.0), L: int = 6, points: int = 20) -> tuple:
    """Determinant signs on a mu grid agree between ``bits`` and ``2*bits``."""
    def signs(b):
        with working_precision(b):
            top = mu_max(p, mpfr(p.beta), mpfr(p.v0))
            return [scaled_det(assemble(top * i / (points + 1), p, L, par)).sign
                    for i in range(1, points + 1) for par in PARITIES]

    lo, hi = signs(bits), signs(2 * bits)
    bad = sum(1 for s, t in zip(lo, hi) if s != t)
    return bad == 0, f"{bad} of {len(lo)} signs differ between {bits} and {2 * bits} bits (beta={p.beta}, L={L})"


def _quad_norm(c) -> float:
    peak = max(abs(eval_psi(x, c)) for x in (0.0, 0.5, 1.0))
    width = 60.0 / max(float(c.rho), 1e-3)
    inside = quad(lambda x: eval_psi(x, c) ** 2, -1.0, 1.0, epsabs=1e-13 * peak * peak, epsrel=1e-11, limit=200)[0]
    outside = quad(lambda x: eval_psi(x, c) ** 2, -1.0 - width, -1.0, epsabs=1e-13 * peak * peak, epsrel=1e-11,
                   limit=200)[0]
    return inside + 2 * outside


def check_normalisation(bits: int, p: Params = Params(0.71, 200.0), L: int = 3, n_states: int = 2) -> tuple:
    """Closed-form norm against adaptive quadrature of psi^2."""
    cfg = ScanConfig(L=L, mantissa_bits=bits)
    table = spectrum(p, cfg, max_states=n_states)
    worst = 0.0
    for s in table.states:
        c = coefficients_for_state(s, cfg)
        closed = float(norm_squared(c))
        worst = max(worst, abs(_quad_norm(c) - closed), abs(closed - 1))
    return worst < 1e-8, f"{len(table)} states, max |quadrature - closed form| {worst:.1e}"


CHECKS = {
    "reflection": check_reflection,
    "region-eigenfunctions": check_region_eigenfunctions,
    "grid-doubling": check_grid_doubling,
    "precision-doubling": check_precision_doubling,
    "normalisation": check_normalisation,
}


def run_selfcheck(bits: Optional[int] = None, names: Optional[Sequence[str]] = None) -> List[CheckResult]:
    bits = default_precision_bits() if bits is None else bits
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    return [_timed(n, lambda n=n: CHECKS[n](bits)) for n in names]

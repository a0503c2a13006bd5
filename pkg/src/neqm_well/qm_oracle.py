"""Ordinary quantum-mechanical finite square well (the beta -> 0 reference).

Roots are located branch by branch using the pole-free forms
    even: kappa cos k - k sin k = 0   (kappa = k tan k)
    odd:  kappa sin k + k cos k = 0   (kappa = -k cot k)
with kappa = sqrt(2 v0 - k^2). Even roots live in (n pi, n pi + pi/2),
odd roots in (n pi + pi/2, (n+1) pi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.optimize import brentq

_POLE_OFFSET = 1e-12
_XTOL = 1e-14


@dataclass(frozen=True)
class QmState:
    k: float
    kappa: float
    energy: float
    parity: str


def _kappa(k, v0):
    return math.sqrt(max(2.0 * v0 - k * k, 0.0))


def even_condition(k, v0):
    return _kappa(k, v0) * math.cos(k) - k * math.sin(k)


def odd_condition(k, v0):
    return _kappa(k, v0) * math.sin(k) + k * math.cos(k)


def _branch_roots(v0: float, offset: float, cond) -> List[float]:
    if v0 <= 0:
        return []
    kmax = math.sqrt(2.0 * v0)
    roots = []
    n = 0
    while True:
        lo = n * math.pi + offset
        if lo >= kmax:
            break
        hi = min(lo + math.pi / 2, kmax)
        # keep k = 0 (trivial wavefunction) out of the bracket
        a = lo if lo > 0 else _POLE_OFFSET
        b = hi if hi == kmax else hi - _POLE_OFFSET
        fa, fb = cond(a, v0), cond(b, v0)
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(cond, a, b, args=(v0,), xtol=_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200))
        n += 1
    return roots


def qm_even_roots(v0: float) -> List[float]:
    """Wavenumbers k of the even bound states, ascending."""
    return _branch_roots(v0, 0.0, even_condition)


def qm_odd_roots(v0: float) -> List[float]:
    """Wavenumbers k of the odd bound states, ascending (none for v0 < pi^2/8)."""
    return _branch_roots(v0, math.pi / 2, odd_condition)


def qm_spectrum(v0: float) -> List[QmState]:
    """All bound states ordered by energy; parities alternate starting even."""
    states = [QmState(k, _kappa(k, v0), 0.5 * k * k, "even") for k in qm_even_roots(v0)]
    states += [QmState(k, _kappa(k, v0), 0.5 * k * k, "odd") for k in qm_odd_roots(v0)]
    states.sort(key=lambda s: s.energy)
    return states


def qm_matrices(k: float, v0: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The 4x4 matching matrix and its even/odd 2x2 sectors at a = 1."""
    kap = _kappa(k, v0)
    e = math.exp(-kap)
    c, s = math.cos(k), math.sin(k)
    M = np.array([
        [e, -c, s, 0.0],
        [kap * e, -k * s, -k * c, 0.0],
        [0.0, -c, -s, e],
        [0.0, k * s, -k * c, -kap * e],
    ])
    Me = np.array([[e, -c], [kap * e, -k * s]])
    Mo = np.array([[e, s], [kap * e, -k * c]])
    return M, Me, Mo


def qm_det_check(k: float, v0: float) -> Tuple[float, float, float]:
    """(det M, det M_even, det M_odd); det M = -2 det M_even det M_odd."""
    if not 0 < k < math.sqrt(2.0 * v0):
        raise ValueError("need 0 < k < sqrt(2 v0)")
    M, Me, Mo = qm_matrices(k, v0)
    return float(np.linalg.det(M)), float(np.linalg.det(Me)), float(np.linalg.det(Mo))

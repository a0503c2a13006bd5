"""Sign-change scan of the sector determinants and spectrum assembly."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import gmpy2
from gmpy2 import mpfr

from .basis import default_precision_bits, working_precision
from .core import Params, energy_of_mu, energy_upper_bound, mu_max
from .matcher import PARITIES, assemble, equilibrate, scaled_det

log = logging.getLogger(__name__)

# one-sided stand-in for mu_max when rho = 0 makes paired P columns coincide
_ENDPOINT_BACKOFF = mpfr(2) ** -40
_DEGENERATE_LOG2 = math.log2(1e-3)


@dataclass(frozen=True)
class ScanConfig:
    L: int
    samples: int = 500
    refine_tol: float = 1e-10
    mantissa_bits: int = field(default_factory=default_precision_bits)
    full_pivoting: bool = False

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if not 0 < self.refine_tol < 1:
            raise ValueError("refine_tol must lie in (0, 1)")


@dataclass
class BoundState:
    mu: float
    energy: float
    parity: str
    L: int
    params: Params
    bracket: Tuple[mpfr, mpfr]
    marginal: bool = False
    coefficients: object = None

    @property
    def mu_exact(self) -> mpfr:
        lo, hi = self.bracket
        return (lo + hi) / 2


@dataclass
class SpectrumTable:
    states: List[BoundState]
    params: Params
    config: ScanConfig
    timestamp: float = field(default_factory=time.time)
    warnings: List[str] = field(default_factory=list)

    @property
    def precision(self) -> int:
        return self.config.mantissa_bits

    @property
    def energies(self) -> List[float]:
        return [s.energy for s in self.states]

    def __len__(self):
        return len(self.states)


@dataclass
class _Sample:
    mu: mpfr
    sign: int
    log2_mag: mpfr  # log2 |det| of the unequilibrated matrix


def _evaluate(mu, parity: str, p: Params, cfg: ScanConfig) -> _Sample:
    eq = equilibrate(assemble(mu, p, cfg.L, parity))
    d = scaled_det(eq, cfg.full_pivoting)
    # the equilibrated magnitude kinks wherever a row/column maximum switches
    # entries, so dips are judged on the true determinant
    return _Sample(mpfr(mu), d.sign, (d * eq.scale_product()).log2_abs())


def _grid(p: Params, cfg: ScanConfig) -> List[mpfr]:
    top = mu_max(p, mpfr(p.beta), mpfr(p.v0))
    return [top * i / cfg.samples for i in range(1, cfg.samples + 1)]


def _sample_at(i: int, grid, parity, p, cfg) -> _Sample:
    s = _evaluate(grid[i], parity, p, cfg)
    if s.sign == 0 and i == len(grid) - 1:
        s = _evaluate(grid[i] * (1 - _ENDPOINT_BACKOFF), parity, p, cfg)
    return s


class _SectorScan:
    """Incremental scan of one sector over the shared mu grid."""

    def __init__(self, parity, p, cfg, grid):
        self.parity, self.p, self.cfg, self.grid = parity, p, cfg, grid
        self.samples: List[_Sample] = []
        self.brackets: List[Tuple[mpfr, mpfr, int]] = []
        self.warnings: List[str] = []

    def step(self, i: int) -> int:
        s = _sample_at(i, self.grid, self.parity, self.p, self.cfg)
        self.samples.append(s)
        found = 0
        if s.sign == 0:
            # exact root hit on the grid
            self.brackets.append((s.mu, s.mu, 0))
            return 1
        prev = next((q for q in reversed(self.samples[:-1]) if q.sign != 0), None)
        if prev is not None and prev.sign != s.sign and (len(self.samples) < 2 or self.samples[-2].sign != 0):
            self.brackets.append((prev.mu, s.mu, prev.sign))
            found = 1
        self._check_degenerate()
        return found

    def _check_degenerate(self):
        if len(self.samples) < 3:
            return
        a, b, c = self.samples[-3:]
        if a.sign == b.sign == c.sign != 0 and b.log2_mag < min(a.log2_mag, c.log2_mag) + _DEGENERATE_LOG2:
            msg = (f"suspected degenerate root: {self.parity} determinant dips without a sign change "
                   f"near mu={float(b.mu):.6g} (beta={self.p.beta}, v0={self.p.v0}, L={self.cfg.L})")
            log.warning(msg)
            self.warnings.append(msg)


def scan_sign_changes(parity: str, p: Params, cfg: ScanConfig) -> List[Tuple[mpfr, mpfr]]:
    """Grid cells (mu_i, mu_{i+1}) on (0, mu_max] where the sector determinant flips sign."""
    if parity not in PARITIES:
        raise ValueError(f"parity must be one of {PARITIES}")
    if p.v0 == 0:
        return []
    with working_precision(cfg.mantissa_bits):
        grid = _grid(p, cfg)
        scan = _SectorScan(parity, p, cfg, grid)
        for i in range(len(grid)):
            scan.step(i)
        return [(lo, hi) for lo, hi, _ in scan.brackets]


def refine_bracket(bracket, parity: str, p: Params, cfg: ScanConfig, tol=None, sign_lo: int | None = None):
    """Bisect on the determinant sign until the bracket is narrower than tol * mu."""
    tol = cfg.refine_tol if tol is None else tol
    with working_precision(cfg.mantissa_bits):
        lo, hi = mpfr(bracket[0]), mpfr(bracket[1])
        if lo == hi:
            return lo, hi
        if sign_lo is None:
            sign_lo = _evaluate(lo, parity, p, cfg).sign
            sign_hi = _sample_hi(hi, parity, p, cfg)
            if sign_lo == 0:
                return lo, lo
            if sign_hi == 0:
                return hi, hi
            if sign_lo == sign_hi:
                raise ValueError(f"determinant has the same sign at both ends of {float(lo)}, {float(hi)}")
        tol = mpfr(tol)
        while hi - lo > tol * hi:
            mid = (lo + hi) / 2
            if mid == lo or mid == hi:
                break
            s = _evaluate(mid, parity, p, cfg).sign
            if s == 0:
                return mid, mid
            if s == sign_lo:
                lo = mid
            else:
                hi = mid
        return lo, hi


def _sample_hi(hi, parity, p, cfg):
    s = _evaluate(hi, parity, p, cfg).sign
    if s == 0 and hi >= mu_max(p, mpfr(p.beta), mpfr(p.v0)):
        s = _evaluate(hi * (1 - _ENDPOINT_BACKOFF), parity, p, cfg).sign
    return s


def refine_root(bracket, parity: str, p: Params, cfg: ScanConfig, tol=None) -> mpfr:
    """Midpoint of the bisected bracket."""
    lo, hi = refine_bracket(bracket, parity, p, cfg, tol)
    with working_precision(cfg.mantissa_bits):
        return (lo + hi) / 2


def _make_state(lo, hi, parity, p, cfg, top) -> BoundState:
    mu = (lo + hi) / 2
    e = energy_of_mu(mu, p, mpfr(p.beta))
    marginal = top - hi <= mpfr(cfg.refine_tol) * top
    return BoundState(float(mu), float(e), parity, cfg.L, p, (lo, hi), bool(marginal))


def spectrum(p: Params, cfg: ScanConfig, max_states: Optional[int] = None) -> SpectrumTable:
    """Bound states of both parities, ascending in energy.

    With ``max_states`` the scan stops once that many of the lowest states
    are bracketed (both sectors advance over the same mu grid, so the first
    brackets found are the lowest states).
    """
    table = SpectrumTable([], p, cfg)
    if p.v0 == 0:
        return table
    with working_precision(cfg.mantissa_bits):
        grid = _grid(p, cfg)
        top = grid[-1]
        scans = [_SectorScan(par, p, cfg, grid) for par in PARITIES]
        for i in range(len(grid)):
            for sc in scans:
                sc.step(i)
            if max_states is not None and sum(len(sc.brackets) for sc in scans) >= max_states:
                break
        states = []
        for sc in scans:
            table.warnings.extend(sc.warnings)
            for lo, hi, sign_lo in sc.brackets:
                if lo != hi:
                    lo, hi = refine_bracket((lo, hi), sc.parity, p, cfg, sign_lo=sign_lo)
                states.append(_make_state(lo, hi, sc.parity, p, cfg, top))
    states.sort(key=lambda s: (s.energy, s.parity))
    if max_states is not None:
        states = states[:max_states]
    for a, b in zip(states, states[1:]):
        if not b.energy > a.energy:
            msg = f"coincident {a.parity}/{b.parity} roots at E={a.energy:.6g}"
            log.warning(msg)
            table.warnings.append(msg)
    table.states = states
    return table


@dataclass(frozen=True)
class ConvergenceRow:
    L: int
    beta: float
    state_index: int
    energy: Optional[float]


def _spectrum_job(args):
    p, cfg, max_states = args
    return spectrum(p, cfg, max_states)


def _run_many(jobs: Sequence[tuple], workers: int) -> List[SpectrumTable]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_spectrum_job, jobs))
    return [_spectrum_job(j) for j in jobs]


def convergence_sweep(p: Params, L_list: Iterable[int], cfg: ScanConfig,
                      state_indices: Sequence[int] = (0, 1), workers: int = 1) -> List[ConvergenceRow]:
    """Energies of the chosen states for each truncation order, None where absent."""
    L_list = list(L_list)
    need = max(state_indices) + 1
    jobs = [(p, _with_L(cfg, L), need) for L in L_list]
    rows = []
    for L, table in zip(L_list, _run_many(jobs, workers)):
        for idx in state_indices:
            e = table.states[idx].energy if idx < len(table.states) else None
            rows.append(ConvergenceRow(L, p.beta, idx, e))
    return rows


def _with_L(cfg: ScanConfig, L: int) -> ScanConfig:
    return ScanConfig(L=L, samples=cfg.samples, refine_tol=cfg.refine_tol,
                      mantissa_bits=cfg.mantissa_bits, full_pivoting=cfg.full_pivoting)


@dataclass(frozen=True)
class SweepRow:
    beta: float
    state_index: int
    parity: str
    energy: float
    upper_bound: float


@dataclass
class BetaSweep:
    v0: float
    rows: List[SweepRow]
    disappearances: List[Tuple[float, int]]
    counts: List[Tuple[float, int]]


def beta_sweep(v0: float, beta_grid: Sequence[float], cfg: ScanConfig,
               max_states: Optional[int] = None, workers: int = 1) -> BetaSweep:
    """Spectrum per beta in long format; records where the state count drops."""
    betas = list(beta_grid)
    jobs = [(Params(b, v0), cfg, max_states) for b in betas]
    rows, counts, gone = [], [], []
    prev = None
    for b, table in zip(betas, _run_many(jobs, workers)):
        bound = energy_upper_bound(Params(b, v0))
        for i, s in enumerate(table.states):
            rows.append(SweepRow(b, i, s.parity, s.energy, bound))
        n = len(table.states)
        counts.append((b, n))
        if prev is not None and n < prev:
            gone.extend((b, idx) for idx in range(n, prev))
        prev = n
    return BetaSweep(v0, rows, gone, counts)


def log_beta_grid(beta_min: float, beta_max: float, steps: int) -> List[float]:
    if steps == 1:
        return [beta_min]
    r = math.log(beta_max / beta_min) / (steps - 1)
    return [beta_min * math.exp(r * i) for i in range(steps)]

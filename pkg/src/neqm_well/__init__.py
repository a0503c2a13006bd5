"""Bound states of the Newton's-equivalent-Hamiltonian finite square well.

Units throughout are hbar = m = a = 1 (a is the half-width of the well).
"""
from .core import (
    CaseInfo,
    DomainError,
    Params,
    classify_case,
    energy_of_mu,
    energy_upper_bound,
    mu_max,
    mu_of_energy,
    rho_of_mu,
)
from .qm_oracle import QmState, qm_det_check, qm_even_roots, qm_odd_roots, qm_spectrum
from .basis import make_P, make_Qe, make_Qo, working_precision
from .matcher import assemble, assemble_even, assemble_full, assemble_odd, determinant, scaled_det
from .solver import (
    BoundState,
    ScanConfig,
    SpectrumTable,
    beta_sweep,
    convergence_sweep,
    refine_root,
    scan_sign_changes,
    spectrum,
)
from .wavefunction import (
    AmbiguousNullspaceError,
    WavefunctionCoefficients,
    coefficients_at_root,
    coefficients_for_state,
    eval_psi,
    matching_residuals,
    norm_squared,
    normalize,
)

__version__ = "0.1.0"
